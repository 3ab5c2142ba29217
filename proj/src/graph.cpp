#include "emorank/graph.h"

#include <algorithm>
#include <cmath>

#include "emorank/error.h"
#include "emorank/kernels.h"

namespace emorank {
namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape == b.shape, ErrorKind::kShape,
            std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

std::vector<std::size_t> matrix_shape(const Tensor& like, std::size_t rows, std::size_t cols) {
    if (like.rank() == 1) {
        return {cols};
    }
    return {rows, cols};
}

}  // namespace

const Tensor& Graph::val(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.borrowed ? *n.borrowed : n.value;
}

Tensor& Graph::grad_of(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty() && !val(id).data.empty()) {
        n.grad = Tensor(val(id).shape, 0.0);
    }
    return n.grad;
}

void Graph::check(Var v) const {
    require(v.id < nodes_.size(), ErrorKind::kInvalidArgument, "variable does not belong to this graph");
}

Var Graph::push(Tensor value, std::initializer_list<std::size_t> inputs,
                std::function<void(Graph&, std::size_t)> backward) {
    return push(std::move(value), std::span<const std::size_t>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Graph::push(Tensor value, std::span<const std::size_t> inputs, std::function<void(Graph&, std::size_t)> backward) {
    require(value.all_finite(), ErrorKind::kNonFinite, "non-finite value produced in forward pass");
    Node n;
    n.value = std::move(value);
    for (auto id : inputs) {
        n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
    }
    if (n.needs_grad) {
        n.backward = std::move(backward);
    }
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
    require(shape_product(value.shape) == value.data.size(), ErrorKind::kShape, "constant: inconsistent tensor");
    require(value.all_finite(), ErrorKind::kNonFinite, "constant: non-finite input");
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Graph::param(const Tensor& value) {
    require(shape_product(value.shape) == value.data.size(), ErrorKind::kShape, "param: inconsistent tensor");
    require(value.all_finite(), ErrorKind::kNonFinite, "param: non-finite value");
    Node n;
    n.borrowed = &value;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
    check(v);
    return val(v.id);
}

const Tensor& Graph::grad(Var v) const {
    check(v);
    auto& self = const_cast<Graph&>(*this);
    return self.grad_of(v.id);
}

void Graph::backward(Var loss) {
    check(loss);
    require(val(loss.id).size() == 1, ErrorKind::kShape, "backward target must be a scalar");
    for (auto& n : nodes_) {
        n.grad = Tensor();
    }
    grad_of(loss.id).data[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || !n.backward || n.grad.data.empty()) {
            continue;
        }
        n.backward(*this, id);
    }
    for (std::size_t id = 0; id <= loss.id; ++id) {
        if (nodes_[id].borrowed) {
            require(grad_of(id).all_finite(), ErrorKind::kNonFinite, "non-finite gradient in backward pass");
        }
    }
}

Var Graph::matmul(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& av = val(a.id);
    const Tensor& bv = val(b.id);
    require(bv.rank() == 2 && av.rank() <= 2 && av.cols() == bv.rows(), ErrorKind::kShape,
            "matmul: inner dimensions disagree " + av.shape_str() + " x " + bv.shape_str());
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    Tensor out(matrix_shape(av, m, n));
    kernels::matmul(av.data, bv.data, out.data, m, k, n);
    return push(std::move(out), {a.id, b.id}, [a, b, m, k, n](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.needs(a.id)) {
            kernels::matmul_bt_acc(go.data, g.val(b.id).data, g.grad_of(a.id).data, m, n, k);
        }
        if (g.needs(b.id)) {
            kernels::matmul_at_acc(g.val(a.id).data, go.data, g.grad_of(b.id).data, m, k, n);
        }
    });
}

Var Graph::matmul_bt(Var a, Var b) {
    check(a);
    check(b);
    const Tensor& av = val(a.id);
    const Tensor& bv = val(b.id);
    require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(), ErrorKind::kShape,
            "matmul_bt: inner dimensions disagree " + av.shape_str() + " x " + bv.shape_str() + "^T");
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    Tensor out = Tensor::matrix(m, n);
    kernels::matmul_bt_acc(av.data, bv.data, out.data, m, k, n);
    return push(std::move(out), {a.id, b.id}, [a, b, m, k, n](Graph& g, std::size_t self) {
        const Tensor& go = g.nodes_[self].grad;
        // out = a b^T: da = go b, db = go^T a
        if (g.needs(a.id)) {
            Tensor tmp = Tensor::matrix(m, k);
            kernels::matmul(go.data, g.val(b.id).data, tmp.data, m, n, k);
            auto& ga = g.grad_of(a.id).data;
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += tmp.data[i];
            }
        }
        if (g.needs(b.id)) {
            kernels::matmul_at_acc(go.data, g.val(a.id).data, g.grad_of(b.id).data, m, n, k);
        }
    });
}

Var Graph::add(Var a, Var b) {
    check(a);
    check(b);
    same_shape(val(a.id), val(b.id), "add");
    Tensor out = val(a.id);
    const auto& bv = val(b.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += bv[i];
    }
    out.requires_grad = false;
    return push(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        for (auto id : {a.id, b.id}) {
            if (g.needs(id)) {
                auto& gi = g.grad_of(id).data;
                for (std::size_t i = 0; i < gi.size(); ++i) {
                    gi[i] += go[i];
                }
            }
        }
    });
}

Var Graph::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Graph::mul(Var a, Var b) {
    check(a);
    check(b);
    same_shape(val(a.id), val(b.id), "mul");
    Tensor out(val(a.id).shape);
    const auto& av = val(a.id).data;
    const auto& bv = val(b.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = av[i] * bv[i];
    }
    return push(std::move(out), {a.id, b.id}, [a, b](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        if (g.needs(a.id)) {
            auto& ga = g.grad_of(a.id).data;
            const auto& bv = g.val(b.id).data;
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += go[i] * bv[i];
            }
        }
        if (g.needs(b.id)) {
            auto& gb = g.grad_of(b.id).data;
            const auto& av = g.val(a.id).data;
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] += go[i] * av[i];
            }
        }
    });
}

Var Graph::add_row(Var x, Var bias) {
    check(x);
    check(bias);
    const Tensor& xv = val(x.id);
    const Tensor& bv = val(bias.id);
    require(bv.rank() == 1 && xv.rank() <= 2 && xv.cols() == bv.size(), ErrorKind::kShape,
            "add_row: " + xv.shape_str() + " + " + bv.shape_str());
    const std::size_t rows = xv.rows(), cols = xv.cols();
    Tensor out(xv.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out.data[r * cols + c] = xv.data[r * cols + c] + bv.data[c];
        }
    }
    return push(std::move(out), {x.id, bias.id}, [x, bias, rows, cols](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        if (g.needs(x.id)) {
            auto& gx = g.grad_of(x.id).data;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += go[i];
            }
        }
        if (g.needs(bias.id)) {
            auto& gb = g.grad_of(bias.id).data;
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    gb[c] += go[r * cols + c];
                }
            }
        }
    });
}

Var Graph::scale(Var x, double s) {
    check(x);
    Tensor out(val(x.id).shape);
    const auto& xv = val(x.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = xv[i] * s;
    }
    return push(std::move(out), {x.id}, [x, s](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += go[i] * s;
        }
    });
}

Var Graph::add_scalar(Var x, double s) {
    check(x);
    Tensor out(val(x.id).shape);
    const auto& xv = val(x.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = xv[i] + s;
    }
    return push(std::move(out), {x.id}, [x](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += go[i];
        }
    });
}

#define EMORANK_UNARY(NAME, FWD, DERIV)                                                            \
    Var Graph::NAME(Var x) {                                                                       \
        check(x);                                                                                  \
        Tensor out(val(x.id).shape);                                                               \
        const auto& xv = val(x.id).data;                                                           \
        for (std::size_t i = 0; i < out.data.size(); ++i) {                                        \
            const double in = xv[i];                                                               \
            out.data[i] = (FWD);                                                                   \
        }                                                                                          \
        return push(std::move(out), {x.id}, [x](Graph& g, std::size_t self) {                      \
            const auto& go = g.nodes_[self].grad.data;                                             \
            const auto& ov = g.nodes_[self].value.data;                                            \
            const auto& xv = g.val(x.id).data;                                                     \
            auto& gx = g.grad_of(x.id).data;                                                       \
            for (std::size_t i = 0; i < gx.size(); ++i) {                                          \
                const double in = xv[i];                                                           \
                const double out = ov[i];                                                          \
                (void)in;                                                                          \
                (void)out;                                                                         \
                gx[i] += go[i] * (DERIV);                                                          \
            }                                                                                      \
        });                                                                                        \
    }

EMORANK_UNARY(relu, in > 0.0 ? in : 0.0, in > 0.0 ? 1.0 : 0.0)
EMORANK_UNARY(tanh, std::tanh(in), 1.0 - out * out)
EMORANK_UNARY(sigmoid, in >= 0.0 ? 1.0 / (1.0 + std::exp(-in)) : std::exp(in) / (1.0 + std::exp(in)),
              out * (1.0 - out))
EMORANK_UNARY(log, std::log(in), 1.0 / in)

#undef EMORANK_UNARY

Var Graph::clamp(Var x, double lo, double hi) {
    check(x);
    Tensor out(val(x.id).shape);
    const auto& xv = val(x.id).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = std::clamp(xv[i], lo, hi);
    }
    return push(std::move(out), {x.id}, [x, lo, hi](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& xv = g.val(x.id).data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] >= lo && xv[i] <= hi) {
                gx[i] += go[i];
            }
        }
    });
}

Var Graph::softmax(Var x, std::size_t axis) {
    check(x);
    const Tensor& xv = val(x.id);
    require(xv.rank() >= 1 && xv.rank() <= 2, ErrorKind::kShape, "softmax: rank must be 1 or 2");
    require(axis < xv.rank(), ErrorKind::kInvalidArgument,
            "softmax: axis " + std::to_string(axis) + " out of range for " + xv.shape_str());
    const std::size_t rows = xv.rows(), cols = xv.cols();
    // Reduce along columns of a row (row_axis) or along rows of a column.
    const bool row_axis = xv.rank() == 1 || axis == 1;
    const std::size_t groups = row_axis ? rows : cols;
    const std::size_t len = row_axis ? cols : rows;
    const std::size_t stride = row_axis ? 1 : cols;
    auto offset = [=](std::size_t grp) { return row_axis ? grp * cols : grp; };

    Tensor out(xv.shape);
    for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::size_t base = offset(grp);
        double mx = -INFINITY;
        for (std::size_t i = 0; i < len; ++i) {
            mx = std::max(mx, xv.data[base + i * stride]);
        }
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double e = std::exp(xv.data[base + i * stride] - mx);
            out.data[base + i * stride] = e;
            s += e;
        }
        for (std::size_t i = 0; i < len; ++i) {
            out.data[base + i * stride] /= s;
        }
    }
    return push(std::move(out), {x.id}, [=](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& y = g.nodes_[self].value.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t grp = 0; grp < groups; ++grp) {
            const std::size_t base = offset(grp);
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                dot += go[base + i * stride] * y[base + i * stride];
            }
            for (std::size_t i = 0; i < len; ++i) {
                const std::size_t idx = base + i * stride;
                gx[idx] += y[idx] * (go[idx] - dot);
            }
        }
    });
}

Var Graph::log_softmax(Var x) {
    check(x);
    const Tensor& xv = val(x.id);
    require(xv.rank() >= 1 && xv.rank() <= 2, ErrorKind::kShape, "log_softmax: rank must be 1 or 2");
    const std::size_t rows = xv.rows(), cols = xv.cols();
    Tensor out(xv.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data.data() + r * cols;
        double mx = -INFINITY;
        for (std::size_t c = 0; c < cols; ++c) {
            mx = std::max(mx, in[c]);
        }
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            s += std::exp(in[c] - mx);
        }
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < cols; ++c) {
            out.data[r * cols + c] = in[c] - lse;
        }
    }
    return push(std::move(out), {x.id}, [x, rows, cols](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        const auto& y = g.nodes_[self].value.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t r = 0; r < rows; ++r) {
            double gsum = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
                gsum += go[r * cols + c];
            }
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * cols + c;
                gx[i] += go[i] - std::exp(y[i]) * gsum;
            }
        }
    });
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
    check(x);
    check(gain);
    check(bias);
    const Tensor& xv = val(x.id);
    const std::size_t rows = xv.rows(), cols = xv.cols();
    require(val(gain.id).rank() == 1 && val(gain.id).size() == cols && val(bias.id).rank() == 1 &&
                val(bias.id).size() == cols,
            ErrorKind::kShape, "layer_norm: gain/bias must be [" + std::to_string(cols) + "]");
    Tensor out(xv.shape);
    // Normalized activations and inverse std per row, kept for backward.
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_std(rows);
    const auto& gv = val(gain.id).data;
    const auto& bv = val(bias.id).data;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data.data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            mean += in[c];
        }
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            var += (in[c] - mean) * (in[c] - mean);
        }
        var /= static_cast<double>(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            xhat[i] = (in[c] - mean) * inv_std[r];
            out.data[i] = xhat[i] * gv[c] + bv[c];
        }
    }
    return push(std::move(out), {x.id, gain.id, bias.id},
                [x, gain, bias, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Graph& g, std::size_t self) {
                    const auto& go = g.nodes_[self].grad.data;
                    const auto& gv = g.val(gain.id).data;
                    if (g.needs(gain.id)) {
                        auto& gg = g.grad_of(gain.id).data;
                        for (std::size_t i = 0; i < go.size(); ++i) {
                            gg[i % cols] += go[i] * xhat[i];
                        }
                    }
                    if (g.needs(bias.id)) {
                        auto& gb = g.grad_of(bias.id).data;
                        for (std::size_t i = 0; i < go.size(); ++i) {
                            gb[i % cols] += go[i];
                        }
                    }
                    if (g.needs(x.id)) {
                        auto& gx = g.grad_of(x.id).data;
                        const double n = static_cast<double>(cols);
                        for (std::size_t r = 0; r < rows; ++r) {
                            double s1 = 0.0, s2 = 0.0;
                            for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                const double d = go[i] * gv[c];
                                s1 += d;
                                s2 += d * xhat[i];
                            }
                            for (std::size_t c = 0; c < cols; ++c) {
                                const std::size_t i = r * cols + c;
                                const double d = go[i] * gv[c];
                                gx[i] += inv_std[r] * (d - s1 / n - xhat[i] * s2 / n);
                            }
                        }
                    }
                });
}

Var Graph::conv1d(Var x, Var kernel) {
    check(x);
    check(kernel);
    const Tensor& xv = val(x.id);
    const Tensor& kv = val(kernel.id);
    require(xv.rank() == 2 && kv.rank() == 3 && kv.shape[1] == xv.cols() && kv.shape[0] >= 1, ErrorKind::kShape,
            "conv1d: input " + xv.shape_str() + " incompatible with kernel " + kv.shape_str());
    const std::size_t t = xv.rows(), cin = xv.cols(), ksize = kv.shape[0], cout = kv.shape[2];
    Tensor out = Tensor::matrix(t, cout);
    kernels::conv1d(xv.data, kv.data, out.data, t, cin, cout, ksize);
    return push(std::move(out), {x.id, kernel.id}, [=](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        if (g.needs(x.id)) {
            kernels::conv1d_grad_input(go, g.val(kernel.id).data, g.grad_of(x.id).data, t, cin, cout, ksize);
        }
        if (g.needs(kernel.id)) {
            kernels::conv1d_grad_weight(g.val(x.id).data, go, g.grad_of(kernel.id).data, t, cin, cout, ksize);
        }
    });
}

Var Graph::embedding_lookup(Var table, std::size_t index) {
    check(table);
    const Tensor& tv = val(table.id);
    require(tv.rank() == 2, ErrorKind::kShape, "embedding_lookup: table must be rank 2");
    require(index < tv.rows(), ErrorKind::kInvalidArgument,
            "embedding_lookup: index " + std::to_string(index) + " out of range");
    const std::size_t d = tv.cols();
    Tensor out({d});
    std::copy_n(tv.data.begin() + static_cast<std::ptrdiff_t>(index * d), d, out.data.begin());
    return push(std::move(out), {table.id}, [table, index, d](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        auto& gt = g.grad_of(table.id).data;
        for (std::size_t c = 0; c < d; ++c) {
            gt[index * d + c] += go[c];
        }
    });
}

Var Graph::mean_over_time(Var x) {
    check(x);
    const Tensor& xv = val(x.id);
    require(xv.rank() == 2 && xv.rows() >= 1, ErrorKind::kShape, "mean_over_time: need [T>=1, C]");
    const std::size_t t = xv.rows(), c = xv.cols();
    Tensor out({c});
    for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            out.data[j] += xv.data[r * c + j];
        }
    }
    for (auto& v : out.data) {
        v /= static_cast<double>(t);
    }
    const double inv = 1.0 / static_cast<double>(t);
    return push(std::move(out), {x.id}, [x, t, c, inv](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t r = 0; r < t; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
                gx[r * c + j] += go[j] * inv;
            }
        }
    });
}

Var Graph::slice_cols(Var x, std::size_t start, std::size_t count) {
    check(x);
    const Tensor& xv = val(x.id);
    require(xv.rank() == 2 && start + count <= xv.cols(), ErrorKind::kShape, "slice_cols: out of range");
    const std::size_t rows = xv.rows(), cols = xv.cols();
    Tensor out = Tensor::matrix(rows, count);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(xv.data.begin() + static_cast<std::ptrdiff_t>(r * cols + start), count,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * count));
    }
    return push(std::move(out), {x.id}, [x, start, count, rows, cols](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        auto& gx = g.grad_of(x.id).data;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < count; ++c) {
                gx[r * cols + start + c] += go[r * count + c];
            }
        }
    });
}

Var Graph::concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), ErrorKind::kShape, "concat_cols: no inputs");
    std::vector<std::size_t> ids;
    std::vector<std::size_t> widths;
    const std::size_t rows = val(parts[0].id).rows();
    std::size_t total = 0;
    for (auto p : parts) {
        check(p);
        const Tensor& pv = val(p.id);
        require(pv.rank() == 2 && pv.rows() == rows, ErrorKind::kShape, "concat_cols: row count mismatch");
        ids.push_back(p.id);
        widths.push_back(pv.cols());
        total += pv.cols();
    }
    Tensor out = Tensor::matrix(rows, total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const Tensor& pv = val(ids[k]);
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pv.data.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                        out.data.begin() + static_cast<std::ptrdiff_t>(r * total + off));
        }
        off += widths[k];
    }
    return push(std::move(out), std::span<const std::size_t>(ids), [ids, widths, rows, total](Graph& g, std::size_t self) {
        const auto& go = g.nodes_[self].grad.data;
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (g.needs(ids[k])) {
                auto& gp = g.grad_of(ids[k]).data;
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < widths[k]; ++c) {
                        gp[r * widths[k] + c] += go[r * total + off + c];
                    }
                }
            }
            off += widths[k];
        }
    });
}

Var Graph::dropout(Var x, double p, std::mt19937_64& rng) {
    check(x);
    require(p >= 0.0 && p < 1.0, ErrorKind::kInvalidArgument, "dropout: p must be in [0, 1)");
    if (p == 0.0) {
        return x;
    }
    std::bernoulli_distribution keep(1.0 - p);
    Tensor mask(val(x.id).shape);
    const double s = 1.0 / (1.0 - p);
    for (auto& m : mask.data) {
        m = keep(rng) ? s : 0.0;
    }
    return mul(x, constant(std::move(mask)));
}

Var Graph::pick(Var x, std::size_t index) {
    check(x);
    require(index < val(x.id).size(), ErrorKind::kInvalidArgument, "pick: index out of range");
    Tensor out = Tensor::scalar(val(x.id).data[index]);
    return push(std::move(out), {x.id}, [x, index](Graph& g, std::size_t self) {
        g.grad_of(x.id).data[index] += g.nodes_[self].grad.data[0];
    });
}

Var Graph::sum(Var x) {
    check(x);
    double s = 0.0;
    for (double v : val(x.id).data) {
        s += v;
    }
    return push(Tensor::scalar(s), {x.id}, [x](Graph& g, std::size_t self) {
        const double go = g.nodes_[self].grad.data[0];
        for (auto& v : g.grad_of(x.id).data) {
            v += go;
        }
    });
}

}  // namespace emorank
