#include "emorank/kernels.h"

namespace emorank::kernels {
namespace {

// Row bodies shared by the serial and OpenMP drivers.

inline void matmul_row(const double* a, const double* b, double* out, std::size_t i, std::size_t k,
                       std::size_t n) {
    double* orow = out + i * n;
    for (std::size_t j = 0; j < n; ++j) {
        orow[j] = 0.0;
    }
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] += av * brow[j];
        }
    }
}

inline void matmul_bt_row(const double* a, const double* b, double* out, std::size_t i, std::size_t k,
                          std::size_t n) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            s += arow[p] * brow[p];
        }
        out[i * n + j] += s;
    }
}

inline void matmul_at_row(const double* a, const double* b, double* out, std::size_t p, std::size_t m,
                          std::size_t k, std::size_t n) {
    double* orow = out + p * n;
    for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + p];
        if (av == 0.0) {
            continue;
        }
        const double* brow = b + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] += av * brow[j];
        }
    }
}

inline std::ptrdiff_t pad_left(std::size_t ksize) { return static_cast<std::ptrdiff_t>((ksize - 1) / 2); }

inline void conv1d_row(const double* x, const double* w, double* out, std::size_t t, std::size_t steps,
                       std::size_t cin, std::size_t cout, std::size_t ksize) {
    double* orow = out + t * cout;
    for (std::size_t o = 0; o < cout; ++o) {
        orow[o] = 0.0;
    }
    const std::ptrdiff_t pad = pad_left(ksize);
    for (std::size_t kk = 0; kk < ksize; ++kk) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(kk) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) {
            continue;
        }
        const double* xrow = x + static_cast<std::size_t>(src) * cin;
        const double* wk = w + kk * cin * cout;
        for (std::size_t c = 0; c < cin; ++c) {
            const double xv = xrow[c];
            const double* wrow = wk + c * cout;
            for (std::size_t o = 0; o < cout; ++o) {
                orow[o] += xv * wrow[o];
            }
        }
    }
}

inline void conv1d_grad_input_row(const double* gout, const double* w, double* gx, std::size_t s,
                                  std::size_t steps, std::size_t cin, std::size_t cout, std::size_t ksize) {
    const std::ptrdiff_t pad = pad_left(ksize);
    double* gxrow = gx + s * cin;
    for (std::size_t kk = 0; kk < ksize; ++kk) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(s) - static_cast<std::ptrdiff_t>(kk) + pad;
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(steps)) {
            continue;
        }
        const double* grow = gout + static_cast<std::size_t>(t) * cout;
        const double* wk = w + kk * cin * cout;
        for (std::size_t c = 0; c < cin; ++c) {
            const double* wrow = wk + c * cout;
            double acc = 0.0;
            for (std::size_t o = 0; o < cout; ++o) {
                acc += grow[o] * wrow[o];
            }
            gxrow[c] += acc;
        }
    }
}

inline void conv1d_grad_weight_row(const double* x, const double* gout, double* gw, std::size_t kc,
                                   std::size_t steps, std::size_t cin, std::size_t cout, std::size_t ksize) {
    const std::size_t kk = kc / cin;
    const std::size_t c = kc % cin;
    const std::ptrdiff_t pad = pad_left(ksize);
    double* gwrow = gw + kc * cout;
    for (std::size_t t = 0; t < steps; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(kk) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) {
            continue;
        }
        const double xv = x[static_cast<std::size_t>(src) * cin + c];
        const double* grow = gout + t * cout;
        for (std::size_t o = 0; o < cout; ++o) {
            gwrow[o] += xv * grow[o];
        }
    }
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
            std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        matmul_row(a.data(), b.data(), out.data(), i, k, n);
    }
}

void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                   std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        matmul_bt_row(a.data(), b.data(), out.data(), i, k, n);
    }
}

void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                   std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        matmul_at_row(a.data(), b.data(), out.data(), p, m, k, n);
    }
}

void conv1d(std::span<const double> x, std::span<const double> w, std::span<double> out, std::size_t t,
            std::size_t cin, std::size_t cout, std::size_t ksize) {
    for (std::size_t s = 0; s < t; ++s) {
        conv1d_row(x.data(), w.data(), out.data(), s, t, cin, cout, ksize);
    }
}

void conv1d_grad_input(std::span<const double> gout, std::span<const double> w, std::span<double> gx,
                       std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize) {
    for (std::size_t s = 0; s < t; ++s) {
        conv1d_grad_input_row(gout.data(), w.data(), gx.data(), s, t, cin, cout, ksize);
    }
}

void conv1d_grad_weight(std::span<const double> x, std::span<const double> gout, std::span<double> gw,
                        std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize) {
    for (std::size_t kc = 0; kc < ksize * cin; ++kc) {
        conv1d_grad_weight_row(x.data(), gout.data(), gw.data(), kc, t, cin, cout, ksize);
    }
}

}  // namespace serial

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
            std::size_t k, std::size_t n) {
    const bool par = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        matmul_row(a.data(), b.data(), out.data(), static_cast<std::size_t>(i), k, n);
    }
}

void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                   std::size_t k, std::size_t n) {
    const bool par = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        matmul_bt_row(a.data(), b.data(), out.data(), static_cast<std::size_t>(i), k, n);
    }
}

void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                   std::size_t k, std::size_t n) {
    const bool par = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p) {
        matmul_at_row(a.data(), b.data(), out.data(), static_cast<std::size_t>(p), m, k, n);
    }
}

void conv1d(std::span<const double> x, std::span<const double> w, std::span<double> out, std::size_t t,
            std::size_t cin, std::size_t cout, std::size_t ksize) {
    const bool par = t * cin * cout * ksize >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(t); ++s) {
        conv1d_row(x.data(), w.data(), out.data(), static_cast<std::size_t>(s), t, cin, cout, ksize);
    }
}

void conv1d_grad_input(std::span<const double> gout, std::span<const double> w, std::span<double> gx,
                       std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize) {
    const bool par = t * cin * cout * ksize >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(t); ++s) {
        conv1d_grad_input_row(gout.data(), w.data(), gx.data(), static_cast<std::size_t>(s), t, cin, cout, ksize);
    }
}

void conv1d_grad_weight(std::span<const double> x, std::span<const double> gout, std::span<double> gw,
                        std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize) {
    const bool par = t * cin * cout * ksize >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t kc = 0; kc < static_cast<std::ptrdiff_t>(ksize * cin); ++kc) {
        conv1d_grad_weight_row(x.data(), gout.data(), gw.data(), static_cast<std::size_t>(kc), t, cin, cout, ksize);
    }
}

}  // namespace emorank::kernels
