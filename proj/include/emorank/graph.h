#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "emorank/tensor.h"

namespace emorank {

/// Handle to a value recorded in a Graph.
struct Var {
    std::size_t id = 0;
};

/// Tape-based reverse-mode differentiation. Nodes are appended in execution
/// order, which is already a topological order; backward() walks the tape in
/// reverse and visits each node once. A Graph is single-threaded; separate
/// graphs share nothing mutable, so they can run on separate threads.
///
/// Rank-1 tensors act as row vectors wherever a matrix is expected.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    /// Leaf whose gradient is tracked. The tensor is borrowed, not copied, and
    /// must outlive the graph.
    Var param(const Tensor& value);

    const Tensor& value(Var v) const;
    /// Gradient of the last backward() target; zeros for unused nodes.
    const Tensor& grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1. `loss` must hold a single element.
    void backward(Var loss);

    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_bt(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    /// x[t, c] + bias[c]
    Var add_row(Var x, Var bias);
    Var scale(Var x, double s);
    Var add_scalar(Var x, double s);

    Var relu(Var x);
    Var tanh(Var x);
    Var sigmoid(Var x);
    Var log(Var x);
    /// Values outside [lo, hi] are clamped and pass no gradient.
    Var clamp(Var x, double lo, double hi);

    Var softmax(Var x, std::size_t axis);
    /// Log-softmax along the last axis.
    Var log_softmax(Var x);
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    /// Time-preserving 1-D convolution. x: [T, Cin], kernel: [K, Cin, Cout].
    Var conv1d(Var x, Var kernel);
    /// Row `index` of a [N, D] table, as a rank-1 [D] tensor.
    Var embedding_lookup(Var table, std::size_t index);
    /// [T, C] -> [C]
    Var mean_over_time(Var x);

    Var slice_cols(Var x, std::size_t start, std::size_t count);
    Var concat_cols(std::span<const Var> parts);
    /// Inverted dropout with keep-probability 1 - p; identity when p == 0.
    Var dropout(Var x, double p, std::mt19937_64& rng);

    /// Single element at flat index, as a scalar.
    Var pick(Var x, std::size_t index);
    Var sum(Var x);

private:
    struct Node {
        Tensor value;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Graph&, std::size_t)> backward;
    };

    const Tensor& val(std::size_t id) const;
    Tensor& grad_of(std::size_t id);
    bool needs(std::size_t id) const { return nodes_[id].needs_grad; }
    Var push(Tensor value, std::initializer_list<std::size_t> inputs,
             std::function<void(Graph&, std::size_t)> backward);
    Var push(Tensor value, std::span<const std::size_t> inputs, std::function<void(Graph&, std::size_t)> backward);
    void check(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace emorank
