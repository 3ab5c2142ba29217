#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "emorank/graph.h"
#include "emorank/tensor.h"

namespace testing {

inline emorank::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
    emorank::Tensor t(std::move(shape));
    std::normal_distribution<double> n(0.0, scale);
    for (auto& v : t.data) v = n(rng);
    return t;
}

// Builds loss = sum(w * f(inputs)) with fixed random w, so every output entry
// contributes a distinct weight to the gradient.
using OpBuilder = std::function<emorank::Var(emorank::Graph&, const std::vector<emorank::Var>&)>;

struct FdResult {
    double max_rel = 0.0;
};

inline double weighted_loss(const OpBuilder& op, const std::vector<emorank::Tensor>& inputs,
                            const emorank::Tensor& weights) {
    emorank::Graph g;
    std::vector<emorank::Var> vars;
    for (const auto& t : inputs) vars.push_back(g.param(t));
    const emorank::Tensor& out = g.value(op(g, vars));
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += weights.data[i] * out.data[i];
    return s;
}

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)
// per input, maximum over inputs.
inline double fd_max_rel_error(const OpBuilder& op, std::vector<emorank::Tensor> inputs, std::mt19937_64& rng,
                               double h = 1e-6) {
    emorank::Graph g;
    std::vector<emorank::Var> vars;
    for (const auto& t : inputs) vars.push_back(g.param(t));
    const emorank::Var out = op(g, vars);
    const emorank::Tensor weights = random_tensor(g.value(out).shape, rng);
    const emorank::Var loss = g.sum(g.mul(out, g.constant(weights)));
    g.backward(loss);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const emorank::Tensor analytic = g.grad(vars[k]);
        double d2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < inputs[k].data.size(); ++i) {
            const double saved = inputs[k].data[i];
            inputs[k].data[i] = saved + h;
            const double up = weighted_loss(op, inputs, weights);
            inputs[k].data[i] = saved - h;
            const double down = weighted_loss(op, inputs, weights);
            inputs[k].data[i] = saved;
            const double num = (up - down) / (2.0 * h);
            d2 += (analytic.data[i] - num) * (analytic.data[i] - num);
            a2 += analytic.data[i] * analytic.data[i];
            n2 += num * num;
        }
        worst = std::max(worst, std::sqrt(d2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8}));
    }
    return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("emorank_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
