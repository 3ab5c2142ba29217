#include "emorank/adam.h"

#include <cmath>

#include "emorank/error.h"

namespace emorank {

AdamState AdamState::zeros_like(const std::vector<Tensor*>& params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape, 0.0);
        s.v.emplace_back(p->shape, 0.0);
    }
    return s;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state,
               const AdamConfig& cfg) {
    require(params.size() == grads.size() && params.size() == state.m.size() && params.size() == state.v.size(),
            ErrorKind::kShape, "adam_step: parameter/gradient/state count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        require(grads[k]->shape == params[k]->shape && state.m[k].shape == params[k]->shape, ErrorKind::kShape,
                "adam_step: tensor " + std::to_string(k) + " shape mismatch");
        require(grads[k]->all_finite(), ErrorKind::kNonFinite,
                "adam_step: non-finite gradient in tensor " + std::to_string(k));
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params[k]->data;
        const auto& g = grads[k]->data;
        auto& m = state.m[k].data;
        auto& v = state.v[k].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace emorank
