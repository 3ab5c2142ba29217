#pragma once

#include <cstdint>
#include <vector>

#include "emorank/tensor.h"

namespace emorank {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter tensor.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const std::vector<Tensor*>& params);
};

/// One bias-corrected Adam update in place. Throws on a non-finite gradient
/// before touching any parameter.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace emorank
