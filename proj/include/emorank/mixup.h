#pragma once

#include <cstddef>
#include <random>
#include <utility>

#include "emorank/tensor.h"

namespace emorank {

/// Two convex mixtures of the same (emotional, neutral) pair.
struct MixPair {
    Tensor x_mix_i;
    Tensor x_mix_j;
    double lambda_i = 0.0;
    double lambda_j = 0.0;
    double lambda_diff = 0.5;
    std::size_t y_emo = 0;
    std::size_t y_neu = 0;
};

struct AlignedPair {
    Tensor emo;
    Tensor neu;
    std::size_t emo_offset = 0;
    std::size_t neu_offset = 0;
};

/// Two independent Beta(1,1) draws, strictly inside (0, 1).
std::pair<double, double> sample_lambdas(std::mt19937_64& rng);

/// (lambda_i - lambda_j + 1) / 2
double lambda_diff(double lambda_i, double lambda_j);

/// Crops both [T, C] inputs to the shorter length, each at a uniformly random
/// contiguous offset. Equal lengths are returned unchanged.
AlignedPair align_lengths(const Tensor& x_emo, const Tensor& x_neu, std::mt19937_64& rng);

/// lambda * emo + (1 - lambda) * neu, clamped to the interval spanned by the
/// two inputs; exact at lambda = 0 and 1.
Tensor mix(const Tensor& emo, const Tensor& neu, double lambda);

/// Builds a pair from already aligned inputs with given weights.
MixPair make_mix_pair(const AlignedPair& aligned, double lambda_i, double lambda_j, std::size_t y_emo,
                      std::size_t y_neu);

/// Full sampling path: align, draw weights, mix. Rejects a neutral x_emo or a
/// non-neutral x_neu.
MixPair make_mix_pair(const Tensor& x_emo, std::size_t y_emo, const Tensor& x_neu, std::size_t y_neu,
                      std::size_t neutral_class, std::mt19937_64& rng);

}  // namespace emorank
