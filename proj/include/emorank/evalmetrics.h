#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "emorank/tensor.h"

namespace emorank {

inline constexpr std::size_t kCepstralOrder = 13;

/// Orthonormal DCT-II along each row of a log-mel matrix [T, n_mels];
/// returns c0..c_order, [T, order + 1].
Tensor mel_cepstrum(const Tensor& log_mel, std::size_t order = kCepstralOrder);

/// Per-frame (10/ln10) * sqrt(2 * sum_{d>=1} (a_d - b_d)^2), dimension 0 excluded.
std::vector<double> mcd_per_frame(const Tensor& a, const Tensor& b);
/// Mean of mcd_per_frame over frames, in dB.
double mcd(const Tensor& a, const Tensor& b);

/// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::string units;
    std::size_t n_items = 0;
    std::vector<double> per_item;

    void validate() const;
    nlohmann::json to_json() const;
    std::string to_table() const;
};

}  // namespace emorank
