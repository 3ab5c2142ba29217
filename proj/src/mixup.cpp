#include "emorank/mixup.h"

#include <algorithm>

#include "emorank/error.h"

namespace emorank {
namespace {

Tensor crop_rows(const Tensor& x, std::size_t offset, std::size_t len) {
    const std::size_t cols = x.cols();
    Tensor out = Tensor::matrix(len, cols);
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(offset * cols), len * cols, out.data.begin());
    return out;
}

}  // namespace

std::pair<double, double> sample_lambdas(std::mt19937_64& rng) {
    // Beta(1, 1) is uniform on (0, 1).
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto draw = [&] {
        double v = 0.0;
        while (v <= 0.0) {
            v = u(rng);
        }
        return v;
    };
    const double li = draw();
    const double lj = draw();
    return {li, lj};
}

double lambda_diff(double lambda_i, double lambda_j) { return (lambda_i - lambda_j + 1.0) / 2.0; }

AlignedPair align_lengths(const Tensor& x_emo, const Tensor& x_neu, std::mt19937_64& rng) {
    require(x_emo.rank() == 2 && x_neu.rank() == 2 && x_emo.cols() == x_neu.cols(), ErrorKind::kShape,
            "align_lengths: inputs must be [T, C] with equal C");
    require(x_emo.rows() >= 1 && x_neu.rows() >= 1, ErrorKind::kShape, "align_lengths: empty input");
    const std::size_t t = std::min(x_emo.rows(), x_neu.rows());
    auto offset = [&](std::size_t len) {
        if (len == t) {
            return std::size_t{0};
        }
        return std::uniform_int_distribution<std::size_t>(0, len - t)(rng);
    };
    AlignedPair out;
    out.emo_offset = offset(x_emo.rows());
    out.neu_offset = offset(x_neu.rows());
    out.emo = crop_rows(x_emo, out.emo_offset, t);
    out.neu = crop_rows(x_neu, out.neu_offset, t);
    return out;
}

Tensor mix(const Tensor& emo, const Tensor& neu, double lambda) {
    require(emo.shape == neu.shape, ErrorKind::kShape, "mix: shape mismatch");
    require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kInvalidArgument, "mix: lambda outside [0, 1]");
    Tensor out(emo.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double v = lambda * emo.data[i] + (1.0 - lambda) * neu.data[i];
        out.data[i] = std::clamp(v, std::min(emo.data[i], neu.data[i]), std::max(emo.data[i], neu.data[i]));
    }
    return out;
}

MixPair make_mix_pair(const AlignedPair& aligned, double lambda_i, double lambda_j, std::size_t y_emo,
                      std::size_t y_neu) {
    require(y_emo != y_neu, ErrorKind::kInvalidArgument, "make_mix_pair: y_emo equals y_neu");
    MixPair p;
    p.x_mix_i = mix(aligned.emo, aligned.neu, lambda_i);
    p.x_mix_j = mix(aligned.emo, aligned.neu, lambda_j);
    p.lambda_i = lambda_i;
    p.lambda_j = lambda_j;
    p.lambda_diff = lambda_diff(lambda_i, lambda_j);
    p.y_emo = y_emo;
    p.y_neu = y_neu;
    return p;
}

MixPair make_mix_pair(const Tensor& x_emo, std::size_t y_emo, const Tensor& x_neu, std::size_t y_neu,
                      std::size_t neutral_class, std::mt19937_64& rng) {
    require(y_emo != neutral_class, ErrorKind::kInvalidArgument, "make_mix_pair: x_emo carries the neutral label");
    require(y_neu == neutral_class, ErrorKind::kInvalidArgument, "make_mix_pair: x_neu is not neutral");
    const AlignedPair aligned = align_lengths(x_emo, x_neu, rng);
    const auto [li, lj] = sample_lambdas(rng);
    return make_mix_pair(aligned, li, lj, y_emo, y_neu);
}

}  // namespace emorank
