#include "emorank/evalmetrics.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "emorank/error.h"

namespace emorank {

Tensor mel_cepstrum(const Tensor& log_mel, std::size_t order) {
    require(log_mel.rank() == 2, ErrorKind::kShape, "mel_cepstrum: expected [T, n_mels]");
    const std::size_t t_len = log_mel.rows(), m = log_mel.cols();
    require(order + 1 <= m, ErrorKind::kShape, "mel_cepstrum: order exceeds the mel dimension");
    Tensor basis = Tensor::matrix(order + 1, m);
    for (std::size_t k = 0; k <= order; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(m));
        for (std::size_t n = 0; n < m; ++n) {
            basis.at(k, n) =
                scale * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(n) + 0.5) /
                                 static_cast<double>(m));
        }
    }
    Tensor out = Tensor::matrix(t_len, order + 1);
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t k = 0; k <= order; ++k) {
            double s = 0.0;
            for (std::size_t n = 0; n < m; ++n) {
                s += basis.at(k, n) * log_mel.at(t, n);
            }
            out.at(t, k) = s;
        }
    }
    return out;
}

std::vector<double> mcd_per_frame(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && a.shape == b.shape, ErrorKind::kShape,
            "mcd: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    require(a.rows() >= 1 && a.cols() >= 2, ErrorKind::kShape, "mcd: need >= 1 frame and >= 2 coefficients");
    const double k = 10.0 / std::numbers::ln10;
    std::vector<double> out(a.rows());
    for (std::size_t t = 0; t < a.rows(); ++t) {
        double s = 0.0;
        for (std::size_t d = 1; d < a.cols(); ++d) {
            const double diff = a.at(t, d) - b.at(t, d);
            s += diff * diff;
        }
        out[t] = k * std::sqrt(2.0 * s);
    }
    return out;
}

double mcd(const Tensor& a, const Tensor& b) {
    const auto per = mcd_per_frame(a, b);
    return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

std::vector<double> fractional_ranks(std::span<const double> xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    require(xs.size() == ys.size() && xs.size() >= 2, ErrorKind::kShape, "pearson: need equal lengths >= 2");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    require(sxx > 0.0 && syy > 0.0, ErrorKind::kInvalidArgument, "correlation undefined: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
    require(xs.size() == ys.size() && xs.size() >= 2, ErrorKind::kShape, "spearman: need equal lengths >= 2");
    const auto rx = fractional_ranks(xs);
    const auto ry = fractional_ranks(ys);
    return pearson(rx, ry);
}

void MetricReport::validate() const {
    require(std::isfinite(value), ErrorKind::kNonFinite, metric + ": value is not finite");
    require(n_items >= 1, ErrorKind::kInvalidArgument, metric + ": report has no items");
}

nlohmann::json MetricReport::to_json() const {
    return nlohmann::json{
        {"metric", metric}, {"value", value}, {"units", units}, {"n_items", n_items}, {"per_item", per_item}};
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "metric   " << metric << '\n' << "value    " << value << ' ' << units << '\n' << "n_items  " << n_items << '\n';
    if (!per_item.empty()) {
        const auto [lo, hi] = std::minmax_element(per_item.begin(), per_item.end());
        os << "min      " << *lo << ' ' << units << '\n' << "max      " << *hi << ' ' << units << '\n';
    }
    return os.str();
}

}  // namespace emorank
