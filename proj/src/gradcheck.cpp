#include "emorank/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "emorank/mixup.h"
#include "emorank/training.h"

namespace emorank {

namespace {

// Key biases (softmax shift) and the last projector bias (cancels in r_i - r_j)
// have identically zero gradients; compare those absolutely.
constexpr double kGradFloor = 1e-6;

}  // namespace

ExtractorConfig tiny_extractor_config() {
    ExtractorConfig c;
    c.input_dim = 5;
    c.hidden_dim = 16;
    c.n_fft_blocks = 2;
    c.n_heads = 2;
    c.conv_kernel = 3;
    c.conv_filter_dim = 24;
    c.projector_hidden = 8;
    c.classes = {"Neutral", "Amused", "Angry"};
    c.neutral_class = 0;
    return c;
}

nlohmann::json GradcheckReport::to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& t : tensors) {
        per.push_back({{"name", t.name}, {"size", t.size}, {"rel_error", t.rel_error}});
    }
    return {{"max_rel_error", max_rel_error}, {"tolerance", tolerance}, {"passed", passed()}, {"tensors", per}};
}

GradcheckReport gradcheck_total_loss(const ExtractorConfig& cfg, const GradcheckOptions& opt) {
    cfg.validate();
    std::mt19937_64 rng(opt.seed);
    ModelParams params = init_params(cfg, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Bias-like tensors start at zero-ish scale elsewhere; give every tensor
    // generic values so no gradient is trivially zero.
    for (auto& t : params.tensors) {
        for (auto& v : t.data) {
            v += 0.1 * normal(rng);
        }
    }
    for (std::size_t c = 0; c < cfg.input_dim; ++c) {
        params.norm_mean.data[c] = 0.1 * normal(rng);
        params.norm_std.data[c] = 1.0 + 0.2 * std::abs(normal(rng));
    }
    Tensor emo = Tensor::matrix(opt.frames, cfg.input_dim), neu = Tensor::matrix(opt.frames, cfg.input_dim);
    for (auto& v : emo.data) v = normal(rng);
    for (auto& v : neu.data) v = normal(rng);
    const std::size_t y_emo = cfg.neutral_class == 0 ? 1 : 0;
    const MixPair pair = make_mix_pair(emo, y_emo, neu, cfg.neutral_class, cfg.neutral_class, rng);

    const PairLoss analytic = pair_loss_and_grad(params, cfg, pair, opt.weights, false, nullptr);
    GradcheckReport report;
    report.tolerance = opt.tolerance;
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        Tensor& p = params.tensors[k];
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double saved = p.data[i];
            p.data[i] = saved + opt.step;
            const double up = pair_total_loss(params, cfg, pair, opt.weights);
            p.data[i] = saved - opt.step;
            const double down = pair_total_loss(params, cfg, pair, opt.weights);
            p.data[i] = saved;
            const double num = (up - down) / (2.0 * opt.step);
            const double an = analytic.grads[k].data[i];
            diff2 += (an - num) * (an - num);
            a2 += an * an;
            n2 += num * num;
        }
        const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), kGradFloor});
        report.tensors.push_back({params.names[k], p.data.size(), rel});
        report.max_rel_error = std::max(report.max_rel_error, rel);
    }
    return report;
}

}  // namespace emorank
