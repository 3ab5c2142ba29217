#include "emorank/losses.h"

#include <algorithm>
#include <cmath>

#include "emorank/error.h"

namespace emorank {
namespace {

void check_mixup_args(std::size_t n_classes, double lambda_i, double lambda_j, std::size_t y_emo, std::size_t y_neu) {
    require(y_emo < n_classes && y_neu < n_classes, ErrorKind::kInvalidArgument, "mixup_ce: class index out of range");
    require(y_emo != y_neu, ErrorKind::kInvalidArgument, "mixup_ce: y_emo must differ from y_neu");
    require(lambda_i >= 0.0 && lambda_i <= 1.0 && lambda_j >= 0.0 && lambda_j <= 1.0, ErrorKind::kInvalidArgument,
            "mixup_ce: lambda outside [0, 1]");
}

}  // namespace

void LossWeights::validate() const {
    require(alpha >= 0.0 && beta >= 0.0, ErrorKind::kInvalidArgument, "loss weights must be >= 0");
    require(alpha > 0.0 || beta > 0.0, ErrorKind::kInvalidArgument, "loss weights must not both be zero");
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
    require(target < logits.size(), ErrorKind::kInvalidArgument, "cross_entropy: target out of range");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double v : logits) {
        s += std::exp(v - mx);
    }
    return mx + std::log(s) - logits[target];
}

double mixup_ce(std::span<const double> logits_i, std::span<const double> logits_j, double lambda_i, double lambda_j,
                std::size_t y_emo, std::size_t y_neu) {
    require(logits_i.size() == logits_j.size(), ErrorKind::kShape, "mixup_ce: logit sizes differ");
    check_mixup_args(logits_i.size(), lambda_i, lambda_j, y_emo, y_neu);
    const double li = lambda_i * cross_entropy(logits_i, y_emo) + (1.0 - lambda_i) * cross_entropy(logits_i, y_neu);
    const double lj = lambda_j * cross_entropy(logits_j, y_emo) + (1.0 - lambda_j) * cross_entropy(logits_j, y_neu);
    return li + lj;
}

double pair_probability(double r_i, double r_j) {
    const double d = r_i - r_j;
    if (d >= 0.0) {
        return 1.0 / (1.0 + std::exp(-d));
    }
    const double e = std::exp(d);
    return e / (1.0 + e);
}

double rank_loss(double p, double lambda_diff) {
    require(lambda_diff >= 0.0 && lambda_diff <= 1.0, ErrorKind::kInvalidArgument, "rank_loss: target outside [0, 1]");
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return -lambda_diff * std::log(pc) - (1.0 - lambda_diff) * std::log(1.0 - pc);
}

double total_loss(double l_mixup, double l_rank, const LossWeights& w) { return w.alpha * l_mixup + w.beta * l_rank; }

namespace graph_loss {

Var cross_entropy(Graph& g, Var logits, std::size_t target) {
    require(target < g.value(logits).size(), ErrorKind::kInvalidArgument, "cross_entropy: target out of range");
    return g.scale(g.pick(g.log_softmax(logits), target), -1.0);
}

Var mixup_ce(Graph& g, Var logits_i, Var logits_j, double lambda_i, double lambda_j, std::size_t y_emo,
             std::size_t y_neu) {
    require(g.value(logits_i).shape == g.value(logits_j).shape, ErrorKind::kShape, "mixup_ce: logit shapes differ");
    check_mixup_args(g.value(logits_i).size(), lambda_i, lambda_j, y_emo, y_neu);
    auto term = [&](Var logits, double lambda) {
        const Var ls = g.log_softmax(logits);
        const Var ce_emo = g.scale(g.pick(ls, y_emo), -lambda);
        const Var ce_neu = g.scale(g.pick(ls, y_neu), -(1.0 - lambda));
        return g.add(ce_emo, ce_neu);
    };
    return g.add(term(logits_i, lambda_i), term(logits_j, lambda_j));
}

Var pair_probability(Graph& g, Var r_i, Var r_j) { return g.sigmoid(g.sub(r_i, r_j)); }

Var rank_loss(Graph& g, Var p, double lambda_diff) {
    require(lambda_diff >= 0.0 && lambda_diff <= 1.0, ErrorKind::kInvalidArgument, "rank_loss: target outside [0, 1]");
    const Var pc = g.clamp(p, kProbClamp, 1.0 - kProbClamp);
    const Var log_p = g.log(pc);
    const Var log_q = g.log(g.add_scalar(g.scale(pc, -1.0), 1.0));
    return g.add(g.scale(log_p, -lambda_diff), g.scale(log_q, -(1.0 - lambda_diff)));
}

Var total_loss(Graph& g, Var l_mixup, Var l_rank, const LossWeights& w) {
    return g.add(g.scale(l_mixup, w.alpha), g.scale(l_rank, w.beta));
}

}  // namespace graph_loss

}  // namespace emorank
