#pragma once

#include <cstddef>
#include <span>

#include "emorank/graph.h"

namespace emorank {

struct LossWeights {
    double alpha = 0.1;
    double beta = 1.0;

    void validate() const;
};

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before the log.
inline constexpr double kProbClamp = 1e-7;

/// -log softmax(logits)[target]
double cross_entropy(std::span<const double> logits, std::size_t target);

/// L_i + L_j with L_i = l_i CE(i, y_emo) + (1 - l_i) CE(i, y_neu).
double mixup_ce(std::span<const double> logits_i, std::span<const double> logits_j, double lambda_i, double lambda_j,
                std::size_t y_emo, std::size_t y_neu);

/// sigmoid(r_i - r_j), evaluated without overflow.
double pair_probability(double r_i, double r_j);

/// Binary cross-entropy of p against the soft target lambda_diff.
double rank_loss(double p, double lambda_diff);

double total_loss(double l_mixup, double l_rank, const LossWeights& w);

// Differentiable counterparts; inputs and outputs live in `g`.
namespace graph_loss {

Var cross_entropy(Graph& g, Var logits, std::size_t target);
Var mixup_ce(Graph& g, Var logits_i, Var logits_j, double lambda_i, double lambda_j, std::size_t y_emo,
             std::size_t y_neu);
Var pair_probability(Graph& g, Var r_i, Var r_j);
Var rank_loss(Graph& g, Var p, double lambda_diff);
Var total_loss(Graph& g, Var l_mixup, Var l_rank, const LossWeights& w);

}  // namespace graph_loss

}  // namespace emorank
