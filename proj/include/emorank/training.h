#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "emorank/adam.h"
#include "emorank/corpus.h"
#include "emorank/extractor.h"
#include "emorank/losses.h"
#include "emorank/mixup.h"

namespace emorank {

struct TrainConfig {
    std::uint64_t iterations = 20000;
    double learning_rate = 1e-6;
    std::size_t batch_pairs = 8;
    std::uint64_t seed = 0;
    /// 0 disables periodic checkpoints.
    std::uint64_t checkpoint_every = 0;
    LossWeights loss_weights;
    PairPolicy pair_policy = PairPolicy::kSameSpeaker;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct LossRecord {
    std::uint64_t iteration = 0;
    double l_mixup = 0.0;
    double l_rank = 0.0;
    double l_total = 0.0;
};

/// Everything needed to continue a run bit-for-bit.
struct TrainState {
    ModelParams params;
    AdamState adam;
    std::mt19937_64 rng;
    std::uint64_t iteration = 0;
    std::vector<LossRecord> trace;
};

/// Per-channel mean and standard deviation over every frame in the corpus;
/// zero deviations are replaced by 1.
void compute_normalization(const Corpus& corpus, Tensor& mean, Tensor& stddev);

/// Seeds the generator, initializes parameters and attaches normalization.
TrainState init_training(const Corpus& corpus, const ExtractorConfig& ecfg, const TrainConfig& tcfg);

using CheckpointFn = std::function<void(const TrainState&)>;

/// Advances `state` until `state.iteration == until`. Per iteration: sample
/// `batch_pairs` mixup pairs, forward both mixtures, accumulate
/// alpha * L_mixup + beta * L_rank averaged over the batch, one Adam step.
/// Pairs run in parallel, each on its own graph; the reduction is in pair
/// order, so results do not depend on the thread count.
void run_training(TrainState& state, const Corpus& corpus, const ExtractorConfig& ecfg, const TrainConfig& tcfg,
                  std::uint64_t until, const CheckpointFn& on_checkpoint = {});

struct TrainResult {
    ModelParams params;
    std::vector<LossRecord> trace;
};

TrainResult train_rank_model(const Corpus& corpus, const ExtractorConfig& ecfg, const TrainConfig& tcfg,
                             const CheckpointFn& on_checkpoint = {});

/// Loss of one pair and its parameter gradients (same order as
/// ModelParams::tensors).
struct PairLoss {
    double l_mixup = 0.0;
    double l_rank = 0.0;
    double l_total = 0.0;
    std::vector<Tensor> grads;
};

PairLoss pair_loss_and_grad(const ModelParams& params, const ExtractorConfig& ecfg, const MixPair& pair,
                            const LossWeights& weights, bool training, std::mt19937_64* dropout_rng);
/// Loss only (no backward), used by finite-difference checks.
double pair_total_loss(const ModelParams& params, const ExtractorConfig& ecfg, const MixPair& pair,
                       const LossWeights& weights);

/// EMOM model section followed by an "EMOA" appendix with full-precision
/// parameters, Adam moments, generator state, iteration and loss trace.
void save_checkpoint(const TrainState& state, const ExtractorConfig& ecfg, const TrainConfig& tcfg,
                     const nlohmann::json& provenance, const std::filesystem::path& path);
struct Checkpoint {
    ModelFile model;
    TrainState state;
    TrainConfig train_config;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_loss_csv(const std::vector<LossRecord>& trace, const std::filesystem::path& path);

}  // namespace emorank
