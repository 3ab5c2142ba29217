#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "emorank/extractor.h"
#include "emorank/losses.h"

namespace emorank {

struct GradcheckOptions {
    std::size_t frames = 6;
    std::uint64_t seed = 0;
    double step = 1e-5;
    double tolerance = 1e-3;
    LossWeights weights;
};

/// T=6, hidden 16, 2 blocks of 2 heads, 3 classes.
ExtractorConfig tiny_extractor_config();

struct TensorGradError {
    std::string name;
    std::size_t size = 0;
    /// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6)
    double rel_error = 0.0;
};

struct GradcheckReport {
    std::vector<TensorGradError> tensors;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed() const { return max_rel_error < tolerance; }
    nlohmann::json to_json() const;
};

/// Central differences of L_total over every scalar parameter on one random
/// mixup pair, compared with the tape gradient. Dropout is off.
GradcheckReport gradcheck_total_loss(const ExtractorConfig& cfg, const GradcheckOptions& opt);

}  // namespace emorank
