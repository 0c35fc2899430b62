#pragma once

#include <optional>
#include <string>

#include "cholseq/model.hpp"

namespace cholseq {

struct Checkpoint {
    ModelParams params;
    std::optional<NormStats> norm;  // training-fold normalization statistics
};

/// Flat binary container: magic + version header, then named row-major
/// 64-bit float payloads for every parameter, the encoder running
/// statistics, the model dimensions, and (optionally) the normalization
/// statistics. Round trips are bit-exact.
void save_checkpoint(const std::string& path, ModelParams& params,
                     const std::optional<NormStats>& norm = std::nullopt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cholseq
