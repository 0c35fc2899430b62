#pragma once

#include <vector>

#include "cholseq/manifold.hpp"
#include "cholseq/rng.hpp"
#include "cholseq/tape.hpp"

namespace cholseq {

/// Two kernel-size-1 convolutions over the feature axis. The c input
/// features are the "spatial" positions; channels are the statistic axis,
/// so a per-visit vector becomes a channels x c feature map.
struct EncoderParams {
    Param w1, b1;          // 1 -> hidden
    Param w2, b2;          // hidden -> channels
    Param gamma1, beta1;   // per-channel affine after layer 1
    Param gamma2, beta2;
    Matrix run_mean1, run_var1;  // running statistics, stored for inference
    Matrix run_mean2, run_var2;
    int hidden = 0;
    int channels = 0;

    static EncoderParams init(int hidden, int channels, Rng& rng);
    std::vector<Param*> params();
};

struct ShrinkageConfig {
    enum class Mode { FixedRho, Oas };
    Mode mode = Mode::FixedRho;
    double rho = 0.1;
};

struct NormMode {
    bool use_running = false;    // per-sample statistics otherwise
    bool update_running = false;
};

/// Feature map for one visit vector (length c); shape channels x c.
/// Throws on non-finite input naming the feature index.
Value encode(Tape& t, const std::vector<double>& s, EncoderParams& p, const NormMode& nm);
/// Same, for an on-tape c x 1 column (keeps gradient flowing into s).
Value encode(Tape& t, Value s, EncoderParams& p, const NormMode& nm);

/// (1-rho) S + rho (tr S / d) I over the c positions, plus a small additive
/// jitter floor so the result stays factorizable for degenerate inputs.
Value shrinkage_covariance(Tape& t, Value fm, const ShrinkageConfig& cfg);

/// OAS shrinkage intensity for a sample covariance S estimated from n
/// observations, clipped to [0, 1].
double oas_intensity(const Matrix& s, int n);

/// encode -> shrinkage covariance -> differentiable Cholesky factor.
Value space_shift(Tape& t, const std::vector<double>& s, EncoderParams& p,
                  const ShrinkageConfig& cfg, const NormMode& nm);
Value space_shift(Tape& t, Value s, EncoderParams& p, const ShrinkageConfig& cfg,
                  const NormMode& nm);

}  // namespace cholseq
