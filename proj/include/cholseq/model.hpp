#pragma once

#include <string>
#include <vector>

#include "cholseq/adam.hpp"
#include "cholseq/data.hpp"
#include "cholseq/encoder.hpp"
#include "cholseq/imputation.hpp"
#include "cholseq/metrics.hpp"
#include "cholseq/ode.hpp"
#include "cholseq/rgru.hpp"
#include "cholseq/rng.hpp"
#include "cholseq/tape.hpp"

namespace cholseq {

/// Full pipeline parameters: covariance encoder, recurrent cell, latent
/// vector field, feature decoder, and the linear classifier head.
struct ModelParams {
    EncoderParams encoder;
    RGRUParams rgru;
    VectorFieldParams ode;
    DecoderParams decoder;
    Param wy, by;  // K x d(d+1)/2 and K x 1
    int dim = 0;
    int n_classes = 0;
    int n_features = 0;

    static ModelParams init(int n_features, int dim, int encoder_hidden, int ode_hidden,
                            int n_classes, Rng& rng);
    std::vector<Param*> params();
};

enum class MonotonicMode { AsWritten, DirectionalHinge, Off };

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    double lambda3 = 0.001;
    double delta = 5.0;
    MonotonicMode monotonic_mode = MonotonicMode::DirectionalHinge;
    double surrogate_k = 50.0;  // tanh slope of the sign surrogate
    std::vector<double> direction = default_trend_directions();
};

/// Per-visit outputs of one sequence's forward pass.
struct ForwardTrace {
    std::vector<Value> hidden;   // d x d Cholesky points
    std::vector<Value> tangent;  // evolved tangent H' at the identity
    std::vector<Value> decoded;  // c x 1 decoder predictions
    std::vector<Value> merged;   // c x 1 masked merge of observed and decoded
    std::vector<Value> probs;    // K x 1 class distributions
};

struct ForwardConfig {
    SolverConfig solver;
    ShrinkageConfig shrinkage;
    NormMode norm;
};

ForwardTrace forward_sequence(Tape& t, const Sequence& seq, ModelParams& p,
                              const ForwardConfig& cfg);

/// Masked squared error of the decoder predictions against observed values,
/// visits 2..T.
Value estimation_loss(Tape& t, const ForwardTrace& trace, const Sequence& seq);

/// Focal cross-entropy over visits with a (carried-forward) label; labels is
/// per-visit class index or kLabelUnknown.
Value focal_prediction_loss(Tape& t, const ForwardTrace& trace, const std::vector<int>& labels,
                            const LossConfig& cfg);

Value monotonicity_penalty(Tape& t, const ForwardTrace& trace, const LossConfig& cfg);

/// lambda1 L_estim + lambda2 L_pred + lambda3 penalty, averaged per valid
/// visit within the sequence.
Value total_loss(Tape& t, const ForwardTrace& trace, const Sequence& seq,
                 const LossConfig& cfg);

/// Last observed label carried forward; visits before the first label stay
/// unknown.
std::vector<int> carried_labels(const Sequence& seq);

struct TrainConfig {
    int epochs = 300;
    int batch_size = 64;
    AdamConfig adam{.lr = 1e-3, .weight_decay = 1e-4};
    uint64_t seed = 0;
    ForwardConfig forward;
    LossConfig loss;
};

struct EpochRow {
    int epoch = 0;
    double l_estim = 0.0;
    double l_pred = 0.0;
    double penalty = 0.0;
    double total = 0.0;
};

struct TrainReport {
    std::vector<EpochRow> epochs;
    std::string to_csv() const;
};

/// Mini-batch training over the given subject indices.
TrainReport train(const Cohort& cohort, const std::vector<int>& train_idx, ModelParams& params,
                  const TrainConfig& cfg);

/// Classification + regression metrics over the given subjects. Class
/// probabilities are taken at each labeled visit; MAPE/R-squared cover the
/// cognitive scores, comparing decoder predictions at visits 2..T against
/// observed values (or complete ground truth when the cohort carries it).
EvalReport evaluate_model(const Cohort& cohort, const std::vector<int>& idx, ModelParams& params,
                          const ForwardConfig& cfg, bool last_visit_only = true);

struct ForecastPoint {
    double month = 0.0;
    std::vector<double> features;  // decoder output, normalized units
    std::vector<double> probs;
};

/// Autoregressive roll-out: replay the observed history, then evolve the
/// hidden state over each future grid interval, decode a fully-missing
/// visit, and feed it back. Grid points at last_visit + grid, + 2 grid, ...
/// up to last_visit + horizon (months).
std::vector<ForecastPoint> forecast_sequence(const Sequence& seq, ModelParams& params,
                                             const ForwardConfig& cfg, double horizon_months,
                                             double grid_months);

}  // namespace cholseq
