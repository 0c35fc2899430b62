#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cholseq/matrix.hpp"
#include "cholseq/rng.hpp"

namespace cholseq {

inline constexpr int kLabelUnknown = -1;

/// Canonical feature order; fixed by the CSV schema.
const std::vector<std::string>& feature_names();
/// Expected trend sign per feature: +1 grows with disease, -1 shrinks.
const std::vector<double>& default_trend_directions();
/// Features normalized by dividing by the training maximum (cognitive
/// scores); the rest are min-max scaled.
const std::vector<bool>& max_divide_features();
const std::vector<std::string>& class_names();

/// One subject's visits. mask(t,f) = 1 iff features(t,f) is finite.
struct Sequence {
    std::string subject_id;
    std::vector<double> times;  // months since baseline, strictly increasing, times[0] = 0
    Matrix features;            // T x c, NaN for unobserved
    Matrix mask;                // T x c binary
    std::vector<int> labels;    // per-visit class index or kLabelUnknown
    Matrix truth;               // T x c complete values; synthetic cohorts only (else empty)
    std::vector<double> icv;    // per-visit intracranial volume; empty if absent

    int visits() const { return features.rows; }
    int feature_count() const { return features.cols; }
    std::vector<double> feature_row(int t) const;
    std::vector<double> mask_row(int t) const;
    bool fully_observed(int t) const;
};

struct NormStats {
    std::vector<double> lo, hi;  // per feature; max-divide features use hi only
};

struct Cohort {
    std::vector<Sequence> sequences;
    std::vector<std::string> features = feature_names();
    std::optional<NormStats> normalization;  // set once normalize() ran
    long dropped_subjects = 0;               // excluded at load for too few visits
    long clipped_values = 0;                 // out-of-range values clipped at transform
};

struct SchemaConfig {
    int min_visits = 3;
    bool use_icv = false;
    bool icv_baseline = false;  // divide by baseline ICV instead of per-visit
    bool regularize_yearly = false;
};

Cohort load_csv(const std::string& path, const SchemaConfig& cfg = {});
void write_csv(const std::string& path, const Cohort& cohort);

/// Keep only visits on the yearly grid (months within half a year of a
/// 12-month multiple, first hit per slot), re-basing times at zero.
Cohort regularize_yearly(const Cohort& cohort);

NormStats fit_normalization(const Cohort& cohort, const std::vector<int>& train_idx,
                            const SchemaConfig& cfg = {});
/// Min-max / max-divide transform using train-fold statistics; values
/// outside [0,1] are clipped and counted.
Cohort apply_normalization(const Cohort& cohort, const NormStats& st,
                           const SchemaConfig& cfg = {});
Cohort invert_normalization(const Cohort& cohort, const NormStats& st);

struct SynthConfig {
    int n_subjects = 300;
    int n_visits = 10;
    double visit_spacing_months = 6.0;
    double visit_jitter_months = 0.0;  // uniform jitter on each gap (irregular schedule)
    double missing_rate = 0.3;         // entrywise Bernoulli
    double visit_dropout = 0.05;       // whole-visit missingness (never the baseline)
    std::vector<double> class_mix{0.4, 0.35, 0.25};
    double noise_level = 0.02;  // observation noise in severity units
    uint64_t seed = 42;
};

/// Deterministic synthetic cohort: per-class latent progression rates,
/// monotone logistic-style feature trajectories with the canonical trend
/// signs, and CN -> MCI -> AD labels that never reverse.
Cohort generate_synthetic(const SynthConfig& cfg);

struct FoldSplit {
    std::vector<int> train;
    std::vector<int> val;
};

/// Subject-level stratified k-fold partition.
std::vector<FoldSplit> split_folds(const Cohort& cohort, int k, uint64_t seed);

}  // namespace cholseq
