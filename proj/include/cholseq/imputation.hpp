#pragma once

#include <vector>

#include "cholseq/rng.hpp"
#include "cholseq/tape.hpp"

namespace cholseq {

/// Fully connected decoder: flattened tangent state -> feature vector.
/// The output passes through a sigmoid so imputations respect the [0,1]
/// normalization range.
struct DecoderParams {
    Param w, b;
    int out_len = 0;
    int flat_len = 0;

    static DecoderParams init(int out_len, int dim, Rng& rng);
    std::vector<Param*> params();
};

/// Decode a d x d tangent matrix into a c x 1 feature column.
Value decode(Tape& t, Value tangent, DecoderParams& p);

/// Masked merge: observed entries of s_partial pass through bit-exactly,
/// missing slots come from the decoder. NaN placeholders in unobserved slots
/// are replaced by zero before any arithmetic.
Value masked_estimate(Tape& t, const std::vector<double>& s_partial,
                      const std::vector<double>& mask, Value tangent, DecoderParams& p);

/// NaN-free copy of a partially observed vector (unobserved slots zeroed).
std::vector<double> zero_filled(const std::vector<double>& s_partial,
                                const std::vector<double>& mask);

}  // namespace cholseq
