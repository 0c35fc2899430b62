#pragma once

#include <vector>

#include "cholseq/manifold.hpp"
#include "cholseq/rng.hpp"
#include "cholseq/tape.hpp"

namespace cholseq {

/// Riemannian GRU cell parameters. Each gate's two-point weighted mean has
/// one scalar weight per input, stored unconstrained and mapped through
/// softplus. Bias matrices are raw lower-triangular with softplus applied to
/// the diagonal so the bias is always a valid manifold point.
struct RGRUParams {
    Param wz, wr, wl;  // 2x1 raw weights per gate
    Param bz, br, bl;  // d x d raw bias matrices
    int dim = 0;

    static RGRUParams init(int dim, Rng& rng);
    std::vector<Param*> params();
};

/// One cell step: inputs and output are valid Cholesky points on the tape.
Value rgru_step(Tape& t, Value x, Value h_prev, RGRUParams& p);

/// Initial hidden state, the identity matrix.
CholeskyPoint init_hidden(int dim);

}  // namespace cholseq
