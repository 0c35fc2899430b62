#pragma once

#include <utility>
#include <vector>

#include "cholseq/manifold.hpp"
#include "cholseq/rng.hpp"
#include "cholseq/tape.hpp"

namespace cholseq {

/// Two-layer tanh network defining the tangent-space vector field
/// f(v, t): flattened lower triangle (length d(d+1)/2) plus a time scalar
/// in, same-length tangent out.
struct VectorFieldParams {
    Param w1, b1;
    Param w2, b2;
    int dim = 0;       // matrix order d
    int flat_len = 0;  // d(d+1)/2
    int hidden = 0;

    static VectorFieldParams init(int dim, int hidden, Rng& rng);
    std::vector<Param*> params();
};

enum class SolveMethod { Euler, Rk4, GeodesicEuler };

struct SolverConfig {
    SolveMethod method = SolveMethod::Euler;
    int steps_per_unit_time = 4;
    double time_unit_months = 12.0;  // f sees time in normalized units
};

/// Vector field evaluation at a flattened tangent state and absolute time
/// (already normalized).
Value vector_field(Tape& t, VectorFieldParams& f, Value v_flat, double time);

/// Fixed-step integration of dv/dt = f(v, t) over [t0, t1] (months).
/// t1 == t0 returns v0 unchanged. Input/output are d x d tangent matrices.
Value ode_solve(Tape& t, VectorFieldParams& f, Value v0, double t0, double t1,
                const SolverConfig& cfg);

/// Evolve a hidden state across a visit gap through the tangent space at the
/// identity. Returns (evolved point, tangent) — the tangent also feeds the
/// imputation decoder.
std::pair<Value, Value> evolve_hidden(Tape& t, Value h_prev, double t0, double t1,
                                      VectorFieldParams& f, const SolverConfig& cfg);

int step_count_for_span(const SolverConfig& cfg, double span_normalized);

}  // namespace cholseq
