#include "cholseq/ode.hpp"

#include <cmath>
#include <stdexcept>

namespace cholseq {

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
    const double lim = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (size_t k = 0; k < m.size(); ++k) m.data[k] = rng.uniform(-lim, lim);
    return m;
}

void check_step_finite(const Matrix& m, int step) {
    if (!all_finite(m)) {
        throw std::runtime_error("ode_solve: non-finite state at step " + std::to_string(step));
    }
}

}  // namespace

VectorFieldParams VectorFieldParams::init(int dim, int hidden, Rng& rng) {
    VectorFieldParams p;
    p.dim = dim;
    p.flat_len = dim * (dim + 1) / 2;
    p.hidden = hidden;
    p.w1 = Param("ode.w1", glorot(hidden, p.flat_len + 1, rng));
    p.b1 = Param("ode.b1", Matrix(hidden, 1));
    // Near-zero output layer: the field starts close to the identity flow.
    p.w2 = Param("ode.w2", scal(glorot(p.flat_len, hidden, rng), 0.1));
    p.b2 = Param("ode.b2", Matrix(p.flat_len, 1));
    return p;
}

std::vector<Param*> VectorFieldParams::params() { return {&w1, &b1, &w2, &b2}; }

Value vector_field(Tape& t, VectorFieldParams& f, Value v_flat, double time) {
    Value in = t.concat_rows(v_flat, t.constant_scalar(time));
    Value h = t.tanh(t.add(t.matmul(t.param(f.w1), in), t.param(f.b1)));
    return t.add(t.matmul(t.param(f.w2), h), t.param(f.b2));
}

int step_count_for_span(const SolverConfig& cfg, double span_normalized) {
    if (cfg.steps_per_unit_time < 1) throw std::invalid_argument("ode: steps must be >= 1");
    return std::max(1, static_cast<int>(std::ceil(cfg.steps_per_unit_time * span_normalized)));
}

Value ode_solve(Tape& t, VectorFieldParams& f, Value v0, double t0, double t1,
                const SolverConfig& cfg) {
    if (t1 < t0) throw std::invalid_argument("ode_solve: t_end before t_start");
    const double a = t0 / cfg.time_unit_months;
    const double b = t1 / cfg.time_unit_months;
    if (b == a) return v0;

    const int d = t.val(v0).rows;
    const int steps = step_count_for_span(cfg, b - a);
    const double h = (b - a) / steps;

    Value v = t.vech(v0);
    for (int s = 0; s < steps; ++s) {
        const double ts = a + s * h;
        switch (cfg.method) {
            case SolveMethod::Euler: {
                v = t.add(v, t.smul(vector_field(t, f, v, ts), h));
                break;
            }
            case SolveMethod::Rk4: {
                Value k1 = vector_field(t, f, v, ts);
                Value k2 = vector_field(t, f, t.add(v, t.smul(k1, h / 2)), ts + h / 2);
                Value k3 = vector_field(t, f, t.add(v, t.smul(k2, h / 2)), ts + h / 2);
                Value k4 = vector_field(t, f, t.add(v, t.smul(k3, h)), ts + h);
                Value incr = t.add(t.add(k1, t.smul(k2, 2.0)), t.add(t.smul(k3, 2.0), k4));
                v = t.add(v, t.smul(incr, h / 6.0));
                break;
            }
            case SolveMethod::GeodesicEuler:
                throw std::invalid_argument("ode_solve: geodesic-euler runs via evolve_hidden");
        }
        check_step_finite(t.val(v), s);
    }
    return t.unvech(v, d);
}

std::pair<Value, Value> evolve_hidden(Tape& t, Value h_prev, double t0, double t1,
                                      VectorFieldParams& f, const SolverConfig& cfg) {
    const int d = t.val(h_prev).rows;
    Value identity = t.constant(Matrix::identity(d));

    if (cfg.method == SolveMethod::GeodesicEuler) {
        // Per-step exponential-map update at the current point.
        if (t1 < t0) throw std::invalid_argument("evolve_hidden: t_end before t_start");
        const double a = t0 / cfg.time_unit_months;
        const double b = t1 / cfg.time_unit_months;
        Value h = h_prev;
        if (b > a) {
            const int steps = step_count_for_span(cfg, b - a);
            const double dt = (b - a) / steps;
            for (int s = 0; s < steps; ++s) {
                Value v = t.vech(diff::log_map(t, identity, h));
                Value field = vector_field(t, f, v, a + s * dt);
                h = diff::exp_map(t, h, t.unvech(t.smul(field, dt), d));
                check_step_finite(t.val(h), s);
            }
        }
        Value tangent = diff::log_map(t, identity, h);
        return {h, tangent};
    }

    Value v0 = diff::log_map(t, identity, h_prev);
    Value tangent = ode_solve(t, f, v0, t0, t1, cfg);
    Value evolved = diff::exp_map(t, identity, tangent);
    return {evolved, tangent};
}

}  // namespace cholseq
