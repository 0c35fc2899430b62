// Test-only oracles, kept independent of the implementation paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cholseq/manifold.hpp"
#include "cholseq/rng.hpp"
#include "cholseq/tape.hpp"

namespace cholseq::testing {

/// Builds the computation on a fresh tape and returns the scalar root.
using BuildFn = std::function<Value(Tape&)>;

inline double eval_scalar(const BuildFn& build) {
    Tape t;
    t.set_grad_enabled(false);
    Value root = build(t);
    return t.val(root).scalar();
}

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;
};

/// Central finite differences against reverse-mode gradients for every
/// element of every listed parameter.
inline GradCheckResult check_gradients(const std::vector<Param*>& params, const BuildFn& build,
                                       double h = 1e-5) {
    for (Param* p : params) p->zero_grad();
    {
        Tape t;
        Value root = build(t);
        t.backward(root);
    }
    GradCheckResult res;
    for (Param* p : params) {
        for (size_t k = 0; k < p->value.size(); ++k) {
            const double saved = p->value.data[k];
            p->value.data[k] = saved + h;
            const double fp = eval_scalar(build);
            p->value.data[k] = saved - h;
            const double fm = eval_scalar(build);
            p->value.data[k] = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = p->grad.data[k];
            // Symmetric denominator with a small floor: near-zero gradients
            // (e.g. bias shifts cancelled exactly by normalization) otherwise
            // amplify finite-difference roundoff into spurious failures.
            const double rel = std::fabs(ad - fd) / (std::fabs(fd) + std::fabs(ad) + 1e-6);
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = p->id + "[" + std::to_string(k) + "] ad=" + std::to_string(ad) +
                            " fd=" + std::to_string(fd);
            }
        }
    }
    return res;
}

/// Iterative Karcher flow for the Fréchet mean: tangent-mean fixed point
/// under the exp/log pair. Step size 1, convergence at tangent norm 1e-10.
inline CholeskyPoint karcher_flow(std::span<const CholeskyPoint> points, int max_iter = 100) {
    CholeskyPoint mu = points[0];
    for (int it = 0; it < max_iter; ++it) {
        const int d = mu.dim();
        Matrix acc(d, d);
        for (const auto& p : points) {
            add_inplace(acc, log_map(mu, p).mat);
        }
        Matrix step = scal(acc, 1.0 / static_cast<double>(points.size()));
        if (max_abs(step) < 1e-10) break;
        mu = exp_map(mu, TangentVector{step});
    }
    return mu;
}

inline CholeskyPoint random_point(Rng& rng, int d, double spread = 1.0) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) m(i, j) = spread * rng.gaussian();
        m(i, i) = std::exp(0.5 * spread * rng.gaussian());
    }
    return CholeskyPoint{std::move(m)};
}

inline TangentVector random_tangent(Rng& rng, int d, double spread = 1.0) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) m(i, j) = spread * rng.gaussian();
    return TangentVector{std::move(m)};
}

inline Matrix random_spd(Rng& rng, int d, double jitter = 0.5) {
    Matrix a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = rng.gaussian();
    Matrix s = matmul(a, transpose(a));
    for (int i = 0; i < d; ++i) s(i, i) += jitter * d;
    return s;
}

}  // namespace cholseq::testing
