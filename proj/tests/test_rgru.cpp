#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cholseq/rgru.hpp"
#include "oracles.hpp"

using namespace cholseq;
using namespace cholseq::testing;

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Tri2 {
    double a00, a10, a11;
};

/// Straight-line scalar transcription of the 2x2 cell, written against the
/// equations rather than the vectorized code.
Tri2 scalar_cell(const Tri2& x, const Tri2& h, RGRUParams& p) {
    auto preact = [&](const Tri2& u, const Tri2& v, const Param& w, const Param& b) {
        const double w1 = softplus(w.value(0, 0));
        const double w2 = softplus(w.value(1, 0));
        // Two-point wFM, divisor N = 2 as printed.
        Tri2 m;
        m.a10 = (w1 * u.a10 + w2 * v.a10) / 2.0;
        m.a00 = std::exp((w1 * std::log(u.a00) + w2 * std::log(v.a00)) / 2.0);
        m.a11 = std::exp((w1 * std::log(u.a11) + w2 * std::log(v.a11)) / 2.0);
        // Bias point: strictly-lower raw, softplus diagonal; bias addition.
        Tri2 out;
        out.a10 = m.a10 + b.value(1, 0);
        out.a00 = m.a00 * softplus(b.value(0, 0));
        out.a11 = m.a11 * softplus(b.value(1, 1));
        return out;
    };

    Tri2 zp = preact(x, h, p.wz, p.bz);
    Tri2 rp = preact(x, h, p.wr, p.br);
    Tri2 z{sigmoid(zp.a00), sigmoid(zp.a10), sigmoid(zp.a11)};
    Tri2 r{sigmoid(rp.a00), sigmoid(rp.a10), sigmoid(rp.a11)};

    Tri2 rh{r.a00 * h.a00, r.a10 * h.a10, r.a11 * h.a11};
    Tri2 l = preact(x, rh, p.wl, p.bl);
    Tri2 cand{softplus(l.a00), std::tanh(l.a10), softplus(l.a11)};

    return {(1.0 - z.a00) * h.a00 + z.a00 * cand.a00,
            (1.0 - z.a10) * h.a10 + z.a10 * cand.a10,
            (1.0 - z.a11) * h.a11 + z.a11 * cand.a11};
}

Matrix tri2_to_matrix(const Tri2& v) {
    Matrix m(2, 2);
    m(0, 0) = v.a00;
    m(1, 0) = v.a10;
    m(1, 1) = v.a11;
    return m;
}

}  // namespace

TEST_CASE("init_hidden is the identity and a valid point") {
    CholeskyPoint h = init_hidden(3);
    CHECK(max_abs_diff(h.mat, Matrix::identity(3)) == 0.0);
    CHECK(is_valid_cholesky_point(h.mat));
    CHECK(max_abs(log_map(h, h).mat) == 0.0);
}

TEST_CASE("2x2 cell matches the scalar transcription oracle") {
    Rng rng = make_rng(101);
    for (int trial = 0; trial < 25; ++trial) {
        RGRUParams p = RGRUParams::init(2, rng);
        Tri2 x{std::exp(rng.gaussian() * 0.4), rng.gaussian(), std::exp(rng.gaussian() * 0.4)};
        Tri2 h{std::exp(rng.gaussian() * 0.4), rng.gaussian(), std::exp(rng.gaussian() * 0.4)};

        Tape t;
        Value out = rgru_step(t, t.constant(tri2_to_matrix(x)), t.constant(tri2_to_matrix(h)), p);
        Matrix expect = tri2_to_matrix(scalar_cell(x, h, p));
        CHECK(max_abs_diff(t.val(out), expect) < 1e-12);
        CHECK(t.val(out)(0, 1) == 0.0);
    }
}

TEST_CASE("update gate in the zero limit returns h_prev") {
    // Gate blend: H = (1-z) o H_prev + z o H_cand. In the z -> 0 limit
    // the output is H_prev; checked at the gate-combine level since sigmoid
    // only reaches 0 asymptotically.
    Rng rng = make_rng(7);
    CholeskyPoint h = random_point(rng, 3);
    CholeskyPoint cand = random_point(rng, 3);
    Matrix z(3, 3);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) z(i, j) = 1e-13;
    }
    CholeskyPoint out = gate_combine(z, h, cand);
    CHECK(max_abs_diff(out.mat, h.mat) < 1e-10);
}

TEST_CASE("closure under 1000 random steps from the identity") {
    Rng rng = make_rng(55);
    RGRUParams p = RGRUParams::init(4, rng);
    Tape t;
    Value h = t.constant(Matrix::identity(4));
    for (int step = 0; step < 1000; ++step) {
        Value x = t.constant(random_point(rng, 4, 0.5).mat);
        h = rgru_step(t, x, h, p);
    }
    CHECK(is_valid_cholesky_point(t.val(h)));
    for (int i = 0; i < 4; ++i) CHECK(t.val(h)(i, i) > 0.0);
}

TEST_CASE("gate entries stay strictly inside (0,1)") {
    Rng rng = make_rng(91);
    RGRUParams p = RGRUParams::init(3, rng);
    // The cell routes gates through diff::gate_combine, which validates the
    // range; a forced out-of-range gate trips the plain-geometry guard.
    Matrix z = Matrix::filled(2, 2, 1.0);
    CholeskyPoint a = random_point(rng, 2);
    CholeskyPoint b = random_point(rng, 2);
    CHECK_THROWS_AS(gate_combine(z, a, b), std::domain_error);
}

TEST_CASE("gradient through a 3-step unrolled cell") {
    Rng rng = make_rng(23);
    RGRUParams p = RGRUParams::init(3, rng);
    std::vector<Matrix> xs{random_point(rng, 3).mat, random_point(rng, 3).mat,
                           random_point(rng, 3).mat};

    auto build = [&](Tape& t) {
        Value h = t.constant(Matrix::identity(3));
        for (const Matrix& x : xs) h = rgru_step(t, t.constant(x), h, p);
        return t.sum(t.square(h));
    };
    auto res = check_gradients(p.params(), build);
    CHECK(res.max_rel_err < 1e-4);
}
