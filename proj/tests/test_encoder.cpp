#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cholseq/encoder.hpp"
#include "cholseq/manifold.hpp"
#include "oracles.hpp"

using namespace cholseq;
using namespace cholseq::testing;

namespace {

std::vector<double> random_features(Rng& rng, int c) {
    std::vector<double> s(c);
    for (auto& v : s) v = rng.uniform();
    return s;
}

}  // namespace

TEST_CASE("encode shape and determinism") {
    Rng rng = make_rng(11);
    EncoderParams p = EncoderParams::init(8, 6, rng);

    Tape t;
    std::vector<double> s = random_features(rng, 9);
    Value fm = encode(t, s, p, {});
    CHECK(t.val(fm).rows == 6);
    CHECK(t.val(fm).cols == 9);

    // c = 1 input.
    Value one = encode(t, std::vector<double>{0.5}, p, {});
    CHECK(t.val(one).rows == 6);
    CHECK(t.val(one).cols == 1);

    // Same seed, fresh params, bit-identical map.
    Rng rng2 = make_rng(11);
    EncoderParams p2 = EncoderParams::init(8, 6, rng2);
    std::vector<double> s2 = random_features(rng2, 9);
    Tape t2;
    Value fm2 = encode(t2, s2, p2, {});
    CHECK(max_abs_diff(t.val(fm), t2.val(fm2)) == 0.0);
}

TEST_CASE("encode rejects non-finite input with the feature index") {
    Rng rng = make_rng(3);
    EncoderParams p = EncoderParams::init(4, 3, rng);
    Tape t;
    std::vector<double> s{0.1, std::nan(""), 0.3};
    CHECK_THROWS_WITH_AS(encode(t, s, p, {}),
                         "encode: non-finite input at feature index 1", std::domain_error);
}

TEST_CASE("encode with zero weights and biases gives an all-zero map") {
    Rng rng = make_rng(5);
    EncoderParams p = EncoderParams::init(4, 3, rng);
    for (Param* prm : {&p.w1, &p.b1, &p.w2, &p.b2, &p.beta1, &p.beta2}) {
        std::fill(prm->value.data.begin(), prm->value.data.end(), 0.0);
    }
    Tape t;
    Value fm = encode(t, std::vector<double>{0.2, 0.4, 0.9}, p, {});
    CHECK(max_abs(t.val(fm)) == 0.0);
}

TEST_CASE("shrinkage covariance matches the direct formula") {
    Rng rng = make_rng(21);
    const int d = 5, c = 9;
    Matrix fm(d, c);
    for (auto& v : fm.data) v = rng.gaussian();

    Tape t;
    ShrinkageConfig cfg;
    cfg.rho = 0.5;
    Value cov = shrinkage_covariance(t, t.constant(fm), cfg);

    // Independent brute-force evaluation.
    std::vector<double> mean(d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < c; ++j) mean[i] += fm(i, j) / c;
    }
    Matrix s(d, d);
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < d; ++k) {
            for (int j = 0; j < c; ++j) {
                s(i, k) += (fm(i, j) - mean[i]) * (fm(k, j) - mean[k]) / c;
            }
        }
    }
    double tr = 0.0;
    for (int i = 0; i < d; ++i) tr += s(i, i);
    Matrix expect(d, d);
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < d; ++k) {
            expect(i, k) = (1.0 - cfg.rho) * s(i, k);
            if (i == k) expect(i, k) += cfg.rho * tr / d + 1e-4 * (tr / d + 1.0);
        }
    }
    CHECK(max_abs_diff(t.val(cov), expect) < 1e-12);
}

TEST_CASE("identity covariance is a fixed point up to the jitter floor") {
    // Feature map engineered so S = I: channel i is +-1 across positions with
    // zero mean and unit variance, channels orthogonal.
    Matrix fm(2, 4);
    fm.data = {1, 1, -1, -1, 1, -1, 1, -1};
    Tape t;
    ShrinkageConfig cfg;
    cfg.rho = 0.37;
    Value cov = shrinkage_covariance(t, t.constant(fm), cfg);
    Matrix expect = Matrix::identity(2);
    const double jitter = 1e-4 * (1.0 + 1.0);  // tr(S)/d = 1
    expect(0, 0) += jitter;
    expect(1, 1) += jitter;
    CHECK(max_abs_diff(t.val(cov), expect) < 1e-12);
}

TEST_CASE("degenerate constant map survives via the jitter floor") {
    // All positions identical -> S = 0; the documented floor keeps the result
    // factorizable instead of failing downstream.
    Matrix fm = Matrix::filled(3, 5, 0.7);
    Tape t;
    Value cov = shrinkage_covariance(t, t.constant(fm), {});
    Value l = t.cholesky(cov);
    CHECK(all_finite(t.val(l)));
    for (int i = 0; i < 3; ++i) CHECK(t.val(l)(i, i) > 0.0);
}

TEST_CASE("covariance is invariant under position permutation") {
    Rng rng = make_rng(33);
    Matrix fm(4, 7);
    for (auto& v : fm.data) v = rng.gaussian();
    Matrix perm(4, 7);
    std::vector<int> order{3, 0, 6, 2, 5, 1, 4};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 7; ++j) perm(i, j) = fm(i, order[j]);
    }
    Tape t;
    Value a = shrinkage_covariance(t, t.constant(fm), {});
    Value b = shrinkage_covariance(t, t.constant(perm), {});
    CHECK(max_abs_diff(t.val(a), t.val(b)) < 1e-12);
}

TEST_CASE("oas intensity stays in range and hits 1 for degenerate input") {
    Rng rng = make_rng(9);
    Matrix fm(4, 9);
    for (auto& v : fm.data) v = rng.gaussian();
    Tape t;
    Value centered = t.sub_colvec(t.constant(fm), t.row_mean(t.constant(fm)));
    Matrix s = t.val(t.smul(t.matmul(centered, t.transpose(centered)), 1.0 / 9));
    const double rho = oas_intensity(s, 9);
    CHECK(rho >= 0.0);
    CHECK(rho <= 1.0);
    CHECK(oas_intensity(Matrix::identity(4), 9) == 1.0);  // tr2 == tr*tr/d
}

TEST_CASE("space_shift yields a valid point of the configured dimension") {
    Rng rng = make_rng(17);
    EncoderParams p = EncoderParams::init(16, 32, rng);
    Tape t;
    Value l = space_shift(t, random_features(rng, 9), p, {}, {});
    CHECK(t.val(l).rows == 32);  // default channel count
    CHECK(is_valid_cholesky_point(t.val(l)));
}

TEST_CASE("gradient through encode + covariance + Cholesky passes") {
    Rng rng = make_rng(71);
    EncoderParams p = EncoderParams::init(5, 4, rng);
    std::vector<double> s = random_features(rng, 6);

    auto build = [&](Tape& t) {
        Value l = space_shift(t, s, p, {}, {});
        return t.sum(t.square(l));
    };
    auto res = check_gradients(p.params(), build);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("running statistics update and drive the inference path") {
    Rng rng = make_rng(41);
    EncoderParams p = EncoderParams::init(4, 3, rng);
    const Matrix before = p.run_mean1;

    NormMode train_mode{.use_running = false, .update_running = true};
    Tape t;
    encode(t, random_features(rng, 5), p, train_mode);
    CHECK(max_abs_diff(before, p.run_mean1) > 0.0);

    // With use_running, two different inputs share the same statistics, so
    // the transform is a fixed affine map of the raw activations.
    NormMode infer{.use_running = true, .update_running = false};
    Tape t2;
    Value a = encode(t2, std::vector<double>{0.3, 0.3, 0.3, 0.3, 0.3}, p, infer);
    CHECK(all_finite(t2.val(a)));
}
