#include "cholseq/rgru.hpp"

#include <cmath>

namespace cholseq {

namespace {

// softplus(x) = 1 at this raw value, making gates/biases near-neutral at init
constexpr double kSoftplusUnit = 0.5413248546129181;

/// Bias point from a raw matrix: strictly-lower part as-is, softplus on the
/// diagonal.
Value bias_point(Tape& t, Param& raw) {
    Value r = t.param(raw);
    return t.add(t.strict_lower(r), t.make_diag(t.softplus(t.diag_vec(r))));
}

/// Two-point wFM with softplus-mapped scalar weights, then bias addition.
Value gate_preact(Tape& t, Value a, Value b, Param& w, Param& bias) {
    Value wv = t.softplus(t.param(w));
    Value s1 = t.sum(t.masked_select(wv, Matrix::col({1.0, 0.0})));
    Value s2 = t.sum(t.masked_select(wv, Matrix::col({0.0, 1.0})));
    std::vector<Value> pts{a, b};
    std::vector<Value> ws{s1, s2};
    Value m = diff::weighted_frechet_mean(t, pts, ws, 2);
    return diff::bias_add(t, m, bias_point(t, bias));
}

void check_diag_floor(const Matrix& m, const char* where) {
    for (int i = 0; i < m.rows; ++i) {
        if (!(m(i, i) > kDiagFloor)) {
            throw std::domain_error(std::string(where) + ": diagonal entry " + std::to_string(i) +
                                    " fell below floor");
        }
    }
}

}  // namespace

RGRUParams RGRUParams::init(int dim, Rng& rng) {
    RGRUParams p;
    p.dim = dim;
    auto gate_w = [&](const std::string& id) {
        Matrix m(2, 1);
        m(0, 0) = kSoftplusUnit + 0.05 * rng.gaussian();
        m(1, 0) = kSoftplusUnit + 0.05 * rng.gaussian();
        return Param(id, std::move(m));
    };
    auto gate_b = [&](const std::string& id) {
        Matrix m(dim, dim);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < i; ++j) m(i, j) = 0.05 * rng.gaussian();
            m(i, i) = kSoftplusUnit + 0.05 * rng.gaussian();
        }
        return Param(id, std::move(m));
    };
    p.wz = gate_w("rgru.wz");
    p.wr = gate_w("rgru.wr");
    p.wl = gate_w("rgru.wl");
    p.bz = gate_b("rgru.bz");
    p.br = gate_b("rgru.br");
    p.bl = gate_b("rgru.bl");
    return p;
}

std::vector<Param*> RGRUParams::params() { return {&wz, &wr, &wl, &bz, &br, &bl}; }

Value rgru_step(Tape& t, Value x, Value h_prev, RGRUParams& p) {
    // Gates act elementwise on the lower triangle; they are plain (0,1)
    // matrices, not manifold points.
    Value z = t.lower(t.sigmoid(gate_preact(t, x, h_prev, p.wz, p.bz)));
    Value r = t.lower(t.sigmoid(gate_preact(t, x, h_prev, p.wr, p.br)));

    Value rh = t.mul(r, h_prev);
    check_diag_floor(t.val(rh), "rgru_step: r*h");

    Value l = gate_preact(t, x, rh, p.wl, p.bl);
    // Candidate state: tanh below the diagonal, softplus on the diagonal to
    // keep the positive-diagonal constraint.
    Value cand = t.add(t.strict_lower(t.tanh(l)), t.make_diag(t.softplus(t.diag_vec(l))));

    Value h = diff::gate_combine(t, z, h_prev, cand);
    check_diag_floor(t.val(h), "rgru_step: output");
    return h;
}

CholeskyPoint init_hidden(int dim) { return CholeskyPoint{Matrix::identity(dim)}; }

}  // namespace cholseq
