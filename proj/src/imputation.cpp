#include "cholseq/imputation.hpp"

#include <cmath>
#include <stdexcept>

namespace cholseq {

DecoderParams DecoderParams::init(int out_len, int dim, Rng& rng) {
    DecoderParams p;
    p.out_len = out_len;
    p.flat_len = dim * (dim + 1) / 2;
    const double lim = std::sqrt(6.0 / (out_len + p.flat_len));
    Matrix w(out_len, p.flat_len);
    for (size_t k = 0; k < w.size(); ++k) w.data[k] = rng.uniform(-lim, lim);
    p.w = Param("dec.w", std::move(w));
    p.b = Param("dec.b", Matrix(out_len, 1));
    return p;
}

std::vector<Param*> DecoderParams::params() { return {&w, &b}; }

Value decode(Tape& t, Value tangent, DecoderParams& p) {
    Value flat = t.vech(tangent);
    if (t.val(flat).rows != p.flat_len) {
        throw std::invalid_argument("decode: tangent length does not match decoder");
    }
    return t.sigmoid(t.add(t.matmul(t.param(p.w), flat), t.param(p.b)));
}

std::vector<double> zero_filled(const std::vector<double>& s_partial,
                                const std::vector<double>& mask) {
    std::vector<double> out(s_partial.size());
    for (size_t i = 0; i < s_partial.size(); ++i) {
        out[i] = mask[i] != 0.0 ? s_partial[i] : 0.0;
        if (!std::isfinite(out[i])) out[i] = 0.0;
    }
    return out;
}

Value masked_estimate(Tape& t, const std::vector<double>& s_partial,
                      const std::vector<double>& mask, Value tangent, DecoderParams& p) {
    if (s_partial.size() != mask.size()) {
        throw std::invalid_argument("masked_estimate: vector/mask length mismatch");
    }
    Matrix m(static_cast<int>(mask.size()), 1);
    Matrix inv(static_cast<int>(mask.size()), 1);
    for (size_t i = 0; i < mask.size(); ++i) {
        m.data[i] = mask[i];
        inv.data[i] = 1.0 - mask[i];
    }
    Value observed = t.constant(Matrix::col(zero_filled(s_partial, mask)));
    Value decoded = decode(t, tangent, p);
    return t.add(t.masked_select(observed, m), t.masked_select(decoded, inv));
}

}  // namespace cholseq
