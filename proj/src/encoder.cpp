#include "cholseq/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace cholseq {

namespace {

constexpr double kNormEps = 1e-5;
constexpr double kRunningMomentum = 0.1;
constexpr double kLeakySlope = 0.01;
constexpr double kJitterScale = 1e-4;

Matrix glorot(int rows, int cols, Rng& rng) {
    const double lim = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (size_t k = 0; k < m.size(); ++k) m.data[k] = rng.uniform(-lim, lim);
    return m;
}

/// Per-channel normalization + affine + leaky ReLU for one layer's map.
Value normalize_activate(Tape& t, Value x, Param& gamma, Param& beta, Matrix& run_mean,
                         Matrix& run_var, const NormMode& nm) {
    Value mu, var;
    if (nm.use_running) {
        mu = t.constant(run_mean);
        var = t.constant(run_var);
    } else {
        mu = t.row_mean(x);
        var = t.row_mean(t.square(t.sub_colvec(x, mu)));
        if (nm.update_running) {
            const Matrix& m = t.val(mu);
            const Matrix& v = t.val(var);
            for (size_t k = 0; k < m.size(); ++k) {
                run_mean.data[k] = (1.0 - kRunningMomentum) * run_mean.data[k] +
                                   kRunningMomentum * m.data[k];
                run_var.data[k] = (1.0 - kRunningMomentum) * run_var.data[k] +
                                  kRunningMomentum * v.data[k];
            }
        }
    }
    Value std = t.sqrt(t.sadd(var, kNormEps));
    Value norm = t.div_colvec(t.sub_colvec(x, mu), std);
    Value affine = t.add_colvec(t.mul_colvec(norm, t.param(gamma)), t.param(beta));
    return t.leaky_relu(affine, kLeakySlope);
}

}  // namespace

EncoderParams EncoderParams::init(int hidden, int channels, Rng& rng) {
    EncoderParams p;
    p.hidden = hidden;
    p.channels = channels;
    p.w1 = Param("enc.w1", glorot(hidden, 1, rng));
    p.b1 = Param("enc.b1", Matrix(hidden, 1));
    p.w2 = Param("enc.w2", glorot(channels, hidden, rng));
    p.b2 = Param("enc.b2", Matrix(channels, 1));
    p.gamma1 = Param("enc.gamma1", Matrix::filled(hidden, 1, 1.0));
    p.beta1 = Param("enc.beta1", Matrix(hidden, 1));
    p.gamma2 = Param("enc.gamma2", Matrix::filled(channels, 1, 1.0));
    p.beta2 = Param("enc.beta2", Matrix(channels, 1));
    p.run_mean1 = Matrix(hidden, 1);
    p.run_var1 = Matrix::filled(hidden, 1, 1.0);
    p.run_mean2 = Matrix(channels, 1);
    p.run_var2 = Matrix::filled(channels, 1, 1.0);
    return p;
}

std::vector<Param*> EncoderParams::params() {
    return {&w1, &b1, &w2, &b2, &gamma1, &beta1, &gamma2, &beta2};
}

Value encode(Tape& t, const std::vector<double>& s, EncoderParams& p, const NormMode& nm) {
    for (size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i])) {
            throw std::domain_error("encode: non-finite input at feature index " +
                                    std::to_string(i));
        }
    }
    Matrix row(1, static_cast<int>(s.size()));
    row.data.assign(s.begin(), s.end());
    return encode(t, t.constant(std::move(row)), p, nm);
}

Value encode(Tape& t, Value s, EncoderParams& p, const NormMode& nm) {
    Value x = t.val(s).rows == 1 ? s : t.transpose(s);
    const Matrix& in = t.val(x);
    if (in.rows != 1) throw std::invalid_argument("encode: expected a vector input");
    for (size_t i = 0; i < in.size(); ++i) {
        if (!std::isfinite(in.data[i])) {
            throw std::domain_error("encode: non-finite input at feature index " +
                                    std::to_string(i));
        }
    }

    Value a1 = t.add_colvec(t.matmul(t.param(p.w1), x), t.param(p.b1));
    Value h1 = normalize_activate(t, a1, p.gamma1, p.beta1, p.run_mean1, p.run_var1, nm);
    Value a2 = t.add_colvec(t.matmul(t.param(p.w2), h1), t.param(p.b2));
    return normalize_activate(t, a2, p.gamma2, p.beta2, p.run_mean2, p.run_var2, nm);
}

double oas_intensity(const Matrix& s, int n) {
    const int d = s.rows;
    double tr = 0.0, tr2 = 0.0;
    for (int i = 0; i < d; ++i) {
        tr += s(i, i);
        for (int j = 0; j < d; ++j) tr2 += s(i, j) * s(j, i);
    }
    const double denom = (n + 1.0 - 2.0 / d) * (tr2 - tr * tr / d);
    if (denom <= 0.0) return 1.0;
    const double num = (1.0 - 2.0 / d) * tr2 + tr * tr;
    return std::min(1.0, std::max(0.0, num / denom));
}

Value shrinkage_covariance(Tape& t, Value fm, const ShrinkageConfig& cfg) {
    const Matrix& m = t.val(fm);
    const int d = m.rows;
    const int c = m.cols;
    if (c < 1) throw std::invalid_argument("shrinkage_covariance: empty feature map");

    Value centered = t.sub_colvec(fm, t.row_mean(fm));
    Value s = t.smul(t.matmul(centered, t.transpose(centered)), 1.0 / c);

    double rho = cfg.rho;
    if (cfg.mode == ShrinkageConfig::Mode::Oas) rho = oas_intensity(t.val(s), c);
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw std::invalid_argument("shrinkage_covariance: rho outside [0,1]");
    }

    Value tr = t.sum(t.diag_vec(s));
    Value mean_eig = t.smul(tr, 1.0 / d);
    Value id = t.constant(Matrix::identity(d));
    Value shrunk = t.add(t.smul(s, 1.0 - rho), t.scale(t.smul(mean_eig, rho), id));
    // Jitter floor keeps C factorizable: c positions cannot span a full-rank
    // d x d covariance on their own.
    Value jitter = t.scale(t.smul(t.sadd(mean_eig, 1.0), kJitterScale), id);
    return t.add(shrunk, jitter);
}

Value space_shift(Tape& t, const std::vector<double>& s, EncoderParams& p,
                  const ShrinkageConfig& cfg, const NormMode& nm) {
    Value fm = encode(t, s, p, nm);
    Value cov = shrinkage_covariance(t, fm, cfg);
    return t.cholesky(cov);
}

Value space_shift(Tape& t, Value s, EncoderParams& p, const ShrinkageConfig& cfg,
                  const NormMode& nm) {
    Value fm = encode(t, s, p, nm);
    Value cov = shrinkage_covariance(t, fm, cfg);
    return t.cholesky(cov);
}

}  // namespace cholseq
