#include "cholseq/manifold.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cholseq {

void validate_tangent(const Matrix& m) {
    if (m.rows != m.cols) throw std::domain_error("tangent: non-square matrix");
    for (int i = 0; i < m.rows; ++i) {
        for (int j = i + 1; j < m.cols; ++j) {
            if (m(i, j) != 0.0) {
                throw std::domain_error("tangent: nonzero entry above diagonal at (" +
                                        std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
    }
}

void validate_cholesky_point(const Matrix& m) {
    validate_tangent(m);
    for (int i = 0; i < m.rows; ++i) {
        if (!(m(i, i) > kDiagFloor)) {
            throw std::domain_error("cholesky point: diagonal entry " + std::to_string(i) +
                                    " = " + std::to_string(m(i, i)) + " below floor");
        }
    }
}

bool is_valid_cholesky_point(const Matrix& m) {
    if (m.rows != m.cols) return false;
    for (int i = 0; i < m.rows; ++i) {
        if (!(m(i, i) > kDiagFloor)) return false;
        for (int j = i + 1; j < m.cols; ++j)
            if (m(i, j) != 0.0) return false;
    }
    return true;
}

CholeskyPoint make_cholesky_point(Matrix m) {
    validate_cholesky_point(m);
    return CholeskyPoint{std::move(m)};
}

TangentVector make_tangent(Matrix m) {
    validate_tangent(m);
    return TangentVector{std::move(m)};
}

SPDMatrix make_spd(Matrix m) {
    if (m.rows != m.cols) throw std::domain_error("spd: non-square matrix");
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < i; ++j) {
            if (std::fabs(m(i, j) - m(j, i)) > 1e-10) {
                throw std::domain_error("spd: asymmetry beyond 1e-10 at (" + std::to_string(i) +
                                        "," + std::to_string(j) + ")");
            }
        }
    }
    cholesky_factor(m);  // positive definiteness check
    return SPDMatrix{std::move(m)};
}

double metric(const CholeskyPoint& base, const TangentVector& x, const TangentVector& y) {
    if (base.dim() != x.dim() || base.dim() != y.dim()) {
        throw std::invalid_argument("metric: dimension mismatch");
    }
    double s = 0.0;
    for (int i = 0; i < x.dim(); ++i) {
        for (int j = 0; j < i; ++j) s += x.mat(i, j) * y.mat(i, j);
        const double ljj = base.mat(i, i);
        s += x.mat(i, i) * y.mat(i, i) / (ljj * ljj);
    }
    return s;
}

CholeskyPoint exp_map(const CholeskyPoint& base, const TangentVector& x) {
    if (base.dim() != x.dim()) throw std::invalid_argument("exp_map: dimension mismatch");
    const int d = base.dim();
    Matrix out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) out(i, j) = base.mat(i, j) + x.mat(i, j);
        out(i, i) = base.mat(i, i) * std::exp(x.mat(i, i) / base.mat(i, i));
    }
    return CholeskyPoint{std::move(out)};
}

TangentVector log_map(const CholeskyPoint& base, const CholeskyPoint& target) {
    if (base.dim() != target.dim()) throw std::invalid_argument("log_map: dimension mismatch");
    validate_cholesky_point(base.mat);
    validate_cholesky_point(target.mat);
    const int d = base.dim();
    Matrix out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) out(i, j) = target.mat(i, j) - base.mat(i, j);
        out(i, i) = base.mat(i, i) * std::log(target.mat(i, i) / base.mat(i, i));
    }
    return TangentVector{std::move(out)};
}

CholeskyPoint cholesky_map(const SPDMatrix& spd) {
    return CholeskyPoint{cholesky_factor(spd.mat)};
}

SPDMatrix inverse_cholesky_map(const CholeskyPoint& p) {
    return SPDMatrix{matmul(p.mat, transpose(p.mat))};
}

CholeskyPoint frechet_mean(std::span<const CholeskyPoint> points) {
    if (points.empty()) throw std::invalid_argument("frechet_mean: empty point set");
    std::vector<double> ones(points.size(), 1.0);
    return weighted_frechet_mean(points, ones, static_cast<int>(points.size()));
}

CholeskyPoint weighted_frechet_mean(std::span<const CholeskyPoint> points,
                                    std::span<const double> weights, int n,
                                    bool normalize_by_weight_sum) {
    if (points.empty()) throw std::invalid_argument("weighted_frechet_mean: empty point set");
    if (points.size() != weights.size()) {
        throw std::invalid_argument("weighted_frechet_mean: points/weights length mismatch");
    }
    double denom = static_cast<double>(n);
    if (normalize_by_weight_sum) {
        denom = 0.0;
        for (double w : weights) denom += w;
    }
    const int d = points[0].dim();
    Matrix out(d, d);
    std::vector<double> logdiag(d, 0.0);
    for (size_t k = 0; k < points.size(); ++k) {
        if (weights[k] < 0.0) {
            throw std::invalid_argument("weighted_frechet_mean: negative weight at index " +
                                        std::to_string(k));
        }
        if (points[k].dim() != d) {
            throw std::invalid_argument("weighted_frechet_mean: dimension mismatch");
        }
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < i; ++j) out(i, j) += weights[k] * points[k].mat(i, j) / denom;
            logdiag[i] += weights[k] * std::log(points[k].mat(i, i)) / denom;
        }
    }
    for (int i = 0; i < d; ++i) out(i, i) = std::exp(logdiag[i]);
    return CholeskyPoint{std::move(out)};
}

CholeskyPoint bias_add(const CholeskyPoint& x, const CholeskyPoint& y) {
    if (x.dim() != y.dim()) throw std::invalid_argument("bias_add: dimension mismatch");
    const int d = x.dim();
    Matrix out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) out(i, j) = x.mat(i, j) + y.mat(i, j);
        out(i, i) = x.mat(i, i) * y.mat(i, i);
    }
    return CholeskyPoint{std::move(out)};
}

CholeskyPoint gate_combine(const Matrix& z, const CholeskyPoint& a, const CholeskyPoint& b) {
    if (z.rows != a.dim() || z.cols != a.dim() || a.dim() != b.dim()) {
        throw std::invalid_argument("gate_combine: dimension mismatch");
    }
    const int d = a.dim();
    Matrix out(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double g = z(i, j);
            if (!(g > 0.0 && g < 1.0)) {
                throw std::domain_error("gate_combine: gate entry outside (0,1) at (" +
                                        std::to_string(i) + "," + std::to_string(j) + ")");
            }
            out(i, j) = (1.0 - g) * a.mat(i, j) + g * b.mat(i, j);
        }
    }
    return CholeskyPoint{std::move(out)};
}

namespace diff {

Value exp_map(Tape& t, Value base, Value x) {
    Value strict = t.add(t.strict_lower(base), t.strict_lower(x));
    Value db = t.diag_vec(base);
    Value dx = t.diag_vec(x);
    Value diag = t.mul(db, t.exp(t.div(dx, db)));
    return t.add(strict, t.make_diag(diag));
}

Value log_map(Tape& t, Value base, Value target) {
    Value strict = t.sub(t.strict_lower(target), t.strict_lower(base));
    Value db = t.diag_vec(base);
    Value dt = t.diag_vec(target);
    Value diag = t.mul(db, t.log(t.div(dt, db)));
    return t.add(strict, t.make_diag(diag));
}

Value bias_add(Tape& t, Value x, Value y) {
    Value strict = t.add(t.strict_lower(x), t.strict_lower(y));
    Value diag = t.mul(t.diag_vec(x), t.diag_vec(y));
    return t.add(strict, t.make_diag(diag));
}

Value weighted_frechet_mean(Tape& t, std::span<const Value> points, std::span<const Value> w,
                            int n) {
    if (points.empty() || points.size() != w.size()) {
        throw std::invalid_argument("weighted_frechet_mean: bad operand lists");
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    Value strict = t.smul(t.scale(w[0], t.strict_lower(points[0])), inv_n);
    Value logdiag = t.smul(t.scale(w[0], t.log(t.diag_vec(points[0]))), inv_n);
    for (size_t k = 1; k < points.size(); ++k) {
        strict = t.add(strict, t.smul(t.scale(w[k], t.strict_lower(points[k])), inv_n));
        logdiag = t.add(logdiag, t.smul(t.scale(w[k], t.log(t.diag_vec(points[k]))), inv_n));
    }
    return t.add(strict, t.make_diag(t.exp(logdiag)));
}

Value gate_combine(Tape& t, Value z, Value a, Value b) {
    Value one_minus = t.sadd(t.smul(z, -1.0), 1.0);
    return t.add(t.mul(one_minus, a), t.mul(z, b));
}

}  // namespace diff

}  // namespace cholseq
