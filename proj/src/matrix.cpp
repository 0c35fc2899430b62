#include "cholseq/matrix.hpp"

#include <algorithm>

namespace cholseq {

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::filled(int r, int c, double v) {
    Matrix m(r, c);
    std::fill(m.data.begin(), m.data.end(), v);
    return m;
}

Matrix Matrix::diag(const std::vector<double>& d) {
    Matrix m(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (size_t i = 0; i < d.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return m;
}

Matrix Matrix::col(const std::vector<double>& v) {
    Matrix m(static_cast<int>(v.size()), 1);
    m.data = v;
    return m;
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                                    std::to_string(b.rows) + "x" + std::to_string(b.cols));
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dims " + std::to_string(a.cols) + " vs " +
                                    std::to_string(b.rows));
    }
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
        double* orow = &out.data[static_cast<size_t>(i) * b.cols];
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape("add", a, b);
    Matrix out(a.rows, a.cols);
    for (size_t k = 0; k < a.size(); ++k) out.data[k] = a.data[k] + b.data[k];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape("sub", a, b);
    Matrix out(a.rows, a.cols);
    for (size_t k = 0; k < a.size(); ++k) out.data[k] = a.data[k] - b.data[k];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape("hadamard", a, b);
    Matrix out(a.rows, a.cols);
    for (size_t k = 0; k < a.size(); ++k) out.data[k] = a.data[k] * b.data[k];
    return out;
}

Matrix scal(const Matrix& a, double c) {
    Matrix out(a.rows, a.cols);
    for (size_t k = 0; k < a.size(); ++k) out.data[k] = a.data[k] * c;
    return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
    require_same_shape("add_inplace", a, b);
    for (size_t k = 0; k < a.size(); ++k) a.data[k] += b.data[k];
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape("max_abs_diff", a, b);
    double m = 0.0;
    for (size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a.data[k] - b.data[k]));
    return m;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

bool all_finite(const Matrix& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double trace(const Matrix& a) {
    double s = 0.0;
    for (int i = 0; i < std::min(a.rows, a.cols); ++i) s += a(i, i);
    return s;
}

Matrix cholesky_factor(const Matrix& a) {
    if (a.rows != a.cols) throw std::invalid_argument("cholesky: non-square input");
    const int n = a.rows;
    Matrix l(n, n);
    for (int j = 0; j < n; ++j) {
        double d = a(j, j);
        for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) {
            throw std::domain_error("cholesky: non-positive pivot at index " + std::to_string(j));
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Matrix solve_lower(const Matrix& l, const Matrix& b) {
    if (l.rows != l.cols || l.rows != b.rows) throw std::invalid_argument("solve_lower: bad shapes");
    const int n = l.rows;
    Matrix x = b;
    for (int j = 0; j < b.cols; ++j) {
        for (int i = 0; i < n; ++i) {
            double s = x(i, j);
            for (int k = 0; k < i; ++k) s -= l(i, k) * x(k, j);
            x(i, j) = s / l(i, i);
        }
    }
    return x;
}

Matrix solve_lower_transposed(const Matrix& l, const Matrix& b) {
    if (l.rows != l.cols || l.rows != b.rows) {
        throw std::invalid_argument("solve_lower_transposed: bad shapes");
    }
    const int n = l.rows;
    Matrix x = b;
    for (int j = 0; j < b.cols; ++j) {
        for (int i = n - 1; i >= 0; --i) {
            double s = x(i, j);
            for (int k = i + 1; k < n; ++k) s -= l(k, i) * x(k, j);
            x(i, j) = s / l(i, i);
        }
    }
    return x;
}

}  // namespace cholseq
