#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cholseq {

/// Dense row-major matrix of 64-bit floats. Column vectors are n x 1.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    double scalar() const { return data[0]; }

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix identity(int n);
    static Matrix filled(int r, int c, double v);
    static Matrix diag(const std::vector<double>& d);
    static Matrix col(const std::vector<double>& v);
};

void require_same_shape(const char* op, const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scal(const Matrix& a, double c);

void add_inplace(Matrix& a, const Matrix& b);

double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
bool all_finite(const Matrix& a);
double trace(const Matrix& a);

/// Standard left-looking Cholesky factor of a symmetric positive definite
/// matrix; only the lower triangle of `a` is read. Throws std::domain_error
/// carrying the failing pivot index when the input is not positive definite.
Matrix cholesky_factor(const Matrix& a);

/// Solve L X = B with L lower triangular (forward substitution).
Matrix solve_lower(const Matrix& l, const Matrix& b);
/// Solve L^T X = B with L lower triangular (back substitution).
Matrix solve_lower_transposed(const Matrix& l, const Matrix& b);

}  // namespace cholseq
