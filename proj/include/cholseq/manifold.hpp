#pragma once

#include <span>
#include <vector>

#include "cholseq/tape.hpp"

namespace cholseq {

/// Validity floor for CholeskyPoint diagonals. Violations raise a domain
/// error instead of being clamped so training divergence surfaces early.
inline constexpr double kDiagFloor = 1e-12;

/// Lower-triangular matrix with strictly positive diagonal; element of the
/// Cholesky space.
struct CholeskyPoint {
    Matrix mat;
    int dim() const { return mat.rows; }
};

/// Lower-triangular matrix with unconstrained diagonal; tangent element.
struct TangentVector {
    Matrix mat;
    int dim() const { return mat.rows; }
};

struct SPDMatrix {
    Matrix mat;
    int dim() const { return mat.rows; }
};

void validate_cholesky_point(const Matrix& m);  // throws std::domain_error
void validate_tangent(const Matrix& m);
bool is_valid_cholesky_point(const Matrix& m);

CholeskyPoint make_cholesky_point(Matrix m);
TangentVector make_tangent(Matrix m);
/// Validates symmetry (1e-10) and positive definiteness via factorization.
SPDMatrix make_spd(Matrix m);

/// Riemannian metric at `base`.
double metric(const CholeskyPoint& base, const TangentVector& x, const TangentVector& y);

CholeskyPoint exp_map(const CholeskyPoint& base, const TangentVector& x);
TangentVector log_map(const CholeskyPoint& base, const CholeskyPoint& target);

CholeskyPoint cholesky_map(const SPDMatrix& spd);
SPDMatrix inverse_cholesky_map(const CholeskyPoint& p);

CholeskyPoint frechet_mean(std::span<const CholeskyPoint> points);
/// Weighted mean as a two-term generalization of the closed-form mean. The
/// strictly-lower sum is divided by N as printed; `normalize_by_weight_sum`
/// switches the divisor to the weight total instead.
CholeskyPoint weighted_frechet_mean(std::span<const CholeskyPoint> points,
                                    std::span<const double> weights, int n,
                                    bool normalize_by_weight_sum = false);

CholeskyPoint bias_add(const CholeskyPoint& x, const CholeskyPoint& y);

/// Elementwise convex combination (1-z) a + z b; gate entries must lie
/// strictly in (0,1) on the lower triangle.
CholeskyPoint gate_combine(const Matrix& z, const CholeskyPoint& a, const CholeskyPoint& b);

/// Tape-recorded counterparts used on the training path. Inputs and outputs
/// are lower-triangular d x d node values.
namespace diff {

Value exp_map(Tape& t, Value base, Value x);
Value log_map(Tape& t, Value base, Value target);
Value bias_add(Tape& t, Value x, Value y);
/// Two-point weighted mean; `w` holds one 1x1 non-negative weight per point.
Value weighted_frechet_mean(Tape& t, std::span<const Value> points, std::span<const Value> w,
                            int n);
Value gate_combine(Tape& t, Value z, Value a, Value b);

}  // namespace diff

}  // namespace cholseq
