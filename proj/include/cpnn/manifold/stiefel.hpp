#pragma once

#include "cpnn/algebra/filter_bank.hpp"
#include "cpnn/algebra/polar.hpp"

namespace cpnn {

/// A point of St(d, n) held in the oriented form n >= d. Wide inputs are
/// transposed on construction and transposed back by matrix().
class StiefelPoint {
public:
  /// Throws ValidationError if ||T'^T T' - I||_F > tol.
  static StiefelPoint from_matrix(const DenseMatrix& t, double tol = 1e-8);

  const DenseMatrix& oriented() const noexcept { return t_; }
  bool transposed() const noexcept { return transposed_; }
  DenseMatrix matrix() const { return transposed_ ? DenseMatrix(t_.transpose()) : t_; }

private:
  DenseMatrix t_;
  bool transposed_ = false;
};

/// ||T^T T - I||_F for a tall T (wide T is transposed first).
double stiefel_residual(const DenseMatrix& t);

/// (I - T T^T) X + 1/2 T (T^T X - X^T T)
DenseMatrix tangent_project(const DenseMatrix& t, const DenseMatrix& x);
/// W = What - What^T, What = X T^T - 1/2 T (T^T X T^T). Skew n x n.
DenseMatrix cayley_W(const DenseMatrix& t, const DenseMatrix& x);

enum class CayleySolver { dense, spectral, fixed_point };

template <class P>
struct RetractResult {
  P point;
  bool fell_back = false; // fixed-point iteration failed, direct solve used
  int iterations = 0;     // fixed-point iterations (max over frequencies)
};

/// (I - W/2)^{-1} (I + W/2) T with W = W(T, X). Dense matrices accept the
/// dense and fixed_point solvers.
RetractResult<DenseMatrix> cayley_retract(const DenseMatrix& t, const DenseMatrix& x,
                                          CayleySolver solver = CayleySolver::dense);

/// Structured versions for 1-D banks: applied to T' (the tall orientation),
/// result transposed back. Outputs are full-length banks.
FilterBank tangent_project(const FilterBank& t, const FilterBank& x);
RetractResult<FilterBank> cayley_retract(const FilterBank& t, const FilterBank& x,
                                         CayleySolver solver = CayleySolver::spectral);

/// Polar factor of X (nearest point of St in Frobenius norm).
DenseMatrix stiefel_project(const DenseMatrix& x, PolarMethod method = PolarMethod::newton_schulz);
/// Per-frequency polar factors; the result is block circulant with full-length
/// filters. Throws SingularInputError if any frequency block is rank deficient.
FilterBank stiefel_project(const FilterBank& x, PolarMethod method = PolarMethod::newton_schulz);

struct PositiveRetractResult {
  double value = 1.0;
  bool clamped = false;
};

/// Exponential map on R_{>0} with metric rs/alpha^2: alpha exp(r/alpha).
/// r/alpha is clamped to [-700, 700] to avoid overflow and underflow (flagged).
PositiveRetractResult positive_retract(double alpha, double r);

} // namespace cpnn
