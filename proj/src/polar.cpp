#include "cpnn/algebra/polar.hpp"

#include "cpnn/error.hpp"

#include <cmath>

namespace cpnn {
namespace {

constexpr int kMaxIter = 100;
constexpr double kStepTol = 1e-12;
constexpr double kRankTol = 1e-12;

template <class M>
void check_rank(const M& x) {
  if (x.rows() < x.cols()) throw SingularInputError("polar factor needs rows >= cols");
  Eigen::ColPivHouseholderQR<M> qr(x);
  const auto& r = qr.matrixR();
  const double top = std::abs(r(0, 0));
  const double bottom = std::abs(r(x.cols() - 1, x.cols() - 1));
  if (top == 0.0 || bottom <= kRankTol * top)
    throw SingularInputError("matrix is numerically rank deficient; polar factor not unique");
}

// A few power steps on X^* X. Underestimates ||X||_2 slightly, which the
// sqrt(3) window tolerates.
template <class M>
double norm2_estimate(const M& x) {
  using V = Eigen::Matrix<typename M::Scalar, Eigen::Dynamic, 1>;
  V v = V::Ones(x.cols());
  for (int i = 0; i < x.cols(); ++i) v(i) += 0.1 * ((i * 7919) % 13) / 13.0;
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < 8; ++it) {
    V w = x.adjoint() * (x * v);
    const double n = w.norm();
    if (n == 0.0) break;
    est = std::sqrt(n);
    v = w / n;
  }
  return est;
}

template <class M>
PolarResult<M> newton_schulz(const M& x) {
  const long d = x.cols();
  const M eye = M::Identity(d, d);
  double scale = norm2_estimate(x);
  bool restarted = false;
  M w = x / scale;
  for (int k = 1; k <= kMaxIter; ++k) {
    M next = 0.5 * w * (3.0 * eye - w.adjoint() * w);
    const double step = (next - w).norm();
    if (!std::isfinite(step) || next.norm() > 1e3 * std::sqrt(static_cast<double>(d))) {
      if (restarted) break;
      // estimate too low: fall back to the Frobenius norm, a guaranteed bound
      restarted = true;
      scale = x.norm();
      w = x / scale;
      continue;
    }
    const double ref = w.norm();
    w = std::move(next);
    if (step <= kStepTol * ref) return {w, k};
  }
  throw NonConvergenceError("Newton-Schulz polar iteration did not converge in 100 steps");
}

template <class M>
PolarResult<M> higham(const M& x) {
  if (x.rows() != x.cols()) throw ValidationError("Higham polar iteration needs a square matrix");
  M w = x;
  for (int k = 1; k <= kMaxIter; ++k) {
    M next = 0.5 * (w + w.adjoint().partialPivLu().inverse());
    const double step = (next - w).norm();
    const double ref = w.norm();
    w = std::move(next);
    if (!std::isfinite(step)) break;
    if (step <= kStepTol * ref) return {w, k};
  }
  throw NonConvergenceError("Higham polar iteration did not converge in 100 steps");
}

template <class M>
PolarResult<M> polar_impl(const M& x, PolarMethod method) {
  if (x.size() == 0) throw DimensionError("polar_decompose of an empty matrix");
  if (!x.allFinite()) throw ValidationError("polar_decompose: non-finite entries");
  check_rank(x);
  return method == PolarMethod::higham ? higham(x) : newton_schulz(x);
}

} // namespace

PolarResult<DenseMatrix> polar_decompose(const DenseMatrix& x, PolarMethod method) {
  return polar_impl(x, method);
}

PolarResult<ComplexMatrix> polar_decompose(const ComplexMatrix& x, PolarMethod method) {
  return polar_impl(x, method);
}

} // namespace cpnn
