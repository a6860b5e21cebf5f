#include "cpnn/manifold/stiefel.hpp"

#include "cpnn/error.hpp"

#include <cmath>

namespace cpnn {
namespace {

void check_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(what) + ": shape mismatch");
}

template <class M>
M tangent_impl(const M& t, const M& x) {
  const M txx = t.adjoint() * x;
  return x - t * txx + 0.5 * t * (txx - x.adjoint() * t);
}

template <class M>
M cayley_w_impl(const M& t, const M& x) {
  const M what = x * t.adjoint() - 0.5 * t * ((t.adjoint() * x) * t.adjoint());
  return what - what.adjoint();
}

template <class M>
M cayley_direct(const M& t, const M& w) {
  const long n = t.rows();
  const M eye = M::Identity(n, n);
  return (eye - 0.5 * w).partialPivLu().solve((eye + 0.5 * w) * t);
}

// Y = T + W/2 (T + Y); converges for ||W/2|| < 1.
template <class M>
bool cayley_fixed_point(const M& t, const M& w, M& y, int& iters) {
  const M wt = 0.5 * (w * t);
  y = t + wt;
  for (iters = 1; iters <= 30; ++iters) {
    M next = t + wt + 0.5 * (w * y);
    const double step = (next - y).norm();
    const double ref = next.norm();
    y = std::move(next);
    if (!std::isfinite(step)) return false;
    if (step <= 1e-12 * ref) return true;
  }
  iters = 30;
  return false;
}

struct Oriented {
  SpectralBlocks s;
  bool transposed;
};

Oriented oriented_spectral(const FilterBank& b, bool transpose) {
  if (b.geometry().dims() != 1) throw ValidationError("structured Stiefel operations support 1-D banks only");
  return {spectral(transpose ? b.transposed() : b), transpose};
}

FilterBank from_oriented(SpectralBlocks s, bool transposed) {
  FilterBank out = spectral_inverse(s);
  return transposed ? out.transposed() : out;
}

void check_bank_pair(const FilterBank& t, const FilterBank& x) {
  const BankGeometry& a = t.geometry();
  const BankGeometry& b = x.geometry();
  if (a.m1 != b.m1 || a.m2 != b.m2 || a.width != b.width || a.height != b.height)
    throw DimensionError("filter banks describe matrices of different shapes");
}

// Spectral blocks are exactly Hermitian-symmetric in value, but rounding in
// the per-frequency solves may break the pairing slightly. Symmetrise.
void symmetrise(SpectralBlocks& s) {
  const int m = s.frequencies();
  for (int f = 0; f <= m / 2; ++f) {
    const int g = (m - f) % m;
    if (g == f) {
      s.blocks[f] = s.blocks[f].real().cast<Complex>();
    } else {
      ComplexMatrix avg = 0.5 * (s.blocks[f] + s.blocks[g].conjugate());
      s.blocks[f] = avg;
      s.blocks[g] = avg.conjugate();
    }
  }
}

} // namespace

StiefelPoint StiefelPoint::from_matrix(const DenseMatrix& t, double tol) {
  StiefelPoint p;
  p.transposed_ = t.rows() < t.cols();
  p.t_ = p.transposed_ ? DenseMatrix(t.transpose()) : t;
  const double r = stiefel_residual(p.t_);
  if (!(r <= tol)) throw ValidationError("matrix is not on the Stiefel manifold (residual " + std::to_string(r) + ")");
  return p;
}

double stiefel_residual(const DenseMatrix& t) {
  const DenseMatrix o = t.rows() < t.cols() ? DenseMatrix(t.transpose()) : t;
  return (o.transpose() * o - DenseMatrix::Identity(o.cols(), o.cols())).norm();
}

DenseMatrix tangent_project(const DenseMatrix& t, const DenseMatrix& x) {
  check_same_shape(t, x, "tangent_project");
  return tangent_impl(t, x);
}

DenseMatrix cayley_W(const DenseMatrix& t, const DenseMatrix& x) {
  check_same_shape(t, x, "cayley_W");
  return cayley_w_impl(t, x);
}

RetractResult<DenseMatrix> cayley_retract(const DenseMatrix& t, const DenseMatrix& x, CayleySolver solver) {
  check_same_shape(t, x, "cayley_retract");
  if (solver == CayleySolver::spectral)
    throw ValidationError("spectral Cayley solver needs block-circulant (FilterBank) inputs");
  const DenseMatrix w = cayley_w_impl(t, x);
  RetractResult<DenseMatrix> out;
  if (solver == CayleySolver::fixed_point) {
    if (cayley_fixed_point(t, w, out.point, out.iterations)) return out;
    out.fell_back = true;
  }
  out.point = cayley_direct(t, w);
  return out;
}

FilterBank tangent_project(const FilterBank& t, const FilterBank& x) {
  check_bank_pair(t, x);
  const bool tr = !t.tall();
  Oriented ts = oriented_spectral(t, tr), xs = oriented_spectral(x, tr);
  for (int f = 0; f < ts.s.frequencies(); ++f) xs.s.blocks[f] = tangent_impl(ts.s.blocks[f], xs.s.blocks[f]);
  symmetrise(xs.s);
  return from_oriented(std::move(xs.s), tr);
}

RetractResult<FilterBank> cayley_retract(const FilterBank& t, const FilterBank& x, CayleySolver solver) {
  check_bank_pair(t, x);
  RetractResult<FilterBank> out;
  if (solver == CayleySolver::dense) {
    const bool tr = !t.tall();
    const DenseMatrix td = to_dense(t), xd = to_dense(x);
    const DenseMatrix r = tr ? DenseMatrix(cayley_retract(DenseMatrix(td.transpose()), DenseMatrix(xd.transpose()))
                                               .point.transpose())
                             : cayley_retract(td, xd).point;
    const BankGeometry& g = t.geometry();
    FilterBank b(BankGeometry::full_signal(g.width, g.m1, g.m2));
    const int m = g.width;
    for (int j = 0; j < g.m1; ++j)
      for (int k = 0; k < g.m2; ++k)
        for (int o = b.geometry().col_lo(); o < b.geometry().col_lo() + m; ++o)
          b.tap_ref(j, k, 0, o) = r(j * m + ((o % m) + m) % m, k * m);
    out.point = std::move(b);
    return out;
  }
  const bool tr = !t.tall();
  Oriented ts = oriented_spectral(t, tr), xs = oriented_spectral(x, tr);
  for (int f = 0; f < ts.s.frequencies(); ++f) {
    const ComplexMatrix& tf = ts.s.blocks[f];
    const ComplexMatrix w = cayley_w_impl(tf, xs.s.blocks[f]);
    ComplexMatrix y;
    int iters = 0;
    if (solver == CayleySolver::fixed_point && cayley_fixed_point(tf, w, y, iters)) {
      out.iterations = std::max(out.iterations, iters);
    } else {
      if (solver == CayleySolver::fixed_point) {
        out.fell_back = true;
        out.iterations = std::max(out.iterations, iters);
      }
      y = cayley_direct(tf, w);
    }
    xs.s.blocks[f] = std::move(y);
  }
  symmetrise(xs.s);
  out.point = from_oriented(std::move(xs.s), tr);
  return out;
}

DenseMatrix stiefel_project(const DenseMatrix& x, PolarMethod method) {
  if (x.rows() < x.cols()) return polar_decompose(DenseMatrix(x.transpose()), method).u.transpose();
  return polar_decompose(x, method).u;
}

FilterBank stiefel_project(const FilterBank& x, PolarMethod method) {
  const bool tr = !x.tall();
  Oriented xs = oriented_spectral(x, tr);
  for (auto& b : xs.s.blocks) b = polar_decompose(b, method).u;
  symmetrise(xs.s);
  return from_oriented(std::move(xs.s), tr);
}

PositiveRetractResult positive_retract(double alpha, double r) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("positive_retract needs alpha > 0");
  if (!std::isfinite(r)) throw ValidationError("positive_retract: non-finite step");
  double q = r / alpha;
  bool clamped = false;
  if (q > 700.0 || q < -700.0) {
    q = q > 0.0 ? 700.0 : -700.0;
    clamped = true;
  }
  return {alpha * std::exp(q), clamped};
}

} // namespace cpnn
