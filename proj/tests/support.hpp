#pragma once

#include "cpnn/algebra/filter_bank.hpp"
#include "cpnn/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace cpnn::test {

inline FilterBank random_bank(const BankGeometry& g, CounterRng& rng, double scale = 1.0) {
  FilterBank b(g);
  for (double& t : b.data()) t = scale * rng.normal();
  return b;
}

inline std::vector<double> random_vector(int n, CounterRng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Dense matrix straight from the definition of a circulant block:
// entry (r, c) sums the taps whose offset is congruent to r - c.
inline Eigen::MatrixXd dense_oracle(const FilterBank& b) {
  const BankGeometry& g = b.geometry();
  const int h = g.height, w = g.width, p = h * w;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(g.m1 * p, g.m2 * p);
  for (int j = 0; j < g.m1; ++j)
    for (int k = 0; k < g.m2; ++k)
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) {
          const int drow = ((r / w - c / w) % h + h) % h, dcol = ((r % w - c % w) % w + w) % w;
          double v = 0.0;
          for (int tr = 0; tr < g.tap_rows(); ++tr)
            for (int tc = 0; tc < g.tap_cols(); ++tc) {
              const int orow = g.row_lo() + tr, ocol = g.col_lo() + tc;
              if (((orow % h) + h) % h == drow && ((ocol % w) + w) % w == dcol)
                v += b.filter(j, k)[tr * g.tap_cols() + tc];
            }
          t(j * p + r, k * p + c) = v;
        }
  return t;
}

inline std::vector<double> matvec(const Eigen::MatrixXd& a, const std::vector<double>& x) {
  Eigen::VectorXd v = a * Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
  return {v.data(), v.data() + v.size()};
}

// One-sided Jacobi SVD: returns U (n x d, orthonormal columns scaled out) and
// V with A = U diag(s) V^T.
inline void jacobi_svd(Eigen::MatrixXd a, Eigen::MatrixXd& u, Eigen::VectorXd& s, Eigen::MatrixXd& v) {
  const int d = static_cast<int>(a.cols());
  v = Eigen::MatrixXd::Identity(d, d);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        const double alpha = a.col(p).squaredNorm(), beta = a.col(q).squaredNorm();
        const double gamma = a.col(p).dot(a.col(q));
        if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta));
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), sn = c * t;
        for (int i = 0; i < a.rows(); ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = c * x - sn * y;
          a(i, q) = sn * x + c * y;
        }
        for (int i = 0; i < d; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - sn * y;
          v(i, q) = sn * x + c * y;
        }
      }
    if (off < 1e-15) break;
  }
  s.resize(d);
  u = a;
  for (int i = 0; i < d; ++i) {
    s(i) = a.col(i).norm();
    u.col(i) /= s(i);
  }
}

} // namespace cpnn::test
