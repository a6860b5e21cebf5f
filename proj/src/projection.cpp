#include "cpnn/training/projection.hpp"

#include "cpnn/error.hpp"

#include <cmath>
#include <vector>

namespace cpnn {
namespace {

// out[t][s][q] += scale * sum_{s2} sum_p E_p^{(s,s2)} b_{q+p}^{(t,s2)} over the
// oriented bank b, lags taken modulo the grid.
void apply_lags(const LagCorrelation& e, const FilterBank& b, double scale, FilterBank& out) {
  const BankGeometry& g = b.geometry();
  const int tr = g.tap_rows(), tc = g.tap_cols();
  const int lr_n = 2 * tr - 1, lc_n = 2 * tc - 1;
  // E unwrapped onto the lags r2 - r1, c2 - c1 that taps can reach
  const std::size_t block = static_cast<std::size_t>(lr_n) * lc_n;
  std::vector<double> lin(static_cast<std::size_t>(g.m2) * g.m2 * block);
  for (int s = 0; s < g.m2; ++s)
    for (int s2 = 0; s2 < g.m2; ++s2) {
      double* l = lin.data() + (static_cast<std::size_t>(s) * g.m2 + s2) * block;
      for (int qr = 0; qr < lr_n; ++qr) {
        const int lr = ((qr - (tr - 1)) % g.height + g.height) % g.height;
        for (int qc = 0; qc < lc_n; ++qc)
          l[qr * lc_n + qc] = scale * e.at(s, s2, lr, ((qc - (tc - 1)) % g.width + g.width) % g.width);
      }
    }
  for (int t = 0; t < g.m1; ++t)
    for (int s = 0; s < g.m2; ++s) {
      auto dst = out.filter(t, s);
      for (int s2 = 0; s2 < g.m2; ++s2) {
        const auto src = b.filter(t, s2);
        const double* l = lin.data() + (static_cast<std::size_t>(s) * g.m2 + s2) * block;
        for (int r2 = 0; r2 < tr; ++r2)
          for (int c2 = 0; c2 < tc; ++c2) {
            const double v = src[r2 * tc + c2];
            if (v == 0.0) continue;
            for (int r1 = 0; r1 < tr; ++r1) {
              const double* row = l + static_cast<std::size_t>(r2 - r1 + tr - 1) * lc_n + c2 + tc - 1;
              double* d = dst.data() + r1 * tc;
              // lag c2 - c1 sits at row[-c1]
              for (int c1 = 0; c1 < tc; ++c1) d[c1] += v * row[-c1];
            }
          }
      }
    }
}

void subtract_identity(LagCorrelation& c) {
  for (int s = 0; s < c.channels; ++s) c.at(s, s, 0, 0) -= 1.0;
}

double squared(const LagCorrelation& c) {
  double s = 0.0;
  for (double v : c.values) s += v * v;
  return s;
}

double dot(const FilterBank& a, const FilterBank& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

FilterBank reorient(const FilterBank& oriented, bool transposed) {
  return transposed ? oriented.transposed() : oriented;
}

// Matrix entries per tap: every tap of a limited filter appears once per grid point.
double multiplicity(const FilterBank& t) { return static_cast<double>(t.pixels()); }

} // namespace

double penalty_value(const FilterBank& t) {
  const FilterBank a = t.oriented();
  LagCorrelation e = lag_correlation(a, a);
  subtract_identity(e);
  return multiplicity(a) * squared(e);
}

FilterBank penalty_gradient(const FilterBank& t) {
  const bool tr = !t.tall();
  const FilterBank a = t.oriented();
  LagCorrelation e = lag_correlation(a, a);
  subtract_identity(e);
  FilterBank g(a.geometry());
  apply_lags(e, a, 4.0 * multiplicity(a), g);
  return reorient(g, tr);
}

FilterBank penalty_hvp(const FilterBank& t, const FilterBank& v) {
  if (!(t.geometry() == v.geometry())) throw DimensionError("penalty_hvp: direction has a different geometry");
  const bool tr = !t.tall();
  const FilterBank a = t.oriented(), d = v.oriented();
  LagCorrelation e = lag_correlation(a, a);
  subtract_identity(e);
  LagCorrelation de = lag_correlation(d, a);
  const LagCorrelation de2 = lag_correlation(a, d);
  for (std::size_t i = 0; i < de.values.size(); ++i) de.values[i] += de2.values[i];
  FilterBank h(a.geometry());
  const double w = 4.0 * multiplicity(a);
  apply_lags(e, d, w, h);
  apply_lags(de, a, w, h);
  return reorient(h, tr);
}

double projection_objective(const FilterBank& t, const FilterBank& target, double lambda) {
  const FilterBank diff = t - target;
  return multiplicity(t) * dot(diff, diff) + lambda * penalty_value(t);
}

ProjectionResult project_filters(const FilterBank& target, const ProjectionOptions& opts) {
  if (!(opts.lambda > 0.0)) throw ValidationError("project_filters: lambda must be positive");
  const double mult = multiplicity(target);
  ProjectionResult res;
  FilterBank t = target;
  double f = projection_objective(t, target, opts.lambda);
  res.objective.push_back(f);
  for (int it = 0; it < opts.max_iters; ++it) {
    FilterBank grad = 2.0 * mult * (t - target) + opts.lambda * penalty_gradient(t);
    const double gnorm = grad.tap_norm();
    if (gnorm <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    const FilterBank dir = (1.0 / gnorm) * grad;
    const FilterBank hg = 2.0 * mult * dir + opts.lambda * penalty_hvp(t, dir);
    const double rho = std::max(hg.tap_norm(), opts.rho_floor);
    double step = 1.0 / rho;
    FilterBank next = t - step * grad;
    double fn = projection_objective(next, target, opts.lambda);
    int halvings = 0;
    while (!(fn <= f) && halvings < 60) {
      step *= 0.5;
      ++halvings;
      next = t - step * grad;
      fn = projection_objective(next, target, opts.lambda);
    }
    res.backtracks += halvings;
    res.iterations = it + 1;
    if (!(fn <= f)) {
      // no decrease representable along -grad: numerically stationary
      res.converged = true;
      break;
    }
    t = std::move(next);
    f = fn;
    res.objective.push_back(f);
  }
  res.gram_residual = gram_residual(t);
  res.distance = std::sqrt(mult * dot(t - target, t - target));
  res.bank = std::move(t);
  return res;
}

} // namespace cpnn
