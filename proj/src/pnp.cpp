#include "cpnn/pnp/pnp.hpp"

#include "cpnn/error.hpp"
#include "cpnn/random.hpp"
#include "cpnn/training/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace cpnn {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void check_size(std::span<const double> v, int n, const char* what) {
  if (static_cast<int>(v.size()) != n)
    throw DimensionError(std::string(what) + ": expected " + std::to_string(n) + " values, got " +
                         std::to_string(v.size()));
}

// Solves (eta I + B^T B) z = rhs by CG starting from z.
void blur_cg(const DataTerm& f, double eta, const Vector& rhs, Vector& z) {
  const auto op = [&](const Vector& v) {
    Vector out = blur_adjoint(f.kernel, blur_apply(f.kernel, v, f.height, f.width, f.boundary), f.height, f.width,
                              f.boundary);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += eta * v[i];
    return out;
  };
  const double bnorm = norm(rhs);
  if (bnorm == 0.0) {
    std::fill(z.begin(), z.end(), 0.0);
    return;
  }
  Vector r = op(z);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = rhs[i] - r[i];
  Vector p = r;
  double rr = dot(r, r);
  for (int it = 0; it <= f.cg.max_iters; ++it) {
    if (std::sqrt(rr) <= f.cg.rel_tol * bnorm) return;
    if (it == f.cg.max_iters) break;
    const Vector ap = op(p);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) throw SolverError("prox CG breakdown (p^T A p = " + std::to_string(pap) + ")");
    const double a = rr / pap;
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] += a * p[i];
      r[i] -= a * ap[i];
    }
    const double rr_new = dot(r, r);
    const double b = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + b * p[i];
  }
  throw SolverError("prox CG did not reach relative residual " + std::to_string(f.cg.rel_tol) + " within " +
                    std::to_string(f.cg.max_iters) + " iterations");
}

} // namespace

// ---------------------------------------------------------------------------
// Data terms

double DataTerm::value(std::span<const double> y) const {
  check_size(y, dim, "data term");
  switch (kind) {
  case DataTermKind::quadratic_identity: return 0.5 * dist(y, observation) * dist(y, observation);
  case DataTermKind::quadratic_blur: {
    const Vector by = blur_apply(kernel, Vector(y.begin(), y.end()), height, width, boundary);
    const double d = dist(by, observation);
    return 0.5 * d * d;
  }
  case DataTermKind::custom: return value_fn ? value_fn(y) : std::numeric_limits<double>::quiet_NaN();
  }
  return 0.0;
}

Vector DataTerm::grad(std::span<const double> y) const {
  check_size(y, dim, "data term");
  switch (kind) {
  case DataTermKind::quadratic_identity: {
    Vector g(y.begin(), y.end());
    for (int i = 0; i < dim; ++i) g[i] -= observation[i];
    return g;
  }
  case DataTermKind::quadratic_blur: {
    Vector r = blur_apply(kernel, Vector(y.begin(), y.end()), height, width, boundary);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= observation[i];
    return blur_adjoint(kernel, r, height, width, boundary);
  }
  case DataTermKind::custom:
    if (!grad_fn) throw ValidationError("data term has no gradient");
    return grad_fn(y);
  }
  return {};
}

Vector DataTerm::prox(std::span<const double> v, double eta) const {
  check_size(v, dim, "data term");
  if (!(eta > 0.0)) throw ValidationError("prox weight eta must be positive");
  switch (kind) {
  case DataTermKind::quadratic_identity: {
    Vector z(dim);
    for (int i = 0; i < dim; ++i) z[i] = (eta * v[i] + observation[i]) / (eta + 1.0);
    return z;
  }
  case DataTermKind::quadratic_blur: {
    Vector rhs = blur_adjoint(kernel, observation, height, width, boundary);
    for (int i = 0; i < dim; ++i) rhs[i] += eta * v[i];
    Vector z(v.begin(), v.end());
    blur_cg(*this, eta, rhs, z);
    return z;
  }
  case DataTermKind::custom:
    if (!prox_fn) throw ValidationError("data term has no prox");
    return prox_fn(v, eta);
  }
  return {};
}

DataTerm quadratic_identity(Vector observation) {
  DataTerm f;
  f.kind = DataTermKind::quadratic_identity;
  f.dim = static_cast<int>(observation.size());
  f.observation = std::move(observation);
  f.lipschitz = 1.0;
  return f;
}

DataTerm quadratic_blur(const BlurKernel& kernel, Vector observation, int height, int width, BlurBoundary boundary) {
  if (height <= 0 || width <= 0) throw ValidationError("blur data term needs a positive image size");
  const int out = boundary == BlurBoundary::periodic ? height * width : (height - 8) * (width - 8);
  if (boundary == BlurBoundary::valid && (height <= 8 || width <= 8))
    throw ValidationError("valid blur needs images larger than 8x8");
  check_size(observation, out, "blur observation");
  DataTerm f;
  f.kind = DataTermKind::quadratic_blur;
  f.kernel = kernel;
  f.observation = std::move(observation);
  f.height = height;
  f.width = width;
  f.boundary = boundary;
  f.dim = height * width;
  f.lipschitz = 1.0; // ||B|| <= sum of the nonnegative taps = 1
  return f;
}

// ---------------------------------------------------------------------------
// Denoisers

Denoiser plain_denoiser(const NetworkParams& net) {
  const int n = net.layers.front().bank.pixels();
  return {"plain", [net, n](std::span<const double> x) {
            check_size(x, n, "denoiser input");
            return denoise(net, x);
          }};
}

Denoiser linear_denoiser(double s) {
  return {"linear", [s](std::span<const double> x) {
            Vector y(x.begin(), x.end());
            for (double& v : y) v *= s;
            return y;
          }};
}

Vector OracleDenoiser::operator()(std::span<const double> x) const {
  check_size(x, static_cast<int>(x_star.size()), "oracle denoiser input");
  Vector y = psi(x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = anchor * x_star[i] + scale * (x[i] - gamma * y[i]);
  return y;
}

Denoiser OracleDenoiser::as_denoiser() const {
  return {"oracle", [self = *this](std::span<const double> x) { return self(x); }};
}

OracleDenoiser oracle_denoiser(Vector x_star, VectorMap psi, double t, double gamma) {
  if (!(t >= 0.5 && t <= 1.0)) throw ValidationError("oracle denoiser needs t in [1/2, 1], got " + std::to_string(t));
  if (!(gamma > 0.0 && gamma < 2.0))
    throw ValidationError("oracle denoiser needs 0 < gamma < 2, got " + std::to_string(gamma));
  OracleDenoiser d;
  d.x_star = std::move(x_star);
  d.t = t;
  d.gamma = gamma;
  d.scale = 1.0 / (1.0 - gamma + 2.0 * t * gamma);
  d.anchor = 1.0 - d.scale;
  d.psi = std::move(psi);
  return d;
}

OracleDenoiser oracle_denoiser(Vector x_star, const NetworkParams& net, double t) {
  const int n = net.layers.front().bank.pixels();
  check_size(x_star, n, "oracle x*");
  return oracle_denoiser(std::move(x_star), [net](std::span<const double> x) { return lift_denoise(net, x); }, t,
                         net.gamma);
}

std::string to_string(OracleSource s) {
  switch (s) {
  case OracleSource::file: return "file";
  case OracleSource::denoiser_pass: return "denoiser";
  case OracleSource::smoothed: return "smoothed";
  }
  return "?";
}

OracleSource oracle_source_from_string(const std::string& s) {
  if (s == "file") return OracleSource::file;
  if (s == "denoiser") return OracleSource::denoiser_pass;
  if (s == "smoothed") return OracleSource::smoothed;
  throw ValidationError("unknown oracle source '" + s + "' (expected file, denoiser or smoothed)");
}

// ---------------------------------------------------------------------------
// Solvers

void PnPConfig::validate() const {
  if (!(eta > 0.0)) throw ValidationError("eta must be positive");
  if (max_iters < 1) throw ValidationError("max_iters must be at least 1");
  if (!(stop_tol >= 0.0)) throw ValidationError("stop_tol must be non-negative");
  if (detect_divergence && (divergence_window < 1 || !(divergence_growth > 1.0)))
    throw ValidationError("divergence detector needs window >= 1 and growth > 1");
}

nlohmann::json pnp_config_to_json(const PnPConfig& c) {
  return {{"eta", c.eta},
          {"max_iters", c.max_iters},
          {"stop_tol", c.stop_tol},
          {"unsafe", c.unsafe},
          {"detect_divergence", c.detect_divergence},
          {"divergence_growth", c.divergence_growth},
          {"divergence_window", c.divergence_window}};
}

PnPConfig pnp_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("solver config must be a JSON object");
  PnPConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "eta") c.eta = it->get<double>();
      else if (k == "max_iters") c.max_iters = it->get<int>();
      else if (k == "stop_tol") c.stop_tol = it->get<double>();
      else if (k == "unsafe") c.unsafe = it->get<bool>();
      else if (k == "detect_divergence") c.detect_divergence = it->get<bool>();
      else if (k == "divergence_growth") c.divergence_growth = it->get<double>();
      else if (k == "divergence_window") c.divergence_window = it->get<int>();
      else throw ParseError("unknown solver config key '" + k + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("solver config key '" + k + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

void write_trace_csv(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "iteration,residual,t_residual,objective\n";
  char buf[128];
  for (int r = 0; r < trace.size(); ++r) {
    const double tr = r < static_cast<int>(trace.t_residual.size()) ? trace.t_residual[r]
                                                                     : std::numeric_limits<double>::quiet_NaN();
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r + 1, trace.residual[r], tr, trace.objective[r]);
    out << buf;
  }
  if (!out) throw Error("failed writing " + path.string());
}

namespace {

// True if the detector fires after appending residual r.
bool diverging(const PnPConfig& cfg, const std::vector<double>& res) {
  if (!cfg.detect_divergence) return false;
  const int n = static_cast<int>(res.size());
  if (!std::isfinite(res.back())) return true;
  if (n <= cfg.divergence_window) return false;
  const double before = res[n - 1 - cfg.divergence_window];
  return res.back() > cfg.divergence_growth * before && res.back() > 0.0;
}

} // namespace

PnPResult fbs_pnp(const DataTerm& f, const Denoiser& d, const PnPConfig& cfg, const Vector& x0) {
  cfg.validate();
  check_size(x0, f.dim, "initial point");
  if (!cfg.unsafe && !(cfg.eta < 2.0 / f.lipschitz))
    throw ValidationError("FBS needs 0 < eta < 2/L = " + std::to_string(2.0 / f.lipschitz) + ", got eta = " +
                          std::to_string(cfg.eta) + " (use unsafe mode to override)");
  PnPResult res;
  res.x = x0;
  Vector y(f.dim);
  for (int r = 0; r < cfg.max_iters; ++r) {
    const Vector g = f.grad(res.x);
    for (int i = 0; i < f.dim; ++i) y[i] = res.x[i] - cfg.eta * g[i];
    Vector next = d(y);
    check_size(next, f.dim, "denoiser output");
    const double step = dist(next, res.x);
    res.x = std::move(next);
    res.trace.residual.push_back(step);
    res.trace.objective.push_back(f.value(res.x));
    res.iterations = r + 1;
    if (step <= cfg.stop_tol) {
      res.converged = true;
      break;
    }
    if (diverging(cfg, res.trace.residual)) {
      res.diverged = true;
      break;
    }
  }
  res.y = y;
  return res;
}

PnPResult admm_pnp(const DataTerm& f, const Denoiser& d, const PnPConfig& cfg, const Vector& y0, const Vector& p0) {
  cfg.validate();
  check_size(y0, f.dim, "initial point");
  if (!p0.empty()) check_size(p0, f.dim, "initial dual");
  const double eta = cfg.eta;
  PnPResult res;
  res.y = y0;
  res.p = p0.empty() ? Vector(f.dim, 0.0) : p0;
  res.x = y0;
  Vector v(f.dim), t_prev;
  for (int r = 0; r < cfg.max_iters; ++r) {
    for (int i = 0; i < f.dim; ++i) v[i] = res.y[i] - res.p[i] / eta;
    Vector x = f.prox(v, eta);
    for (int i = 0; i < f.dim; ++i) v[i] = x[i] + res.p[i] / eta; // t^r
    Vector y = d(v);
    check_size(y, f.dim, "denoiser output");
    for (int i = 0; i < f.dim; ++i) res.p[i] += eta * (x[i] - y[i]);
    const double step = dist(x, res.x);
    res.trace.residual.push_back(step);
    res.trace.t_residual.push_back(t_prev.empty() ? std::numeric_limits<double>::quiet_NaN() : dist(v, t_prev));
    res.trace.objective.push_back(f.value(x));
    if (cfg.record_t) res.trace.t_values.push_back(v);
    t_prev = v;
    res.x = std::move(x);
    res.y = std::move(y);
    res.iterations = r + 1;
    if (step <= cfg.stop_tol) {
      res.converged = true;
      break;
    }
    if (diverging(cfg, res.trace.residual)) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

Vector admm_t_map(const DataTerm& f, const Denoiser& d, double eta, std::span<const double> t) {
  check_size(t, f.dim, "t");
  const Vector dt = d(t);
  Vector v(f.dim);
  for (int i = 0; i < f.dim; ++i) v[i] = 2.0 * dt[i] - t[i];
  Vector out = f.prox(v, eta);
  for (int i = 0; i < f.dim; ++i) out[i] += t[i] - dt[i];
  return out;
}

// ---------------------------------------------------------------------------
// Averagedness estimation

OperatorHandle network_operator(const NetworkParams& net) {
  OperatorHandle op;
  op.dim = net.layers.front().bank.pixels();
  op.apply = [net](std::span<const double> x) { return lift_denoise(net, x); };
  op.vjp = [net](std::span<const double> x, std::span<const double> w) { return lift_denoise_vjp(net, x, w); };
  return op;
}

OperatorHandle linear_operator(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("linear operator must be square");
  OperatorHandle op;
  op.dim = static_cast<int>(a.rows());
  const auto mul = [a](std::span<const double> v, bool transpose) {
    const Eigen::Map<const Eigen::VectorXd> vm(v.data(), static_cast<Eigen::Index>(v.size()));
    const Eigen::VectorXd r = transpose ? Eigen::VectorXd(a.transpose() * vm) : Eigen::VectorXd(a * vm);
    return Vector(r.data(), r.data() + r.size());
  };
  op.apply = [mul](std::span<const double> x) { return mul(x, false); };
  op.jvp = [mul](std::span<const double>, std::span<const double> v) { return mul(v, false); };
  op.vjp = [mul](std::span<const double>, std::span<const double> w) { return mul(w, true); };
  return op;
}

Sampler uniform_cube_sampler(int dim, std::uint64_t seed) {
  return [dim, seed](int i) {
    CounterRng rng = CounterRng(seed, 5).split(static_cast<std::uint64_t>(i));
    Vector x(dim);
    for (double& v : x) v = rng.uniform();
    return x;
  };
}

namespace {

Vector op_jvp(const OperatorHandle& op, std::span<const double> x, std::span<const double> v) {
  if (op.jvp) return op.jvp(x, v);
  // central differences along the unit vector v
  const double h = 1e-6 * (1.0 + norm(x));
  Vector xp(x.begin(), x.end()), xm(x.begin(), x.end());
  for (std::size_t i = 0; i < xp.size(); ++i) {
    xp[i] += h * v[i];
    xm[i] -= h * v[i];
  }
  Vector a = op.apply(xp);
  const Vector b = op.apply(xm);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (a[i] - b[i]) / (2.0 * h);
  return a;
}

} // namespace

double residual_jacobian_norm(const OperatorHandle& op, std::span<const double> x, double t,
                              const AveragednessOptions& opt, std::uint64_t stream) {
  const int n = op.dim;
  const double a = 1.0 / t, b = (1.0 - t) / t;
  CounterRng rng = CounterRng(opt.seed, 6).split(stream);
  Vector v(n);
  for (double& e : v) e = rng.normal();
  double nv = norm(v);
  for (double& e : v) e /= nv;
  double sigma = 0.0;
  for (int it = 0; it < opt.power_iters; ++it) {
    Vector jv = op_jvp(op, x, v);
    for (int i = 0; i < n; ++i) jv[i] = a * jv[i] - b * v[i];
    const double est = norm(jv);
    Vector w = op.vjp(x, jv);
    for (int i = 0; i < n; ++i) w[i] = a * w[i] - b * jv[i];
    const double nw = norm(w);
    const bool done = it > 0 && std::abs(est - sigma) <= opt.power_tol * std::max(est, 1.0);
    sigma = est;
    if (done || nw == 0.0) break;
    for (int i = 0; i < n; ++i) v[i] = w[i] / nw;
  }
  return sigma;
}

AveragednessResult estimate_averagedness(const OperatorHandle& op, const AveragednessOptions& opt,
                                         const Sampler& sampler) {
  if (op.dim < 1 || !op.apply || !op.vjp) throw ValidationError("averagedness estimation needs op, dim and a VJP");
  if (!(opt.grid_step > 0.0 && opt.grid_step <= 0.5)) throw ValidationError("grid step must be in (0, 1/2]");
  if (opt.samples < 1) throw ValidationError("need at least one sample");
  if (opt.power_iters < 1) throw ValidationError("need at least one power iteration");

  AveragednessResult res;
  for (int k = 0;; ++k) {
    const double t = 0.5 + opt.grid_step * k;
    if (t > 1.0 + 1e-12) break;
    res.grid.push_back(std::min(t, 1.0));
  }
  const int levels = static_cast<int>(res.grid.size());
  const Sampler sample = sampler ? sampler : uniform_cube_sampler(op.dim, opt.seed);
  std::vector<int> first_pass(opt.samples, levels);
  std::vector<std::vector<double>> norms(opt.samples);
  parallel_for(opt.samples, opt.workers, [&](int i) {
    const Vector x = sample(i);
    for (int k = 0; k < levels; ++k) {
      const double s = residual_jacobian_norm(op, x, res.grid[k], opt, static_cast<std::uint64_t>(i));
      norms[i].push_back(s);
      if (s <= 1.0 + opt.tol_spec) {
        first_pass[i] = k;
        break;
      }
    }
  });
  res.max_norm.assign(levels, std::numeric_limits<double>::quiet_NaN());
  int worst = 0;
  for (int i = 0; i < opt.samples; ++i) {
    worst = std::max(worst, first_pass[i]);
    for (std::size_t k = 0; k < norms[i].size(); ++k)
      if (std::isnan(res.max_norm[k]) || norms[i][k] > res.max_norm[k]) res.max_norm[k] = norms[i][k];
  }
  res.samples = opt.samples;
  res.averaged = worst < levels;
  res.t = res.averaged ? res.grid[worst] : 1.0;
  return res;
}

// ---------------------------------------------------------------------------
// Divergence counterexample

double divergence_factor(double t, double a2) {
  if (!(t > 0.5 && t <= 1.0)) throw ValidationError("divergence example needs t in (1/2, 1], got " + std::to_string(t));
  if (!(a2 > 0.0 && a2 < 1.0)) throw ValidationError("divergence example needs a2 in (0, 1), got " + std::to_string(a2));
  const double a1 = 2.0 * t - 1.0;
  const double rhs = (1.0 - a2) * (1.0 + 2.0 * a1) / 2.0;
  if (!(a1 > rhs)) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "divergence example needs a1 > (1 - a2)(1 + 2 a1)/2 strictly, got %.17g <= %.17g",
                  a1, rhs);
    throw ValidationError(buf);
  }
  return (1.0 + a1) - rhs;
}

DivergenceResult divergence_example(double t, double a2, double y0, int iters) {
  DivergenceResult out;
  out.c = divergence_factor(t, a2);
  if (y0 == 0.0 || !std::isfinite(y0)) throw ValidationError("divergence example needs y0 != 0");
  if (iters < 1) throw ValidationError("divergence example needs at least one iteration");
  out.a1 = 2.0 * t - 1.0;

  DataTerm f;
  f.kind = DataTermKind::custom;
  f.dim = 1;
  const double k = (1.0 + a2) / (1.0 - a2);
  f.lipschitz = k;
  f.value_fn = [k](std::span<const double> y) { return 0.5 * k * y[0] * y[0]; };
  f.grad_fn = [k](std::span<const double> y) { return Vector{k * y[0]}; };
  f.prox_fn = [k](std::span<const double> v, double eta) { return Vector{v[0] / (1.0 + k / eta)}; };

  PnPConfig cfg;
  cfg.eta = 1.0;
  cfg.max_iters = iters + 1;
  cfg.stop_tol = 0.0;
  cfg.detect_divergence = false;
  cfg.record_t = true;
  out.run = admm_pnp(f, linear_denoiser(-out.a1), cfg, Vector{y0});
  for (const Vector& tv : out.run.trace.t_values) out.t_values.push_back(tv[0]);
  for (std::size_t r = 1; r < out.t_values.size(); ++r) {
    const double q = out.t_values[r] / out.t_values[r - 1];
    out.ratios.push_back(q);
    out.max_ratio_error = std::max(out.max_ratio_error, std::abs(q - out.c));
  }
  return out;
}

} // namespace cpnn
