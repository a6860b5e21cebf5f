#pragma once

#include "cpnn/data/data.hpp"
#include "cpnn/network/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cpnn {

using VectorMap = std::function<Vector(std::span<const double>)>;

// ---------------------------------------------------------------------------
// Data terms

enum class DataTermKind { quadratic_identity, quadratic_blur, custom };

struct CgOptions {
  double rel_tol = 1e-10;
  int max_iters = 500;
};

/// f and what the solvers need of it. quadratic_identity: f(y) = 1/2 ||x_obs - y||^2.
/// quadratic_blur: f(y) = 1/2 ||B y - x_obs||^2 with the Gaussian blur B.
struct DataTerm {
  DataTermKind kind = DataTermKind::quadratic_identity;
  Vector observation;
  int dim = 0;             // size of y
  double lipschitz = 1.0;  // of grad f

  // blur only
  BlurKernel kernel;
  int height = 0, width = 0;
  BlurBoundary boundary = BlurBoundary::periodic;
  CgOptions cg;

  // custom only
  std::function<double(std::span<const double>)> value_fn;
  VectorMap grad_fn;
  std::function<Vector(std::span<const double>, double)> prox_fn;

  double value(std::span<const double> y) const;
  Vector grad(std::span<const double> y) const;
  /// prox_{f/eta}(v) = argmin_z 1/2 ||z - v||^2 + f(z)/eta. Throws SolverError
  /// if the blur CG hits its cap.
  Vector prox(std::span<const double> v, double eta) const;
};

DataTerm quadratic_identity(Vector observation);
/// `observation` has the output size of the boundary mode; L = 1 (normalised kernel).
DataTerm quadratic_blur(const BlurKernel& kernel, Vector observation, int height, int width,
                        BlurBoundary boundary = BlurBoundary::periodic);

// ---------------------------------------------------------------------------
// Denoisers

struct Denoiser {
  std::string name;
  VectorMap apply;

  Vector operator()(std::span<const double> x) const { return apply(x); }
};

/// D = I - gamma Psi. The network must match the signal size.
Denoiser plain_denoiser(const NetworkParams& net);
/// D(x) = s x with a scalar s.
Denoiser linear_denoiser(double s);

/// D(x) = (1 - c) x* + c (x - gamma Psi(x)), c = 1 / (1 - gamma + 2 t gamma),
/// which is t~-averaged with t~ = t gamma / (1 - gamma + 2 t gamma) whenever Psi is
/// t-averaged.
struct OracleDenoiser {
  Vector x_star;
  double t = 0.5;
  double gamma = 1.0;
  double scale = 1.0;  // c
  double anchor = 0.0; // 1 - c, weight of x*
  VectorMap psi;

  double averaged_constant() const { return t * gamma / (1.0 - gamma + 2.0 * t * gamma); }
  Vector operator()(std::span<const double> x) const;
  Denoiser as_denoiser() const;
};

/// Throws ValidationError unless t in [1/2, 1] and 0 < gamma < 2.
OracleDenoiser oracle_denoiser(Vector x_star, VectorMap psi, double t, double gamma);
OracleDenoiser oracle_denoiser(Vector x_star, const NetworkParams& net, double t);

enum class OracleSource { file, denoiser_pass, smoothed };
std::string to_string(OracleSource s);
OracleSource oracle_source_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Solvers

struct PnPConfig {
  double eta = 1.0;
  int max_iters = 500;
  double stop_tol = 1e-6; // on ||x^{r+1} - x^r||; 0 runs all iterations
  bool unsafe = false;    // skip the 0 < eta < 2/L check of FBS
  // divergence detector: stop when the residual grew by `growth` over `window` iterations
  bool detect_divergence = true;
  double divergence_growth = 10.0;
  int divergence_window = 50;
  bool record_t = false; // keep every ADMM t iterate

  void validate() const;
};

nlohmann::json pnp_config_to_json(const PnPConfig& c);
PnPConfig pnp_config_from_json(const nlohmann::json& j);

struct Trace {
  std::vector<double> residual;   // ||x^{r+1} - x^r||
  std::vector<double> t_residual; // ADMM: ||t^r - t^{r-1}|| (NaN at r = 0); empty for FBS
  std::vector<double> objective;  // f(x^{r+1})
  std::vector<Vector> t_values;   // ADMM with record_t

  int size() const { return static_cast<int>(residual.size()); }
};

void write_trace_csv(const std::filesystem::path& path, const Trace& trace);

struct PnPResult {
  Vector x;
  Vector y, p; // ADMM state after the last iteration
  Trace trace;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
};

/// y = x - eta grad f(x), x = D(y). Throws ValidationError for eta outside (0, 2/L)
/// unless cfg.unsafe.
PnPResult fbs_pnp(const DataTerm& f, const Denoiser& d, const PnPConfig& cfg, const Vector& x0);

/// x = prox_{f/eta}(y - p/eta), y = D(x + p/eta), p += eta (x - y), with p0 = 0 when
/// empty. The diagnostic t^r = p^r/eta + x^{r+1} is the input handed to D. The
/// returned x is the last x-iterate.
PnPResult admm_pnp(const DataTerm& f, const Denoiser& d, const PnPConfig& cfg, const Vector& y0,
                   const Vector& p0 = {});

/// The map t^r -> t^{r+1} driven by one ADMM step:
/// T(t) = t - D(t) + prox_{f/eta}(2 D(t) - t).
Vector admm_t_map(const DataTerm& f, const Denoiser& d, double eta, std::span<const double> t);

// ---------------------------------------------------------------------------
// Averagedness estimation

/// op with derivatives. jvp may be empty (central differences then); vjp is required.
struct OperatorHandle {
  int dim = 0;
  VectorMap apply;
  std::function<Vector(std::span<const double>, std::span<const double>)> jvp;
  std::function<Vector(std::span<const double>, std::span<const double>)> vjp;
};

/// Psi of the network with an exact VJP; JVP left to finite differences.
OperatorHandle network_operator(const NetworkParams& net);
OperatorHandle linear_operator(const DenseMatrix& a);

struct AveragednessOptions {
  double grid_step = 0.05;
  int samples = 1000;
  int power_iters = 50;
  double power_tol = 1e-6;
  double tol_spec = 1e-6;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct AveragednessResult {
  bool averaged = false; // false: no grid t <= 1 passed on the sample
  double t = 1.0;
  std::vector<double> grid;
  std::vector<double> max_norm; // per grid t, over the samples that reached it; NaN if none
  int samples = 0;
};

/// Sample points; default is uniform on [0, 1]^dim.
using Sampler = std::function<Vector(int index)>;
Sampler uniform_cube_sampler(int dim, std::uint64_t seed);

/// Smallest grid t in {1/2, 1/2 + step, ..., 1} with ||J_R(x_i)||_2 <= 1 + tol_spec
/// on every sample, R = op/t - ((1 - t)/t) I. The norm is a power iteration on
/// J^T J. Each sample scans the grid upwards from 1/2; the result is the max over
/// samples, so it does not depend on the worker count.
AveragednessResult estimate_averagedness(const OperatorHandle& op, const AveragednessOptions& opt,
                                         const Sampler& sampler = {});

/// Spectral norm of J_R at x for one grid value (exposed for tests).
double residual_jacobian_norm(const OperatorHandle& op, std::span<const double> x, double t,
                              const AveragednessOptions& opt, std::uint64_t stream);

// ---------------------------------------------------------------------------
// ADMM divergence counterexample

/// Scalar setting with eta = 1: the denoiser is the t-averaged map x -> -a1 x with
/// a1 = 2t - 1, and prox_f = (I + R)/2 with R(x) = -a2 x, i.e. f(y) = k/2 y^2 with
/// k = (1 + a2)/(1 - a2). Then t^{r+1} = c t^r, c = (1 + a1) - (1 - a2)(1 + 2 a1)/2.
struct DivergenceResult {
  double a1 = 0.0;
  double c = 0.0;
  std::vector<double> t_values;
  std::vector<double> ratios;
  double max_ratio_error = 0.0;
  PnPResult run;
};

/// Throws ValidationError unless t in (1/2, 1], a2 in (0, 1), y0 != 0 and c > 1.
DivergenceResult divergence_example(double t, double a2, double y0, int iters);
/// Checks the parameters only; returns c.
double divergence_factor(double t, double a2);

} // namespace cpnn
