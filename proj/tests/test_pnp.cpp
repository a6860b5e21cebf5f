#include "support.hpp"

#include "cpnn/error.hpp"
#include "cpnn/manifold/stiefel.hpp"
#include "cpnn/pnp/pnp.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace cpnn;
using namespace cpnn::test;

namespace {

Vector soft_threshold(std::span<const double> x, double k) {
  Vector y(x.begin(), x.end());
  for (double& v : y) v = v > k ? v - k : (v < -k ? v + k : 0.0);
  return y;
}

DataTerm zero_term(int n) {
  DataTerm f;
  f.kind = DataTermKind::custom;
  f.dim = n;
  f.value_fn = [](std::span<const double>) { return 0.0; };
  f.grad_fn = [n](std::span<const double>) { return Vector(n, 0.0); };
  f.prox_fn = [](std::span<const double> v, double) { return Vector(v.begin(), v.end()); };
  return f;
}

// Orthogonal full-filter network with small random biases.
NetworkParams orthogonal_net(int m, int depth, double gamma, std::uint64_t seed) {
  CounterRng rng(seed);
  const BankGeometry g = BankGeometry::full_signal(m, 4, 1);
  NetworkParams net = make_network(g, depth, {ActivationKind::relu, 1.0}, gamma);
  for (Layer& l : net.layers) {
    l.bank = stiefel_project(random_bank(g, rng));
    for (double& b : l.bias) b = 0.05 * rng.normal();
  }
  return net;
}

DenseMatrix symmetric_with_spectrum(const Vector& eig, std::uint64_t seed) {
  const int n = static_cast<int>(eig.size());
  CounterRng rng(seed);
  DenseMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  const Eigen::HouseholderQR<DenseMatrix> qr(a);
  const DenseMatrix q = qr.householderQ();
  return q * Eigen::Map<const Eigen::VectorXd>(eig.data(), n).asDiagonal() * q.transpose();
}

// Smallest grid value >= t on {0.5, 0.55, ..., 1}.
double grid_ceil(double t) {
  for (int k = 0; k <= 10; ++k)
    if (0.5 + 0.05 * k >= t - 1e-12) return 0.5 + 0.05 * k;
  return INFINITY;
}

} // namespace

TEST_CASE("data terms") {
  CounterRng rng(1);
  SUBCASE("identity prox is the weighted average and satisfies the optimality condition") {
    const Vector obs = random_vector(20, rng), v = random_vector(20, rng);
    const DataTerm f = quadratic_identity(obs);
    for (double eta : {0.1, 1.0, 7.0}) {
      const Vector z = f.prox(v, eta);
      const Vector g = f.grad(z);
      for (int i = 0; i < 20; ++i) CHECK(std::abs(z[i] - v[i] + g[i] / eta) <= 1e-12);
    }
    CHECK(max_abs_diff(f.prox(obs, 1e6), obs) <= 1e-15);
  }
  for (BlurBoundary bd : {BlurBoundary::periodic, BlurBoundary::valid}) {
    CAPTURE(static_cast<int>(bd));
    const int h = 14, w = 12;
    const int out = bd == BlurBoundary::periodic ? h * w : (h - 8) * (w - 8);
    const DataTerm f = quadratic_blur(gauss_kernel(1.5), random_vector(out, rng), h, w, bd);
    SUBCASE("blur gradient matches finite differences") {
      const Vector y = random_vector(h * w, rng);
      const Vector g = f.grad(y);
      for (int i = 0; i < h * w; i += 7) {
        Vector yp = y, ym = y;
        yp[i] += 1e-5;
        ym[i] -= 1e-5;
        CHECK(std::abs((f.value(yp) - f.value(ym)) / 2e-5 - g[i]) <= 1e-6);
      }
    }
    SUBCASE("blur prox satisfies the optimality condition") {
      const Vector v = random_vector(h * w, rng);
      for (double eta : {0.52, 2.0}) {
        const Vector z = f.prox(v, eta);
        const Vector g = f.grad(z);
        double worst = 0.0;
        for (int i = 0; i < h * w; ++i) worst = std::max(worst, std::abs(z[i] - v[i] + g[i] / eta));
        CHECK(worst <= 1e-8);
      }
    }
    SUBCASE("CG cap raises SolverError") {
      DataTerm capped = f;
      capped.cg.max_iters = 1;
      CHECK_THROWS_AS(capped.prox(random_vector(h * w, rng), 1e-3), SolverError);
    }
  }
  SUBCASE("size errors") {
    const DataTerm f = quadratic_identity(Vector(5, 0.0));
    CHECK_THROWS_AS(f.grad(Vector(4, 0.0)), DimensionError);
    CHECK_THROWS_AS(quadratic_blur(gauss_kernel(1.0), Vector(10, 0.0), 4, 4), DimensionError);
    CHECK_THROWS_AS(f.prox(Vector(5, 0.0), 0.0), ValidationError);
  }
}

TEST_CASE("fbs_pnp") {
  CounterRng rng(2);
  SUBCASE("identity denoiser with eta 1 lands on the observation in one step") {
    const Vector obs = random_vector(16, rng);
    const PnPResult r = fbs_pnp(quadratic_identity(obs), linear_denoiser(1.0), PnPConfig{}, random_vector(16, rng));
    CHECK(r.converged);
    CHECK(r.iterations == 2);
    CHECK(max_abs_diff(r.x, obs) <= 1e-15);
  }
  SUBCASE("half identity with f = 0 halves the iterate every step") {
    const Vector x0 = random_vector(8, rng);
    PnPConfig cfg;
    cfg.max_iters = 30;
    cfg.stop_tol = 0.0;
    const PnPResult r = fbs_pnp(zero_term(8), linear_denoiser(0.5), cfg, x0);
    REQUIRE(r.trace.size() == 30);
    for (int k = 0; k < 30; ++k) CHECK(r.trace.residual[k] == doctest::Approx(norm(x0) * std::ldexp(1.0, -k - 1)).epsilon(1e-12));
    for (int i = 0; i < 8; ++i) CHECK(r.x[i] == doctest::Approx(x0[i] * std::ldexp(1.0, -30)).epsilon(1e-12));
  }
  SUBCASE("step size outside (0, 2/L) is rejected unless unsafe") {
    const DataTerm f = quadratic_identity(random_vector(4, rng));
    PnPConfig cfg;
    cfg.eta = 2.0;
    CHECK_THROWS_AS(fbs_pnp(f, linear_denoiser(1.0), cfg, Vector(4, 0.0)), ValidationError);
    cfg.eta = -1.0;
    CHECK_THROWS_AS(fbs_pnp(f, linear_denoiser(1.0), cfg, Vector(4, 0.0)), ValidationError);
    cfg.eta = 2.5;
    cfg.unsafe = true;
    cfg.max_iters = 5;
    CHECK_NOTHROW(fbs_pnp(f, linear_denoiser(1.0), cfg, Vector(4, 0.0)));
  }
  SUBCASE("divergence detector flags geometric growth") {
    PnPConfig cfg;
    cfg.max_iters = 1000;
    const PnPResult r = fbs_pnp(zero_term(3), linear_denoiser(1.1), cfg, Vector{1.0, 2.0, 3.0});
    CHECK(r.diverged);
    CHECK_FALSE(r.converged);
    // 1.1^k passes 10x after 25 steps, the detector looks back 50
    CHECK(r.iterations == 51);
  }
  SUBCASE("firmly non-expansive denoiser: residuals decrease and the limit is the fixed point") {
    const Vector obs = random_vector(32, rng);
    PnPConfig cfg;
    cfg.eta = 0.93;
    cfg.stop_tol = 1e-12;
    cfg.max_iters = 2000;
    const double k = 0.3;
    const Denoiser d{"soft", [k](std::span<const double> x) { return soft_threshold(x, k); }};
    const PnPResult r = fbs_pnp(quadratic_identity(obs), d, cfg, Vector(32, 0.0));
    REQUIRE(r.converged);
    for (int i = 1; i < r.trace.size(); ++i) CHECK(r.trace.residual[i] <= r.trace.residual[i - 1] * (1 + 1e-12) + 1e-300);
    // fixed point of x = soft(x - eta (x - obs)) is soft(obs, k/eta)
    CHECK(max_abs_diff(r.x, soft_threshold(obs, k / cfg.eta)) <= 1e-10);
  }
}

TEST_CASE("admm_pnp") {
  CounterRng rng(3);
  constexpr double lam = 0.4;
  SUBCASE("soft threshold denoiser solves the l1-regularized least squares toy") {
    const Vector b = random_vector(25, rng);
    for (double eta : {0.5, 1.0, 3.0}) {
      PnPConfig cfg;
      cfg.eta = eta;
      cfg.stop_tol = 1e-14;
      cfg.max_iters = 5000;
      const Denoiser d{"soft", [lam, eta](std::span<const double> x) { return soft_threshold(x, lam / eta); }};
      const PnPResult r = admm_pnp(quadratic_identity(b), d, cfg, Vector(25, 0.0));
      CHECK(r.converged);
      // argmin 1/2 (x - b)^2 + lam |x|
      CHECK(max_abs_diff(r.x, soft_threshold(b, lam)) <= 1e-8);
      CHECK(max_abs_diff(r.y, soft_threshold(b, lam)) <= 1e-8);
    }
  }
  SUBCASE("a consistent start is a fixed point") {
    const Vector b = random_vector(10, rng);
    const double eta = 1.3;
    const Vector xs = soft_threshold(b, lam);
    Vector p(10);
    for (int i = 0; i < 10; ++i) p[i] = b[i] - xs[i];
    PnPConfig cfg;
    cfg.eta = eta;
    cfg.stop_tol = 0.0;
    cfg.max_iters = 20;
    const Denoiser d{"soft", [lam, eta](std::span<const double> x) { return soft_threshold(x, lam / eta); }};
    const PnPResult r = admm_pnp(quadratic_identity(b), d, cfg, xs, p);
    for (double res : r.trace.residual) CHECK(res <= 1e-12);
    CHECK(max_abs_diff(r.x, xs) <= 1e-12);
    CHECK(max_abs_diff(r.p, p) <= 1e-12);
  }
  SUBCASE("half identity converges geometrically") {
    PnPConfig cfg;
    cfg.stop_tol = 1e-10;
    cfg.max_iters = 200;
    const PnPResult r = admm_pnp(quadratic_identity(random_vector(12, rng)), linear_denoiser(0.5), cfg,
                                 random_vector(12, rng));
    CHECK(r.converged);
    CHECK(r.trace.residual.back() <= 1e-10);
  }
  SUBCASE("t iterates follow the t-map and their steps shrink") {
    const int h = 12, w = 12;
    const DataTerm f = quadratic_blur(gauss_kernel(1.25), random_vector(h * w, rng), h, w);
    const double eta = 0.52;
    const Denoiser d{"soft", [](std::span<const double> x) { return soft_threshold(x, 0.05); }};
    PnPConfig cfg;
    cfg.eta = eta;
    cfg.stop_tol = 0.0;
    cfg.max_iters = 60;
    cfg.record_t = true;
    const PnPResult r = admm_pnp(f, d, cfg, random_vector(h * w, rng));
    REQUIRE(r.trace.t_values.size() == 60);
    CHECK(std::isnan(r.trace.t_residual[0]));
    for (int k = 1; k < 60; ++k) {
      CHECK(max_abs_diff(admm_t_map(f, d, eta, r.trace.t_values[k - 1]), r.trace.t_values[k]) <= 1e-9);
      if (k >= 2) CHECK(r.trace.t_residual[k] <= r.trace.t_residual[k - 1] * (1 + 1e-9));
    }
  }
}

TEST_CASE("property: the ADMM t-map is firmly non-expansive for a firmly non-expansive denoiser") {
  CounterRng rng(4);
  const int h = 10, w = 10;
  const DataTerm f = quadratic_blur(gauss_kernel(1.5), random_vector(h * w, rng), h, w);
  const std::vector<Denoiser> ds = {linear_denoiser(0.5),
                                    {"soft", [](std::span<const double> x) { return soft_threshold(x, 0.2); }}};
  for (const Denoiser& d : ds) {
    for (double eta : {0.3, 1.0, 4.0}) {
      for (int trial = 0; trial < 20; ++trial) {
        const Vector t1 = random_vector(h * w, rng), t2 = random_vector(h * w, rng);
        const Vector a = admm_t_map(f, d, eta, t1), b = admm_t_map(f, d, eta, t2);
        Vector da(a.size()), dt(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
          da[i] = a[i] - b[i];
          dt[i] = t1[i] - t2[i];
        }
        CHECK(dot(da, da) <= dot(da, dt) + 1e-9);
      }
    }
  }
}

TEST_CASE("oracle denoiser") {
  CounterRng rng(5);
  const NetworkParams net = orthogonal_net(16, 2, 1.99, 11);
  const Vector xs = random_vector(16, rng), x = random_vector(16, rng);
  SUBCASE("t = 1/2 reduces to the plain denoiser") {
    const OracleDenoiser d = oracle_denoiser(xs, net, 0.5);
    CHECK(d.scale == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(max_abs_diff(d(x), denoise(net, x)) <= 1e-14);
    CHECK(max_abs_diff(d.as_denoiser()(x), plain_denoiser(net)(x)) <= 1e-14);
  }
  SUBCASE("t = 0.6 with gamma 1.99") {
    const OracleDenoiser d = oracle_denoiser(xs, net, 0.6);
    CHECK(d.scale == doctest::Approx(1.0 / 1.398).epsilon(1e-14));
    CHECK(d.anchor == doctest::Approx(1.0 - 1.0 / 1.398).epsilon(1e-14));
    CHECK(d.anchor + d.scale == doctest::Approx(1.0).epsilon(1e-15));
    const Vector psi = lift_denoise(net, x), out = d(x);
    for (int i = 0; i < 16; ++i) CHECK(out[i] == doctest::Approx(d.anchor * xs[i] + d.scale * (x[i] - 1.99 * psi[i])));
  }
  SUBCASE("hypotheses are enforced") {
    CHECK_THROWS_AS(oracle_denoiser(xs, net, 0.45), ValidationError);
    CHECK_THROWS_AS(oracle_denoiser(xs, net, 1.01), ValidationError);
    CHECK_THROWS_AS(oracle_denoiser(xs, [](std::span<const double> v) { return Vector(v.begin(), v.end()); }, 0.6, 2.0),
                    ValidationError);
  }
  SUBCASE("linear Psi = -a1 I gives a denoiser no worse than its averagedness constant") {
    for (double t : {0.6, 0.75, 0.9}) {
      for (double gamma : {1.0, 1.5, 1.99}) {
        const double a1 = 2 * t - 1;
        const OracleDenoiser d =
            oracle_denoiser(Vector(6, 0.3), [a1](std::span<const double> v) {
              Vector y(v.begin(), v.end());
              for (double& e : y) e *= -a1;
              return y;
            }, t, gamma);
        // Jacobian of d is the scalar c (1 + gamma a1)
        const double s = d.scale * (1 + gamma * a1);
        AveragednessOptions opt;
        opt.samples = 3;
        const auto est = estimate_averagedness(linear_operator(s * DenseMatrix::Identity(6, 6)), opt);
        REQUIRE(est.averaged);
        CHECK(est.t <= grid_ceil(std::max(0.5, d.averaged_constant())) + 1e-12);
      }
    }
  }
}

TEST_CASE("estimate_averagedness") {
  AveragednessOptions opt;
  opt.samples = 4;
  SUBCASE("identity") {
    const auto r = estimate_averagedness(linear_operator(DenseMatrix::Identity(5, 5)), opt);
    CHECK(r.averaged);
    CHECK(r.t == doctest::Approx(0.5));
  }
  SUBCASE("-0.2 x") {
    const auto r = estimate_averagedness(linear_operator(-0.2 * DenseMatrix::Identity(5, 5)), opt);
    CHECK(r.t == doctest::Approx(0.6));
  }
  SUBCASE("symmetric operators with spectrum [-a, 1]") {
    for (double a : {0.1, 0.3, 0.7}) {
      Vector eig = {-a, 1.0, 0.2, -0.5 * a, 0.9, 0.0, 0.4, -0.1 * a};
      const auto r = estimate_averagedness(linear_operator(symmetric_with_spectrum(eig, 17)), opt);
      CAPTURE(a);
      CHECK(r.t == doctest::Approx(grid_ceil((1 + a) / 2)));
    }
  }
  SUBCASE("finite-difference JVP agrees with the exact one on a linear map") {
    OperatorHandle op = linear_operator(symmetric_with_spectrum({-0.3, 1.0, 0.5, 0.1}, 3));
    const Vector x = {0.2, 0.4, 0.6, 0.8};
    const double exact = residual_jacobian_norm(op, x, 0.6, opt, 0);
    op.jvp = nullptr;
    CHECK(residual_jacobian_norm(op, x, 0.6, opt, 0) == doctest::Approx(exact).epsilon(1e-6));
  }
  SUBCASE("expansive map is reported, not thrown") {
    const auto r = estimate_averagedness(linear_operator(-1.5 * DenseMatrix::Identity(3, 3)), opt);
    CHECK_FALSE(r.averaged);
  }
  SUBCASE("missing VJP is a validation error") {
    OperatorHandle op = linear_operator(DenseMatrix::Identity(3, 3));
    op.vjp = nullptr;
    CHECK_THROWS_AS(estimate_averagedness(op, opt), ValidationError);
  }
}

TEST_CASE("property: averagedness passes are upward closed on the grid") {
  const NetworkParams net = orthogonal_net(16, 3, 1.0, 21);
  const OperatorHandle op = network_operator(net);
  AveragednessOptions opt;
  const Sampler s = uniform_cube_sampler(16, 9);
  for (int i = 0; i < 10; ++i) {
    const Vector x = s(i);
    bool passed = false;
    for (int k = 0; k <= 10; ++k) {
      const bool ok = residual_jacobian_norm(op, x, 0.5 + 0.05 * k, opt, i) <= 1 + opt.tol_spec;
      if (passed) CHECK(ok);
      passed = passed || ok;
    }
    CHECK(passed);
  }
}

TEST_CASE("estimate_averagedness on a network is reproducible and worker independent") {
  const NetworkParams net = orthogonal_net(16, 3, 1.0, 22);
  AveragednessOptions opt;
  opt.samples = 24;
  opt.seed = 4;
  const auto a = estimate_averagedness(network_operator(net), opt);
  opt.workers = 3;
  const auto b = estimate_averagedness(network_operator(net), opt);
  CHECK(a.t == b.t);
  CHECK(a.averaged == b.averaged);
  REQUIRE(a.max_norm.size() == b.max_norm.size());
  for (std::size_t k = 0; k < a.max_norm.size(); ++k)
    if (!std::isnan(a.max_norm[k])) CHECK(a.max_norm[k] == b.max_norm[k]);
  CHECK(a.t >= 0.5);
  CHECK(a.t <= 1.0);
}

TEST_CASE("FBS with an oracle cPNN denoiser converges on a noisy signal") {
  const NetworkParams net = orthogonal_net(32, 3, 1.99, 31);
  AveragednessOptions opt;
  opt.samples = 50;
  const auto est = estimate_averagedness(network_operator(net), opt);
  REQUIRE(est.averaged);
  const Dataset d = make_pwc_dataset(1, 32, 0.1, 5);
  const Vector xs = gaussian_smooth(d.noisy[0], 1, 32, 1.5);
  PnPConfig cfg;
  cfg.eta = 0.93;
  cfg.stop_tol = 1e-6;
  cfg.max_iters = 500;
  const PnPResult r = fbs_pnp(quadratic_identity(d.noisy[0]), oracle_denoiser(xs, net, est.t).as_denoiser(), cfg,
                              d.noisy[0]);
  CHECK(r.converged);
  CHECK_FALSE(r.diverged);
}

TEST_CASE("divergence example") {
  SUBCASE("t = 0.75, a2 = 0.9 grows by 1.4 per step") {
    const double y0 = 0.7;
    const DivergenceResult r = divergence_example(0.75, 0.9, y0, 30);
    CHECK(r.a1 == doctest::Approx(0.5));
    CHECK(r.c == doctest::Approx(1.4).epsilon(1e-14));
    REQUIRE(r.ratios.size() == 30);
    CHECK(r.max_ratio_error <= 1e-9);
    // t0 = x1 + p0 = prox_f(y0) = (1 - a2) y0 / 2
    CHECK(r.t_values[0] == doctest::Approx(0.5 * (1 - 0.9) * y0).epsilon(1e-14));
    CHECK(std::abs(r.t_values.back()) > 1e4 * std::abs(r.t_values.front()));
  }
  SUBCASE("c = 1 is rejected as non-strict") {
    try {
      divergence_example(0.75, 0.5, 1.0, 10);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("a1 > (1 - a2)(1 + 2 a1)/2") != std::string::npos);
    }
  }
  SUBCASE("other preconditions") {
    CHECK_THROWS_AS(divergence_example(0.5, 0.9, 1.0, 10), ValidationError);
    CHECK_THROWS_AS(divergence_example(0.75, 1.0, 1.0, 10), ValidationError);
    CHECK_THROWS_AS(divergence_example(0.75, 0.9, 0.0, 10), ValidationError);
  }
  SUBCASE("the same data term with the firmly non-expansive half identity converges") {
    const double a2 = 0.9, k = (1 + a2) / (1 - a2);
    DataTerm f;
    f.kind = DataTermKind::custom;
    f.dim = 1;
    f.prox_fn = [k](std::span<const double> v, double eta) { return Vector{v[0] / (1 + k / eta)}; };
    f.value_fn = [k](std::span<const double> y) { return 0.5 * k * y[0] * y[0]; };
    PnPConfig cfg;
    cfg.stop_tol = 1e-10;
    cfg.max_iters = 200;
    const PnPResult r = admm_pnp(f, linear_denoiser(0.5), cfg, Vector{0.7});
    CHECK(r.converged);
  }
}

TEST_CASE("trace csv and solver config json") {
  Trace t;
  t.residual = {1.0, 0.5};
  t.objective = {2.0, 1.0};
  t.t_residual = {NAN, 0.25};
  const auto path = std::filesystem::temp_directory_path() / "cpnn_trace.csv";
  write_trace_csv(path, t);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,residual,t_residual,objective");
  std::getline(in, line);
  CHECK(line == "1,1,nan,2");
  std::getline(in, line);
  CHECK(line == "2,0.5,0.25,1");
  std::filesystem::remove(path);

  PnPConfig c;
  c.eta = 0.52;
  c.max_iters = 77;
  const PnPConfig back = pnp_config_from_json(pnp_config_to_json(c));
  CHECK(back.eta == 0.52);
  CHECK(back.max_iters == 77);
  CHECK_THROWS_AS(pnp_config_from_json({{"etta", 1.0}}), ParseError);
  CHECK_THROWS_AS(pnp_config_from_json({{"eta", -1.0}}), ValidationError);
}
