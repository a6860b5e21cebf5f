#include "support.hpp"

#include "cpnn/error.hpp"
#include "cpnn/manifold/stiefel.hpp"
#include "cpnn/network/network.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace cpnn;
using namespace cpnn::test;

namespace {

const ActivationKind kAllKinds[] = {ActivationKind::linear,        ActivationKind::relu,           ActivationKind::prelu,
                                    ActivationKind::salu,          ActivationKind::bent_identity,  ActivationKind::soft_threshold,
                                    ActivationKind::elliot,        ActivationKind::isru,           ActivationKind::isrlu};

double admissible_alpha(ActivationKind k, CounterRng& rng) {
  return k == ActivationKind::prelu ? 0.05 + 0.9 * rng.uniform() : 0.2 + 1.5 * rng.uniform();
}

NetworkParams random_net(const BankGeometry& g, int depth, ActivationKind kind, CounterRng& rng, double scale = 0.5) {
  NetworkParams net = make_network(g, depth, {kind, 1.0});
  for (Layer& l : net.layers) {
    l.bank = random_bank(g, rng, scale);
    for (double& b : l.bias) b = 0.3 * rng.normal();
    l.act.alpha = admissible_alpha(kind, rng);
  }
  return net;
}

NetworkParams certified_net(int depth, ActivationKind kind, CounterRng& rng) {
  NetworkParams net = make_network(BankGeometry::full_signal(12, 3, 2), depth, {kind, 1.0});
  for (Layer& l : net.layers) {
    l.bank = stiefel_project(random_bank(l.bank.geometry(), rng));
    for (double& b : l.bias) b = 0.3 * rng.normal();
    l.act.alpha = admissible_alpha(kind, rng);
  }
  return net;
}

double fd_rel(double g, double fd) { return std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-3}); }

// Largest relative deviation between backward and central differences of <w, Phi(x)>.
double gradient_check(NetworkParams net, const Vector& x, const Vector& w, bool lifted) {
  auto loss = [&](const NetworkParams& n) {
    const Vector y = lifted ? lift_denoise(n, x) : forward(n, x);
    return dot(y, w);
  };
  Tape tape;
  Vector gx;
  GradientBundle g;
  if (lifted) {
    lift_denoise_batch(net, x, 1, &tape);
    g = lift_backward_batch(net, tape, w, &gx);
  } else {
    forward(net, x, &tape);
    g = backward(net, tape, w, &gx);
  }
  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + h;
    const double up = loss(net);
    p = keep - h;
    const double down = loss(net);
    p = keep;
    worst = std::max(worst, fd_rel(analytic, (up - down) / (2 * h)));
  };
  for (int k = 0; k < net.depth(); ++k) {
    for (std::size_t i = 0; i < net.layers[k].bank.data().size(); ++i) probe(net.layers[k].bank.data()[i], g.taps[k][i]);
    for (std::size_t i = 0; i < net.layers[k].bias.size(); ++i) probe(net.layers[k].bias[i], g.bias[k][i]);
    if (has_alpha(net.layers[k].act.kind)) probe(net.layers[k].act.alpha, g.alpha[k]);
  }
  Vector xx = x;
  for (std::size_t i = 0; i < xx.size(); ++i) {
    const double keep = xx[i];
    auto eval = [&](double v) {
      xx[i] = v;
      const Vector y = lifted ? lift_denoise(net, xx) : forward(net, xx);
      return dot(y, w);
    };
    const double fd = (eval(keep + h) - eval(keep - h)) / (2 * h);
    xx[i] = keep;
    worst = std::max(worst, fd_rel(gx[i], fd));
  }
  return worst;
}

} // namespace

TEST_CASE("activation values") {
  const Activation relu{ActivationKind::relu, 1.0};
  CHECK(activate(relu, -1.0) == 0.0);
  CHECK(activate(relu, 2.0) == 2.0);
  const Activation soft{ActivationKind::soft_threshold, 0.5};
  CHECK(activate(soft, 1.0) == 0.5);
  CHECK(activate(soft, 0.3) == 0.0);
  CHECK(std::abs(activate({ActivationKind::isru, 1.0}, 1.0) - 1.0 / std::sqrt(2.0)) <= 1e-15);
  CHECK(activate({ActivationKind::prelu, 0.25}, -2.0) == -0.5);
  CHECK(activate({ActivationKind::salu, 0.5}, 3.0) == 0.5);
  CHECK(activate({ActivationKind::elliot, 2.0}, 1.0) == 1.0 / 3.0);
  CHECK(activate({ActivationKind::isrlu, 1.0}, 3.0) == 3.0);
  CHECK(activate({ActivationKind::bent_identity, 1.0}, 0.0) == 0.0);
  // kink conventions
  CHECK(activate_deriv(relu, 0.0) == 0.0);
  CHECK(activate_deriv(soft, 0.5) == 0.0);
  CHECK(activate_deriv({ActivationKind::salu, 0.5}, -0.5) == 0.0);
  CHECK(activate_deriv({ActivationKind::prelu, 0.3}, 0.0) == 0.3);
}

TEST_CASE("activation parameters") {
  CHECK_THROWS_AS(Activation({ActivationKind::prelu, 1.5}).validate(), ValidationError);
  CHECK_THROWS_AS(Activation({ActivationKind::prelu, -0.1}).validate(), ValidationError);
  CHECK_NOTHROW(Activation({ActivationKind::prelu, 0.0}).validate());
  CHECK_THROWS_AS(Activation({ActivationKind::elliot, 0.0}).validate(), ValidationError);
  CHECK_NOTHROW(Activation({ActivationKind::relu, -3.0}).validate());
  for (ActivationKind k : kAllKinds) CHECK(activation_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(activation_from_string("tanh"), ValidationError);
}

TEST_CASE("property: every activation is stable") {
  CounterRng rng(41);
  for (ActivationKind k : kAllKinds)
    for (int rep = 0; rep < 3; ++rep) {
      const Activation act{k, admissible_alpha(k, rng)};
      CHECK(activate(act, 0.0) == 0.0);
      double lo = 1.0, hi = 0.0;
      for (int i = 0; i < 10000; ++i) {
        const double x = 4 * rng.normal(), y = 4 * rng.normal();
        if (x == y) continue;
        const double q = (activate(act, x) - activate(act, y)) / (x - y);
        lo = std::min(lo, q);
        hi = std::max(hi, q);
      }
      CHECK(lo >= -1e-12);
      CHECK(hi <= 1.0 + 1e-12);
    }
}

TEST_CASE("activation derivatives match finite differences") {
  CounterRng rng(42);
  for (ActivationKind k : kAllKinds) {
    Activation act{k, admissible_alpha(k, rng)};
    for (int i = 0; i < 200; ++i) {
      const double x = 3 * rng.normal(), h = 1e-6;
      if (std::abs(std::abs(x) - act.alpha) < 1e-4 || std::abs(x) < 1e-4) continue;
      const double fd = (activate(act, x + h) - activate(act, x - h)) / (2 * h);
      CHECK(std::abs(fd - activate_deriv(act, x)) <= 1e-7);
      Activation up = act, down = act;
      up.alpha += h;
      down.alpha -= h;
      const double fa = (activate(up, x) - activate(down, x)) / (2 * h);
      CHECK(std::abs(fa - activate_alpha_deriv(act, x)) <= 1e-7);
    }
  }
}

TEST_CASE("building_block") {
  CounterRng rng(43);
  SUBCASE("identity filter with relu") {
    Layer l{FilterBank(BankGeometry::signal(6, 1, 1, 1)), {0.0}, {ActivationKind::relu, 1.0}};
    l.bank.tap_ref(0, 0, 0, 0) = 1.0;
    const auto x = random_vector(6, rng);
    const auto y = building_block(l, x);
    for (int i = 0; i < 6; ++i) CHECK(y[i] == std::max(x[i], 0.0));
  }
  SUBCASE("linear activation with orthogonal square T") {
    Layer l{stiefel_project(random_bank(BankGeometry::full_signal(7, 2, 2), rng)), {0.0, 0.0}, {ActivationKind::linear, 1.0}};
    const auto x = random_vector(14, rng);
    CHECK(max_abs_diff(building_block(l, x), x) <= 1e-12);
  }
  SUBCASE("certified layer is firmly non-expansive") {
    for (ActivationKind k : kAllKinds) {
      Layer l{stiefel_project(random_bank(BankGeometry::full_signal(10, 2, 3), rng)),
              {0.2, -0.4},
              {k, admissible_alpha(k, rng)}};
      for (int i = 0; i < 100; ++i) {
        const auto x = random_vector(30, rng), y = random_vector(30, rng);
        const auto bx = building_block(l, x), by = building_block(l, y);
        Vector d(30), e(30);
        for (int t = 0; t < 30; ++t) {
          d[t] = bx[t] - by[t];
          e[t] = x[t] - y[t];
        }
        CHECK(dot(d, d) <= dot(d, e) + 1e-12);
      }
    }
  }
}

TEST_CASE("forward") {
  CounterRng rng(44);
  SUBCASE("identity relu layers fix non-negative inputs") {
    NetworkParams net = make_network(BankGeometry::signal(8, 1, 1, 1), 3, {ActivationKind::relu, 1.0});
    for (Layer& l : net.layers) l.bank.tap_ref(0, 0, 0, 0) = 1.0;
    Vector x = random_vector(8, rng);
    for (double& v : x) v = std::abs(v);
    CHECK(max_abs_diff(forward(net, x), x) == 0.0);
  }
  SUBCASE("one layer is the building block") {
    const NetworkParams net = random_net(BankGeometry::signal(8, 2, 2, 1), 1, ActivationKind::elliot, rng);
    const auto x = random_vector(16, rng);
    CHECK(max_abs_diff(forward(net, x), building_block(net.layers[0], x)) == 0.0);
  }
  SUBCASE("batched equals per-sample") {
    const NetworkParams net = random_net(BankGeometry::signal(9, 2, 3, 2), 2, ActivationKind::isru, rng);
    std::vector<Vector> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(random_vector(27, rng));
    // three channels: pack channel by channel
    Vector packed(27 * 5);
    for (int s = 0; s < 5; ++s)
      for (int c = 0; c < 27; ++c) packed[c * 5 + s] = xs[s][c];
    const auto y = forward_batch(net, packed, 5);
    for (int s = 0; s < 5; ++s) {
      const auto ys = forward(net, xs[s]);
      for (int c = 0; c < 27; ++c) CHECK(std::abs(y[c * 5 + s] - ys[c]) <= 1e-13);
    }
  }
  SUBCASE("property: certified networks are non-expansive") {
    for (ActivationKind k : {ActivationKind::relu, ActivationKind::soft_threshold, ActivationKind::bent_identity}) {
      const NetworkParams net = certified_net(3, k, rng);
      CHECK(net.certified());
      double worst = 0.0;
      for (int i = 0; i < 1000; ++i) {
        const auto x = random_vector(24, rng), y = random_vector(24, rng);
        const auto fx = forward(net, x), fy = forward(net, y);
        Vector d(24), e(24);
        for (int t = 0; t < 24; ++t) {
          d[t] = fx[t] - fy[t];
          e[t] = x[t] - y[t];
        }
        worst = std::max(worst, norm(d) / norm(e));
      }
      CHECK(worst <= 1 + 1e-6);
    }
  }
  CHECK_THROWS_AS(forward(random_net(BankGeometry::signal(8, 2, 2, 1), 1, ActivationKind::relu, rng), random_vector(8, rng)),
                  DimensionError);
}

TEST_CASE("lift_denoise and denoise") {
  CounterRng rng(45);
  SUBCASE("identity network") {
    NetworkParams net = make_network(BankGeometry::signal(8, 3, 3, 1), 2, {ActivationKind::linear, 1.0});
    for (Layer& l : net.layers)
      for (int j = 0; j < 3; ++j) l.bank.tap_ref(j, j, 0, 0) = 1.0;
    const auto x = random_vector(8, rng);
    CHECK(max_abs_diff(lift_denoise(net, x), x) <= 1e-15);
  }
  SUBCASE("m2 = 1 gives Phi") {
    const NetworkParams net = random_net(BankGeometry::signal(8, 2, 1, 1), 2, ActivationKind::relu, rng);
    const auto x = random_vector(8, rng);
    CHECK(max_abs_diff(lift_denoise(net, x), forward(net, x)) == 0.0);
  }
  SUBCASE("dense A oracle") {
    const NetworkParams net = random_net(BankGeometry::signal(8, 2, 3, 1), 2, ActivationKind::salu, rng);
    Eigen::MatrixXd a(24, 8);
    for (int k = 0; k < 3; ++k) a.block(8 * k, 0, 8, 8) = Eigen::MatrixXd::Identity(8, 8) / std::sqrt(3.0);
    const auto x = random_vector(8, rng);
    const auto phi = forward(net, matvec(a, x));
    CHECK(max_abs_diff(lift_denoise(net, x), matvec(a.transpose(), phi)) <= 1e-12);
  }
  SUBCASE("zero filters give the identity denoiser") {
    NetworkParams net = make_network(BankGeometry::signal(8, 2, 2, 1), 2, {ActivationKind::relu, 1.0}, 1.99);
    net.layers[0].bias = {0.5, -0.3};
    const auto x = random_vector(8, rng);
    CHECK(max_abs_diff(denoise(net, x), x) == 0.0);
  }
  SUBCASE("linear layer with Psi = c I") {
    for (double c : {0.25, 0.5, 1.0}) {
      NetworkParams net = make_network(BankGeometry::signal(8, 1, 1, 1), 1, {ActivationKind::linear, 1.0}, 1.5);
      net.layers[0].bank.tap_ref(0, 0, 0, 0) = std::sqrt(c);
      const auto x = random_vector(8, rng);
      const auto y = denoise(net, x);
      for (int i = 0; i < 8; ++i) CHECK(std::abs(y[i] - (1 - 1.5 * c) * x[i]) <= 1e-14);
    }
  }
  SUBCASE("Lipschitz bound 1 + gamma") {
    NetworkParams net = certified_net(2, ActivationKind::relu, rng);
    net.gamma = 5.0;
    // lift needs single-channel inputs of length m
    for (int i = 0; i < 100; ++i) {
      const auto x = random_vector(12, rng), y = random_vector(12, rng);
      const auto dx = denoise(net, x), dy = denoise(net, y);
      Vector d(12), e(12);
      for (int t = 0; t < 12; ++t) {
        d[t] = dx[t] - dy[t];
        e[t] = x[t] - y[t];
      }
      CHECK(norm(d) <= (1 + net.gamma) * norm(e) + 1e-12);
    }
  }
}

TEST_CASE("backward") {
  CounterRng rng(46);
  SUBCASE("zero upstream gradient") {
    const NetworkParams net = random_net(BankGeometry::signal(8, 2, 2, 1), 2, ActivationKind::relu, rng);
    Tape tape;
    forward(net, random_vector(16, rng), &tape);
    const GradientBundle g = backward(net, tape, Vector(16, 0.0));
    CHECK(g.norm() == 0.0);
  }
  SUBCASE("finite differences, every parameter class") {
    for (ActivationKind k : kAllKinds) {
      const NetworkParams net = random_net(BankGeometry::signal(8, 2, 2, 1), 2, k, rng);
      CHECK(gradient_check(net, random_vector(16, rng), random_vector(16, rng), false) <= 1e-5);
      const NetworkParams lifted = random_net(BankGeometry::signal(16, 2, 2, 1), 3, k, rng);
      CHECK(gradient_check(lifted, random_vector(16, rng), random_vector(16, rng), true) <= 1e-5);
    }
    const NetworkParams full = random_net(BankGeometry::full_signal(8, 2, 1), 2, ActivationKind::elliot, rng);
    CHECK(gradient_check(full, random_vector(8, rng), random_vector(8, rng), false) <= 1e-5);
    const NetworkParams wide = random_net(BankGeometry::signal(10, 1, 3, 2), 2, ActivationKind::isrlu, rng);
    CHECK(gradient_check(wide, random_vector(30, rng), random_vector(30, rng), false) <= 1e-5);
  }
  SUBCASE("linear layer: closed form of ||T^T T x - y||^2") {
    const BankGeometry g = BankGeometry::signal(7, 2, 1, 1);
    NetworkParams net = random_net(g, 1, ActivationKind::linear, rng);
    net.layers[0].bias = {0.0, 0.0};
    const auto x = random_vector(7, rng), y = random_vector(7, rng);
    const Eigen::MatrixXd t = dense_oracle(net.layers[0].bank);
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), 7), yv(y.data(), 7);
    const Eigen::VectorXd r = t.transpose() * t * xv - yv;
    // dL/dT for L = ||T^T T x - y||^2
    const Eigen::MatrixXd gt = 2 * (t * r * xv.transpose() + t * xv * r.transpose());
    Tape tape;
    forward(net, x, &tape);
    Vector up(r.data(), r.data() + 7);
    for (double& v : up) v *= 2;
    const GradientBundle gb = backward(net, tape, up);
    for (int j = 0; j < 2; ++j)
      for (int o = -1; o <= 1; ++o) {
        double expect = 0.0;
        for (int row = 0; row < 7; ++row) expect += gt(j * 7 + row, ((row - o) % 7 + 7) % 7);
        CHECK(std::abs(gb.taps[0][j * 3 + (o + 1)] - expect) <= 1e-12 * (1 + std::abs(expect)));
      }
  }
  SUBCASE("stale tape") {
    NetworkParams net = random_net(BankGeometry::signal(8, 2, 2, 1), 2, ActivationKind::relu, rng);
    Tape tape;
    forward(net, random_vector(16, rng), &tape);
    net.layers[1].bias[0] += 1e-3;
    CHECK_THROWS_AS(backward(net, tape, random_vector(16, rng)), ContractError);
  }
}

TEST_CASE("2-D networks") {
  CounterRng rng(47);
  SUBCASE("identity tap") {
    NetworkParams net = make_network(BankGeometry::image(6, 5, 1, 1, 1), 1, {ActivationKind::linear, 1.0});
    net.layers[0].bank.tap_ref(0, 0, 0, 0) = 1.0;
    const auto x = random_vector(30, rng);
    CHECK(max_abs_diff(forward(net, x), x) == 0.0);
  }
  SUBCASE("gradients on 8x8 images") {
    for (ActivationKind k : {ActivationKind::relu, ActivationKind::isru, ActivationKind::soft_threshold}) {
      const NetworkParams net = random_net(BankGeometry::image(8, 8, 2, 2, 1), 2, k, rng);
      CHECK(gradient_check(net, random_vector(64, rng), random_vector(64, rng), true) <= 1e-5);
    }
  }
  SUBCASE("gram residual uses 2-D lags") {
    const FilterBank b = random_bank(BankGeometry::image(6, 7, 2, 1, 1), rng, 0.4);
    const Eigen::MatrixXd t = dense_oracle(b);
    CHECK(std::abs(gram_residual(b) - (t.transpose() * t - Eigen::MatrixXd::Identity(42, 42)).norm()) <= 1e-10);
  }
}

TEST_CASE("extend") {
  CounterRng rng(48);
  const NetworkParams net = random_net(BankGeometry::signal(16, 2, 2, 2), 2, ActivationKind::relu, rng);
  const NetworkParams same = extend(net, 16);
  CHECK(same.fingerprint() == net.fingerprint());
  const NetworkParams big = extend(net, 40);
  CHECK(big.pixels() == 40);
  for (int k = 0; k < 2; ++k) CHECK(big.layers[k].bank.data() == net.layers[k].bank.data());
  CHECK(big.layers[0].bias == net.layers[0].bias);
  CHECK_THROWS_AS(extend(net, 12), ValidationError);
  SUBCASE("identity stays identity") {
    NetworkParams id = make_network(BankGeometry::signal(8, 1, 1, 1), 2, {ActivationKind::linear, 1.0});
    for (Layer& l : id.layers) l.bank.tap_ref(0, 0, 0, 0) = 1.0;
    const auto x = random_vector(20, rng);
    CHECK(max_abs_diff(forward(extend(id, 20), x), x) == 0.0);
  }
  SUBCASE("certification survives extension") {
    // orthogonal limited bank: single taps at distinct offsets per row channel, mixed by a rotation
    NetworkParams c = make_network(BankGeometry::signal(9, 2, 1, 2), 2, {ActivationKind::relu, 1.0});
    for (Layer& l : c.layers) {
      const double th = rng.uniform() * 6.28;
      l.bank.tap_ref(0, 0, 0, -1) = std::cos(th);
      l.bank.tap_ref(1, 0, 0, -1) = std::sin(th);
    }
    CHECK(c.max_gram_residual() <= 1e-8);
    CHECK(extend(c, 18).max_gram_residual() <= 1e-6);
  }
  SUBCASE("images") {
    const NetworkParams img = random_net(BankGeometry::image(6, 6, 2, 2, 1), 1, ActivationKind::relu, rng);
    const NetworkParams e = extend(img, 10, 12);
    CHECK(e.geometry().height == 10);
    CHECK(e.geometry().width == 12);
    CHECK(e.layers[0].bank.data() == img.layers[0].bank.data());
  }
}

TEST_CASE("checkpoint round trip") {
  CounterRng rng(49);
  for (const BankGeometry& g : {BankGeometry::signal(16, 2, 3, 2), BankGeometry::full_signal(8, 2, 2),
                                BankGeometry::image(6, 7, 1, 2, 1)}) {
    NetworkParams net = random_net(g, 3, ActivationKind::elliot, rng);
    net.gamma = 1.99;
    const NetworkParams back = network_from_json(nlohmann::json::parse(network_to_json(net).dump()));
    CHECK(back.fingerprint() == net.fingerprint());
    CHECK(back.geometry() == g);
  }
  auto j = network_to_json(random_net(BankGeometry::signal(8, 1, 1, 1), 1, ActivationKind::relu, rng));
  j["version"] = 2;
  CHECK_THROWS_AS(network_from_json(j), ParseError);
}
