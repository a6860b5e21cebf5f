#include "cpnn/network/network.hpp"

#include "conv_kernels.hpp"
#include "cpnn/error.hpp"
#include "cpnn/json_io.hpp"

#include <cmath>
#include <cstring>

namespace cpnn {
namespace {

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

std::size_t channel_len(const NetworkParams& net, int batch) {
  return static_cast<std::size_t>(net.pixels()) * batch;
}

void check_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw DimensionError(std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                         std::to_string(got));
}

// A x: m2 scaled copies of a single-channel batch.
Vector lift(const NetworkParams& net, std::span<const double> x) {
  const int m2 = net.m2();
  const double s = 1.0 / std::sqrt(static_cast<double>(m2));
  Vector out(x.size() * m2);
  for (int k = 0; k < m2; ++k)
    for (std::size_t i = 0; i < x.size(); ++i) out[k * x.size() + i] = s * x[i];
  return out;
}

// A^T y
Vector lower(const NetworkParams& net, std::span<const double> y) {
  const int m2 = net.m2();
  const std::size_t n = y.size() / m2;
  const double s = 1.0 / std::sqrt(static_cast<double>(m2));
  Vector out(n, 0.0);
  for (int k = 0; k < m2; ++k)
    for (std::size_t i = 0; i < n; ++i) out[i] += y[k * n + i];
  for (double& v : out) v *= s;
  return out;
}

} // namespace

void NetworkParams::validate() const {
  if (layers.empty()) throw ValidationError("network needs at least one layer");
  if (!std::isfinite(gamma) || gamma < 1.0) throw ValidationError("gamma must be >= 1");
  const BankGeometry& g = geometry();
  g.validate();
  for (const Layer& l : layers) {
    if (!(l.bank.geometry() == g)) throw ValidationError("all layers must share one geometry");
    if (static_cast<int>(l.bias.size()) != g.m1) throw ValidationError("bias length must equal m1");
    if (l.act.kind != layers.front().act.kind) throw ValidationError("all layers must share one activation kind");
    l.act.validate();
    for (double t : l.bank.data())
      if (!std::isfinite(t)) throw ValidationError("non-finite filter tap");
    for (double b : l.bias)
      if (!std::isfinite(b)) throw ValidationError("non-finite bias");
  }
}

double NetworkParams::max_gram_residual() const {
  double r = 0.0;
  for (const Layer& l : layers) r = std::max(r, gram_residual(l.bank));
  return r;
}

std::uint64_t NetworkParams::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  fnv(h, &gamma, sizeof gamma);
  for (const Layer& l : layers) {
    fnv(h, l.bank.data().data(), l.bank.data().size() * sizeof(double));
    fnv(h, l.bias.data(), l.bias.size() * sizeof(double));
    fnv(h, &l.act.alpha, sizeof(double));
    const int kind = static_cast<int>(l.act.kind);
    fnv(h, &kind, sizeof kind);
  }
  return h;
}

NetworkParams make_network(const BankGeometry& geometry, int depth, Activation act, double gamma) {
  if (depth < 1) throw ValidationError("network depth must be >= 1");
  NetworkParams net;
  net.gamma = gamma;
  for (int k = 0; k < depth; ++k) net.layers.push_back({FilterBank(geometry), Vector(geometry.m1, 0.0), act});
  net.validate();
  return net;
}

GradientBundle GradientBundle::zeros_like(const NetworkParams& net) {
  GradientBundle g;
  for (const Layer& l : net.layers) {
    g.taps.emplace_back(l.bank.data().size(), 0.0);
    g.bias.emplace_back(l.bias.size(), 0.0);
  }
  g.alpha.assign(net.layers.size(), 0.0);
  return g;
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& o) {
  if (o.taps.size() != taps.size()) throw DimensionError("gradient bundles of different networks");
  for (std::size_t k = 0; k < taps.size(); ++k) {
    for (std::size_t i = 0; i < taps[k].size(); ++i) taps[k][i] += o.taps[k][i];
    for (std::size_t i = 0; i < bias[k].size(); ++i) bias[k][i] += o.bias[k][i];
    alpha[k] += o.alpha[k];
  }
  return *this;
}

GradientBundle& GradientBundle::operator*=(double s) {
  for (auto& t : taps)
    for (double& v : t) v *= s;
  for (auto& b : bias)
    for (double& v : b) v *= s;
  for (double& a : alpha) a *= s;
  return *this;
}

double GradientBundle::norm() const {
  double s = 0.0;
  for (const auto& t : taps)
    for (double v : t) s += v * v;
  for (const auto& b : bias)
    for (double v : b) s += v * v;
  for (double a : alpha) s += a * a;
  return std::sqrt(s);
}

bool GradientBundle::all_finite() const { return std::isfinite(norm()); }

Vector forward_batch(const NetworkParams& net, std::span<const double> x, int batch, Tape* tape) {
  const BankGeometry& g = net.geometry();
  const std::size_t chan = channel_len(net, batch);
  check_len(x.size(), chan * g.m2, "forward");
  if (tape) {
    *tape = Tape{};
    tape->batch = batch;
    tape->fingerprint = net.fingerprint();
  }
  Vector cur(x.begin(), x.end());
  for (const Layer& layer : net.layers) {
    Vector z(chan * g.m1);
    for (int j = 0; j < g.m1; ++j) std::fill(z.begin() + j * chan, z.begin() + (j + 1) * chan, layer.bias[j]);
    detail::conv_forward(layer.bank, cur.data(), z.data(), batch);
    if (tape) tape->pre.push_back(z);
    for (double& v : z) v = activate(layer.act, v);
    Vector out(chan * g.m2, 0.0);
    detail::conv_adjoint(layer.bank, z.data(), out.data(), batch);
    if (tape) tape->inputs.push_back(std::move(cur));
    cur = std::move(out);
  }
  return cur;
}

GradientBundle backward_batch(const NetworkParams& net, const Tape& tape, std::span<const double> grad_out,
                              Vector* grad_in) {
  if (tape.fingerprint != net.fingerprint() || static_cast<int>(tape.pre.size()) != net.depth())
    throw ContractError("tape was recorded for different network parameters");
  const BankGeometry& g = net.geometry();
  const int batch = tape.batch;
  const std::size_t chan = channel_len(net, batch);
  check_len(grad_out.size(), chan * g.m2, "backward");
  GradientBundle grad = GradientBundle::zeros_like(net);
  Vector gcur(grad_out.begin(), grad_out.end());
  Vector s(chan * g.m1), ds(chan * g.m1);
  for (int k = net.depth() - 1; k >= 0; --k) {
    const Layer& layer = net.layers[k];
    const Vector& z = tape.pre[k];
    for (std::size_t i = 0; i < z.size(); ++i) s[i] = activate(layer.act, z[i]);
    std::fill(ds.begin(), ds.end(), 0.0);
    detail::conv_forward(layer.bank, gcur.data(), ds.data(), batch);
    // out = T^T s
    detail::conv_tap_grad(g, s.data(), gcur.data(), batch, grad.taps[k].data());
    double ga = 0.0;
    if (has_alpha(layer.act.kind))
      for (std::size_t i = 0; i < z.size(); ++i) ga += ds[i] * activate_alpha_deriv(layer.act, z[i]);
    grad.alpha[k] = ga;
    for (std::size_t i = 0; i < z.size(); ++i) ds[i] *= activate_deriv(layer.act, z[i]);
    for (int j = 0; j < g.m1; ++j) {
      double sb = 0.0;
      for (std::size_t i = j * chan; i < (j + 1) * chan; ++i) sb += ds[i];
      grad.bias[k][j] = sb;
    }
    // z = T x + b
    detail::conv_tap_grad(g, ds.data(), tape.inputs[k].data(), batch, grad.taps[k].data());
    if (k > 0 || grad_in) {
      std::fill(gcur.begin(), gcur.end(), 0.0);
      detail::conv_adjoint(layer.bank, ds.data(), gcur.data(), batch);
    }
  }
  if (grad_in) *grad_in = std::move(gcur);
  return grad;
}

Vector lift_denoise_batch(const NetworkParams& net, std::span<const double> x, int batch, Tape* tape) {
  check_len(x.size(), channel_len(net, batch), "lift_denoise");
  const Vector out = forward_batch(net, lift(net, x), batch, tape);
  return lower(net, out);
}

GradientBundle lift_backward_batch(const NetworkParams& net, const Tape& tape, std::span<const double> grad_psi,
                                   Vector* grad_in) {
  check_len(grad_psi.size(), channel_len(net, tape.batch), "lift_backward");
  if (!grad_in) return backward_batch(net, tape, lift(net, grad_psi));
  Vector gx;
  GradientBundle g = backward_batch(net, tape, lift(net, grad_psi), &gx);
  *grad_in = lower(net, gx);
  return g;
}

Vector denoise_batch(const NetworkParams& net, std::span<const double> x, int batch) {
  Vector psi = lift_denoise_batch(net, x, batch);
  for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = x[i] - net.gamma * psi[i];
  return psi;
}

Vector building_block(const Layer& layer, std::span<const double> x) {
  NetworkParams one;
  one.layers.push_back(layer);
  return forward_batch(one, x, 1);
}

Vector forward(const NetworkParams& net, std::span<const double> x, Tape* tape) {
  return forward_batch(net, x, 1, tape);
}

GradientBundle backward(const NetworkParams& net, const Tape& tape, std::span<const double> grad_out,
                        Vector* grad_in) {
  return backward_batch(net, tape, grad_out, grad_in);
}

Vector lift_denoise(const NetworkParams& net, std::span<const double> x) { return lift_denoise_batch(net, x, 1); }

Vector denoise(const NetworkParams& net, std::span<const double> x) { return denoise_batch(net, x, 1); }

Vector lift_denoise_vjp(const NetworkParams& net, std::span<const double> x, std::span<const double> v) {
  Tape tape;
  lift_denoise_batch(net, x, 1, &tape);
  Vector gx;
  lift_backward_batch(net, tape, v, &gx);
  return gx;
}

Vector pack_batch(const std::vector<Vector>& samples) {
  if (samples.empty()) return {};
  const std::size_t p = samples.front().size(), b = samples.size();
  Vector out(p * b);
  for (std::size_t s = 0; s < b; ++s) {
    check_len(samples[s].size(), p, "pack_batch");
    for (std::size_t i = 0; i < p; ++i) out[i * b + s] = samples[s][i];
  }
  return out;
}

std::vector<Vector> unpack_batch(std::span<const double> x, int batch) {
  const std::size_t p = x.size() / batch;
  std::vector<Vector> out(batch, Vector(p));
  for (std::size_t i = 0; i < p; ++i)
    for (int s = 0; s < batch; ++s) out[s][i] = x[i * batch + s];
  return out;
}

NetworkParams extend(const NetworkParams& net, int new_height, int new_width) {
  const BankGeometry& g = net.geometry();
  if (new_height < g.height || new_width < g.width)
    throw ValidationError("extend: new size " + std::to_string(new_height) + "x" + std::to_string(new_width) +
                          " is smaller than " + std::to_string(g.height) + "x" + std::to_string(g.width));
  if (new_height == g.height && new_width == g.width) return net;
  BankGeometry ng;
  if (g.full) {
    // full-length filters become limited filters covering the old support
    const int half = g.width - 1 - (g.width - 1) / 2;
    ng = BankGeometry::signal(new_width, g.m1, g.m2, half);
  } else if (g.dims() == 1) {
    ng = BankGeometry::signal(new_width, g.m1, g.m2, g.col_half);
  } else {
    ng = BankGeometry::image(new_height, new_width, g.m1, g.m2, g.col_half);
    ng.row_half = g.row_half;
    ng.validate();
  }
  NetworkParams out = net;
  for (Layer& l : out.layers) {
    FilterBank nb(ng);
    for (int j = 0; j < g.m1; ++j)
      for (int k = 0; k < g.m2; ++k)
        for (int tr = 0; tr < g.tap_rows(); ++tr)
          for (int tc = 0; tc < g.tap_cols(); ++tc)
            nb.tap_ref(j, k, g.row_lo() + tr, g.col_lo() + tc) = l.bank.filter(j, k)[tr * g.tap_cols() + tc];
    l.bank = std::move(nb);
  }
  return out;
}

NetworkParams extend(const NetworkParams& net, int new_m) {
  if (net.geometry().dims() != 1) throw ValidationError("extend(m) is for signal networks; pass both image sides");
  return extend(net, 1, new_m);
}

nlohmann::json network_to_json(const NetworkParams& net) {
  net.validate();
  const BankGeometry& g = net.geometry();
  nlohmann::json geo{{"K", net.depth()},
                     {"m", g.pixels()},
                     {"m1", g.m1},
                     {"m2", g.m2},
                     {"l", g.col_half},
                     {"dims", g.dims()},
                     {"full", g.full}};
  if (g.dims() == 2) {
    geo["d1"] = g.height;
    geo["d2"] = g.width;
  }
  nlohmann::json alphas = nlohmann::json::array(), layers = nlohmann::json::array();
  for (const Layer& l : net.layers) {
    alphas.push_back(l.act.alpha);
    layers.push_back({{"filters", bank_to_json(l.bank)["filters"]}, {"bias", l.bias}});
  }
  return {{"version", 1},
          {"geometry", geo},
          {"gamma", net.gamma},
          {"activation", {{"kind", to_string(net.layers.front().act.kind)}, {"alphas", alphas}}},
          {"layers", layers}};
}

NetworkParams network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1)
      throw ParseError("unsupported checkpoint version " + j.at("version").dump());
    const auto& geo = j.at("geometry");
    const int depth = geo.at("K").get<int>();
    const auto& layers = j.at("layers");
    const auto& alphas = j.at("activation").at("alphas");
    if (static_cast<int>(layers.size()) != depth || static_cast<int>(alphas.size()) != depth)
      throw ParseError("checkpoint: layer count does not match K");
    const ActivationKind kind = activation_from_string(j.at("activation").at("kind").get<std::string>());
    NetworkParams net;
    net.gamma = j.at("gamma").get<double>();
    for (int k = 0; k < depth; ++k) {
      nlohmann::json bj{{"m", geo.at("m")},
                        {"m1", geo.at("m1")},
                        {"m2", geo.at("m2")},
                        {"l", geo.at("l")},
                        {"filters", layers[k].at("filters")}};
      if (geo.at("dims").get<int>() == 2) {
        bj["d1"] = geo.at("d1");
        bj["d2"] = geo.at("d2");
      }
      if (geo.value("full", false)) bj["full"] = true;
      net.layers.push_back(
          {bank_from_json(bj), layers[k].at("bias").get<Vector>(), Activation{kind, alphas[k].get<double>()}});
    }
    net.validate();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_network(const std::filesystem::path& path, const NetworkParams& net) {
  write_json_file(path, network_to_json(net));
}

NetworkParams load_network(const std::filesystem::path& path) { return network_from_json(read_json_file(path)); }

} // namespace cpnn
