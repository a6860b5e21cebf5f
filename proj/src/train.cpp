#include "cpnn/training/train.hpp"

#include "cpnn/error.hpp"
#include "cpnn/json_io.hpp"
#include "cpnn/manifold/stiefel.hpp"
#include "cpnn/random.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace cpnn {
namespace {

constexpr int kChunk = 16;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Pairwise sum over items in index order; the tree shape depends only on n.
template <class T, class Add>
T tree_reduce(std::vector<T>& items, Add add) {
  std::size_t n = items.size();
  while (n > 1) {
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i + half < n; ++i) add(items[i], items[i + half]);
    n = half;
  }
  return std::move(items.front());
}

struct ChunkResult {
  double loss = 0.0;
  GradientBundle grad;
};

// Sum over the chunk of ||gamma Psi(x) - eps||^2 and, if wanted, the gradient of
// scale * that sum.
ChunkResult eval_chunk(const NetworkParams& net, const Dataset& data, const int* idx, int count, bool with_grad,
                       double scale) {
  const int p = data.pixels();
  Vector x(static_cast<std::size_t>(p) * count), eps(x.size());
  for (int s = 0; s < count; ++s) {
    const Vector& noisy = data.noisy[idx[s]];
    const Vector& clean = data.clean[idx[s]];
    for (int i = 0; i < p; ++i) {
      x[i * count + s] = noisy[i];
      eps[i * count + s] = noisy[i] - clean[i];
    }
  }
  Tape tape;
  Vector psi = lift_denoise_batch(net, x, count, with_grad ? &tape : nullptr);
  ChunkResult r;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double d = net.gamma * psi[i] - eps[i];
    r.loss += d * d;
    psi[i] = 2.0 * net.gamma * d * scale;
  }
  if (with_grad) r.grad = lift_backward_batch(net, tape, psi);
  return r;
}

bool finite_net(const NetworkParams& net) {
  for (const Layer& l : net.layers) {
    for (double t : l.bank.data())
      if (!std::isfinite(t)) return false;
    for (double b : l.bias)
      if (!std::isfinite(b)) return false;
    if (!std::isfinite(l.act.alpha)) return false;
  }
  return true;
}

// Exponential-map update of alpha; returns whether the exponent was clamped.
bool update_alpha(Layer& layer, double g, double tau) {
  if (!has_alpha(layer.act.kind) || g == 0.0 || tau == 0.0) return false;
  const double a = layer.act.alpha;
  const PositiveRetractResult r = positive_retract(a, -tau * a * a * g);
  layer.act.alpha = r.value;
  return r.clamped;
}

// prelu slopes live in [0, 1]; the exponential map keeps them positive only.
void clip_prelu(NetworkParams& net, TrainReport& rep) {
  for (int k = 0; k < net.depth(); ++k) {
    Activation& a = net.layers[k].act;
    if (a.kind == ActivationKind::prelu && a.alpha > 1.0) {
      a.alpha = 1.0;
      rep.events.push_back("layer " + std::to_string(k) + ": prelu alpha clipped to 1");
    }
  }
}

std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng = CounterRng(seed, 7).split(static_cast<std::uint64_t>(epoch));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  return order;
}

double total_penalty(const NetworkParams& net) {
  double s = 0.0;
  for (const Layer& l : net.layers) s += penalty_value(l.bank);
  return s;
}

void checkpoint(const TrainConfig& c, const NetworkParams& net, int epoch) {
  if (c.checkpoint_every <= 0 || epoch % c.checkpoint_every != 0) return;
  std::filesystem::create_directories(c.checkpoint_dir);
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04d.json", epoch);
  save_network(c.checkpoint_dir / name, net);
}

void check_data(const Dataset& data) {
  if (data.size() == 0) throw ValidationError("training data is empty");
  data.validate();
}

// Shared epoch loop; `step` applies one update and returns its info.
template <class Step>
void run_epochs(NetworkParams& net, const Dataset& data, const TrainConfig& c, TrainReport& report,
                const EpochCallback& on_epoch, bool limited, Step step) {
  const int n = data.size();
  const int b = std::min(c.batch_size, n);
  int global_step = 0;
  for (int e = 1; e <= c.epochs; ++e) {
    const auto t0 = Clock::now();
    const std::vector<int> order = epoch_order(n, c.seed, e);
    EpochRecord rec;
    rec.epoch = e;
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += b) {
      const std::vector<int> idx(order.begin() + start, order.begin() + std::min(n, start + b));
      BatchGradient bg = batch_gradient(net, data, idx, c.workers);
      if (!std::isfinite(bg.loss)) {
        if (limited) throw NonConvergenceError("non-finite training loss at epoch " + std::to_string(e));
        report.events.push_back("epoch " + std::to_string(e) + ": non-finite batch loss, step skipped");
        ++rec.skipped_steps;
        continue;
      }
      loss_sum += bg.loss;
      ++batches;
      ++global_step;
      const StepInfo info = step(bg.grad, c.lr_at(global_step));
      if (info.skipped) {
        ++rec.skipped_steps;
        report.events.push_back("epoch " + std::to_string(e) + ": non-finite gradient, step skipped");
      }
      if (info.alpha_clamped) report.events.push_back("epoch " + std::to_string(e) + ": alpha update clamped");
    }
    rec.loss = batches ? loss_sum / batches : std::numeric_limits<double>::quiet_NaN();
    rec.max_gram_residual = net.max_gram_residual();
    if (limited) rec.penalty = c.effective_mu() * total_penalty(net);
    rec.wall_seconds = seconds_since(t0);
    report.epochs.push_back(rec);
    checkpoint(c, net, e);
    if (on_epoch && !on_epoch(rec, net)) {
      report.events.push_back("stopped after epoch " + std::to_string(e));
      break;
    }
  }
}

void finish_validation(TrainReport& report, const NetworkParams& net, const Dataset* validation, int workers) {
  if (!validation || validation->size() == 0) return;
  const PsnrSummary s = evaluate_psnr(net, *validation, workers);
  report.has_validation = true;
  report.validation_psnr = s.output;
  report.validation_psnr_input = s.input;
}

} // namespace

std::string to_string(TrainMode mode) { return mode == TrainMode::full_filters ? "full_filters" : "limited_filters"; }
std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "inv_sqrt"; }

double TrainConfig::lr_at(int step) const {
  return schedule == LrSchedule::constant ? lr : lr / std::sqrt(static_cast<double>(std::max(step, 1)));
}

void TrainConfig::validate() const {
  if (depth < 1) throw ValidationError("depth must be >= 1");
  if (m1 < 1 || m2 < 1) throw ValidationError("m1, m2 must be >= 1");
  if (mode == TrainMode::limited_filters && half_width < 0) throw ValidationError("l must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be finite and >= 0");
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (loss != "squared_l2") throw ValidationError("unsupported loss '" + loss + "'");
  if (!(lambda > 0.0)) throw ValidationError("lambda must be > 0");
  if (projection_iters < 0) throw ValidationError("projection iteration cap must be >= 0");
  if (!(gamma >= 1.0)) throw ValidationError("gamma must be >= 1");
  if (workers < 1) throw ValidationError("workers must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0))
    throw ValidationError("invalid Adam parameters");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) throw ValidationError("checkpoints need a directory");
  activation.validate();
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"depth", c.depth},
          {"m1", c.m1},
          {"m2", c.m2},
          {"l", c.half_width},
          {"activation", {{"kind", to_string(c.activation.kind)}, {"alpha", c.activation.alpha}}},
          {"gamma", c.gamma},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"lr_schedule", to_string(c.schedule)},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"loss", c.loss},
          {"mu", c.effective_mu()},
          {"lambda", c.lambda},
          {"projection_iters", c.projection_iters},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"workers", c.workers},
          {"checkpoint_every", c.checkpoint_every},
          {"checkpoint_dir", c.checkpoint_dir.string()}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"mode",   "depth",   "m1",         "m2",   "l",      "activation",
                                "gamma",  "batch_size", "lr",      "lr_schedule", "epochs", "seed",
                                "loss",   "mu",      "lambda",     "projection_iters", "adam", "workers",
                                "checkpoint_every", "checkpoint_dir"};
  if (!j.is_object()) throw ParseError("train config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known))
      throw ParseError("train config: unknown key '" + it.key() + "'");
  TrainConfig c;
  try {
    if (j.contains("mode")) {
      const std::string m = j["mode"];
      if (m == "full_filters" || m == "full") c.mode = TrainMode::full_filters;
      else if (m == "limited_filters" || m == "limited") c.mode = TrainMode::limited_filters;
      else throw ParseError("train config: unknown mode '" + m + "'");
    }
    auto get = [&](const char* key, auto& out) {
      if (j.contains(key)) out = j[key].get<std::decay_t<decltype(out)>>();
    };
    get("depth", c.depth);
    get("m1", c.m1);
    get("m2", c.m2);
    get("l", c.half_width);
    if (j.contains("activation")) {
      const auto& a = j["activation"];
      if (a.contains("kind")) c.activation.kind = activation_from_string(a["kind"]);
      if (a.contains("alpha")) c.activation.alpha = a["alpha"];
    }
    get("gamma", c.gamma);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    if (j.contains("lr_schedule")) {
      const std::string s = j["lr_schedule"];
      if (s == "constant") c.schedule = LrSchedule::constant;
      else if (s == "inv_sqrt") c.schedule = LrSchedule::inv_sqrt;
      else throw ParseError("train config: unknown lr_schedule '" + s + "'");
    }
    get("epochs", c.epochs);
    get("seed", c.seed);
    get("loss", c.loss);
    get("mu", c.mu);
    get("lambda", c.lambda);
    get("projection_iters", c.projection_iters);
    if (j.contains("adam")) {
      const auto& a = j["adam"];
      if (a.contains("beta1")) c.adam.beta1 = a["beta1"];
      if (a.contains("beta2")) c.adam.beta2 = a["beta2"];
      if (a.contains("eps")) c.adam.eps = a["eps"];
    }
    get("workers", c.workers);
    get("checkpoint_every", c.checkpoint_every);
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = j["checkpoint_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  return c;
}

nlohmann::json epoch_to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"loss", r.loss},
          {"penalty", r.penalty},
          {"max_gram_residual", r.max_gram_residual},
          {"wall_seconds", r.wall_seconds},
          {"skipped_steps", r.skipped_steps}};
}

nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : r.epochs) epochs.push_back(epoch_to_json(e));
  nlohmann::json j{{"epochs", epochs},
                   {"max_step_gram_residual", r.max_step_gram_residual},
                   {"events", r.events},
                   {"total_seconds", r.total_seconds}};
  if (!r.projection_iterations.empty()) {
    j["loss_before_projection"] = r.loss_before_projection;
    j["loss_after_projection"] = r.loss_after_projection;
    j["residual_before_projection"] = r.residual_before_projection;
    j["residual_after_projection"] = r.residual_after_projection;
    j["projection_iterations"] = r.projection_iterations;
  }
  if (r.has_validation) {
    j["validation_psnr"] = r.validation_psnr;
    j["validation_psnr_input"] = r.validation_psnr_input;
  }
  return j;
}

void write_report_jsonl(const std::filesystem::path& path, const TrainReport& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const EpochRecord& e : r.epochs) out << dump_json(epoch_to_json(e)) << '\n';
  nlohmann::json summary = report_to_json(r);
  summary.erase("epochs");
  summary["summary"] = true;
  out << dump_json(summary) << '\n';
}

BankGeometry config_geometry(const TrainConfig& c, const Dataset& data) {
  if (data.kind == DatasetKind::image_patches) {
    if (c.mode == TrainMode::full_filters) throw ValidationError("full-length filters are 1-D only");
    BankGeometry g = BankGeometry::image(data.height, data.width, c.m1, c.m2, c.half_width);
    g.validate();
    return g;
  }
  const int m = data.width;
  if (c.mode == TrainMode::full_filters) return BankGeometry::full_signal(m, c.m1, c.m2);
  if (c.half_width >= (m - 1) / 2)
    throw ValidationError("limited filters need l < floor((m-1)/2); got l = " + std::to_string(c.half_width) +
                          ", m = " + std::to_string(m));
  return BankGeometry::signal(m, c.m1, c.m2, c.half_width);
}

NetworkParams init_network(const TrainConfig& c, const BankGeometry& g) {
  NetworkParams net = make_network(g, c.depth, c.activation, c.gamma);
  CounterRng rng(c.seed, 11);
  for (int k = 0; k < net.depth(); ++k) {
    CounterRng r = rng.split(static_cast<std::uint64_t>(k));
    FilterBank& bank = net.layers[k].bank;
    if (g.full) {
      for (double& t : bank.data()) t = r.normal();
      bank = stiefel_project(bank);
    } else {
      // unit-norm rows or columns of T', whichever orientation is the tall one
      const double sd = 1.0 / std::sqrt(static_cast<double>(std::max(c.m1, c.m2)) * g.taps_per_filter());
      for (double& t : bank.data()) t = sd * r.normal();
    }
  }
  return net;
}

void parallel_for(int n, int workers, const std::function<void(int)>& f) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int t = std::min(workers, n);
  for (int w = 1; w < t; ++w) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double loss_eval(const NetworkParams& net, const Dataset& data, int workers) {
  check_data(data);
  const int n = data.size();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const int chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> part(chunks);
  parallel_for(chunks, workers, [&](int c) {
    const int lo = c * kChunk;
    part[c] = eval_chunk(net, data, idx.data() + lo, std::min(kChunk, n - lo), false, 0.0).loss;
  });
  return tree_reduce(part, [](double& a, const double& b) { a += b; }) / n;
}

BatchGradient batch_gradient(const NetworkParams& net, const Dataset& data, const std::vector<int>& indices,
                             int workers) {
  if (indices.empty()) throw ValidationError("empty batch");
  const int n = static_cast<int>(indices.size());
  const int chunks = (n + kChunk - 1) / kChunk;
  std::vector<ChunkResult> part(chunks);
  parallel_for(chunks, workers, [&](int c) {
    const int lo = c * kChunk;
    part[c] = eval_chunk(net, data, indices.data() + lo, std::min(kChunk, n - lo), true, 1.0 / n);
  });
  ChunkResult total = tree_reduce(part, [](ChunkResult& a, const ChunkResult& b) {
    a.loss += b.loss;
    a.grad += b.grad;
  });
  return {total.loss / n, std::move(total.grad)};
}

StepInfo sgd_manifold_step(NetworkParams& net, const GradientBundle& grad, double tau) {
  StepInfo info;
  if (!grad.all_finite()) {
    info.skipped = true;
    return info;
  }
  for (int k = 0; k < net.depth(); ++k) {
    Layer& layer = net.layers[k];
    if (!layer.bank.geometry().full) throw ValidationError("sgd_manifold_step needs full-length filters");
    const Vector& g = grad.taps[k];
    const bool zero = tau == 0.0 || std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; });
    if (!zero) {
      // Euclidean matrix gradient restricted to the block-circulant algebra:
      // every tap occupies P matrix entries.
      FilterBank x(layer.bank.geometry());
      const double s = -tau / layer.bank.pixels();
      for (std::size_t i = 0; i < g.size(); ++i) x.data()[i] = s * g[i];
      layer.bank = cayley_retract(layer.bank, x).point;
    }
    for (std::size_t j = 0; j < layer.bias.size(); ++j) layer.bias[j] -= tau * grad.bias[k][j];
    info.alpha_clamped |= update_alpha(layer, grad.alpha[k], tau);
  }
  return info;
}

AdamState AdamState::zeros_like(const NetworkParams& net) {
  AdamState s;
  for (const Layer& l : net.layers) {
    s.m_taps.emplace_back(l.bank.data().size(), 0.0);
    s.v_taps.emplace_back(l.bank.data().size(), 0.0);
    s.m_bias.emplace_back(l.bias.size(), 0.0);
    s.v_bias.emplace_back(l.bias.size(), 0.0);
  }
  return s;
}

StepInfo adam_step(NetworkParams& net, AdamState& st, const GradientBundle& grad, double lr, const AdamParams& p) {
  StepInfo info;
  if (!grad.all_finite()) {
    info.skipped = true;
    return info;
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(p.beta1, st.step), c2 = 1.0 - std::pow(p.beta2, st.step);
  auto update = [&](Vector& w, Vector& m, Vector& v, const Vector& g) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = p.beta1 * m[i] + (1 - p.beta1) * g[i];
      v[i] = p.beta2 * v[i] + (1 - p.beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + p.eps);
    }
  };
  for (int k = 0; k < net.depth(); ++k) {
    Layer& layer = net.layers[k];
    update(layer.bank.data(), st.m_taps[k], st.v_taps[k], grad.taps[k]);
    update(layer.bias, st.m_bias[k], st.v_bias[k], grad.bias[k]);
    info.alpha_clamped |= update_alpha(layer, grad.alpha[k], lr);
  }
  return info;
}

TrainResult train_full(const Dataset& data, const TrainConfig& c, const Dataset* validation,
                       const EpochCallback& on_epoch) {
  c.validate();
  check_data(data);
  if (c.mode != TrainMode::full_filters) throw ValidationError("train_full needs mode full_filters");
  const auto t0 = Clock::now();
  TrainResult res{init_network(c, config_geometry(c, data)), {}};
  NetworkParams& net = res.net;
  TrainReport& rep = res.report;
  rep.max_step_gram_residual = net.max_gram_residual();
  run_epochs(net, data, c, rep, on_epoch, false, [&](const GradientBundle& g, double tau) {
    const StepInfo info = sgd_manifold_step(net, g, tau);
    clip_prelu(net, rep);
    rep.max_step_gram_residual = std::max(rep.max_step_gram_residual, net.max_gram_residual());
    return info;
  });
  if (!finite_net(net)) throw NonConvergenceError("training produced non-finite parameters");
  finish_validation(rep, net, validation, c.workers);
  rep.total_seconds = seconds_since(t0);
  return res;
}

TrainResult train_limited_stage1(const Dataset& data, const TrainConfig& c, const EpochCallback& on_epoch) {
  c.validate();
  check_data(data);
  if (c.mode != TrainMode::limited_filters) throw ValidationError("train_limited needs mode limited_filters");
  const auto t0 = Clock::now();
  TrainResult res{init_network(c, config_geometry(c, data)), {}};
  NetworkParams& net = res.net;
  AdamState state = AdamState::zeros_like(net);
  const double mu = c.effective_mu();
  run_epochs(net, data, c, res.report, on_epoch, true, [&](GradientBundle g, double lr) {
    for (int k = 0; k < net.depth(); ++k) {
      const FilterBank pg = penalty_gradient(net.layers[k].bank);
      for (std::size_t i = 0; i < g.taps[k].size(); ++i) g.taps[k][i] += mu * pg.data()[i];
    }
    const StepInfo info = adam_step(net, state, g, lr, c.adam);
    clip_prelu(net, res.report);
    return info;
  });
  if (!finite_net(net)) throw NonConvergenceError("stage-1 training produced non-finite parameters");
  res.report.total_seconds = seconds_since(t0);
  return res;
}

TrainResult train_limited(const Dataset& data, const TrainConfig& c, const Dataset* validation,
                          const EpochCallback& on_epoch) {
  const auto t0 = Clock::now();
  TrainResult res = train_limited_stage1(data, c, on_epoch);
  NetworkParams& net = res.net;
  TrainReport& rep = res.report;
  rep.loss_before_projection = loss_eval(net, data, c.workers);
  const int depth = net.depth();
  rep.residual_before_projection.resize(depth);
  rep.residual_after_projection.resize(depth);
  rep.projection_iterations.resize(depth);
  ProjectionOptions opts;
  opts.lambda = c.lambda;
  opts.max_iters = c.projection_iters;
  std::vector<ProjectionResult> proj(depth);
  parallel_for(depth, c.workers, [&](int k) { proj[k] = project_filters(net.layers[k].bank, opts); });
  for (int k = 0; k < depth; ++k) {
    rep.residual_before_projection[k] = gram_residual(net.layers[k].bank);
    net.layers[k].bank = std::move(proj[k].bank);
    rep.residual_after_projection[k] = proj[k].gram_residual;
    rep.projection_iterations[k] = proj[k].iterations;
    if (proj[k].backtracks > 0)
      rep.events.push_back("layer " + std::to_string(k) + ": projection backtracked " +
                           std::to_string(proj[k].backtracks) + " times");
  }
  rep.loss_after_projection = loss_eval(net, data, c.workers);
  finish_validation(rep, net, validation, c.workers);
  rep.total_seconds = seconds_since(t0);
  return res;
}

TrainResult train(const Dataset& data, const TrainConfig& c, const Dataset* validation,
                  const EpochCallback& on_epoch) {
  return c.mode == TrainMode::full_filters ? train_full(data, c, validation, on_epoch)
                                           : train_limited(data, c, validation, on_epoch);
}

PsnrSummary evaluate_psnr(const NetworkParams& net, const Dataset& data, int workers) {
  check_data(data);
  const int n = data.size();
  const bool image = data.kind == DatasetKind::image_patches;
  std::vector<PsnrSummary> per(n);
  const int chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, workers, [&](int c) {
    const int lo = c * kChunk, cnt = std::min(kChunk, n - lo);
    std::vector<Vector> xs(data.noisy.begin() + lo, data.noisy.begin() + lo + cnt);
    const auto out = unpack_batch(denoise_batch(net, pack_batch(xs), cnt), cnt);
    for (int s = 0; s < cnt; ++s) {
      const Vector& y = data.clean[lo + s];
      PsnrSummary& p = per[lo + s];
      if (image) {
        p.output = p.output_squared = psnr_image(clamp01(out[s]), y);
        p.input = p.input_squared = psnr_image(xs[s], y);
      } else {
        p.output = psnr_signal(out[s], y);
        p.input = psnr_signal(xs[s], y);
        p.output_squared = psnr_signal_squared(out[s], y);
        p.input_squared = psnr_signal_squared(xs[s], y);
      }
    }
  });
  PsnrSummary mean;
  for (const PsnrSummary& p : per) {
    mean.output += p.output / n;
    mean.input += p.input / n;
    mean.output_squared += p.output_squared / n;
    mean.input_squared += p.input_squared / n;
  }
  return mean;
}

} // namespace cpnn
