#include "cli.hpp"

#include "cpnn/data/data.hpp"
#include "cpnn/error.hpp"
#include "cpnn/json_io.hpp"
#include "cpnn/network/network.hpp"
#include "cpnn/pnp/pnp.hpp"
#include "cpnn/training/projection.hpp"
#include "cpnn/training/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <thread>

namespace cpnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// CPNN_VERBOSITY: 0 silent, 1 progress (default), 2 per-epoch detail.
int verbosity() {
  const char* v = std::getenv("CPNN_VERBOSITY");
  if (!v || !*v) return 1;
  return std::atoi(v);
}

double finite_or_nan(double v) { return std::isfinite(v) ? v : std::nan(""); }

// ---------------------------------------------------------------------------
// File helpers

bool is_image_file(const fs::path& p) { return p.extension() == ".pgm"; }

// A signal file holds rows; an image file holds one sample.
struct Samples {
  std::vector<Vector> values;
  int height = 1;
  int width = 0;
  bool image = false;
};

Samples read_samples(const fs::path& p) {
  Samples s;
  if (!fs::exists(p)) throw ValidationError("input file not found: " + p.string());
  if (is_image_file(p)) {
    s.image = true;
    s.values.push_back(read_pgm(p, s.height, s.width));
    return s;
  }
  s.values = read_signals_csv(p);
  if (s.values.empty()) throw ValidationError("no signals in " + p.string());
  s.width = static_cast<int>(s.values.front().size());
  for (const Vector& v : s.values)
    if (static_cast<int>(v.size()) != s.width) throw ValidationError("signals in " + p.string() + " differ in length");
  return s;
}

void write_samples(const fs::path& p, const Samples& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  if (s.image) write_pgm(p, clamp01(s.values.front()), s.height, s.width);
  else write_signals_csv(p, s.values);
}

// "M" or "HxW"
std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) return {1, std::stoi(s)};
    return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
  } catch (const std::exception&) {
    throw ValidationError("bad size '" + s + "' (expected M or HxW)");
  }
}

NetworkParams fit_network(NetworkParams net, int height, int width, const std::string& extend_flag) {
  const BankGeometry& g = net.geometry();
  if (g.height == height && g.width == width) return net;
  if (extend_flag.empty())
    throw ValidationError("model is " + std::to_string(g.height) + "x" + std::to_string(g.width) + " but the input is " +
                          std::to_string(height) + "x" + std::to_string(width) + "; pass --extend");
  const auto [h, w] = parse_size(extend_flag);
  if (h != height || w != width)
    throw ValidationError("--extend " + extend_flag + " does not match the input size " + std::to_string(height) + "x" +
                          std::to_string(width));
  return height == 1 ? extend(net, width) : extend(net, height, width);
}

// ---------------------------------------------------------------------------
// Commands. Each returns the "result" object of the result JSON.

struct GenDataArgs {
  std::string kind = "pwc";
  int n = 5000;
  int m = 128;
  std::optional<double> sigma;
  std::uint64_t seed = 1;
  std::string out;
};

json cmd_gen_data(const GenDataArgs& a, std::ostream& err) {
  Dataset d;
  if (a.kind == "pwc") d = make_pwc_dataset(a.n, a.m, a.sigma.value_or(0.1), a.seed);
  else if (a.kind == "images") d = make_patch_dataset(a.n, a.m, a.sigma.value_or(25.0 / 255.0), a.seed);
  else throw ValidationError("unknown --kind '" + a.kind + "' (expected pwc or images)");
  save_dataset(a.out, d);
  double in = 0.0, in_sq = 0.0;
  for (int i = 0; i < d.size(); ++i) {
    if (d.kind == DatasetKind::pwc_1d) {
      in += psnr_signal(d.noisy[i], d.clean[i]);
      in_sq += psnr_signal_squared(d.noisy[i], d.clean[i]);
    } else {
      in += psnr_image(d.noisy[i], d.clean[i]);
    }
  }
  if (verbosity() > 0) err << "wrote " << d.size() << " samples to " << a.out << "\n";
  json r = {{"dir", a.out},     {"kind", to_string(d.kind)}, {"count", d.size()},
            {"height", d.height}, {"width", d.width},        {"sigma", d.sigma},
            {"seed", d.seed},     {"input_psnr", finite_or_nan(in / d.size())}};
  if (d.kind == DatasetKind::pwc_1d) r["input_psnr_squared"] = finite_or_nan(in_sq / d.size());
  return r;
}

struct TrainArgs {
  std::string mode;
  std::string config;
  std::string data;
  std::string validation;
  std::string out;
  std::string report;
  int workers = 0;
};

json cmd_train(const TrainArgs& a, std::ostream& err) {
  TrainConfig c;
  if (!a.config.empty()) c = config_from_json(read_json_file(a.config));
  if (!a.mode.empty()) c.mode = config_from_json(json{{"mode", a.mode}}).mode;
  if (a.workers > 0) c.workers = a.workers;
  c.validate();
  const Dataset data = load_dataset(a.data);
  std::optional<Dataset> val;
  if (!a.validation.empty()) val = load_dataset(a.validation);
  const int v = verbosity();
  const EpochCallback progress = [&](const EpochRecord& e, const NetworkParams&) {
    if (v > 0) {
      err << "epoch " << e.epoch << "/" << c.epochs << " loss " << e.loss;
      if (c.mode == TrainMode::limited_filters) err << " penalty " << e.penalty;
      err << " max gram residual " << e.max_gram_residual << "\n";
    }
    return true;
  };
  const TrainResult r = train(data, c, val ? &*val : nullptr, progress);
  save_network(a.out, r.net);
  if (!a.report.empty()) write_report_jsonl(a.report, r.report);
  json out = {{"model", a.out},
              {"config", config_to_json(c)},
              {"epochs", static_cast<int>(r.report.epochs.size())},
              {"final_loss", r.report.epochs.empty() ? 0.0 : r.report.epochs.back().loss},
              {"max_gram_residual", r.net.max_gram_residual()}};
  if (c.mode == TrainMode::limited_filters) {
    out["loss_before_projection"] = r.report.loss_before_projection;
    out["loss_after_projection"] = r.report.loss_after_projection;
    out["residual_after_projection"] = r.report.residual_after_projection;
  }
  if (r.report.has_validation) {
    out["validation_psnr"] = r.report.validation_psnr;
    out["validation_psnr_input"] = r.report.validation_psnr_input;
  }
  return out;
}

struct ProjectArgs {
  std::string model;
  double lambda = 1e4;
  int iters = 5000;
  std::string out;
  int workers = 0;
};

json cmd_project(const ProjectArgs& a, std::ostream& err) {
  NetworkParams net = load_network(a.model);
  std::vector<ProjectionResult> res(net.depth());
  parallel_for(net.depth(), a.workers, [&](int k) { res[k] = project_filters(net.layers[k].bank, {a.lambda, a.iters}); });
  json layers = json::array();
  for (int k = 0; k < net.depth(); ++k) {
    const double before = gram_residual(net.layers[k].bank);
    net.layers[k].bank = res[k].bank;
    if (verbosity() > 0)
      err << "layer " << k << ": gram residual " << before << " -> " << res[k].gram_residual << " (" << res[k].iterations
          << " iterations)\n";
    layers.push_back({{"layer", k},
                      {"residual_before", before},
                      {"residual_after", res[k].gram_residual},
                      {"iterations", res[k].iterations},
                      {"converged", res[k].converged}});
  }
  save_network(a.out, net);
  return {{"model", a.out}, {"lambda", a.lambda}, {"layers", layers}};
}

struct DenoiseArgs {
  std::string model;
  std::string in;
  std::string out;
  std::string extend;
};

json cmd_denoise(const DenoiseArgs& a, std::ostream& err) {
  Samples s = read_samples(a.in);
  const NetworkParams net = fit_network(load_network(a.model), s.height, s.width, a.extend);
  const Vector packed = pack_batch(s.values);
  s.values = unpack_batch(denoise_batch(net, packed, static_cast<int>(s.values.size())), static_cast<int>(s.values.size()));
  write_samples(a.out, s);
  if (verbosity() > 0) err << "denoised " << s.values.size() << " sample(s) into " << a.out << "\n";
  return {{"out", a.out}, {"count", s.values.size()}, {"height", s.height}, {"width", s.width}};
}

struct PnPArgs {
  std::string solver = "fbs";
  std::string task = "denoise";
  std::string model;
  std::string in;
  std::string out;
  std::string truth;
  std::optional<double> eta;
  std::optional<double> gamma;
  std::string oracle = "none";
  double t = 0.5;
  double smooth_sigma = 1.5;
  int max_iters = 500;
  double tol = 1e-6;
  std::string trace;
  bool unsafe = false;
  double tau = 1.5;
  std::string boundary = "periodic";
  std::string extend;
};

fs::path indexed_path(const fs::path& p, std::size_t i, std::size_t n) {
  if (n == 1) return p;
  return p.parent_path() / (p.stem().string() + "_" + std::to_string(i) + p.extension().string());
}

json cmd_pnp(const PnPArgs& a, std::ostream& err) {
  if (a.solver != "fbs" && a.solver != "admm") throw ValidationError("--solver must be fbs or admm");
  if (a.task != "denoise" && a.task != "deblur") throw ValidationError("--task must be denoise or deblur");
  const bool deblur = a.task == "deblur";
  BlurBoundary bd = BlurBoundary::periodic;
  if (a.boundary == "valid") bd = BlurBoundary::valid;
  else if (a.boundary != "periodic") throw ValidationError("--boundary must be periodic or valid");
  if (!deblur && bd == BlurBoundary::valid) throw ValidationError("--boundary valid only applies to --task deblur");

  Samples obs = read_samples(a.in);
  // solution size
  int h = obs.height, w = obs.width;
  if (deblur && bd == BlurBoundary::valid) {
    h += 8;
    w += 8;
  }
  NetworkParams net = fit_network(load_network(a.model), h, w, a.extend);
  if (a.gamma) {
    net.gamma = *a.gamma;
    net.validate();
  }
  std::optional<Samples> truth;
  if (!a.truth.empty()) {
    truth = read_samples(a.truth);
    if (truth->values.size() != obs.values.size() || truth->height != h || truth->width != w)
      throw ValidationError("--truth does not match the solution size");
  }
  std::optional<Samples> oracle_file;
  const bool use_oracle = a.oracle != "none";
  if (use_oracle && a.oracle != "smooth") {
    oracle_file = read_samples(a.oracle);
    if (oracle_file->values.size() != obs.values.size() || oracle_file->height != h || oracle_file->width != w)
      throw ValidationError("oracle file does not match the solution size");
  }

  PnPConfig cfg;
  cfg.eta = a.eta.value_or(1.0);
  cfg.max_iters = a.max_iters;
  cfg.stop_tol = a.tol;
  cfg.unsafe = a.unsafe;
  cfg.validate();

  const BlurKernel kernel = gauss_kernel(a.tau);
  Samples result = obs;
  result.height = h;
  result.width = w;
  json runs = json::array();
  double psnr_sum = 0.0, psnr_in_sum = 0.0;
  for (std::size_t i = 0; i < obs.values.size(); ++i) {
    const Vector& y = obs.values[i];
    const DataTerm f = deblur ? quadratic_blur(kernel, y, h, w, bd) : quadratic_identity(y);
    const Vector x0 = deblur && bd == BlurBoundary::valid ? blur_adjoint(kernel, y, h, w, bd) : y;
    Denoiser d = plain_denoiser(net);
    if (use_oracle) {
      Vector xs = oracle_file ? oracle_file->values[i] : gaussian_smooth(x0, h, w, a.smooth_sigma);
      d = oracle_denoiser(std::move(xs), net, a.t).as_denoiser();
    }
    const PnPResult r = a.solver == "fbs" ? fbs_pnp(f, d, cfg, x0) : admm_pnp(f, d, cfg, x0);
    if (!a.trace.empty()) write_trace_csv(indexed_path(a.trace, i, obs.values.size()), r.trace);
    result.values[i] = obs.image ? clamp01(r.x) : r.x;
    json run = {{"index", i},
                {"iterations", r.iterations},
                {"converged", r.converged},
                {"diverged", r.diverged},
                {"final_residual", r.trace.residual.empty() ? 0.0 : r.trace.residual.back()}};
    if (truth) {
      const Vector& t = truth->values[i];
      const double p = obs.image ? psnr_image(result.values[i], t) : psnr_signal(result.values[i], t);
      const double p_in = obs.image ? psnr_image(clamp01(x0), t) : psnr_signal(x0, t);
      run["psnr"] = finite_or_nan(p);
      run["psnr_input"] = finite_or_nan(p_in);
      if (!obs.image) run["psnr_squared"] = finite_or_nan(psnr_signal_squared(result.values[i], t));
      psnr_sum += p;
      psnr_in_sum += p_in;
    }
    if (verbosity() > 0)
      err << "sample " << i << ": " << r.iterations << " iterations, residual " << run["final_residual"].get<double>()
          << (r.converged ? " (converged)" : r.diverged ? " (diverged)" : "") << "\n";
    runs.push_back(run);
  }
  if (!a.out.empty()) write_samples(a.out, result);
  json out = {{"solver", a.solver},
              {"task", a.task},
              {"eta", cfg.eta},
              {"gamma", net.gamma},
              {"oracle", a.oracle},
              {"t", a.t},
              {"runs", runs}};
  if (truth) {
    out["mean_psnr"] = finite_or_nan(psnr_sum / obs.values.size());
    out["mean_psnr_input"] = finite_or_nan(psnr_in_sum / obs.values.size());
  }
  return out;
}

struct EstimateArgs {
  std::string model;
  int samples = 1000;
  double grid = 0.05;
  std::uint64_t seed = 1;
  int power_iters = 50;
  double tol_spec = 1e-6;
  int workers = 0;
};

json cmd_estimate(const EstimateArgs& a, std::ostream& err) {
  const NetworkParams net = load_network(a.model);
  AveragednessOptions opt;
  opt.samples = a.samples;
  opt.grid_step = a.grid;
  opt.seed = a.seed;
  opt.power_iters = a.power_iters;
  opt.tol_spec = a.tol_spec;
  opt.workers = a.workers;
  const AveragednessResult r = estimate_averagedness(network_operator(net), opt);
  if (verbosity() > 0) {
    if (r.averaged) err << "estimated averagedness constant t = " << r.t << "\n";
    else err << "no grid value t <= 1 passed on the sample: not averaged\n";
  }
  json norms = json::array();
  for (std::size_t k = 0; k < r.grid.size(); ++k) norms.push_back({{"t", r.grid[k]}, {"max_norm", r.max_norm[k]}});
  return {{"averaged", r.averaged}, {"t", r.averaged ? json(r.t) : json(nullptr)}, {"samples", r.samples}, {"grid", norms}};
}

json cmd_check_orth(const std::string& model, std::ostream& err) {
  const NetworkParams net = load_network(model);
  json layers = json::array();
  if (verbosity() > 0) err << "layer  gram_residual  filter_residual\n";
  for (int k = 0; k < net.depth(); ++k) {
    const FilterBank& b = net.layers[k].bank;
    const double g = gram_residual(b);
    json fr = nullptr;
    try {
      fr = filter_orthogonality_residual(b);
    } catch (const ValidationError&) {
      // grid too short for the lag conditions
    }
    if (verbosity() > 0) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%5d  %13.6e  %s\n", k, g,
                    fr.is_null() ? "n/a" : std::to_string(fr.get<double>()).c_str());
      err << buf;
    }
    layers.push_back({{"layer", k}, {"gram_residual", g}, {"filter_residual", fr}});
  }
  return {{"model", model}, {"layers", layers}, {"max_gram_residual", net.max_gram_residual()}};
}

struct CounterArgs {
  double t = 0.75;
  double a2 = 0.9;
  int iters = 30;
  double y0 = 1.0;
  std::string trace;
};

json cmd_counterexample(const CounterArgs& a, std::ostream& err) {
  const DivergenceResult r = divergence_example(a.t, a.a2, a.y0, a.iters);
  if (!a.trace.empty()) write_trace_csv(a.trace, r.run.trace);
  if (verbosity() > 0) {
    err << "c = " << r.c << ", max |ratio - c| = " << r.max_ratio_error << "\n";
    for (std::size_t k = 0; k < r.t_values.size(); ++k) err << "t[" << k << "] = " << r.t_values[k] << "\n";
  }
  return {{"t", a.t},        {"a1", r.a1},         {"a2", a.a2}, {"c", r.c}, {"max_ratio_error", r.max_ratio_error},
          {"ratios", r.ratios}, {"t_values", r.t_values}};
}

struct EvalArgs {
  std::string pred;
  std::string truth;
  std::string out;
};

json cmd_eval(const EvalArgs& a, std::ostream& err) {
  if (!fs::is_directory(a.pred)) throw ValidationError("--pred is not a directory: " + a.pred);
  if (!fs::is_directory(a.truth)) throw ValidationError("--truth is not a directory: " + a.truth);
  std::vector<fs::path> files;
  std::vector<std::string> unmatched;
  for (const auto& e : fs::directory_iterator(a.truth)) {
    const auto ext = e.path().extension();
    if (!e.is_regular_file() || (ext != ".csv" && ext != ".pgm")) continue;
    if (fs::exists(fs::path(a.pred) / e.path().filename()))
      files.push_back(e.path().filename());
    else
      unmatched.push_back(e.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  std::sort(unmatched.begin(), unmatched.end());
  for (const auto& u : unmatched)
    if (verbosity() > 0) err << "eval: no prediction for " << u << "\n";
  if (files.empty()) throw ValidationError("no matching .csv or .pgm files in --pred and --truth");
  std::string csv = "file,index,psnr,psnr_squared\n";
  double sum = 0.0;
  int n = 0;
  json per_file = json::array();
  char buf[512];
  for (const fs::path& name : files) {
    const Samples p = read_samples(fs::path(a.pred) / name), t = read_samples(fs::path(a.truth) / name);
    if (p.values.size() != t.values.size() || p.width != t.width || p.height != t.height)
      throw ValidationError(name.string() + ": prediction and truth differ in shape");
    double fsum = 0.0;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double v = p.image ? psnr_image(p.values[i], t.values[i]) : psnr_signal(p.values[i], t.values[i]);
      const double vs = p.image ? v : psnr_signal_squared(p.values[i], t.values[i]);
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f\n", name.string().c_str(), i, v, vs);
      csv += buf;
      fsum += v;
      sum += v;
      ++n;
    }
    per_file.push_back({{"file", name.string()}, {"count", p.values.size()}, {"mean_psnr", finite_or_nan(fsum / p.values.size())}});
  }
  if (!a.out.empty()) {
    std::ofstream o(a.out);
    if (!o) throw Error("cannot write " + a.out);
    o << csv;
  } else if (verbosity() > 0) {
    err << csv;
  }
  return {{"files", per_file}, {"count", n}, {"mean_psnr", finite_or_nan(sum / n)}, {"unmatched", unmatched}};
}

json error_json(const std::string& command, int code, const std::string& type, const std::string& msg) {
  return {{"schema_version", kSchemaVersion},
          {"command", command},
          {"status", code == 1 ? "validation_error" : "runtime_error"},
          {"exit_code", code},
          {"error", {{"type", type}, {"message", msg}}}};
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional proximal neural networks: training, projection, denoising and plug-and-play solvers"};
  app.name("cpnn");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  int workers = default_workers();
  app.add_option("--workers", workers, "Worker threads (default: hardware threads)")->check(CLI::PositiveNumber);

  GenDataArgs gen;
  auto* s_gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  s_gen->add_option("--kind", gen.kind, "pwc (1-D piecewise constant) or images (synthetic patches)")
      ->check(CLI::IsMember({"pwc", "images"}));
  s_gen->add_option("--n", gen.n, "Number of samples")->check(CLI::PositiveNumber);
  s_gen->add_option("--m", gen.m, "Signal length, or patch side for images")->check(CLI::PositiveNumber);
  s_gen->add_option("--sigma", gen.sigma, "Noise standard deviation (default 0.1 for pwc, 25/255 for images)");
  s_gen->add_option("--seed", gen.seed, "Generator seed");
  s_gen->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train a cPNN on a dataset directory");
  s_train->add_option("--mode", tr.mode, "full or limited (overrides the config)")
      ->check(CLI::IsMember({"full", "limited", "full_filters", "limited_filters"}));
  s_train->add_option("--config", tr.config, "Training config JSON")->check(CLI::ExistingFile);
  s_train->add_option("--data", tr.data, "Training dataset directory")->required();
  s_train->add_option("--validation", tr.validation, "Validation dataset directory");
  s_train->add_option("--out", tr.out, "Output model JSON")->required();
  s_train->add_option("--report", tr.report, "Per-epoch JSONL report");

  ProjectArgs pr;
  auto* s_proj = app.add_subcommand("project", "Project every layer of a model onto the orthogonality constraint");
  s_proj->add_option("--model", pr.model, "Input model JSON")->required()->check(CLI::ExistingFile);
  s_proj->add_option("--lambda", pr.lambda, "Penalty weight")->check(CLI::PositiveNumber);
  s_proj->add_option("--iters", pr.iters, "Iteration cap per layer")->check(CLI::PositiveNumber);
  s_proj->add_option("--out", pr.out, "Output model JSON")->required();

  DenoiseArgs dn;
  auto* s_den = app.add_subcommand("denoise", "Apply x - gamma Psi(x) to signals (CSV) or an image (PGM)");
  s_den->add_option("--model", dn.model, "Model JSON")->required()->check(CLI::ExistingFile);
  s_den->add_option("--in", dn.in, "Input .csv or .pgm")->required();
  s_den->add_option("--out", dn.out, "Output file, same format")->required();
  s_den->add_option("--extend", dn.extend, "Run on a larger grid: M (signals) or HxW (images)");

  PnPArgs pp;
  auto* s_pnp = app.add_subcommand("pnp", "Plug-and-play FBS or ADMM with a cPNN denoiser");
  s_pnp->add_option("--solver", pp.solver, "fbs or admm")->check(CLI::IsMember({"fbs", "admm"}));
  s_pnp->add_option("--task", pp.task, "denoise or deblur")->check(CLI::IsMember({"denoise", "deblur"}));
  s_pnp->add_option("--model", pp.model, "Model JSON")->required()->check(CLI::ExistingFile);
  s_pnp->add_option("--in", pp.in, "Observation .csv (signals) or .pgm (image)")->required();
  s_pnp->add_option("--out", pp.out, "Reconstruction output, same format");
  s_pnp->add_option("--truth", pp.truth, "Ground truth for PSNR reporting");
  s_pnp->add_option("--eta", pp.eta, "Step (FBS) or penalty weight (ADMM), default 1");
  s_pnp->add_option("--gamma", pp.gamma, "Override the model's gamma");
  s_pnp->add_option("--oracle", pp.oracle, "Oracle x*: a file, 'smooth' (Gaussian-smoothed observation) or 'none'");
  s_pnp->add_option("--t", pp.t, "Averagedness constant of Psi used by the oracle denoiser");
  s_pnp->add_option("--smooth-sigma", pp.smooth_sigma, "Gaussian width of the smoothed oracle")->check(CLI::PositiveNumber);
  s_pnp->add_option("--max-iters", pp.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  s_pnp->add_option("--tol", pp.tol, "Stop when ||x_{r+1} - x_r|| <= tol")->check(CLI::NonNegativeNumber);
  s_pnp->add_option("--trace", pp.trace, "Trace CSV (suffixed _i for several signals)");
  s_pnp->add_flag("--unsafe", pp.unsafe, "Allow FBS step sizes outside (0, 2/L)");
  s_pnp->add_option("--tau", pp.tau, "Blur kernel width (deblur)")->check(CLI::PositiveNumber);
  s_pnp->add_option("--boundary", pp.boundary, "Blur boundary: periodic or valid")
      ->check(CLI::IsMember({"periodic", "valid"}));
  s_pnp->add_option("--extend", pp.extend, "Run the model on a larger grid: M or HxW");

  EstimateArgs es;
  auto* s_est = app.add_subcommand("estimate-averagedness", "Estimate the averagedness constant of Psi");
  s_est->add_option("--model", es.model, "Model JSON")->required()->check(CLI::ExistingFile);
  s_est->add_option("--samples", es.samples, "Sample points in [0,1]^m")->check(CLI::PositiveNumber);
  s_est->add_option("--grid", es.grid, "Grid step for t")->check(CLI::Range(1e-6, 0.5));
  s_est->add_option("--seed", es.seed, "Sampler seed");
  s_est->add_option("--power-iters", es.power_iters, "Power iteration steps")->check(CLI::PositiveNumber);
  s_est->add_option("--tol-spec", es.tol_spec, "Slack on the norm-1 test")->check(CLI::NonNegativeNumber);

  std::string orth_model;
  auto* s_orth = app.add_subcommand("check-orth", "Print per-layer orthogonality residuals");
  s_orth->add_option("--model", orth_model, "Model JSON")->required()->check(CLI::ExistingFile);

  CounterArgs ce;
  auto* s_ce = app.add_subcommand("counterexample", "Scalar ADMM divergence example");
  s_ce->add_option("--t", ce.t, "Averagedness constant in (1/2, 1]");
  s_ce->add_option("--a2", ce.a2, "Reflection weight in (0, 1)");
  s_ce->add_option("--iters", ce.iters, "Steps")->check(CLI::PositiveNumber);
  s_ce->add_option("--y0", ce.y0, "Initial y");
  s_ce->add_option("--trace", ce.trace, "Trace CSV");

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "PSNR table for matching files in two directories");
  s_eval->add_option("--pred", ev.pred, "Predictions directory")->required();
  s_eval->add_option("--truth", ev.truth, "Ground truth directory")->required();
  s_eval->add_option("--out", ev.out, "CSV output (default: stderr)");

  std::string command = "";
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    for (auto* s : app.get_subcommands()) command = s->get_name();
    err << "error: " << e.what() << "\n";
    out << dump_json(error_json(command, 1, "usage", e.what())) << "\n";
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  command = sub->get_name();
  try {
    json result;
    if (sub == s_gen) result = cmd_gen_data(gen, err);
    else if (sub == s_train) {
      tr.workers = workers;
      result = cmd_train(tr, err);
    } else if (sub == s_proj) {
      pr.workers = workers;
      result = cmd_project(pr, err);
    } else if (sub == s_den) result = cmd_denoise(dn, err);
    else if (sub == s_pnp) result = cmd_pnp(pp, err);
    else if (sub == s_est) {
      es.workers = workers;
      result = cmd_estimate(es, err);
    } else if (sub == s_orth) result = cmd_check_orth(orth_model, err);
    else if (sub == s_ce) result = cmd_counterexample(ce, err);
    else result = cmd_eval(ev, err);
    out << dump_json({{"schema_version", kSchemaVersion},
                      {"command", command},
                      {"status", "ok"},
                      {"exit_code", 0},
                      {"result", result}})
        << "\n";
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    out << dump_json(error_json(command, 1, "validation", e.what())) << "\n";
    return 1;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    out << dump_json(error_json(command, 1, "parse", e.what())) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    out << dump_json(error_json(command, 2, "runtime", e.what())) << "\n";
    return 2;
  }
}

} // namespace cpnn::cli
