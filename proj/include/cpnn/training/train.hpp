#pragma once

#include "cpnn/data/data.hpp"
#include "cpnn/network/network.hpp"
#include "cpnn/training/projection.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace cpnn {

enum class TrainMode { full_filters, limited_filters };
enum class LrSchedule { constant, inv_sqrt };

std::string to_string(TrainMode mode);
std::string to_string(LrSchedule schedule);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  TrainMode mode = TrainMode::limited_filters;

  // architecture
  int depth = 3;
  int m1 = 8;
  int m2 = 16;
  int half_width = 5; // l; ignored for full filters
  Activation activation{ActivationKind::relu, 1.0};
  double gamma = 1.0;

  // optimizer
  int batch_size = 32;
  double lr = 1e-3;
  LrSchedule schedule = LrSchedule::constant;
  int epochs = 10;
  std::uint64_t seed = 1;
  std::string loss = "squared_l2";
  double mu = -1.0; // < 0: 1e2 / (m1 m2)
  double lambda = 1e4;
  int projection_iters = 5000;
  AdamParams adam;

  int workers = 1;
  int checkpoint_every = 0; // epochs; 0 disables
  std::filesystem::path checkpoint_dir;

  double effective_mu() const { return mu < 0.0 ? 1e2 / (m1 * m2) : mu; }
  double lr_at(int step) const; // step counts from 1
  /// Throws ValidationError.
  void validate() const;
};

nlohmann::json config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;          // mean of the batch losses seen during the epoch
  double penalty = 0.0;       // mu sum_k ||T'^T T' - I||^2 at epoch end (limited mode)
  double max_gram_residual = 0.0;
  double wall_seconds = 0.0;
  int skipped_steps = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double max_step_gram_residual = 0.0; // full mode: max over every step
  std::vector<std::string> events;
  // limited mode
  double loss_before_projection = 0.0;
  double loss_after_projection = 0.0;
  std::vector<double> residual_before_projection;
  std::vector<double> residual_after_projection;
  std::vector<int> projection_iterations;
  // validation split, if given
  bool has_validation = false;
  double validation_psnr = 0.0;
  double validation_psnr_input = 0.0;
  double total_seconds = 0.0;
};

nlohmann::json epoch_to_json(const EpochRecord& r);
nlohmann::json report_to_json(const TrainReport& r);
/// One JSON object per epoch, then a summary line.
void write_report_jsonl(const std::filesystem::path& path, const TrainReport& r);

/// Geometry of the layers described by the config for samples of the dataset.
BankGeometry config_geometry(const TrainConfig& c, const Dataset& data);

/// Full filters: random taps pushed onto the manifold. Limited filters: taps
/// i.i.d. N(0, 1/(max(m1, m2) (2l+1))). Zero biases, activation alpha from the config.
NetworkParams init_network(const TrainConfig& c, const BankGeometry& geometry);

/// H = (1/N) sum_i ||gamma Psi(x_i) - eps_i||^2 with eps_i = noisy_i - clean_i.
double loss_eval(const NetworkParams& net, const Dataset& data, int workers = 1);

struct BatchGradient {
  double loss = 0.0; // mean over the batch
  GradientBundle grad;
};

/// Loss and gradient over the samples `indices`, evaluated in fixed chunks and
/// reduced by a pairwise tree in chunk order, so the result does not depend on
/// the worker count.
BatchGradient batch_gradient(const NetworkParams& net, const Dataset& data, const std::vector<int>& indices,
                             int workers = 1);

struct StepInfo {
  bool skipped = false; // non-finite gradient
  bool alpha_clamped = false;
};

/// One Riemannian step: T by the enlarged Cayley retraction of -tau G (G the
/// Euclidean matrix gradient, block circulant), b by a Euclidean step, alpha by
/// the exponential map. Full-length filters only.
StepInfo sgd_manifold_step(NetworkParams& net, const GradientBundle& grad, double tau);

struct AdamState {
  std::vector<Vector> m_taps, v_taps, m_bias, v_bias;
  int step = 0;

  static AdamState zeros_like(const NetworkParams& net);
};

/// Adam update of taps and biases on the gradient of H + mu sum_k P(T_k), alpha
/// by the exponential map with the plain gradient.
StepInfo adam_step(NetworkParams& net, AdamState& state, const GradientBundle& grad, double lr, const AdamParams& p);

/// Called after every epoch; return false to stop early.
using EpochCallback = std::function<bool(const EpochRecord&, const NetworkParams&)>;

struct TrainResult {
  NetworkParams net;
  TrainReport report;
};

TrainResult train_full(const Dataset& data, const TrainConfig& c, const Dataset* validation = nullptr,
                       const EpochCallback& on_epoch = {});
/// Stage 1 only: penalized Adam training without projection.
TrainResult train_limited_stage1(const Dataset& data, const TrainConfig& c, const EpochCallback& on_epoch = {});
/// Stage 1 followed by project_filters on every layer.
TrainResult train_limited(const Dataset& data, const TrainConfig& c, const Dataset* validation = nullptr,
                          const EpochCallback& on_epoch = {});
/// Dispatches on c.mode.
TrainResult train(const Dataset& data, const TrainConfig& c, const Dataset* validation = nullptr,
                  const EpochCallback& on_epoch = {});

/// Mean PSNR of denoise(net, noisy) against clean (signal or image form), and
/// of the noisy input itself.
struct PsnrSummary {
  double output = 0.0;
  double input = 0.0;
  double output_squared = 0.0; // squared-range signal form; equals output for images
  double input_squared = 0.0;
};
PsnrSummary evaluate_psnr(const NetworkParams& net, const Dataset& data, int workers = 1);

/// Runs f(i) for i in [0, n) on up to `workers` threads.
void parallel_for(int n, int workers, const std::function<void(int)>& f);

} // namespace cpnn
