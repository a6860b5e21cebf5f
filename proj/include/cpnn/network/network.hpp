#pragma once

#include "cpnn/algebra/filter_bank.hpp"
#include "cpnn/network/activation.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cpnn {

/// One building block T^T sigma(T x + b (x) 1).
struct Layer {
  FilterBank bank;
  Vector bias; // length m1, replicated over the grid
  Activation act;
};

/// K building blocks with identical geometry and activation kind, plus the
/// fixed scale gamma of the residual denoiser x - gamma Psi(x).
struct NetworkParams {
  std::vector<Layer> layers;
  double gamma = 1.0;

  int depth() const noexcept { return static_cast<int>(layers.size()); }
  const BankGeometry& geometry() const { return layers.front().bank.geometry(); }
  /// Grid points of one channel (m for signals, d1*d2 for images).
  int pixels() const { return geometry().pixels(); }
  int m1() const { return geometry().m1; }
  int m2() const { return geometry().m2; }

  /// Shapes, biases, activations and gamma. Throws ValidationError.
  void validate() const;
  double max_gram_residual() const;
  /// Every layer within eps of the Stiefel manifold, so the network is
  /// averaged with parameter K/(K+1).
  bool certified(double eps = 1e-8) const { return max_gram_residual() <= eps; }
  std::uint64_t fingerprint() const;
};

/// Zero filters, zero biases; alpha shared by all layers.
NetworkParams make_network(const BankGeometry& geometry, int depth, Activation act, double gamma = 1.0);

/// Euclidean gradients, shaped like NetworkParams.
struct GradientBundle {
  std::vector<Vector> taps; // per layer, FilterBank::data() layout
  std::vector<Vector> bias;
  Vector alpha;

  static GradientBundle zeros_like(const NetworkParams& net);
  GradientBundle& operator+=(const GradientBundle& other);
  GradientBundle& operator*=(double s);
  double norm() const;
  bool all_finite() const;
};

/// Per-layer inputs and pre-activations of one batched forward pass.
struct Tape {
  int batch = 0;
  std::uint64_t fingerprint = 0;
  std::vector<Vector> inputs;
  std::vector<Vector> pre;
};

// Batched entry points. A batch of B samples with C channels is laid out
// [channel][pixel][sample], the sample index running fastest.

/// Phi(x) for m2-channel inputs.
Vector forward_batch(const NetworkParams& net, std::span<const double> x, int batch, Tape* tape = nullptr);
/// Gradients of <grad_out, Phi(x)>; optionally also d/dx.
GradientBundle backward_batch(const NetworkParams& net, const Tape& tape, std::span<const double> grad_out,
                              Vector* grad_in = nullptr);

/// Psi(x) = A^T Phi(A x) for single-channel inputs, A = (I;...;I)/sqrt(m2).
Vector lift_denoise_batch(const NetworkParams& net, std::span<const double> x, int batch, Tape* tape = nullptr);
/// Backward through the lift: takes dL/dPsi, returns the bundle and optionally dL/dx.
GradientBundle lift_backward_batch(const NetworkParams& net, const Tape& tape, std::span<const double> grad_psi,
                                   Vector* grad_in = nullptr);
/// x - gamma Psi(x).
Vector denoise_batch(const NetworkParams& net, std::span<const double> x, int batch);

// Single-sample conveniences.
Vector building_block(const Layer& layer, std::span<const double> x);
Vector forward(const NetworkParams& net, std::span<const double> x, Tape* tape = nullptr);
GradientBundle backward(const NetworkParams& net, const Tape& tape, std::span<const double> grad_out,
                        Vector* grad_in = nullptr);
Vector lift_denoise(const NetworkParams& net, std::span<const double> x);
Vector denoise(const NetworkParams& net, std::span<const double> x);
/// (dPsi/dx)^T v at x.
Vector lift_denoise_vjp(const NetworkParams& net, std::span<const double> x, std::span<const double> v);

/// Samples (each of `pixels` values) into one channel of batch layout and back.
Vector pack_batch(const std::vector<Vector>& samples);
std::vector<Vector> unpack_batch(std::span<const double> x, int batch);

/// Re-interprets the taps on a longer signal (filters padded with zeros,
/// biases replicated over the new grid). Throws ValidationError if shrinking.
NetworkParams extend(const NetworkParams& net, int new_m);
NetworkParams extend(const NetworkParams& net, int new_height, int new_width);

/// Checkpoint document, version 1.
nlohmann::json network_to_json(const NetworkParams& net);
NetworkParams network_from_json(const nlohmann::json& j);
void save_network(const std::filesystem::path& path, const NetworkParams& net);
NetworkParams load_network(const std::filesystem::path& path);

} // namespace cpnn
