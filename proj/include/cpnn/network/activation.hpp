#pragma once

#include <string>

namespace cpnn {

enum class ActivationKind {
  linear,
  relu,
  prelu,
  salu,
  bent_identity,
  soft_threshold,
  elliot,
  isru,
  isrlu,
};

std::string to_string(ActivationKind kind);
/// Throws ValidationError on unknown names.
ActivationKind activation_from_string(const std::string& name);

/// Whether the kind carries a trainable alpha.
bool has_alpha(ActivationKind kind) noexcept;

/// Stable activation sigma_alpha. Every kind satisfies sigma(0) = 0 and is
/// monotone with slopes in [0, 1].
struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double alpha = 1.0;

  /// alpha > 0 and finite; prelu needs alpha in [0, 1] instead.
  void validate() const;
};

double activate(const Activation& act, double x) noexcept;
/// d sigma / dx. At kinks: relu'(0) = 0, soft_threshold'(+-alpha) = 0,
/// salu'(+-alpha) = 0, prelu'(0) = alpha.
double activate_deriv(const Activation& act, double x) noexcept;
/// d sigma / d alpha (zero for kinds without alpha).
double activate_alpha_deriv(const Activation& act, double x) noexcept;

} // namespace cpnn
