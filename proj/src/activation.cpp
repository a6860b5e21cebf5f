#include "cpnn/network/activation.hpp"

#include "cpnn/error.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace cpnn {
namespace {

constexpr std::array<std::pair<ActivationKind, const char*>, 9> kNames{{
    {ActivationKind::linear, "linear"},
    {ActivationKind::relu, "relu"},
    {ActivationKind::prelu, "prelu"},
    {ActivationKind::salu, "salu"},
    {ActivationKind::bent_identity, "bent_identity"},
    {ActivationKind::soft_threshold, "soft_threshold"},
    {ActivationKind::elliot, "elliot"},
    {ActivationKind::isru, "isru"},
    {ActivationKind::isrlu, "isrlu"},
}};

} // namespace

std::string to_string(ActivationKind kind) {
  for (auto [k, n] : kNames)
    if (k == kind) return n;
  return "unknown";
}

ActivationKind activation_from_string(const std::string& name) {
  for (auto [k, n] : kNames)
    if (name == n) return k;
  throw ValidationError("unknown activation '" + name + "'");
}

bool has_alpha(ActivationKind kind) noexcept {
  return kind != ActivationKind::linear && kind != ActivationKind::relu;
}

void Activation::validate() const {
  if (!has_alpha(kind)) return;
  if (kind == ActivationKind::prelu) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw ValidationError("prelu: alpha must lie in [0, 1], got " + std::to_string(alpha));
    return;
  }
  if (!std::isfinite(alpha) || !(alpha > 0.0))
    throw ValidationError(to_string(kind) + ": alpha must be positive, got " + std::to_string(alpha));
}

double activate(const Activation& act, double x) noexcept {
  const double a = act.alpha;
  switch (act.kind) {
  case ActivationKind::linear: return x;
  case ActivationKind::relu: return x > 0.0 ? x : 0.0;
  case ActivationKind::prelu: return x > 0.0 ? x : a * x;
  case ActivationKind::salu: return x > a ? a : (x < -a ? -a : x);
  // shifted by alpha/2 so that sigma(0) = 0
  case ActivationKind::bent_identity: return 0.5 * (x + std::sqrt(x * x + a * a) - a);
  case ActivationKind::soft_threshold: return x > a ? x - a : (x < -a ? x + a : 0.0);
  case ActivationKind::elliot: return x / (std::abs(a * x) + 1.0);
  case ActivationKind::isru: return x / std::sqrt(a * a * x * x + 1.0);
  case ActivationKind::isrlu: return x >= 0.0 ? x : x / std::sqrt(a * a * x * x + 1.0);
  }
  return 0.0;
}

double activate_deriv(const Activation& act, double x) noexcept {
  const double a = act.alpha;
  switch (act.kind) {
  case ActivationKind::linear: return 1.0;
  case ActivationKind::relu: return x > 0.0 ? 1.0 : 0.0;
  case ActivationKind::prelu: return x > 0.0 ? 1.0 : a;
  case ActivationKind::salu: return (x > -a && x < a) ? 1.0 : 0.0;
  case ActivationKind::bent_identity: return 0.5 * (1.0 + x / std::sqrt(x * x + a * a));
  case ActivationKind::soft_threshold: return (x > a || x < -a) ? 1.0 : 0.0;
  case ActivationKind::elliot: {
    const double d = std::abs(a * x) + 1.0;
    return 1.0 / (d * d);
  }
  case ActivationKind::isru: return std::pow(a * a * x * x + 1.0, -1.5);
  case ActivationKind::isrlu: return x >= 0.0 ? 1.0 : std::pow(a * a * x * x + 1.0, -1.5);
  }
  return 0.0;
}

double activate_alpha_deriv(const Activation& act, double x) noexcept {
  const double a = act.alpha;
  switch (act.kind) {
  case ActivationKind::linear:
  case ActivationKind::relu: return 0.0;
  case ActivationKind::prelu: return x > 0.0 ? 0.0 : x;
  case ActivationKind::salu: return x > a ? 1.0 : (x < -a ? -1.0 : 0.0);
  case ActivationKind::bent_identity: return 0.5 * (a / std::sqrt(x * x + a * a) - 1.0);
  case ActivationKind::soft_threshold: return x > a ? -1.0 : (x < -a ? 1.0 : 0.0);
  case ActivationKind::elliot: {
    const double d = std::abs(a * x) + 1.0;
    return -x * std::abs(x) / (d * d);
  }
  case ActivationKind::isru: return -a * x * x * x * std::pow(a * a * x * x + 1.0, -1.5);
  case ActivationKind::isrlu: return x >= 0.0 ? 0.0 : -a * x * x * x * std::pow(a * a * x * x + 1.0, -1.5);
  }
  return 0.0;
}

} // namespace cpnn
