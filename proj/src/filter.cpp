#include "cpnn/algebra/filter.hpp"

#include "cpnn/error.hpp"

#include <cmath>
#include <string>

namespace cpnn {

Filter::Filter(int period, int half_width, std::vector<double> taps)
    : period_(period), half_width_(half_width), lo_(-half_width), taps_(std::move(taps)) {
  if (period < 1) throw ValidationError("filter period must be >= 1");
  if (half_width < 0) throw ValidationError("filter half width must be >= 0");
  if (2 * half_width + 1 > period)
    throw ValidationError("filter length 2l+1 = " + std::to_string(2 * half_width + 1) +
                          " exceeds period " + std::to_string(period));
  if (static_cast<int>(taps_.size()) != 2 * half_width + 1)
    throw DimensionError("filter expects 2l+1 taps");
  for (double t : taps_)
    if (!std::isfinite(t)) throw ValidationError("filter taps must be finite");
}

Filter Filter::zeros(int period, int half_width) {
  return Filter(period, half_width, std::vector<double>(2 * std::max(half_width, 0) + 1, 0.0));
}

Filter Filter::full(int period, std::vector<double> taps) {
  if (period < 1) throw ValidationError("filter period must be >= 1");
  if (static_cast<int>(taps.size()) != period)
    throw DimensionError("full-length filter expects m taps");
  for (double t : taps)
    if (!std::isfinite(t)) throw ValidationError("filter taps must be finite");
  Filter f;
  f.period_ = period;
  f.half_width_ = (period - 1) / 2;
  f.lo_ = -f.half_width_;
  f.taps_ = std::move(taps);
  return f;
}

Filter Filter::from_column(std::span<const double> column) {
  const int m = static_cast<int>(column.size());
  if (m < 1) throw DimensionError("empty column");
  std::vector<double> taps(m);
  const int lo = -((m - 1) / 2);
  for (int i = 0; i < m; ++i) taps[i] = column[((lo + i) % m + m) % m];
  return full(m, std::move(taps));
}

Filter Filter::impulse(int period, int half_width, int offset, double value) {
  Filter f = zeros(period, half_width);
  if (offset < f.lo() || offset > f.hi()) throw ValidationError("impulse offset outside support");
  f.taps_[offset - f.lo_] = value;
  return f;
}

double Filter::tap(int k) const noexcept {
  if (is_full()) k = lo_ + (((k - lo_) % period_) + period_) % period_;
  if (k < lo_ || k > hi()) return 0.0;
  return taps_[k - lo_];
}

std::vector<double> Filter::column() const {
  std::vector<double> col(period_, 0.0);
  for (int k = lo_; k <= hi(); ++k) col[((k % period_) + period_) % period_] += taps_[k - lo_];
  return col;
}

std::vector<double> circ_apply(const Filter& a, std::span<const double> f) {
  const int m = a.period();
  if (static_cast<int>(f.size()) != m)
    throw DimensionError("circ_apply: signal length " + std::to_string(f.size()) +
                         " != period " + std::to_string(m));
  std::vector<double> out(m, 0.0);
  for (int k = a.lo(); k <= a.hi(); ++k) {
    const double w = a.tap(k);
    if (w == 0.0) continue;
    const int s = ((k % m) + m) % m;
    for (int j = 0; j < m; ++j) {
      int src = j - s;
      if (src < 0) src += m;
      out[j] += w * f[src];
    }
  }
  return out;
}

std::vector<double> toeplitz_apply(const Filter& a, std::span<const double> f) {
  const int m = a.period();
  if (static_cast<int>(f.size()) != m)
    throw DimensionError("toeplitz_apply: signal length " + std::to_string(f.size()) +
                         " != period " + std::to_string(m));
  std::vector<double> out(m, 0.0);
  for (int k = a.lo(); k <= a.hi(); ++k) {
    const double w = a.tap(k);
    if (w == 0.0) continue;
    for (int j = std::max(0, k); j < std::min(m, m + k); ++j) out[j] += w * f[j - k];
  }
  return out;
}

Filter unit_filter_project(const Filter& a) {
  int best = a.lo();
  double best_abs = -1.0;
  for (int k = a.lo(); k <= a.hi(); ++k) {
    const double v = std::abs(a.tap(k));
    if (v > best_abs) {
      best_abs = v;
      best = k;
    }
  }
  if (best_abs <= 0.0) throw ValidationError("unit_filter_project: zero filter has no unique projection");
  Filter out = a;
  for (double& t : out.taps()) t = 0.0;
  out.taps()[best - a.lo()] = a.tap(best) > 0 ? 1.0 : -1.0;
  return out;
}

} // namespace cpnn
