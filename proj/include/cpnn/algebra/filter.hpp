#pragma once

#include <span>
#include <vector>

namespace cpnn {

/// A single 1-D filter acting on periodic signals of length `period`.
///
/// Taps are indexed by integer offsets lo()..hi(). A limited filter has
/// lo = -l, hi = l. A full-length filter carries one coefficient per residue
/// mod m: lo = -floor((m-1)/2), hi = lo + m - 1 (so even m gets the extra tap
/// at +m/2). The first column of Circ_m(a) holds a_k at row k mod m.
class Filter {
public:
  Filter() = default;
  /// Limited filter with taps a_{-l}..a_l.
  Filter(int period, int half_width, std::vector<double> taps);

  static Filter zeros(int period, int half_width);
  static Filter full(int period, std::vector<double> taps);
  /// Full-length filter from the first column of its circulant matrix.
  static Filter from_column(std::span<const double> column);
  static Filter impulse(int period, int half_width, int offset, double value = 1.0);

  int period() const noexcept { return period_; }
  int half_width() const noexcept { return half_width_; }
  bool is_full() const noexcept { return static_cast<int>(taps_.size()) == period_; }
  int lo() const noexcept { return lo_; }
  int hi() const noexcept { return lo_ + static_cast<int>(taps_.size()) - 1; }
  std::size_t size() const noexcept { return taps_.size(); }

  /// Tap at offset k; zero outside the support (full filters wrap mod m).
  double tap(int k) const noexcept;
  std::span<const double> taps() const noexcept { return taps_; }
  std::span<double> taps() noexcept { return taps_; }

  /// First column of Circ_m(a).
  std::vector<double> column() const;

private:
  int period_ = 1;
  int half_width_ = 0;
  int lo_ = 0;
  std::vector<double> taps_{0.0};
};

/// Periodic convolution (f*a)_j = sum_k a_k f_{(j-k) mod m}.
std::vector<double> circ_apply(const Filter& a, std::span<const double> f);

/// Convolution with zero padding (banded Toeplitz matrix, no wraparound).
std::vector<double> toeplitz_apply(const Filter& a, std::span<const double> f);

/// Nearest signed unit tap s*e_j in the Frobenius sense: j maximises |a_j|,
/// s = sign(a_j). Ties resolve to the smallest offset. Throws
/// ValidationError for the zero filter, where every signed tap is optimal.
Filter unit_filter_project(const Filter& a);

} // namespace cpnn
