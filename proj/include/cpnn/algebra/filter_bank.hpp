#pragma once

#include "cpnn/algebra/filter.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <span>
#include <vector>

namespace cpnn {

using DenseMatrix = Eigen::MatrixXd;
using Vector = std::vector<double>;

/// Shape of one block-circulant layer matrix T in R^{m1*P x m2*P}, where
/// P = height*width is the number of grid points per channel. Signals are
/// stored as a single row (height 1, width m); images as height x width with
/// 2-D periodic (circulant-of-circulant) blocks.
struct BankGeometry {
  int m1 = 1;
  int m2 = 1;
  int height = 1;
  int width = 1;
  int row_half = 0; // l in the vertical direction, 0 for signals
  int col_half = 0; // l in the horizontal direction
  bool full = false; // full-length 1-D filters, one tap per residue

  int dims() const noexcept { return height > 1 || row_half > 0 ? 2 : 1; }
  int pixels() const noexcept { return height * width; }
  int tap_rows() const noexcept { return 2 * row_half + 1; }
  int tap_cols() const noexcept { return full ? width : 2 * col_half + 1; }
  int row_lo() const noexcept { return -row_half; }
  int col_lo() const noexcept { return full ? -((width - 1) / 2) : -col_half; }
  int taps_per_filter() const noexcept { return tap_rows() * tap_cols(); }
  int rows() const noexcept { return m1 * pixels(); }
  int cols() const noexcept { return m2 * pixels(); }

  /// Throws ValidationError on inconsistent fields.
  void validate() const;

  bool operator==(const BankGeometry&) const = default;

  static BankGeometry signal(int m, int m1, int m2, int l);
  static BankGeometry full_signal(int m, int m1, int m2);
  static BankGeometry image(int height, int width, int m1, int m2, int l);
};

/// The filters a^{(j,k)} of one block-circulant matrix, block (j,k) being
/// Circ(a^{(j,k)}). Taps of one filter are contiguous, row-major over
/// (row offset, column offset).
class FilterBank {
public:
  FilterBank() = default;
  explicit FilterBank(const BankGeometry& geometry);

  const BankGeometry& geometry() const noexcept { return geom_; }
  int m1() const noexcept { return geom_.m1; }
  int m2() const noexcept { return geom_.m2; }
  int pixels() const noexcept { return geom_.pixels(); }
  int rows() const noexcept { return geom_.rows(); }
  int cols() const noexcept { return geom_.cols(); }
  /// n >= d, i.e. T itself (not its transpose) is the Stiefel candidate.
  bool tall() const noexcept { return geom_.m1 >= geom_.m2; }

  std::span<double> filter(int j, int k) noexcept;
  std::span<const double> filter(int j, int k) const noexcept;

  /// Tap at (row offset, column offset); zero outside the support.
  double tap(int j, int k, int dr, int dc) const noexcept;
  double& tap_ref(int j, int k, int dr, int dc);

  /// 1-D convenience accessors.
  Filter filter_1d(int j, int k) const;
  void set_filter(int j, int k, const Filter& f);

  std::vector<double>& data() noexcept { return taps_; }
  const std::vector<double>& data() const noexcept { return taps_; }

  /// Bank of T^T: blocks swapped, offsets negated.
  FilterBank transposed() const;
  /// T' (T if n >= d, else T^T).
  FilterBank oriented() const { return tall() ? *this : transposed(); }

  /// Same geometry with every filter extended to full length (1-D only).
  FilterBank to_full() const;

  FilterBank& operator+=(const FilterBank& other);
  FilterBank& operator*=(double s);
  friend FilterBank operator+(FilterBank a, const FilterBank& b) { return a += b; }
  friend FilterBank operator-(FilterBank a, const FilterBank& b);
  friend FilterBank operator*(double s, FilterBank a) { return a *= s; }

  /// Frobenius norm of the tap vector (not of the matrix).
  double tap_norm() const;

private:
  int index(int j, int k) const noexcept { return (j * geom_.m2 + k) * geom_.taps_per_filter(); }
  int tap_index(int dr, int dc) const noexcept;

  BankGeometry geom_;
  std::vector<double> taps_;
};

/// y = T x, x of length m2*P, channel-major.
Vector bcirc_apply(const FilterBank& bank, std::span<const double> x);
/// x = T^T y via periodic cross-correlation.
Vector bcirc_apply_adjoint(const FilterBank& bank, std::span<const double> y);

/// Dense T. Capped at 4e6 entries (DimensionError beyond).
DenseMatrix to_dense(const FilterBank& bank);

/// Periodic lag correlations C[s1][s2][lag] = sum_t sum_k a_k^{(t,s1)} b_{k+lag}^{(t,s2)},
/// lags taken modulo the grid. For b == a, block (s1,s2) of T^T T is Circ(C[s1][s2]).
struct LagCorrelation {
  int channels = 0; // m2
  int height = 1;
  int width = 1;
  std::vector<double> values; // [s1][s2][row lag][col lag]

  double& at(int s1, int s2, int r, int c) { return values[((s1 * channels + s2) * height + r) * width + c]; }
  double at(int s1, int s2, int r, int c) const { return values[((s1 * channels + s2) * height + r) * width + c]; }
};

LagCorrelation lag_correlation(const FilterBank& a, const FilterBank& b);

/// ||T'^T T' - I||_F without materialising T (T' per the tall/wide convention).
double gram_residual(const FilterBank& bank);

/// Root-sum-square deviation of the filter cross-correlations alpha_u^{(s1,s2)}
/// (u = 0..2l, plus the half-plane of lags in 2-D) from delta_{s1 s2} delta_{u0}.
/// Requires every grid side >= 4l+1; throws ValidationError otherwise.
double filter_orthogonality_residual(const FilterBank& bank);

/// JSON form {m, m1, m2, l, filters: [[taps...]...]} (plus d1, d2 for images and
/// full: true for full-length filters, whose taps run over lo..lo+m-1).
nlohmann::json bank_to_json(const FilterBank& bank);
FilterBank bank_from_json(const nlohmann::json& j);

} // namespace cpnn
