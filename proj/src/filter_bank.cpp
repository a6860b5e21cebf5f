#include "cpnn/algebra/filter_bank.hpp"

#include "conv_kernels.hpp"
#include "cpnn/error.hpp"

#include <cmath>
#include <string>

namespace cpnn {

void BankGeometry::validate() const {
  if (m1 < 1 || m2 < 1) throw ValidationError("filter bank needs m1, m2 >= 1");
  if (height < 1 || width < 1) throw ValidationError("grid sides must be >= 1");
  if (row_half < 0 || col_half < 0) throw ValidationError("filter half widths must be >= 0");
  if (full) {
    if (height != 1 || row_half != 0)
      throw ValidationError("full-length filters are supported for signals only");
    if (col_half != (width - 1) / 2) throw ValidationError("full-length filter must have l = floor((m-1)/2)");
    return;
  }
  if (2 * col_half + 1 > width)
    throw ValidationError("filter length 2l+1 = " + std::to_string(2 * col_half + 1) +
                          " exceeds signal length " + std::to_string(width));
  if (2 * row_half + 1 > height)
    throw ValidationError("filter height exceeds image height");
}

BankGeometry BankGeometry::signal(int m, int m1, int m2, int l) {
  BankGeometry g{m1, m2, 1, m, 0, l, false};
  g.validate();
  return g;
}

BankGeometry BankGeometry::full_signal(int m, int m1, int m2) {
  BankGeometry g{m1, m2, 1, m, 0, (m - 1) / 2, true};
  g.validate();
  return g;
}

BankGeometry BankGeometry::image(int height, int width, int m1, int m2, int l) {
  BankGeometry g{m1, m2, height, width, l, l, false};
  g.validate();
  return g;
}

FilterBank::FilterBank(const BankGeometry& geometry) : geom_(geometry) {
  geom_.validate();
  taps_.assign(static_cast<std::size_t>(geom_.m1) * geom_.m2 * geom_.taps_per_filter(), 0.0);
}

std::span<double> FilterBank::filter(int j, int k) noexcept {
  return {taps_.data() + index(j, k), static_cast<std::size_t>(geom_.taps_per_filter())};
}

std::span<const double> FilterBank::filter(int j, int k) const noexcept {
  return {taps_.data() + index(j, k), static_cast<std::size_t>(geom_.taps_per_filter())};
}

int FilterBank::tap_index(int dr, int dc) const noexcept {
  const int r = dr - geom_.row_lo();
  if (r < 0 || r >= geom_.tap_rows()) return -1;
  int c = dc - geom_.col_lo();
  if (geom_.full) c = ((c % geom_.width) + geom_.width) % geom_.width;
  if (c < 0 || c >= geom_.tap_cols()) return -1;
  return r * geom_.tap_cols() + c;
}

double FilterBank::tap(int j, int k, int dr, int dc) const noexcept {
  const int t = tap_index(dr, dc);
  return t < 0 ? 0.0 : taps_[index(j, k) + t];
}

double& FilterBank::tap_ref(int j, int k, int dr, int dc) {
  const int t = tap_index(dr, dc);
  if (t < 0) throw ValidationError("tap offset outside filter support");
  return taps_[index(j, k) + t];
}

Filter FilterBank::filter_1d(int j, int k) const {
  if (geom_.dims() != 1) throw ValidationError("filter_1d on a 2-D bank");
  const auto f = filter(j, k);
  std::vector<double> taps(f.begin(), f.end());
  if (geom_.full) return Filter::full(geom_.width, std::move(taps));
  return Filter(geom_.width, geom_.col_half, std::move(taps));
}

void FilterBank::set_filter(int j, int k, const Filter& f) {
  if (geom_.dims() != 1 || f.period() != geom_.width || f.is_full() != geom_.full ||
      static_cast<int>(f.size()) != geom_.taps_per_filter())
    throw DimensionError("set_filter: filter does not match bank geometry");
  std::copy(f.taps().begin(), f.taps().end(), filter(j, k).begin());
}

FilterBank FilterBank::transposed() const {
  BankGeometry g = geom_;
  std::swap(g.m1, g.m2);
  FilterBank out(g);
  for (int j = 0; j < geom_.m1; ++j)
    for (int k = 0; k < geom_.m2; ++k)
      for (int r = 0; r < g.tap_rows(); ++r)
        for (int c = 0; c < g.tap_cols(); ++c) {
          const int dr = g.row_lo() + r, dc = g.col_lo() + c;
          out.filter(k, j)[r * g.tap_cols() + c] = tap(j, k, -dr, -dc);
        }
  return out;
}

FilterBank FilterBank::to_full() const {
  if (geom_.full) return *this;
  if (geom_.dims() != 1) throw ValidationError("full-length filters are supported for signals only");
  FilterBank out(BankGeometry::full_signal(geom_.width, geom_.m1, geom_.m2));
  for (int j = 0; j < geom_.m1; ++j)
    for (int k = 0; k < geom_.m2; ++k)
      for (int c = -geom_.col_half; c <= geom_.col_half; ++c) out.tap_ref(j, k, 0, c) += tap(j, k, 0, c);
  return out;
}

FilterBank& FilterBank::operator+=(const FilterBank& other) {
  if (!(geom_ == other.geom_)) throw DimensionError("filter bank geometries differ");
  for (std::size_t i = 0; i < taps_.size(); ++i) taps_[i] += other.taps_[i];
  return *this;
}

FilterBank& FilterBank::operator*=(double s) {
  for (double& t : taps_) t *= s;
  return *this;
}

FilterBank operator-(FilterBank a, const FilterBank& b) {
  a += -1.0 * b;
  return a;
}

double FilterBank::tap_norm() const {
  double s = 0.0;
  for (double t : taps_) s += t * t;
  return std::sqrt(s);
}

Vector bcirc_apply(const FilterBank& bank, std::span<const double> x) {
  if (static_cast<int>(x.size()) != bank.cols())
    throw DimensionError("bcirc_apply: input length " + std::to_string(x.size()) + " != " +
                         std::to_string(bank.cols()));
  Vector y(bank.rows(), 0.0);
  detail::conv_forward(bank, x.data(), y.data(), 1);
  return y;
}

Vector bcirc_apply_adjoint(const FilterBank& bank, std::span<const double> y) {
  if (static_cast<int>(y.size()) != bank.rows())
    throw DimensionError("bcirc_apply_adjoint: input length " + std::to_string(y.size()) + " != " +
                         std::to_string(bank.rows()));
  Vector x(bank.cols(), 0.0);
  detail::conv_adjoint(bank, y.data(), x.data(), 1);
  return x;
}

DenseMatrix to_dense(const FilterBank& bank) {
  const BankGeometry& g = bank.geometry();
  if (static_cast<double>(g.rows()) * g.cols() > 4e6)
    throw DimensionError("dense materialisation capped at 4e6 entries");
  DenseMatrix t = DenseMatrix::Zero(g.rows(), g.cols());
  const int h = g.height, w = g.width, p = g.pixels();
  for (int j = 0; j < g.m1; ++j)
    for (int k = 0; k < g.m2; ++k)
      for (int tr = 0; tr < g.tap_rows(); ++tr)
        for (int tc = 0; tc < g.tap_cols(); ++tc) {
          const double v = bank.filter(j, k)[tr * g.tap_cols() + tc];
          if (v == 0.0) continue;
          const int dr = g.row_lo() + tr, dc = g.col_lo() + tc;
          for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
              const int rs = ((r - dr) % h + h) % h, cs = ((c - dc) % w + w) % w;
              t(j * p + r * w + c, k * p + rs * w + cs) += v;
            }
        }
  return t;
}

LagCorrelation lag_correlation(const FilterBank& a, const FilterBank& b) {
  const BankGeometry& g = a.geometry();
  if (!(g == b.geometry())) throw DimensionError("lag_correlation: geometries differ");
  LagCorrelation out{g.m2, g.height, g.width, {}};
  out.values.assign(static_cast<std::size_t>(g.m2) * g.m2 * g.pixels(), 0.0);
  const int tr = g.tap_rows(), tc = g.tap_cols();
  // unwrapped lags (r2 - r1, c2 - c1) first, folded onto the grid afterwards
  const int lr_n = 2 * tr - 1, lc_n = 2 * tc - 1;
  std::vector<double> lin(static_cast<std::size_t>(lr_n) * lc_n);
  for (int s1 = 0; s1 < g.m2; ++s1)
    for (int s2 = 0; s2 < g.m2; ++s2) {
      std::fill(lin.begin(), lin.end(), 0.0);
      for (int t = 0; t < g.m1; ++t) {
        const auto fa = a.filter(t, s1);
        const auto fb = b.filter(t, s2);
        for (int r1 = 0; r1 < tr; ++r1)
          for (int c1 = 0; c1 < tc; ++c1) {
            const double va = fa[r1 * tc + c1];
            if (va == 0.0) continue;
            for (int r2 = 0; r2 < tr; ++r2) {
              double* dst = lin.data() + static_cast<std::size_t>(r2 - r1 + tr - 1) * lc_n + (tc - 1 - c1);
              const double* src = fb.data() + r2 * tc;
              for (int c2 = 0; c2 < tc; ++c2) dst[c2] += va * src[c2];
            }
          }
      }
      for (int qr = 0; qr < lr_n; ++qr) {
        const int lr = ((qr - (tr - 1)) % g.height + g.height) % g.height;
        for (int qc = 0; qc < lc_n; ++qc) {
          const int lc = ((qc - (tc - 1)) % g.width + g.width) % g.width;
          out.at(s1, s2, lr, lc) += lin[static_cast<std::size_t>(qr) * lc_n + qc];
        }
      }
    }
  return out;
}

double gram_residual(const FilterBank& bank) {
  const FilterBank t = bank.oriented();
  const LagCorrelation c = lag_correlation(t, t);
  double s = 0.0;
  for (int s1 = 0; s1 < c.channels; ++s1)
    for (int s2 = 0; s2 < c.channels; ++s2)
      for (int r = 0; r < c.height; ++r)
        for (int q = 0; q < c.width; ++q) {
          const double target = (s1 == s2 && r == 0 && q == 0) ? 1.0 : 0.0;
          const double e = c.at(s1, s2, r, q) - target;
          s += e * e;
        }
  return std::sqrt(s * t.pixels());
}

double filter_orthogonality_residual(const FilterBank& bank) {
  const FilterBank t = bank.oriented();
  const BankGeometry& g = t.geometry();
  if (g.full || g.width < 4 * g.col_half + 1 || (g.dims() == 2 && g.height < 4 * g.row_half + 1))
    throw ValidationError("filter orthogonality characterisation needs m >= 4l+1");
  const int lh = g.row_half, lw = g.col_half;
  double s = 0.0;
  for (int ur = 0; ur <= 2 * lh; ++ur)
    for (int uc = (ur == 0 ? 0 : -2 * lw); uc <= 2 * lw; ++uc)
      for (int s1 = 0; s1 < g.m2; ++s1)
        for (int s2 = 0; s2 < g.m2; ++s2) {
          // alpha_u = sum_t sum_k a_k^{(t,s1)} a_{k-u}^{(t,s2)}
          double alpha = 0.0;
          for (int tt = 0; tt < g.m1; ++tt)
            for (int kr = -lh; kr <= lh; ++kr)
              for (int kc = -lw; kc <= lw; ++kc) {
                const int jr = kr - ur, jc = kc - uc;
                if (jr < -lh || jr > lh || jc < -lw || jc > lw) continue;
                alpha += t.tap(tt, s1, kr, kc) * t.tap(tt, s2, jr, jc);
              }
          const double target = (s1 == s2 && ur == 0 && uc == 0) ? 1.0 : 0.0;
          s += (alpha - target) * (alpha - target);
        }
  return std::sqrt(s);
}

nlohmann::json bank_to_json(const FilterBank& bank) {
  const BankGeometry& g = bank.geometry();
  nlohmann::json j;
  j["m"] = g.dims() == 1 ? g.width : g.pixels();
  if (g.dims() == 2) {
    j["d1"] = g.height;
    j["d2"] = g.width;
  }
  j["m1"] = g.m1;
  j["m2"] = g.m2;
  j["l"] = g.col_half;
  if (g.full) j["full"] = true;
  nlohmann::json filters = nlohmann::json::array();
  for (int r = 0; r < g.m1; ++r)
    for (int c = 0; c < g.m2; ++c) {
      nlohmann::json taps = nlohmann::json::array();
      for (double v : bank.filter(r, c)) taps.push_back(v);
      filters.push_back(std::move(taps));
    }
  j["filters"] = std::move(filters);
  return j;
}

FilterBank bank_from_json(const nlohmann::json& j) {
  try {
    const int m1 = j.at("m1").get<int>(), m2 = j.at("m2").get<int>(), l = j.at("l").get<int>();
    const auto& filters = j.at("filters");
    if (!filters.is_array() || static_cast<int>(filters.size()) != m1 * m2)
      throw ParseError("filter bank: expected m1*m2 filters");
    BankGeometry g;
    if (j.contains("d1")) {
      g = BankGeometry::image(j.at("d1").get<int>(), j.at("d2").get<int>(), m1, m2, l);
    } else {
      const int m = j.at("m").get<int>();
      const std::size_t len = filters.empty() ? 0 : filters[0].size();
      const bool full = j.contains("full") ? j.at("full").get<bool>() : (static_cast<int>(len) == m && 2 * l + 1 != m);
      if (full)
        g = BankGeometry::full_signal(m, m1, m2);
      else
        g = BankGeometry::signal(m, m1, m2, l);
    }
    FilterBank bank(g);
    for (int r = 0; r < m1; ++r)
      for (int c = 0; c < m2; ++c) {
        const auto& taps = filters[r * m2 + c];
        if (static_cast<int>(taps.size()) != g.taps_per_filter())
          throw ParseError("filter bank: filter (" + std::to_string(r) + "," + std::to_string(c) +
                           ") has " + std::to_string(taps.size()) + " taps, expected " +
                           std::to_string(g.taps_per_filter()));
        auto dst = bank.filter(r, c);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = taps[i].get<double>();
      }
    return bank;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("filter bank: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("filter bank: ") + e.what());
  }
}

} // namespace cpnn
