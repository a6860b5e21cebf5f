#include "conv_kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <vector>

namespace cpnn::detail {
namespace {

using Mat = Eigen::MatrixXd;
using Stride = Eigen::OuterStride<>;
using ConstView = Eigen::Map<const Mat, 0, Stride>;
using View = Eigen::Map<Mat, 0, Stride>;

// Periodic copy of one channel with `top`/`bottom` extra rows and
// `left`/`right` extra columns (each column holding `batch` values).
struct Padded {
  std::vector<double> buf;
  int top = 0, left = 0;
  std::size_t row_len = 0; // padded row length in doubles

  const double* at(int row, int col, int batch) const {
    return buf.data() + static_cast<std::size_t>(row + top) * row_len + static_cast<std::size_t>(col + left) * batch;
  }
};

Padded pad(const double* src, int h, int w, int batch, int top, int bottom, int left, int right) {
  Padded p;
  p.top = top;
  p.left = left;
  const int ph = h + top + bottom, pw = w + left + right;
  p.row_len = static_cast<std::size_t>(pw) * batch;
  p.buf.resize(static_cast<std::size_t>(ph) * p.row_len);
  for (int r = 0; r < ph; ++r) {
    const int sr = (((r - top) % h) + h) % h;
    double* dst = p.buf.data() + static_cast<std::size_t>(r) * p.row_len;
    for (int c = 0; c < pw; ++c) {
      const int sc = (((c - left) % w) + w) % w;
      std::copy_n(src + (static_cast<std::size_t>(sr) * w + sc) * batch, batch, dst + static_cast<std::size_t>(c) * batch);
    }
  }
  return p;
}

struct Offsets {
  int rlo, rhi, clo, chi;
};

Offsets offsets(const BankGeometry& g) {
  return {g.row_lo(), g.row_lo() + g.tap_rows() - 1, g.col_lo(), g.col_lo() + g.tap_cols() - 1};
}

// Column t of the window matrix is the row `row` shifted by `first + t`
// columns: entries row[(c + first + t) * batch + s].
ConstView windows(const Padded& p, int row, int first, int count, int width, int batch) {
  return ConstView(p.at(row, first, batch), static_cast<Eigen::Index>(width) * batch, count, Stride(batch));
}

} // namespace

void conv_forward(const FilterBank& bank, const double* x, double* y, int batch) {
  const BankGeometry& g = bank.geometry();
  const int h = g.height, w = g.width, tr = g.tap_rows(), tc = g.tap_cols();
  const std::size_t chan = static_cast<std::size_t>(g.pixels()) * batch, row = static_cast<std::size_t>(w) * batch;
  const Offsets o = offsets(g);
  // y[p] += a_d x[p - d]; window column t reads x[p - chi + t], i.e. d = chi - t.
  Mat wt(tc, g.m1);
  for (int k = 0; k < g.m2; ++k) {
    const Padded xp = pad(x + k * chan, h, w, batch, std::max(o.rhi, 0), std::max(-o.rlo, 0), std::max(o.chi, 0),
                          std::max(-o.clo, 0));
    for (int r = 0; r < tr; ++r) {
      bool any = false;
      for (int j = 0; j < g.m1; ++j) {
        const auto taps = bank.filter(j, k);
        for (int t = 0; t < tc; ++t) any |= (wt(t, j) = taps[r * tc + (tc - 1 - t)]) != 0.0;
      }
      if (!any) continue;
      const int dr = o.rlo + r;
      for (int r0 = 0; r0 < h; ++r0) {
        View out(y + r0 * row, static_cast<Eigen::Index>(row), g.m1, Stride(chan));
        out.noalias() += windows(xp, r0 - dr, -o.chi, tc, w, batch) * wt;
      }
    }
  }
}

void conv_adjoint(const FilterBank& bank, const double* y, double* x, int batch) {
  const BankGeometry& g = bank.geometry();
  const int h = g.height, w = g.width, tr = g.tap_rows(), tc = g.tap_cols();
  const std::size_t chan = static_cast<std::size_t>(g.pixels()) * batch, row = static_cast<std::size_t>(w) * batch;
  const Offsets o = offsets(g);
  // x[p] += a_d y[p + d]; window column t reads y[p + clo + t], i.e. d = clo + t.
  Mat wt(tc, g.m2);
  for (int j = 0; j < g.m1; ++j) {
    const Padded yp = pad(y + j * chan, h, w, batch, std::max(-o.rlo, 0), std::max(o.rhi, 0), std::max(-o.clo, 0),
                          std::max(o.chi, 0));
    for (int r = 0; r < tr; ++r) {
      bool any = false;
      for (int k = 0; k < g.m2; ++k) {
        const auto taps = bank.filter(j, k);
        for (int t = 0; t < tc; ++t) any |= (wt(t, k) = taps[r * tc + t]) != 0.0;
      }
      if (!any) continue;
      const int dr = o.rlo + r;
      for (int r0 = 0; r0 < h; ++r0) {
        View out(x + r0 * row, static_cast<Eigen::Index>(row), g.m2, Stride(chan));
        out.noalias() += windows(yp, r0 + dr, o.clo, tc, w, batch) * wt;
      }
    }
  }
}

void conv_tap_grad(const BankGeometry& g, const double* a, const double* b_in, int batch, double* grad) {
  const int h = g.height, w = g.width, tr = g.tap_rows(), tc = g.tap_cols(), per = g.taps_per_filter();
  const std::size_t chan = static_cast<std::size_t>(g.pixels()) * batch, row = static_cast<std::size_t>(w) * batch;
  const Offsets o = offsets(g);
  // grad_d += sum_p a[p] b[p - d]; window column t has d = chi - t.
  Mat acc(tc, g.m1);
  for (int k = 0; k < g.m2; ++k) {
    const Padded bp = pad(b_in + k * chan, h, w, batch, std::max(o.rhi, 0), std::max(-o.rlo, 0), std::max(o.chi, 0),
                          std::max(-o.clo, 0));
    for (int r = 0; r < tr; ++r) {
      acc.setZero();
      const int dr = o.rlo + r;
      for (int r0 = 0; r0 < h; ++r0) {
        const ConstView aj(a + r0 * row, static_cast<Eigen::Index>(row), g.m1, Stride(chan));
        acc.noalias() += windows(bp, r0 - dr, -o.chi, tc, w, batch).transpose() * aj;
      }
      for (int j = 0; j < g.m1; ++j) {
        double* gjk = grad + (j * g.m2 + k) * per + r * tc;
        for (int t = 0; t < tc; ++t) gjk[tc - 1 - t] += acc(t, j);
      }
    }
  }
}

} // namespace cpnn::detail
