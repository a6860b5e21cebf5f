#pragma once

// Batched periodic convolution kernels. Buffers are laid out
// [channel][pixel][batch] with the batch index innermost. Each channel is
// copied once into a periodically padded buffer; the shifted copies of one
// grid row then form an overlapping strided matrix, and every tap row turns
// into a small GEMM over all output channels.

#include "cpnn/algebra/filter_bank.hpp"

#include <cstddef>

namespace cpnn::detail {

/// Calls f(dst_offset, src_offset, length) for the contiguous runs that realise
/// dst[r][c] <-> src[(r-dr) mod H][(c-dc) mod W] over a whole channel.
template <class F>
inline void for_each_segment(int height, int width, int batch, int dr, int dc, F&& f) {
  const int s = ((dc % width) + width) % width;
  const int shift_r = ((dr % height) + height) % height;
  const std::size_t row_len = static_cast<std::size_t>(width) * batch;
  for (int r = 0; r < height; ++r) {
    int src_r = r - shift_r;
    if (src_r < 0) src_r += height;
    const std::size_t out_row = static_cast<std::size_t>(r) * row_len;
    const std::size_t src_row = static_cast<std::size_t>(src_r) * row_len;
    if (width - s > 0)
      f(out_row + static_cast<std::size_t>(s) * batch, src_row,
        static_cast<std::size_t>(width - s) * batch);
    if (s > 0)
      f(out_row, src_row + static_cast<std::size_t>(width - s) * batch,
        static_cast<std::size_t>(s) * batch);
  }
}

/// y[j] += sum_k a^{(j,k)} * x[k]
void conv_forward(const FilterBank& bank, const double* x, double* y, int batch);

/// x[k] += sum_j a^{(j,k)} (cross-correlated) y[j], i.e. x += T^T y.
void conv_adjoint(const FilterBank& bank, const double* y, double* x, int batch);

/// grad[j][k][tap(dr,dc)] += sum_{i,b} a[j][i][b] * b_in[k][i-(dr,dc)][b].
/// With a = dL/dy and b_in = x this is dL/dtaps for y = T x; with a = s and
/// b_in = dL/dy it is dL/dtaps for y = T^T s.
void conv_tap_grad(const BankGeometry& g, const double* a, const double* b_in, int batch,
                   double* grad);

} // namespace cpnn::detail
