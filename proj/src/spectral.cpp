#include "cpnn/algebra/spectral.hpp"

#include "cpnn/error.hpp"

#include <algorithm>
#include <cmath>

namespace cpnn {
namespace {

int neg_freq(const BankGeometry& g, int f) {
  const int r = f / g.width, c = f % g.width;
  return ((g.height - r) % g.height) * g.width + (g.width - c) % g.width;
}

} // namespace

SpectralBlocks spectral(const FilterBank& bank, DftMethod method) {
  const BankGeometry& g = bank.geometry();
  const int p = g.pixels();
  SpectralBlocks s{g, std::vector<ComplexMatrix>(p, ComplexMatrix::Zero(g.m1, g.m2))};
  std::vector<Complex> grid(p);
  for (int j = 0; j < g.m1; ++j)
    for (int k = 0; k < g.m2; ++k) {
      std::fill(grid.begin(), grid.end(), Complex(0, 0));
      for (int tr = 0; tr < g.tap_rows(); ++tr)
        for (int tc = 0; tc < g.tap_cols(); ++tc) {
          const int r = ((g.row_lo() + tr) % g.height + g.height) % g.height;
          const int c = ((g.col_lo() + tc) % g.width + g.width) % g.width;
          grid[r * g.width + c] += bank.filter(j, k)[tr * g.tap_cols() + tc];
        }
      const auto hat = dft2(grid, g.height, g.width, false, method);
      for (int f = 0; f < p; ++f) s.blocks[f](j, k) = hat[f];
    }
  return s;
}

double conjugate_symmetry_defect(const SpectralBlocks& s) {
  double scale = 0.0, defect = 0.0;
  for (const auto& b : s.blocks) scale = std::max(scale, b.cwiseAbs().maxCoeff());
  for (int f = 0; f < s.frequencies(); ++f)
    defect = std::max(defect, (s.blocks[f] - s.blocks[neg_freq(s.geometry, f)].conjugate())
                                  .cwiseAbs()
                                  .maxCoeff());
  return scale > 0.0 ? defect / scale : defect;
}

FilterBank spectral_inverse(const SpectralBlocks& s, DftMethod method) {
  const BankGeometry& src = s.geometry;
  if (src.dims() != 1) throw ValidationError("spectral_inverse supports 1-D banks only");
  if (s.frequencies() != src.width) throw DimensionError("spectral_inverse: frequency count mismatch");
  for (const auto& b : s.blocks)
    if (b.rows() != src.m1 || b.cols() != src.m2) throw DimensionError("spectral_inverse: block shape mismatch");
  if (conjugate_symmetry_defect(s) > 1e-10)
    throw ValidationError("spectral blocks are not conjugate symmetric (filters would be complex)");
  FilterBank out(BankGeometry::full_signal(src.width, src.m1, src.m2));
  const int m = src.width;
  std::vector<Complex> hat(m);
  for (int j = 0; j < src.m1; ++j)
    for (int k = 0; k < src.m2; ++k) {
      for (int f = 0; f < m; ++f) hat[f] = s.blocks[f](j, k);
      const auto col = dft(hat, true, method);
      for (int o = out.geometry().col_lo(); o < out.geometry().col_lo() + m; ++o)
        out.tap_ref(j, k, 0, o) = col[((o % m) + m) % m].real();
    }
  return out;
}

Vector spectral_apply(const SpectralBlocks& s, std::span<const double> x, DftMethod method) {
  const BankGeometry& g = s.geometry;
  const int p = g.pixels();
  if (static_cast<int>(x.size()) != g.cols()) throw DimensionError("spectral_apply: input length mismatch");
  std::vector<std::vector<Complex>> xh(g.m2);
  std::vector<Complex> buf(p);
  for (int k = 0; k < g.m2; ++k) {
    for (int i = 0; i < p; ++i) buf[i] = x[k * p + i];
    xh[k] = dft2(buf, g.height, g.width, false, method);
  }
  Vector y(g.rows());
  for (int j = 0; j < g.m1; ++j) {
    for (int f = 0; f < p; ++f) {
      Complex acc(0, 0);
      for (int k = 0; k < g.m2; ++k) acc += s.blocks[f](j, k) * xh[k][f];
      buf[f] = acc;
    }
    const auto yj = dft2(buf, g.height, g.width, true, method);
    for (int i = 0; i < p; ++i) y[j * p + i] = yj[i].real();
  }
  return y;
}

} // namespace cpnn
