#pragma once

#include "cpnn/algebra/dft.hpp"
#include "cpnn/algebra/filter_bank.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace cpnn {

using ComplexMatrix = Eigen::MatrixXcd;

/// Per-frequency blocks Lambda_j (m1 x m2) with T = (I (x) F^*) diag(Lambda) (I (x) F)
/// up to the channel/frequency permutation. Frequencies of an image are
/// ordered row-major over the 2-D DFT grid.
struct SpectralBlocks {
  BankGeometry geometry; // of the source bank; the inverse is always full-length
  std::vector<ComplexMatrix> blocks;

  int frequencies() const noexcept { return static_cast<int>(blocks.size()); }
};

SpectralBlocks spectral(const FilterBank& bank, DftMethod method = DftMethod::exact);

/// Full-length bank from its blocks (1-D only). Throws ValidationError when the
/// blocks are not conjugate symmetric, i.e. do not come from real filters.
FilterBank spectral_inverse(const SpectralBlocks& s, DftMethod method = DftMethod::exact);

/// T x through the frequency domain.
Vector spectral_apply(const SpectralBlocks& s, std::span<const double> x,
                      DftMethod method = DftMethod::exact);

/// Largest deviation from Lambda_j = conj(Lambda_{-j}), relative to the largest entry.
double conjugate_symmetry_defect(const SpectralBlocks& s);

} // namespace cpnn
