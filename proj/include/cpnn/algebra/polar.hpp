#pragma once

#include "cpnn/algebra/filter_bank.hpp"
#include "cpnn/algebra/spectral.hpp"

namespace cpnn {

enum class PolarMethod { newton_schulz, higham };

template <class M>
struct PolarResult {
  M u;
  int iterations = 0;
};

/// Orthogonal (unitary) factor U of X = U S. Newton-Schulz works for any full
/// column rank X; Higham's iteration needs X square.
/// Throws SingularInputError if sigma_min <= 1e-12 sigma_max, NonConvergenceError
/// after 100 iterations.
PolarResult<DenseMatrix> polar_decompose(const DenseMatrix& x,
                                         PolarMethod method = PolarMethod::newton_schulz);
PolarResult<ComplexMatrix> polar_decompose(const ComplexMatrix& x,
                                           PolarMethod method = PolarMethod::newton_schulz);

} // namespace cpnn
