#pragma once

#include <complex>
#include <span>
#include <vector>

namespace cpnn {

using Complex = std::complex<double>;

enum class DftMethod {
  exact, // direct O(m^2) sum with exactly reduced twiddle angles
  fast,  // radix-2 when m is a power of two, exact otherwise
};

/// xhat_j = sum_k x_k exp(-2 pi i j k / m); inverse uses exp(+...) and 1/m.
std::vector<Complex> dft(std::span<const Complex> x, bool inverse = false,
                         DftMethod method = DftMethod::exact);

/// 2-D transform of a height x width row-major grid.
std::vector<Complex> dft2(std::span<const Complex> x, int height, int width, bool inverse = false,
                          DftMethod method = DftMethod::exact);

} // namespace cpnn
