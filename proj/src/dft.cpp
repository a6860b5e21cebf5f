#include "cpnn/algebra/dft.hpp"

#include "cpnn/error.hpp"

#include <cmath>
#include <numbers>

namespace cpnn {
namespace {

std::vector<Complex> twiddles(int m, bool inverse) {
  std::vector<Complex> w(m);
  const double sign = inverse ? 1.0 : -1.0;
  for (int k = 0; k < m; ++k) {
    const double ang = sign * 2.0 * std::numbers::pi * k / m;
    w[k] = {std::cos(ang), std::sin(ang)};
  }
  // exact values on the axes
  for (int k = 0; k < m; ++k) {
    if (4 * k % m == 0) {
      const int q = 4 * k / m;
      const double s = inverse ? 1.0 : -1.0;
      w[k] = q == 0 ? Complex(1, 0) : q == 1 ? Complex(0, s) : q == 2 ? Complex(-1, 0) : Complex(0, -s);
    }
  }
  return w;
}

void radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const std::vector<Complex> w = twiddles(static_cast<int>(n), inverse);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len)
      for (std::size_t k = 0; k < len / 2; ++k) {
        const Complex u = a[i + k], v = a[i + k + len / 2] * w[k * stride];
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
  }
}

} // namespace

std::vector<Complex> dft(std::span<const Complex> x, bool inverse, DftMethod method) {
  const int m = static_cast<int>(x.size());
  if (m == 0) throw DimensionError("dft of an empty vector");
  std::vector<Complex> out;
  if (method == DftMethod::fast && (m & (m - 1)) == 0) {
    out.assign(x.begin(), x.end());
    radix2(out, inverse);
  } else {
    const std::vector<Complex> w = twiddles(m, inverse);
    out.assign(m, Complex(0, 0));
    for (int j = 0; j < m; ++j) {
      Complex s(0, 0);
      long idx = 0;
      for (int k = 0; k < m; ++k) {
        s += x[k] * w[idx];
        idx += j;
        if (idx >= m) idx -= m;
      }
      out[j] = s;
    }
  }
  if (inverse)
    for (Complex& v : out) v /= m;
  return out;
}

std::vector<Complex> dft2(std::span<const Complex> x, int height, int width, bool inverse,
                          DftMethod method) {
  if (static_cast<long>(x.size()) != static_cast<long>(height) * width)
    throw DimensionError("dft2: grid size mismatch");
  std::vector<Complex> out(x.begin(), x.end()), buf;
  if (width > 1)
    for (int r = 0; r < height; ++r) {
      buf = dft(std::span<const Complex>(out.data() + r * width, width), inverse, method);
      std::copy(buf.begin(), buf.end(), out.begin() + r * width);
    }
  if (height > 1) {
    std::vector<Complex> col(height);
    for (int c = 0; c < width; ++c) {
      for (int r = 0; r < height; ++r) col[r] = out[r * width + c];
      buf = dft(col, inverse, method);
      for (int r = 0; r < height; ++r) out[r * width + c] = buf[r];
    }
  }
  return out;
}

} // namespace cpnn
