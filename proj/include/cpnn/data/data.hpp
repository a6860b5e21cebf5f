#pragma once

#include "cpnn/algebra/filter_bank.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cpnn {

enum class DatasetKind { pwc_1d, image_patches };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& name);

/// Paired clean/noisy samples. Signals have height 1; image samples are
/// row-major height x width.
struct Dataset {
  DatasetKind kind = DatasetKind::pwc_1d;
  int height = 1;
  int width = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<Vector> clean;
  std::vector<Vector> noisy;

  int size() const noexcept { return static_cast<int>(clean.size()); }
  int pixels() const noexcept { return height * width; }
  /// Residual-learning target: noisy - clean.
  Vector noise(int i) const;
  /// Throws ValidationError on unpaired or mis-sized samples.
  void validate() const;
};

/// Piecewise-constant zero-mean signals; sample i uses RNG stream i.
/// `parts`, if given, receives the number of constant parts of each signal.
std::vector<Vector> gen_pwc(int count, int m, std::uint64_t seed, std::vector<int>* parts = nullptr);

/// Adds i.i.d. N(0, sigma^2) noise; sample i uses RNG stream i.
std::vector<Vector> add_noise(const std::vector<Vector>& signals, double sigma, std::uint64_t seed);

/// gen_pwc + add_noise with independent streams derived from `seed`.
Dataset make_pwc_dataset(int count, int m, double sigma, std::uint64_t seed);

/// 10 log10((max y - min y) / mse(x, y)); +inf when x == y.
double psnr_signal(const Vector& x, const Vector& y);
/// Conventional form 10 log10((max y - min y)^2 / mse(x, y)). The published
/// input-noise figure for the signal test set is reproduced by this variant.
double psnr_signal_squared(const Vector& x, const Vector& y);
/// 10 log10(1 / mse(x, y)); +inf when x == y.
double psnr_image(const Vector& x, const Vector& y);

/// Normalised 9x9 Gaussian k_ij ~ exp(-(i^2 + j^2) / (2 tau^2)), i, j in -4..4.
struct BlurKernel {
  double tau = 1.0;
  std::array<double, 81> taps{};

  double at(int i, int j) const { return taps[(i + 4) * 9 + (j + 4)]; }
};

BlurKernel gauss_kernel(double tau);

enum class BlurBoundary {
  periodic, // output has the input size
  valid,    // output cropped to (h-8) x (w-8)
};

Vector blur_apply(const BlurKernel& k, const Vector& image, int height, int width,
                  BlurBoundary boundary = BlurBoundary::periodic);
/// Adjoint of blur_apply; takes an image of the output size and returns one of the input size.
Vector blur_adjoint(const BlurKernel& k, const Vector& image, int height, int width,
                    BlurBoundary boundary = BlurBoundary::periodic);

/// Isotropic Gaussian smoothing with periodic boundary (oracle source).
Vector gaussian_smooth(const Vector& x, int height, int width, double sigma);

/// Synthetic piecewise-smooth image in [0, 1]: smooth background plus
/// random rectangles, discs and ramps with sharp edges.
Vector gen_piecewise_smooth_image(int height, int width, std::uint64_t seed);

/// `count` random size x size patches cut from fresh synthetic images.
std::vector<Vector> gen_image_patches(int count, int size, std::uint64_t seed, int image_side = 64);

Dataset make_patch_dataset(int count, int size, double sigma, std::uint64_t seed);

/// Element-wise clamp to [0, 1].
Vector clamp01(Vector x);

// I/O

/// One signal per line, values with 17 significant digits.
void write_signals_csv(const std::filesystem::path& path, const std::vector<Vector>& signals);
std::vector<Vector> read_signals_csv(const std::filesystem::path& path);

/// 8-bit binary PGM; values in [0, 1] map to round-half-even(255 v), clamped.
void write_pgm(const std::filesystem::path& path, const Vector& image, int height, int width);
/// Returns values / 255. Throws ParseError with the byte offset on malformed input.
Vector read_pgm(const std::filesystem::path& path, int& height, int& width);

/// Directory with manifest.json {kind, count, m | d1,d2, sigma, seed, files}
/// and clean.csv / noisy.csv.
void save_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace cpnn
