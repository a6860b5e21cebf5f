#include "cpnn/data/data.hpp"

#include "cpnn/error.hpp"
#include "cpnn/json_io.hpp"
#include "cpnn/random.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace cpnn {
namespace {

double mse(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.empty()) throw DimensionError("psnr: inputs differ in size or are empty");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

int wrap(int i, int n) { return ((i % n) + n) % n; }

} // namespace

std::string to_string(DatasetKind kind) { return kind == DatasetKind::pwc_1d ? "pwc_1d" : "image_patches"; }

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "pwc_1d" || name == "pwc") return DatasetKind::pwc_1d;
  if (name == "image_patches" || name == "patches") return DatasetKind::image_patches;
  throw ValidationError("unknown dataset kind '" + name + "'");
}

Vector Dataset::noise(int i) const {
  Vector e(noisy[i].size());
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = noisy[i][k] - clean[i][k];
  return e;
}

void Dataset::validate() const {
  if (clean.size() != noisy.size()) throw ValidationError("dataset: clean/noisy counts differ");
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (static_cast<int>(clean[i].size()) != pixels() || static_cast<int>(noisy[i].size()) != pixels())
      throw ValidationError("dataset: sample " + std::to_string(i) + " has the wrong length");
}

std::vector<Vector> gen_pwc(int count, int m, std::uint64_t seed, std::vector<int>* parts) {
  if (m < 4) throw ValidationError("gen_pwc needs m >= 4");
  if (count < 0) throw ValidationError("gen_pwc: negative count");
  std::vector<Vector> out(count);
  if (parts) parts->assign(count, 0);
  const CounterRng base(seed, 0);
  for (int i = 0; i < count; ++i) {
    CounterRng rng = base.split(static_cast<std::uint64_t>(i));
    const int p = std::min(std::max(2, rng.poisson(5.0)), m);
    // p - 1 distinct breakpoints uniform on 1..m-1
    std::vector<int> cuts;
    while (static_cast<int>(cuts.size()) < p - 1) {
      const int c = 1 + static_cast<int>(rng.below(m - 1));
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(m);
    Vector y(m);
    int start = 0;
    for (int c : cuts) {
      const double level = rng.normal();
      std::fill(y.begin() + start, y.begin() + c, level);
      start = c;
    }
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / m;
    for (double& v : y) v -= mean;
    out[i] = std::move(y);
    if (parts) (*parts)[i] = p;
  }
  return out;
}

std::vector<Vector> add_noise(const std::vector<Vector>& signals, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ValidationError("noise sigma must be >= 0");
  std::vector<Vector> out = signals;
  const CounterRng base(seed, 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (sigma == 0.0) continue;
    CounterRng rng = base.split(i);
    for (double& v : out[i]) v += sigma * rng.normal();
  }
  return out;
}

Dataset make_pwc_dataset(int count, int m, double sigma, std::uint64_t seed) {
  Dataset d;
  d.kind = DatasetKind::pwc_1d;
  d.width = m;
  d.sigma = sigma;
  d.seed = seed;
  d.clean = gen_pwc(count, m, seed);
  d.noisy = add_noise(d.clean, sigma, seed);
  return d;
}

double psnr_signal(const Vector& x, const Vector& y) {
  const double e = mse(x, y);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  return 10.0 * std::log10((*hi - *lo) / e);
}

double psnr_signal_squared(const Vector& x, const Vector& y) {
  const double e = mse(x, y);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  return 10.0 * std::log10((*hi - *lo) * (*hi - *lo) / e);
}

double psnr_image(const Vector& x, const Vector& y) {
  const double e = mse(x, y);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / e);
}

BlurKernel gauss_kernel(double tau) {
  if (!(tau > 0.0)) throw ValidationError("blur kernel needs tau > 0");
  BlurKernel k;
  k.tau = tau;
  double s = 0.0;
  for (int i = -4; i <= 4; ++i)
    for (int j = -4; j <= 4; ++j) s += k.taps[(i + 4) * 9 + j + 4] = std::exp(-(i * i + j * j) / (2 * tau * tau));
  for (double& t : k.taps) t /= s;
  return k;
}

Vector blur_apply(const BlurKernel& k, const Vector& x, int h, int w, BlurBoundary boundary) {
  if (static_cast<int>(x.size()) != h * w) throw DimensionError("blur_apply: image size mismatch");
  if (boundary == BlurBoundary::periodic) {
    Vector y(x.size(), 0.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double s = 0.0;
        for (int i = -4; i <= 4; ++i)
          for (int j = -4; j <= 4; ++j) s += k.at(i, j) * x[wrap(r - i, h) * w + wrap(c - j, w)];
        y[r * w + c] = s;
      }
    return y;
  }
  if (h < 9 || w < 9) throw DimensionError("valid blur needs at least 9x9 images");
  const int oh = h - 8, ow = w - 8;
  Vector y(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = -4; i <= 4; ++i)
        for (int j = -4; j <= 4; ++j) s += k.at(i, j) * x[(r + 4 - i) * w + (c + 4 - j)];
      y[r * ow + c] = s;
    }
  return y;
}

Vector blur_adjoint(const BlurKernel& k, const Vector& y, int h, int w, BlurBoundary boundary) {
  if (boundary == BlurBoundary::periodic) {
    if (static_cast<int>(y.size()) != h * w) throw DimensionError("blur_adjoint: image size mismatch");
    Vector x(y.size(), 0.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double s = 0.0;
        for (int i = -4; i <= 4; ++i)
          for (int j = -4; j <= 4; ++j) s += k.at(i, j) * y[wrap(r + i, h) * w + wrap(c + j, w)];
        x[r * w + c] = s;
      }
    return x;
  }
  const int oh = h - 8, ow = w - 8;
  if (oh < 1 || ow < 1 || static_cast<int>(y.size()) != oh * ow)
    throw DimensionError("blur_adjoint: cropped image size mismatch");
  Vector x(static_cast<std::size_t>(h) * w, 0.0);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      for (int i = -4; i <= 4; ++i)
        for (int j = -4; j <= 4; ++j) x[(r + 4 - i) * w + (c + 4 - j)] += k.at(i, j) * y[r * ow + c];
  return x;
}

Vector gaussian_smooth(const Vector& x, int h, int w, double sigma) {
  if (static_cast<int>(x.size()) != h * w) throw DimensionError("gaussian_smooth: size mismatch");
  if (!(sigma > 0.0)) return x;
  const int rad = static_cast<int>(std::ceil(3 * sigma));
  Vector k(2 * rad + 1);
  double s = 0.0;
  for (int i = -rad; i <= rad; ++i) s += k[i + rad] = std::exp(-i * i / (2 * sigma * sigma));
  for (double& v : k) v /= s;
  auto pass = [&](const Vector& in, bool rows) {
    Vector out(in.size(), 0.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        double acc = 0.0;
        for (int i = -rad; i <= rad; ++i)
          acc += k[i + rad] * (rows ? in[r * w + wrap(c - i, w)] : in[wrap(r - i, h) * w + c]);
        out[r * w + c] = acc;
      }
    return out;
  };
  Vector y = pass(x, true);
  if (h > 1) y = pass(y, false);
  return y;
}

Vector gen_piecewise_smooth_image(int h, int w, std::uint64_t seed) {
  if (h < 1 || w < 1) throw ValidationError("image sides must be >= 1");
  CounterRng rng(seed, 2);
  Vector img(static_cast<std::size_t>(h) * w);
  const double b0 = 0.3 + 0.4 * rng.uniform(), gr = 0.3 * (rng.uniform() - 0.5), gc = 0.3 * (rng.uniform() - 0.5);
  const double fr = 1 + 2 * rng.uniform(), fc = 1 + 2 * rng.uniform(), amp = 0.08 * rng.uniform();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double u = static_cast<double>(r) / h, v = static_cast<double>(c) / w;
      img[r * w + c] = b0 + gr * u + gc * v + amp * std::cos(2 * M_PI * (fr * u + fc * v));
    }
  const int shapes = 4 + static_cast<int>(rng.below(5));
  for (int s = 0; s < shapes; ++s) {
    const double level = rng.uniform();
    const double sr = 0.4 * (rng.uniform() - 0.5) / h, sc = 0.4 * (rng.uniform() - 0.5) / w;
    const double cr = rng.uniform() * h, cc = rng.uniform() * w;
    const double er = (0.1 + 0.25 * rng.uniform()) * h, ec = (0.1 + 0.25 * rng.uniform()) * w;
    const bool disc = rng.uniform() < 0.5;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double dr = (r - cr) / er, dc = (c - cc) / ec;
        const bool inside = disc ? dr * dr + dc * dc <= 1.0 : std::abs(dr) <= 1.0 && std::abs(dc) <= 1.0;
        if (inside) img[r * w + c] = level + sr * (r - cr) * h * 0.5 + sc * (c - cc) * w * 0.5;
      }
  }
  for (double& v : img) v = std::clamp(v, 0.0, 1.0);
  return img;
}

std::vector<Vector> gen_image_patches(int count, int size, std::uint64_t seed, int side) {
  if (size < 1 || size > side) throw ValidationError("patch size must be in [1, image side]");
  std::vector<Vector> out;
  out.reserve(count);
  const int per_image = 16;
  CounterRng pick(seed, 3);
  Vector img;
  for (int i = 0; i < count; ++i) {
    if (i % per_image == 0)
      img = gen_piecewise_smooth_image(side, side, seed * 1000003ull + static_cast<std::uint64_t>(i / per_image));
    const int r0 = static_cast<int>(pick.below(side - size + 1)), c0 = static_cast<int>(pick.below(side - size + 1));
    Vector p(static_cast<std::size_t>(size) * size);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) p[r * size + c] = img[(r0 + r) * side + c0 + c];
    out.push_back(std::move(p));
  }
  return out;
}

Dataset make_patch_dataset(int count, int size, double sigma, std::uint64_t seed) {
  Dataset d;
  d.kind = DatasetKind::image_patches;
  d.height = size;
  d.width = size;
  d.sigma = sigma;
  d.seed = seed;
  d.clean = gen_image_patches(count, size, seed);
  d.noisy = add_noise(d.clean, sigma, seed);
  return d;
}

Vector clamp01(Vector x) {
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
  return x;
}

void write_signals_csv(const std::filesystem::path& path, const std::vector<Vector>& signals) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char buf[32];
  for (const Vector& s : signals) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s[i]);
      if (i) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

std::vector<Vector> read_signals_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Vector> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    Vector row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str())
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      row.push_back(v);
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Vector& image, int h, int w) {
  if (static_cast<int>(image.size()) != h * w) throw DimensionError("write_pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  const int old = std::fegetround();
  std::fesetround(FE_TONEAREST);
  for (double v : image) {
    const double q = std::nearbyint(std::clamp(v, 0.0, 1.0) * 255.0);
    out.put(static_cast<char>(static_cast<unsigned char>(q)));
  }
  std::fesetround(old);
}

Vector read_pgm(const std::filesystem::path& path, int& h, int& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(path.string() + ": " + what + " at byte offset " + std::to_string(pos));
  };
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) fail("expected a number");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1000000) fail("number too large");
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail("missing P5 magic");
  pos = 2;
  w = number();
  h = number();
  const int maxval = number();
  if (w < 1 || h < 1) fail("empty image");
  if (maxval != 255) fail("only 8-bit PGM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) fail("expected whitespace after header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (bytes.size() - pos < n) fail("truncated pixel data");
  Vector img(n);
  for (std::size_t i = 0; i < n; ++i) img[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  return img;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  data.validate();
  std::filesystem::create_directories(dir);
  write_signals_csv(dir / "clean.csv", data.clean);
  write_signals_csv(dir / "noisy.csv", data.noisy);
  nlohmann::json m{{"kind", to_string(data.kind)},
                   {"count", data.size()},
                   {"sigma", data.sigma},
                   {"seed", data.seed},
                   {"files", {{{"role", "clean"}, {"path", "clean.csv"}}, {{"role", "noisy"}, {"path", "noisy.csv"}}}}};
  if (data.kind == DatasetKind::pwc_1d) {
    m["m"] = data.width;
  } else {
    m["d1"] = data.height;
    m["d2"] = data.width;
  }
  write_json_file(dir / "manifest.json", m);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const nlohmann::json m = read_json_file(dir / "manifest.json");
  try {
    Dataset d;
    d.kind = dataset_kind_from_string(m.at("kind").get<std::string>());
    if (d.kind == DatasetKind::pwc_1d) {
      d.width = m.at("m").get<int>();
    } else {
      d.height = m.at("d1").get<int>();
      d.width = m.at("d2").get<int>();
    }
    d.sigma = m.at("sigma").get<double>();
    d.seed = m.at("seed").get<std::uint64_t>();
    for (const auto& f : m.at("files")) {
      const std::string role = f.at("role").get<std::string>(), rel = f.at("path").get<std::string>();
      const auto p = dir / rel;
      if (!std::filesystem::exists(p)) throw ParseError("manifest entry '" + role + "': missing file " + p.string());
      if (role == "clean") d.clean = read_signals_csv(p);
      else if (role == "noisy") d.noisy = read_signals_csv(p);
      else throw ParseError("manifest entry '" + role + "': unknown role");
    }
    if (static_cast<int>(d.clean.size()) != m.at("count").get<int>())
      throw ParseError("manifest count does not match clean.csv");
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("dataset: ") + e.what());
  }
}

} // namespace cpnn
