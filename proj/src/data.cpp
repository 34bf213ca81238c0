#include "coattn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "coattn/rng.hpp"

namespace coattn {

namespace {
constexpr std::int64_t kSide = 28;
}

std::int64_t dataset_size(const DatasetBundle& d) { return d.images.dim(0); }

DatasetBundle slice(const DatasetBundle& d, std::int64_t start, std::int64_t count) {
  const std::int64_t N = dataset_size(d);
  if (start < 0 || count < 0 || start + count > N)
    throw std::runtime_error("slice: range [" + std::to_string(start) + "," +
                             std::to_string(start + count) + ") out of bounds for " +
                             std::to_string(N));
  const std::int64_t per = d.images.size() / N;
  DatasetBundle out;
  out.name = d.name;
  out.images = Tensor({count, d.images.dim(1), d.images.dim(2), d.images.dim(3)});
  std::copy_n(d.images.data() + start * per, count * per, out.images.data());
  out.labels.assign(d.labels.begin() + start, d.labels.begin() + start + count);
  return out;
}

DatasetBundle load_amat(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_amat: cannot open " + path);
  std::vector<double> pixels;
  std::vector<int> labels;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    std::vector<double> vals;
    vals.reserve(kSide * kSide + 1);
    double x = 0.0;
    while (ls >> x) vals.push_back(x);
    if (!ls.eof())
      throw std::runtime_error("load_amat: non-numeric token at " + path + ":" +
                               std::to_string(lineno));
    if (static_cast<std::int64_t>(vals.size()) != kSide * kSide + 1)
      throw std::runtime_error("load_amat: expected " + std::to_string(kSide * kSide + 1) +
                               " values, got " + std::to_string(vals.size()) + " at " + path +
                               ":" + std::to_string(lineno));
    const double rawlab = vals.back();
    const int lab = static_cast<int>(std::lround(rawlab));
    if (std::abs(rawlab - lab) > 1e-9 || lab < 0 || lab > 9)
      throw std::runtime_error("load_amat: bad label " + std::to_string(rawlab) + " at " + path +
                               ":" + std::to_string(lineno));
    pixels.insert(pixels.end(), vals.begin(), vals.end() - 1);
    labels.push_back(lab);
  }
  if (labels.empty()) throw std::runtime_error("load_amat: no examples in " + path);
  DatasetBundle d;
  d.name = path;
  d.images = Tensor({static_cast<std::int64_t>(labels.size()), 1, kSide, kSide},
                    std::move(pixels));
  d.labels = std::move(labels);
  return d;
}

void save_amat(const DatasetBundle& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_amat: cannot open " + path);
  const std::int64_t N = dataset_size(d), per = d.images.size() / N;
  char buf[32];
  std::string line;
  for (std::int64_t i = 0; i < N; ++i) {
    line.clear();
    const double* px = d.images.data() + i * per;
    for (std::int64_t j = 0; j < per; ++j) {
      std::snprintf(buf, sizeof(buf), "%.6f ", px[j]);
      line += buf;
    }
    std::snprintf(buf, sizeof(buf), "%d\n", d.labels[static_cast<std::size_t>(i)]);
    line += buf;
    out << line;
  }
  if (!out) throw std::runtime_error("save_amat: write failed for " + path);
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("load_idx: truncated header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

DatasetBundle load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("load_idx: cannot open " + images_path);
  const std::uint32_t imagic = read_be32(imgs, images_path);
  if (imagic != 2051)
    throw std::runtime_error("load_idx: bad image magic " + std::to_string(imagic) + " in " +
                             images_path);
  const std::int64_t N = read_be32(imgs, images_path);
  const std::int64_t H = read_be32(imgs, images_path);
  const std::int64_t W = read_be32(imgs, images_path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(N * H * W));
  if (!imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw std::runtime_error("load_idx: truncated image data in " + images_path);

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("load_idx: cannot open " + labels_path);
  const std::uint32_t lmagic = read_be32(labs, labels_path);
  if (lmagic != 2049)
    throw std::runtime_error("load_idx: bad label magic " + std::to_string(lmagic) + " in " +
                             labels_path);
  const std::int64_t LN = read_be32(labs, labels_path);
  if (LN != N)
    throw std::runtime_error("load_idx: " + std::to_string(N) + " images but " +
                             std::to_string(LN) + " labels");
  std::vector<unsigned char> lraw(static_cast<std::size_t>(N));
  if (!labs.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lraw.size())))
    throw std::runtime_error("load_idx: truncated label data in " + labels_path);

  DatasetBundle d;
  d.name = images_path;
  d.images = Tensor({N, 1, H, W});
  for (std::int64_t i = 0; i < N * H * W; ++i)
    d.images.v[static_cast<std::size_t>(i)] = raw[static_cast<std::size_t>(i)] / 255.0;
  d.labels.resize(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) d.labels[static_cast<std::size_t>(i)] = lraw[static_cast<std::size_t>(i)];
  return d;
}

void save_idx(const DatasetBundle& d, const std::string& images_path,
              const std::string& labels_path) {
  const std::int64_t N = dataset_size(d), H = d.images.dim(2), W = d.images.dim(3);
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw std::runtime_error("save_idx: cannot open " + images_path);
  write_be32(imgs, 2051);
  write_be32(imgs, static_cast<std::uint32_t>(N));
  write_be32(imgs, static_cast<std::uint32_t>(H));
  write_be32(imgs, static_cast<std::uint32_t>(W));
  std::vector<unsigned char> raw(static_cast<std::size_t>(N * H * W));
  for (std::int64_t i = 0; i < N * H * W; ++i) {
    const double x = std::clamp(d.images.v[static_cast<std::size_t>(i)], 0.0, 1.0);
    raw[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(x * 255.0));
  }
  imgs.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));

  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw std::runtime_error("save_idx: cannot open " + labels_path);
  write_be32(labs, 2049);
  write_be32(labs, static_cast<std::uint32_t>(N));
  std::vector<unsigned char> lraw(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i)
    lraw[static_cast<std::size_t>(i)] = static_cast<unsigned char>(d.labels[static_cast<std::size_t>(i)]);
  labs.write(reinterpret_cast<const char*>(lraw.data()), static_cast<std::streamsize>(lraw.size()));
}

// ---------------------------------------------------------------------------
// synthetic digit glyphs

namespace {

struct Seg {
  double x0, y0, x1, y1;
};

void arc(std::vector<Seg>& out, double cx, double cy, double rx, double ry, double a0, double a1,
         int steps) {
  double px = cx + rx * std::cos(a0), py = cy + ry * std::sin(a0);
  for (int i = 1; i <= steps; ++i) {
    const double a = a0 + (a1 - a0) * i / steps;
    const double nx = cx + rx * std::cos(a), ny = cy + ry * std::sin(a);
    out.push_back({px, py, nx, ny});
    px = nx;
    py = ny;
  }
}

// Strokes live in a unit box, x right, y down. Shapes are deliberately
// distinct under rotation (e.g. 6 has a curved hook where 9 has a straight
// stem) so the rotated task stays well posed.
std::vector<Seg> digit_strokes(int digit) {
  std::vector<Seg> s;
  const double pi = 3.14159265358979323846;
  switch (digit) {
    case 0: arc(s, 0.50, 0.50, 0.30, 0.42, 0, 2 * pi, 16); break;
    case 1:
      s.push_back({0.50, 0.08, 0.50, 0.92});
      s.push_back({0.50, 0.08, 0.30, 0.28});
      break;
    case 2:
      arc(s, 0.50, 0.30, 0.28, 0.22, pi, 2 * pi, 8);
      s.push_back({0.78, 0.30, 0.22, 0.90});
      s.push_back({0.22, 0.90, 0.80, 0.90});
      break;
    case 3:
      arc(s, 0.47, 0.29, 0.24, 0.20, -0.75 * pi, 0.5 * pi, 8);
      arc(s, 0.47, 0.70, 0.26, 0.22, -0.5 * pi, 0.75 * pi, 8);
      break;
    case 4:
      s.push_back({0.64, 0.08, 0.64, 0.92});
      s.push_back({0.64, 0.08, 0.22, 0.60});
      s.push_back({0.22, 0.60, 0.84, 0.60});
      break;
    case 5:
      s.push_back({0.74, 0.10, 0.28, 0.10});
      s.push_back({0.28, 0.10, 0.26, 0.46});
      arc(s, 0.46, 0.66, 0.24, 0.23, -0.6 * pi, 0.8 * pi, 10);
      break;
    case 6:
      arc(s, 0.62, 0.26, 0.30, 0.40, 0.8 * pi, 1.35 * pi, 6);
      arc(s, 0.48, 0.68, 0.21, 0.21, 0, 2 * pi, 12);
      break;
    case 7:
      s.push_back({0.20, 0.12, 0.80, 0.12});
      s.push_back({0.80, 0.12, 0.38, 0.92});
      s.push_back({0.32, 0.52, 0.68, 0.52});
      break;
    case 8:
      arc(s, 0.50, 0.30, 0.19, 0.185, 0, 2 * pi, 12);
      arc(s, 0.50, 0.70, 0.23, 0.225, 0, 2 * pi, 12);
      break;
    default:  // 9
      arc(s, 0.46, 0.32, 0.20, 0.20, 0, 2 * pi, 12);
      s.push_back({0.66, 0.34, 0.66, 0.92});
      break;
  }
  return s;
}

double dist_to_seg(double px, double py, const Seg& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / len2, 0.0, 1.0);
  const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

DatasetBundle make_synthetic_digits(std::int64_t n, std::uint64_t seed) {
  if (n <= 0) throw std::runtime_error("make_synthetic_digits: need n > 0");
  Rng rng(seed);
  DatasetBundle d;
  d.name = "synthetic";
  d.images = Tensor({n, 1, kSide, kSide});
  d.labels.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(i % 10);  // balanced classes
    d.labels[static_cast<std::size_t>(i)] = digit;
    std::vector<Seg> segs = digit_strokes(digit);

    const double scale = rng.uniform(0.88, 1.08);
    const double tx = rng.uniform(-0.05, 0.05), ty = rng.uniform(-0.05, 0.05);
    const double thick = rng.uniform(1.4, 2.0);   // pixels
    const double ink = rng.uniform(0.75, 1.0);
    for (auto& s : segs) {
      auto jx = [&](double x) { return 0.5 + scale * (x - 0.5) + tx + rng.uniform(-0.012, 0.012); };
      auto jy = [&](double y) { return 0.5 + scale * (y - 0.5) + ty + rng.uniform(-0.012, 0.012); };
      s = {4.0 + 20.0 * jx(s.x0), 4.0 + 20.0 * jy(s.y0), 4.0 + 20.0 * jx(s.x1),
           4.0 + 20.0 * jy(s.y1)};
    }

    double* img = d.images.data() + i * kSide * kSide;
    for (std::int64_t y = 0; y < kSide; ++y)
      for (std::int64_t x = 0; x < kSide; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double dmin = 1e9;
        for (const auto& s : segs) dmin = std::min(dmin, dist_to_seg(px, py, s));
        const double cov = std::clamp(thick * 0.5 + 0.5 - dmin, 0.0, 1.0);
        const double noise = 0.04 * rng.uniform();
        img[y * kSide + x] = std::clamp(ink * cov + noise, 0.0, 1.0);
      }
  }
  return d;
}

Tensor rotate_bilinear(const Tensor& plane, double angle) {
  if (plane.rank() != 2 || plane.dim(0) != plane.dim(1))
    throw std::runtime_error("rotate_bilinear: plane must be square [N,N], got " +
                             plane.shape_str());
  const std::int64_t N = plane.dim(0);
  const double c = (N - 1) / 2.0;
  const double cs = std::cos(angle), sn = std::sin(angle);
  Tensor out({N, N});
  for (std::int64_t y = 0; y < N; ++y)
    for (std::int64_t x = 0; x < N; ++x) {
      const double dx = x - c, dy = y - c;
      const double sx = c + cs * dx - sn * dy;
      const double sy = c + sn * dx + cs * dy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double wx = sx - fx, wy = sy - fy;
      auto sample = [&](std::int64_t yy, std::int64_t xx) -> double {
        if (yy < 0 || yy >= N || xx < 0 || xx >= N) return 0.0;
        return plane.v[static_cast<std::size_t>(yy * N + xx)];
      };
      const std::int64_t x0 = static_cast<std::int64_t>(fx), y0 = static_cast<std::int64_t>(fy);
      out.v[static_cast<std::size_t>(y * N + x)] =
          (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
          wy * ((1 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
    }
  return out;
}

void synth_rotations(DatasetBundle& d, const std::string& mode, std::uint64_t seed) {
  if (mode != "quarter" && mode != "uniform")
    throw std::runtime_error("synth_rotations: mode must be quarter|uniform, got '" + mode + "'");
  Rng rng(seed);
  const std::int64_t N = dataset_size(d), H = d.images.dim(2), W = d.images.dim(3);
  if (H != W) throw std::runtime_error("synth_rotations: need square images");
  const std::int64_t C = d.images.dim(1);
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t ch = 0; ch < C; ++ch) {
      Tensor plane({H, W});
      std::copy_n(d.images.data() + (i * C + ch) * H * W, H * W, plane.data());
      Tensor moved;
      if (mode == "quarter")
        moved = rotate90(plane, static_cast<int>(rng.uniform_int(4)));
      else
        moved = rotate_bilinear(plane, rng.uniform() * 2.0 * 3.14159265358979323846);
      std::copy_n(moved.data(), H * W, d.images.data() + (i * C + ch) * H * W);
    }
}

double clip_percentile(DatasetBundle& d, double p) {
  if (!(p > 0.0 && p <= 100.0))
    throw std::runtime_error("clip_percentile: p must be in (0, 100], got " + std::to_string(p));
  if (d.images.size() == 0) throw std::runtime_error("clip_percentile: empty bundle");
  std::vector<double> mags(d.images.v.size());
  for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(d.images.v[i]);
  std::sort(mags.begin(), mags.end());
  const double rank = p / 100.0 * static_cast<double>(mags.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, mags.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  const double t = mags[lo] + frac * (mags[hi] - mags[lo]);
  clamp_abs(d, t);
  return t;
}

void clamp_abs(DatasetBundle& d, double threshold) {
  if (threshold < 0.0) throw std::runtime_error("clamp_abs: threshold must be >= 0");
  for (auto& x : d.images.v) x = std::clamp(x, -threshold, threshold);
}

SplitBundles make_synthetic_corpus(const std::string& mode, std::uint64_t seed) {
  DatasetBundle all = make_synthetic_digits(4500, seed);
  synth_rotations(all, mode, seed ^ 0x9e3779b97f4a7c15ull);
  SplitBundles s;
  s.train = slice(all, 0, 2000);
  s.valid = slice(all, 2000, 500);
  s.test = slice(all, 2500, 2000);
  s.train.name = "train";
  s.valid.name = "valid";
  s.test.name = "test";
  const double t = clip_percentile(s.train, 99.0);
  clamp_abs(s.valid, t);
  clamp_abs(s.test, t);
  return s;
}

}  // namespace coattn
