#include "coattn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace coattn {

namespace {

std::int64_t product(const std::vector<std::int64_t>& dims) {
  std::int64_t n = 1;
  for (auto d : dims) {
    if (d < 0) throw std::runtime_error("tensor: negative dimension");
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> dims) : shape(std::move(dims)) {
  v.assign(static_cast<std::size_t>(product(shape)), 0.0);
}

Tensor::Tensor(std::vector<std::int64_t> dims, std::vector<double> data)
    : shape(std::move(dims)), v(std::move(data)) {
  if (product(shape) != static_cast<std::int64_t>(v.size()))
    throw std::runtime_error("tensor: data length " + std::to_string(v.size()) +
                             " does not match shape " + shape_str());
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank())
    throw std::runtime_error("tensor: axis " + std::to_string(axis) + " out of range for " +
                             shape_str());
  return shape[static_cast<std::size_t>(axis)];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor conv2d(const Tensor& input, const Tensor& filters, int padding) {
  if (input.rank() != 3)
    throw std::runtime_error("conv2d: input must be [C,H,W], got " + input.shape_str());
  if (filters.rank() != 4)
    throw std::runtime_error("conv2d: filters must be [Cout,Cin,kH,kW], got " +
                             filters.shape_str());
  if (padding < 0) throw std::runtime_error("conv2d: padding must be >= 0");
  const std::int64_t cin = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::int64_t cout = filters.dim(0), kh = filters.dim(2), kw = filters.dim(3);
  if (filters.dim(1) != cin)
    throw std::runtime_error("conv2d: channel mismatch, input " + input.shape_str() +
                             " vs filters " + filters.shape_str());
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::runtime_error("conv2d: kernel dims must be odd, got " + filters.shape_str());
  if (input.size() == 0 || filters.size() == 0)
    throw std::runtime_error("conv2d: zero-size operand");
  const std::int64_t Ho = H + 2 * padding - kh + 1;
  const std::int64_t Wo = W + 2 * padding - kw + 1;
  if (Ho <= 0 || Wo <= 0)
    throw std::runtime_error("conv2d: kernel larger than padded input");

  Tensor out({cout, Ho, Wo});
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const double* in = input.data() + ci * H * W;
      const double* k = filters.data() + (co * cin + ci) * kh * kw;
      double* o = out.data() + co * Ho * Wo;
      for (std::int64_t dy = 0; dy < kh; ++dy)
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          const double wgt = k[dy * kw + dx];
          if (wgt == 0.0) continue;
          // output rows y where input row y+dy-p is in range
          const std::int64_t y0 = std::max<std::int64_t>(0, padding - dy);
          const std::int64_t y1 = std::min(Ho, H + padding - dy);
          const std::int64_t x0 = std::max<std::int64_t>(0, padding - dx);
          const std::int64_t x1 = std::min(Wo, W + padding - dx);
          for (std::int64_t y = y0; y < y1; ++y) {
            const double* irow = in + (y + dy - padding) * W + (x0 + dx - padding);
            double* orow = o + y * Wo + x0;
            for (std::int64_t x = 0; x < x1 - x0; ++x) orow[x] += wgt * irow[x];
          }
        }
    }
  return out;
}

Tensor rotate90(const Tensor& plane, int k) {
  if (plane.rank() != 2 || plane.dim(0) != plane.dim(1))
    throw std::runtime_error("rotate90: plane must be square [N,N], got " + plane.shape_str());
  const std::int64_t N = plane.dim(0);
  const int kk = ((k % 4) + 4) % 4;
  Tensor out({N, N});
  const double* in = plane.data();
  double* o = out.data();
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < N; ++j) {
      double val;
      switch (kk) {
        case 0: val = in[i * N + j]; break;
        case 1: val = in[j * N + (N - 1 - i)]; break;
        case 2: val = in[(N - 1 - i) * N + (N - 1 - j)]; break;
        default: val = in[(N - 1 - j) * N + i]; break;
      }
      o[i * N + j] = val;
    }
  return out;
}

Tensor hflip(const Tensor& plane) {
  if (plane.rank() != 2)
    throw std::runtime_error("hflip: plane must be [H,W], got " + plane.shape_str());
  const std::int64_t H = plane.dim(0), W = plane.dim(1);
  Tensor out({H, W});
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j) out.v[i * W + j] = plane.v[i * W + (W - 1 - j)];
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1 || x.size() == 0)
    throw std::runtime_error("softmax: need non-empty 1-D tensor, got " + x.shape_str());
  Tensor out({x.dim(0)});
  double mx = x.v[0];
  for (double val : x.v) mx = std::max(mx, val);
  double sum = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    out.v[i] = std::exp(x.v[i] - mx);
    sum += out.v[i];
  }
  for (auto& val : out.v) val /= sum;
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  if (eps <= 0.0) throw std::runtime_error("finite_diff_grad: eps must be positive");
  Tensor g(x.shape);
  Tensor probe = x;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double orig = probe.v[i];
    probe.v[i] = orig + eps;
    const double hi = f(probe);
    probe.v[i] = orig - eps;
    const double lo = f(probe);
    probe.v[i] = orig;
    g.v[i] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

}  // namespace coattn
