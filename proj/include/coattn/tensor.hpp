#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace coattn {

// Dense row-major tensor of doubles. Shape is explicit; data length always
// equals the product of the dims (enforced on construction).
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> dims);
  Tensor(std::vector<std::int64_t> dims, std::vector<double> data);

  std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int axis) const;

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  std::int64_t idx(std::int64_t i, std::int64_t j) const { return i * shape[1] + j; }
  std::int64_t idx(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return (i * shape[1] + j) * shape[2] + k;
  }
  std::int64_t idx(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
    return ((i * shape[1] + j) * shape[2] + k) * shape[3] + l;
  }
  std::int64_t idx(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l,
                   std::int64_t m) const {
    return (((i * shape[1] + j) * shape[2] + k) * shape[3] + l) * shape[4] + m;
  }

  std::string shape_str() const;
};

// Multi-channel 2-D correlation with zero padding, the spatial primitive.
// input [Cin,H,W], filters [Cout,Cin,kH,kW] with odd kH,kW; output
// [Cout, H+2p-kH+1, W+2p-kW+1].
Tensor conv2d(const Tensor& input, const Tensor& filters, int padding);

// Exact quarter-turn rotation of a square plane [N,N]; k counted so that
// rotate90(x, 1)[i][j] == x[j][N-1-i] and rotate90(x, 4) == x.
Tensor rotate90(const Tensor& plane, int k);

// Left-right mirror of a plane [H,W]: out[i][j] = in[i][W-1-j].
Tensor hflip(const Tensor& plane);

// Numerically stable softmax of a non-empty 1-D tensor.
Tensor softmax(const Tensor& x);

// Central finite differences of a scalar function, one probe pair per entry.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps);

}  // namespace coattn
