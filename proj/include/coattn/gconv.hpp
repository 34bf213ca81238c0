#pragma once

#include "coattn/group.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

// Stack of group feature maps, always [B, G, L, H, W]. Raw images ride along
// as G == 1 with the trivial group; orientation pooling also returns G == 1.
struct FeatureMap {
  Tensor t;
  GroupSpec group;

  std::int64_t B() const { return t.dim(0); }
  std::int64_t G() const { return t.dim(1); }
  std::int64_t L() const { return t.dim(2); }
  std::int64_t H() const { return t.dim(3); }
  std::int64_t W() const { return t.dim(4); }
};

// Wraps dataset images [N, C, H, W] as a trivial-group feature map [N,1,C,H,W].
FeatureMap from_images(const Tensor& images);

struct GConvParams {
  Tensor filters;  // [Lout, Lin, Gin, kH, kW]
  Tensor bias;     // [Lout], shared across the group axis
};

// Filter counterpart of the plane action: spatially the *inverse* picture op
// (rotate the array clockwise by g.r, then mirror if g.m), and on a group
// axis the gather out[h] = in[h * g^{-1}]. Accepts [kH,kW] or [Gin,kH,kW].
Tensor filter_transform(const GroupSpec& spec, GroupElement g, const Tensor& filt);

struct ConvGrads {
  Tensor d_input;    // same shape as the layer input tensor
  Tensor d_filters;  // same shape as params.filters
  Tensor d_bias;     // same shape as params.bias
};

// Lifts a trivial-group input onto out_group: one correlation per group
// element against the transformed filters. in.G and filters Gin must be 1.
FeatureMap lift_conv(const FeatureMap& in, const GConvParams& p, const GroupSpec& out_group,
                     int padding);
ConvGrads lift_conv_backward(const FeatureMap& in, const GConvParams& p,
                             const GroupSpec& out_group, int padding, const Tensor& upstream);

// Group-to-group convolution; input and output share in.group, and the filter
// group axis must match it.
FeatureMap group_conv(const FeatureMap& in, const GConvParams& p, int padding);
ConvGrads group_conv_backward(const FeatureMap& in, const GConvParams& p, int padding,
                              const Tensor& upstream);

FeatureMap relu(const FeatureMap& in);
Tensor relu(const Tensor& in);
Tensor relu_backward(const Tensor& in, const Tensor& upstream);

// Non-overlapping size x size max pooling; H and W must divide evenly.
FeatureMap spatial_max_pool(const FeatureMap& in, int size);
Tensor spatial_max_pool_backward(const Tensor& in, int size, const Tensor& upstream);

// Max over the group axis -> [B,1,L,H,W] on the trivial group. Needs G > 1.
FeatureMap orientation_pool(const FeatureMap& in);
Tensor orientation_pool_backward(const Tensor& in, const Tensor& upstream);

// Mean over both spatial axes, flattening the (G,L) axes: [B, G*L].
Tensor global_avg(const FeatureMap& in);
Tensor global_avg_backward(const std::vector<std::int64_t>& in_shape, const Tensor& upstream);

// x [B,din] * weights [dout,din]^T + bias [dout] -> [B,dout]
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);
struct DenseGrads {
  Tensor d_x, d_weights, d_bias;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& upstream);

}  // namespace coattn
