#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coattn/attention.hpp"
#include "coattn/gconv.hpp"

namespace coattn {

enum class LayerKind { Lift, GConv, Attend, Relu, SpatialMaxPool, OrientPool, GlobalAvg, Dense };

// One stage of a sequential model; only the fields of its kind are populated.
struct Layer {
  LayerKind kind{};
  GConvParams conv;                  // Lift, GConv
  int padding = 1;                   //
  std::vector<AttentionParams> att;  // Attend, one per channel
  Tensor w, b;                       // Dense
  int pool = 2;                      // SpatialMaxPool
};

struct Model {
  std::string arch;
  GroupSpec group;
  std::vector<Layer> layers;
};

// Architectures: z2cnn | p4cnn | a-p4cnn | p4mcnn | a-p4mcnn. All use 3x3
// filters, 8 channels, fan-in-scaled normal init from the seed; the a-*
// variants add a structured attention map after every group convolution,
// defining vectors drawn like the layer's filters with the index-0 entry of
// the diagonal-block vector set to 1 (unit attention diagonal at init).
Model build_model(const std::string& arch, std::uint64_t seed);

std::int64_t param_count(const Model& m);

// Visits every parameter tensor in a fixed, stable order.
void for_each_param(Model& m, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const Model& m,
                    const std::function<void(const std::string&, const Tensor&)>& fn);

// Same structure, every parameter zeroed; gradient / momentum container.
Model zeros_like(const Model& m);

// Per-layer inputs cached for the backward pass. Layers up to and including
// GlobalAvg consume feature maps; Dense consumes the flattened vector.
struct Trace {
  std::vector<FeatureMap> fm_in;
  std::vector<Tensor> vec_in;
  Tensor logits;
};

// images [B,C,H,W] -> logits [B,classes]
Tensor model_forward(const Model& m, const Tensor& images, Trace* trace = nullptr);

// Accumulates parameter gradients into `grads` (a zeros_like-shaped model).
void model_backward(const Model& m, const Trace& trace, const Tensor& d_logits, Model& grads,
                    Tensor* d_images = nullptr);

struct LossGrad {
  double loss = 0.0;
  Tensor d_logits;
};
// Mean softmax cross-entropy over the batch.
LossGrad cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace coattn
