#pragma once

#include <string>

#include "coattn/model.hpp"

namespace coattn {

// Writes <dir>/params.bin (all parameter tensors concatenated, little-endian
// 64-bit reals, for_each_param order) and <dir>/params.json (arch + per-tensor
// shapes and offsets).
void save_params(const Model& m, const std::string& dir);

// Rebuilds the architecture named in the manifest and fills it from the blob.
// Truncated or mismatched files raise.
Model load_model(const std::string& dir);

}  // namespace coattn
