#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coattn/attention.hpp"
#include "coattn/group.hpp"
#include "coattn/model.hpp"
#include "coattn/rng.hpp"

namespace coattn {

struct CheckReport {
  std::string check;
  int trials = 0;
  double max_dev = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string note;  // counterexample, skipped sub-checks, or "inconclusive"
};

std::string to_json(const CheckReport& r);
std::string to_json(const std::vector<CheckReport>& rs);
std::string report_table(const std::vector<CheckReport>& rs);

// Draws fresh (x, defining-vector) pairs each trial and compares attending a
// permuted vector against permuting the attended one, over every group
// element. Full attention is expected to fail this (pass == false).
CheckReport check_attention_equivariance(AttentionKind kind, const GroupSpec& spec, int trials,
                                         double tol, std::uint64_t seed);

// max |P_g A - A P_g| over all group elements.
CheckReport check_commutation(const Tensor& atilde, const GroupSpec& spec, double tol);

// Per trial the factory builds a layer (fresh random weights), which is then
// applied on both sides of the equivariance square. lifted_input selects
// whether the input carries a group axis (and is acted on by act_on_feature)
// or is a raw image stack (act_on_input).
using LayerFactory = std::function<std::function<FeatureMap(const FeatureMap&)>(Rng&)>;
CheckReport check_layer_equivariance(const std::string& name, const LayerFactory& make_layer,
                                     const GroupSpec& spec, bool lifted_input,
                                     std::int64_t channels, std::int64_t hw, int trials,
                                     double tol, std::uint64_t seed);

// Invariance of the logits under act_on_input for every element of `spec`,
// plus (when the model's own group matches `spec`) exact equivariance of the
// stack truncated before orientation pooling.
CheckReport check_network_equivariance(const Model& m, const GroupSpec& spec, int n_images,
                                       double tol, std::uint64_t seed);

// Rotates one image through every group element and recovers, per channel,
// the group-axis alignment of the response against the unrotated one, at the
// last group-convolution output and (when present) after its attention map.
// Passes when every channel recovers the applied element at both taps;
// ambiguous alignments are reported as inconclusive rather than failures.
CheckReport check_synchrony(const Model& m, const Tensor& image);

}  // namespace coattn
