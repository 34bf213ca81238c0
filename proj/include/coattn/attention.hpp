#pragma once

#include <utility>
#include <vector>

#include "coattn/gconv.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

enum class AttentionKind { Full, Circulant, BlockCirculant };

// Parameters of one attention map acting on length-n group-axis vectors.
// Full stores the whole matrix; the structured kinds store defining vectors
// (first columns of their blocks) and materialize on demand.
struct AttentionParams {
  AttentionKind kind = AttentionKind::Circulant;
  Tensor atilde;      // Full: [n,n]
  Tensor a_c;         // Circulant: [n]
  Tensor a_c1, a_c2;  // BlockCirculant: [r] each, n = 2r

  std::int64_t n() const;      // length of the vectors acted on
  std::int64_t count() const;  // number of learnable parameters
};

AttentionParams full_attention(Tensor atilde);
AttentionParams circulant_attention(Tensor a_c);
AttentionParams block_circulant_attention(Tensor a_c1, Tensor a_c2);

// C[i][j] = c[(i-j) mod n]: first column c, constant diagonal c[0]; commutes
// with every cyclic shift.
Tensor build_circulant(const Tensor& c);

// [[C1, D2], [D2, C1]] with C1 = build_circulant(c1) and D2[i][j] =
// c2[(i+j) mod r] (columns of D2 are successive left shifts of c2); the unique
// block structure that commutes with the full rotation+mirror permutation
// action. Both defining vectors appear as their block's first column.
Tensor build_block_circulant(const Tensor& c1, const Tensor& c2);

Tensor materialize(const AttentionParams& p);

// a = x * Atilde (row vector); scores softmax(a/n); output x scaled by the
// scores normalized to peak 1.
Tensor compact_attend(const Tensor& x, const Tensor& atilde);

struct AttendBack {
  Tensor d_x;
  Tensor d_atilde;  // dense [n,n]; fold_* reduce it onto defining vectors
};
AttendBack attend_backward(const Tensor& x, const Tensor& atilde, const Tensor& upstream);

// Chain rule through the parameter tying: sums d_atilde over the index sets
// each defining-vector entry populates.
Tensor fold_circulant_grad(const Tensor& d_atilde);
std::pair<Tensor, Tensor> fold_block_circulant_grad(const Tensor& d_atilde);

// Applies attention along the group axis at every (batch, channel, pixel),
// one AttentionParams per channel (n must equal G).
FeatureMap co_attentive_map(const FeatureMap& in, const std::vector<AttentionParams>& per_channel);

struct CoAttendGrads {
  Tensor d_input;
  std::vector<AttentionParams> d_params;  // same kinds/shapes as the inputs
};
CoAttendGrads co_attentive_backward(const FeatureMap& in,
                                    const std::vector<AttentionParams>& per_channel,
                                    const Tensor& upstream);

}  // namespace coattn
