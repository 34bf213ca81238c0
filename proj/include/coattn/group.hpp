#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coattn/tensor.hpp"

namespace coattn {

enum class GroupKind { Trans, Rot, RotMirror };

// Element of a rotation / rotation+mirror stabilizer, labeled flip-first:
// the plane op is rotate[r] ∘ mirror[m] (mirror applied first when m == 1).
struct GroupElement {
  int r = 0;
  int m = 0;
  bool operator==(const GroupElement& o) const { return r == o.r && m == o.m; }
};

struct GroupSpec {
  GroupKind kind = GroupKind::Trans;
  int r_max = 1;  // rotation order
  int size = 1;   // r_max for Rot, 2*r_max for RotMirror, 1 for Trans

  int index(GroupElement g) const;
  GroupElement element(int idx) const;
  GroupElement identity() const { return {0, 0}; }
  GroupElement compose(GroupElement a, GroupElement b) const;
  GroupElement inverse(GroupElement g) const;
  std::vector<GroupElement> elements() const;
  std::string name() const;
};

// Constructs the spec and self-checks the group axioms (closure, identity,
// inverses, associativity) exhaustively.
GroupSpec make_group(GroupKind kind, int r_max);
GroupSpec group_from_name(const std::string& name);  // "z2" | "p4" | "p4m"

// out[j] = x[(j+i) mod n]; i may be negative or exceed n.
std::vector<double> cyclic_shift(const std::vector<double>& x, std::int64_t i);
Tensor cyclic_shift(const Tensor& x, std::int64_t i);  // 1-D convenience

// Applies cyclic_shift along one axis of an arbitrary-rank tensor.
Tensor cyclic_shift_axis(const Tensor& t, std::int64_t i, int axis);

// Plane action on raster data: mirror flip first (if g.m), then rotate90 by
// g.r, applied to the last two axes of any tensor [..., H, W]. Rotations need
// square spatial dims and r_max in {1, 2, 4} (exact lattice quarter-turns).
Tensor act_on_input(const GroupSpec& spec, GroupElement g, const Tensor& t);

// Regular action on a stack of feature maps [B, G, L, H, W]: the spatial op of
// act_on_input per plane plus right translation on the group axis,
// out[h] = in[h*t]. For Rot this is a left cyclic shift by t.r.
Tensor act_on_feature(const GroupSpec& spec, GroupElement t, const Tensor& fmap);

// The [size, size] permutation matrix of act_on_feature's group-axis component:
// P[h][index(h*t)] = 1, so that P_g P_h = P_{gh}.
Tensor permutation_matrix(const GroupSpec& spec, GroupElement t);

}  // namespace coattn
