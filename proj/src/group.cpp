#include "coattn/group.hpp"

#include <stdexcept>

namespace coattn {

namespace {

int mod(int a, int n) { return ((a % n) + n) % n; }

void require_element(const GroupSpec& s, GroupElement g, const char* who) {
  if (g.r < 0 || g.r >= s.r_max || g.m < 0 || g.m > 1 ||
      (g.m == 1 && s.kind != GroupKind::RotMirror) ||
      (g.r != 0 && s.kind == GroupKind::Trans))
    throw std::runtime_error(std::string(who) + ": element (r=" + std::to_string(g.r) +
                             ",m=" + std::to_string(g.m) + ") not in " + s.name());
}

}  // namespace

GroupElement GroupSpec::element(int idx) const {
  if (idx < 0 || idx >= size)
    throw std::runtime_error("group: element index " + std::to_string(idx) + " out of range for " +
                             name());
  return {idx % r_max, idx / r_max};
}

int GroupSpec::index(GroupElement g) const {
  require_element(*this, g, "index");
  return g.m * r_max + g.r;
}

GroupElement GroupSpec::compose(GroupElement a, GroupElement b) const {
  require_element(*this, a, "compose");
  require_element(*this, b, "compose");
  return {mod(a.r + (a.m ? -b.r : b.r), r_max), a.m ^ b.m};
}

GroupElement GroupSpec::inverse(GroupElement g) const {
  require_element(*this, g, "inverse");
  return {g.m ? g.r : mod(-g.r, r_max), g.m};
}

std::vector<GroupElement> GroupSpec::elements() const {
  std::vector<GroupElement> out;
  out.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) out.push_back(element(i));
  return out;
}

std::string GroupSpec::name() const {
  switch (kind) {
    case GroupKind::Trans: return "z2";
    case GroupKind::Rot: return r_max == 4 ? "p4" : "rot" + std::to_string(r_max);
    default: return r_max == 4 ? "p4m" : "rotmirror" + std::to_string(r_max);
  }
}

GroupSpec make_group(GroupKind kind, int r_max) {
  if (kind == GroupKind::Trans && r_max != 1)
    throw std::runtime_error("make_group: translation group has r_max 1");
  if (r_max < 1) throw std::runtime_error("make_group: r_max must be >= 1");
  GroupSpec s;
  s.kind = kind;
  s.r_max = r_max;
  s.size = (kind == GroupKind::RotMirror) ? 2 * r_max : r_max;
  if (kind == GroupKind::Trans) s.size = 1;

  // exhaustive axiom self-check; cheap for the group sizes used here
  const auto es = s.elements();
  for (auto a : es) {
    if (!(s.compose(a, s.inverse(a)) == s.identity()) ||
        !(s.compose(s.inverse(a), a) == s.identity()))
      throw std::runtime_error("make_group: inverse axiom failed");
    if (!(s.compose(a, s.identity()) == a) || !(s.compose(s.identity(), a) == a))
      throw std::runtime_error("make_group: identity axiom failed");
    for (auto b : es) {
      s.index(s.compose(a, b));  // closure: index validates range
      for (auto c : es)
        if (!(s.compose(s.compose(a, b), c) == s.compose(a, s.compose(b, c))))
          throw std::runtime_error("make_group: associativity failed");
    }
  }
  return s;
}

GroupSpec group_from_name(const std::string& name) {
  if (name == "z2") return make_group(GroupKind::Trans, 1);
  if (name == "p4") return make_group(GroupKind::Rot, 4);
  if (name == "p4m") return make_group(GroupKind::RotMirror, 4);
  throw std::runtime_error("group_from_name: unknown group '" + name + "'");
}

std::vector<double> cyclic_shift(const std::vector<double>& x, std::int64_t i) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  if (n == 0) throw std::runtime_error("cyclic_shift: empty vector");
  const std::int64_t k = ((i % n) + n) % n;
  std::vector<double> out(x.size());
  for (std::int64_t j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>((j + k) % n)];
  return out;
}

Tensor cyclic_shift(const Tensor& x, std::int64_t i) {
  if (x.rank() != 1) throw std::runtime_error("cyclic_shift: need 1-D tensor, got " + x.shape_str());
  return Tensor({x.dim(0)}, cyclic_shift(x.v, i));
}

Tensor cyclic_shift_axis(const Tensor& t, std::int64_t i, int axis) {
  if (axis < 0 || axis >= t.rank())
    throw std::runtime_error("cyclic_shift_axis: axis " + std::to_string(axis) +
                             " out of range for " + t.shape_str());
  const std::int64_t n = t.dim(axis);
  if (n == 0) throw std::runtime_error("cyclic_shift_axis: empty axis");
  const std::int64_t k = ((i % n) + n) % n;
  std::int64_t inner = 1, outer = 1;
  for (int a = axis + 1; a < t.rank(); ++a) inner *= t.dim(a);
  for (int a = 0; a < axis; ++a) outer *= t.dim(a);
  Tensor out(t.shape);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < n; ++j) {
      const double* src = t.data() + (o * n + (j + k) % n) * inner;
      double* dst = out.data() + (o * n + j) * inner;
      for (std::int64_t x = 0; x < inner; ++x) dst[x] = src[x];
    }
  return out;
}

namespace {

// quarter-turns for one abstract rotation step; exact only when 4 % r_max == 0
int quarter_turns(const GroupSpec& spec, int r) {
  if (spec.kind == GroupKind::Trans) return 0;
  if (4 % spec.r_max != 0)
    throw std::runtime_error("plane action: r_max " + std::to_string(spec.r_max) +
                             " has no exact lattice rotation; need r_max in {1,2,4}");
  return r * (4 / spec.r_max);
}

// spatial part of the plane action applied to one [H,W] plane
void plane_op(const double* in, double* out, std::int64_t H, std::int64_t W, int k, int m) {
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j) {
      std::int64_t si, sj;  // source coords after undoing rotate90^k
      switch (((k % 4) + 4) % 4) {
        case 0: si = i; sj = j; break;
        case 1: si = j; sj = H - 1 - i; break;
        case 2: si = H - 1 - i; sj = W - 1 - j; break;
        default: si = W - 1 - j; sj = i; break;
      }
      if (m) sj = W - 1 - sj;  // mirror applied first = innermost index map
      out[i * W + j] = in[si * W + sj];
    }
}

}  // namespace

Tensor act_on_input(const GroupSpec& spec, GroupElement g, const Tensor& t) {
  require_element(spec, g, "act_on_input");
  if (t.rank() < 2) throw std::runtime_error("act_on_input: need [...,H,W], got " + t.shape_str());
  const std::int64_t H = t.dim(t.rank() - 2), W = t.dim(t.rank() - 1);
  const int k = quarter_turns(spec, g.r);
  if (k % 4 != 0 && H != W)
    throw std::runtime_error("act_on_input: rotation needs square planes, got " + t.shape_str());
  Tensor out(t.shape);
  const std::int64_t planes = (H * W == 0) ? 0 : t.size() / (H * W);
  for (std::int64_t p = 0; p < planes; ++p)
    plane_op(t.data() + p * H * W, out.data() + p * H * W, H, W, k, g.m);
  return out;
}

Tensor act_on_feature(const GroupSpec& spec, GroupElement t, const Tensor& fmap) {
  require_element(spec, t, "act_on_feature");
  if (fmap.rank() != 5)
    throw std::runtime_error("act_on_feature: need [B,G,L,H,W], got " + fmap.shape_str());
  if (fmap.dim(1) != spec.size)
    throw std::runtime_error("act_on_feature: group axis " + std::to_string(fmap.dim(1)) +
                             " does not match " + spec.name() + " of size " +
                             std::to_string(spec.size));
  const std::int64_t B = fmap.dim(0), G = fmap.dim(1), L = fmap.dim(2);
  const std::int64_t H = fmap.dim(3), W = fmap.dim(4);
  const int k = quarter_turns(spec, t.r);
  if (k % 4 != 0 && H != W)
    throw std::runtime_error("act_on_feature: rotation needs square planes, got " +
                             fmap.shape_str());
  Tensor out(fmap.shape);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t h = 0; h < G; ++h) {
      const std::int64_t src = spec.index(spec.compose(spec.element(static_cast<int>(h)), t));
      for (std::int64_t l = 0; l < L; ++l)
        plane_op(fmap.data() + ((b * G + src) * L + l) * H * W,
                 out.data() + ((b * G + h) * L + l) * H * W, H, W, k, t.m);
    }
  return out;
}

Tensor permutation_matrix(const GroupSpec& spec, GroupElement t) {
  require_element(spec, t, "permutation_matrix");
  Tensor P({spec.size, spec.size});
  for (int h = 0; h < spec.size; ++h)
    P.v[static_cast<std::size_t>(P.idx(h, spec.index(spec.compose(spec.element(h), t))))] = 1.0;
  return P;
}

}  // namespace coattn
