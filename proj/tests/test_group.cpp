#include <vector>

#include "doctest.h"

#include "coattn/group.hpp"
#include "coattn/rng.hpp"
#include "coattn/tensor.hpp"

using namespace coattn;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace

TEST_CASE("group axioms hold for every supported stabilizer") {
  for (int r : {1, 2, 4, 8}) {
    const GroupSpec spec = make_group(GroupKind::Rot, r);  // ctor self-checks
    CHECK(spec.size == r);
    for (GroupElement a : spec.elements()) {
      CHECK(spec.compose(a, spec.inverse(a)) == spec.identity());
      CHECK(spec.compose(spec.inverse(a), a) == spec.identity());
      CHECK(spec.compose(a, spec.identity()) == a);
      for (GroupElement b : spec.elements())
        for (GroupElement c : spec.elements())
          CHECK(spec.compose(spec.compose(a, b), c) == spec.compose(a, spec.compose(b, c)));
    }
  }
  const GroupSpec d4 = make_group(GroupKind::RotMirror, 4);
  CHECK(d4.size == 8);
  // flip-first convention: (m=1,r=1)·(m=0,r=1) rotates backwards through the mirror
  CHECK(d4.compose({1, 1}, {1, 0}) == GroupElement{0, 1});
  CHECK(d4.compose({1, 1}, {0, 1}) == GroupElement{1, 0});
  CHECK(d4.inverse({1, 0}) == GroupElement{3, 0});
  CHECK(d4.inverse({3, 1}) == GroupElement{3, 1});  // reflections are involutions
  CHECK_THROWS(make_group(GroupKind::Rot, 0));
}

TEST_CASE("index/element round trip and group names") {
  const GroupSpec d4 = group_from_name("p4m");
  for (int i = 0; i < d4.size; ++i) CHECK(d4.index(d4.element(i)) == i);
  CHECK(d4.index({2, 1}) == 6);
  CHECK_THROWS(d4.index({2, 3}));  // m out of range
  CHECK_THROWS(group_from_name("p4").index({0, 1}));  // no mirrors in p4
  CHECK(group_from_name("p4").size == 4);
  CHECK(group_from_name("z2").size == 1);
  CHECK_THROWS(group_from_name("p8"));
}

TEST_CASE("cyclic_shift pinned values and additivity") {
  const std::vector<double> x = {0, 1, 2, 3};
  CHECK(cyclic_shift(x, 1) == std::vector<double>{1, 2, 3, 0});
  CHECK(cyclic_shift(x, -1) == std::vector<double>{3, 0, 1, 2});
  CHECK(cyclic_shift(x, 6) == cyclic_shift(x, 2));
  CHECK(cyclic_shift(x, 0) == x);
  Rng rng(5);
  std::vector<double> y(7);
  for (auto& v : y) v = rng.normal();
  for (int a = -3; a <= 3; ++a)
    for (int b = -3; b <= 3; ++b)
      CHECK(cyclic_shift(cyclic_shift(y, a), b) == cyclic_shift(y, a + b));
}

TEST_CASE("cyclic_shift_axis matches shifting each lane by hand") {
  Tensor t({2, 3, 4});
  for (std::int64_t i = 0; i < t.size(); ++i) t.v[i] = static_cast<double>(i);
  Tensor s = cyclic_shift_axis(t, 1, 1);
  for (std::int64_t a = 0; a < 2; ++a)
    for (std::int64_t b = 0; b < 3; ++b)
      for (std::int64_t c = 0; c < 4; ++c)
        CHECK(s.v[s.idx(a, b, c)] == t.v[t.idx(a, (b + 1) % 3, c)]);
  // shifting the trailing axis agrees with the vector overload
  Tensor row({4}, {5, 6, 7, 8});
  CHECK(cyclic_shift_axis(row, -1, 0).v == cyclic_shift(row.v, -1));
}

TEST_CASE("act_on_input applies mirror-then-rotate to the trailing plane") {
  const GroupSpec p4 = group_from_name("p4");
  Tensor img({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor r1 = act_on_input(p4, {1, 0}, img);
  CHECK(r1.v == std::vector<double>{2, 4, 1, 3});  // one counter-clockwise turn

  const GroupSpec d4 = make_group(GroupKind::RotMirror, 4);
  Tensor fr = act_on_input(d4, {1, 1}, img);
  // mirror first: {2,1,4,3}; then rotate: {1,3,2,4}
  CHECK(fr.v == std::vector<double>{1, 3, 2, 4});

  // identity leaves any rank untouched
  Tensor odd({3, 5});
  for (std::int64_t i = 0; i < odd.size(); ++i) odd.v[i] = static_cast<double>(i);
  CHECK(act_on_input(d4, {0, 0}, odd).v == odd.v);
  CHECK_THROWS(act_on_input(p4, {1, 0}, odd));  // rotation needs a square plane
}

TEST_CASE("act_on_feature is a left cyclic shift on a rotation group axis") {
  const GroupSpec p4 = group_from_name("p4");
  Tensor fm({1, 4, 1, 1, 1}, {10, 20, 30, 40});
  Tensor moved = act_on_feature(p4, {1, 0}, fm);
  CHECK(moved.v == std::vector<double>{20, 30, 40, 10});
  Tensor back = act_on_feature(p4, {3, 0}, moved);
  CHECK(back.v == fm.v);
}

TEST_CASE("feature actions compose like the group") {
  Rng rng(11);
  for (const char* name : {"p4", "p4m"}) {
    const GroupSpec spec = group_from_name(name);
    Tensor fm({2, spec.size, 3, 4, 4});
    for (auto& v : fm.v) v = rng.normal();
    for (GroupElement g : spec.elements())
      for (GroupElement h : spec.elements()) {
        Tensor two_step = act_on_feature(spec, g, act_on_feature(spec, h, fm));
        Tensor one_step = act_on_feature(spec, spec.compose(g, h), fm);
        CHECK(max_abs_diff(two_step, one_step) == 0.0);
      }
  }
}

TEST_CASE("permutation matrices represent the group exactly") {
  for (const char* name : {"p4", "p4m"}) {
    const GroupSpec spec = group_from_name(name);
    const std::int64_t n = spec.size;

    Tensor id = permutation_matrix(spec, spec.identity());
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) CHECK(id.v[id.idx(i, j)] == (i == j ? 1.0 : 0.0));

    for (GroupElement g : spec.elements()) {
      Tensor P = permutation_matrix(spec, g);
      for (std::int64_t i = 0; i < n; ++i) {  // each row and column hits exactly one entry
        double row = 0, col = 0;
        for (std::int64_t j = 0; j < n; ++j) {
          row += P.v[P.idx(i, j)];
          col += P.v[P.idx(j, i)];
        }
        CHECK(row == 1.0);
        CHECK(col == 1.0);
      }
      for (GroupElement h : spec.elements()) {
        Tensor Pg = permutation_matrix(spec, g), Ph = permutation_matrix(spec, h);
        Tensor prod({n, n});
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t k = 0; k < n; ++k)
            for (std::int64_t j = 0; j < n; ++j)
              prod.v[prod.idx(i, j)] += Pg.v[Pg.idx(i, k)] * Ph.v[Ph.idx(k, j)];
        Tensor Pgh = permutation_matrix(spec, spec.compose(g, h));
        CHECK(max_abs_diff(prod, Pgh) == 0.0);
      }
    }
  }
}

TEST_CASE("every multiplication-table row is a permutation") {
  const GroupSpec d4 = group_from_name("p4m");
  for (GroupElement t : d4.elements()) {
    std::vector<int> seen(8, 0);
    for (GroupElement h : d4.elements()) seen[static_cast<std::size_t>(d4.index(d4.compose(h, t)))]++;
    for (int count : seen) CHECK(count == 1);
  }
}
