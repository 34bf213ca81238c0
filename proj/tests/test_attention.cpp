#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"

#include "coattn/attention.hpp"
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

double rel_err(const Tensor& analytic, const Tensor& fd) {
  REQUIRE(analytic.shape == fd.shape);
  double worst = 0.0;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({1.0, std::abs(analytic.v[i]), std::abs(fd.v[i])});
    worst = std::max(worst, std::abs(analytic.v[i] - fd.v[i]) / denom);
  }
  return worst;
}

Tensor randn(std::vector<std::int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = rng.normal();
  return t;
}

double dot_loss(const Tensor& out, const Tensor& probe) {
  REQUIRE(out.shape == probe.shape);
  double s = 0.0;
  for (std::int64_t i = 0; i < out.size(); ++i) s += out.v[i] * probe.v[i];
  return s;
}

// gap between the two largest attention scores; finite-difference probes are
// only trustworthy when the peak cannot flip
double peak_gap(const Tensor& x, const Tensor& atilde) {
  const std::int64_t n = x.dim(0);
  Tensor a({n});
  for (std::int64_t j = 0; j < n; ++j)
    for (std::int64_t i = 0; i < n; ++i) a.v[j] += x.v[i] * atilde.v[atilde.idx(i, j)];
  double best = -1e300, second = -1e300;
  for (double v : a.v) {
    if (v > best) second = best, best = v;
    else if (v > second) second = v;
  }
  return best - second;
}

}  // namespace

TEST_CASE("build_circulant lays out c as first column with constant diagonals") {
  Tensor c({4}, {1, 2, 3, 4});
  Tensor C = build_circulant(c);
  REQUIRE(C.shape == std::vector<std::int64_t>{4, 4});
  const std::vector<double> want = {1, 4, 3, 2,   //
                                    2, 1, 4, 3,   //
                                    3, 2, 1, 4,   //
                                    4, 3, 2, 1};
  CHECK(C.v == want);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(C.v[C.idx(i, 0)] == c.v[i]);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(C.v[C.idx(i, i)] == c.v[0]);
}

TEST_CASE("build_block_circulant pairs circulant diagonal blocks with reversal blocks") {
  Tensor c1({4}, {1, 2, 3, 4}), c2({4}, {5, 6, 7, 8});
  Tensor B = build_block_circulant(c1, c2);
  REQUIRE(B.shape == std::vector<std::int64_t>{8, 8});
  const std::vector<double> want = {
      1, 4, 3, 2, 5, 6, 7, 8,   //
      2, 1, 4, 3, 6, 7, 8, 5,   //
      3, 2, 1, 4, 7, 8, 5, 6,   //
      4, 3, 2, 1, 8, 5, 6, 7,   //
      5, 6, 7, 8, 1, 4, 3, 2,   //
      6, 7, 8, 5, 2, 1, 4, 3,   //
      7, 8, 5, 6, 3, 2, 1, 4,   //
      8, 5, 6, 7, 4, 3, 2, 1};
  CHECK(B.v == want);
  // both defining vectors sit in their block's first column
  for (std::int64_t i = 0; i < 4; ++i) {
    CHECK(B.v[B.idx(i, 0)] == c1.v[i]);
    CHECK(B.v[B.idx(4 + i, 0)] == c2.v[i]);
  }
  CHECK_THROWS(build_block_circulant(c1, Tensor({3})));
}

TEST_CASE("structured maps commute with their group's permutations; folded layout fails") {
  Rng rng(61);
  auto commutator = [](const Tensor& M, const Tensor& P) {
    const std::int64_t n = M.dim(0);
    Tensor pm({n, n}), mp({n, n});
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t k = 0; k < n; ++k)
        for (std::int64_t j = 0; j < n; ++j) {
          pm.v[pm.idx(i, j)] += P.v[P.idx(i, k)] * M.v[M.idx(k, j)];
          mp.v[mp.idx(i, j)] += M.v[M.idx(i, k)] * P.v[P.idx(k, j)];
        }
    double worst = 0.0;
    for (std::int64_t i = 0; i < n * n; ++i) worst = std::max(worst, std::abs(pm.v[i] - mp.v[i]));
    return worst;
  };

  const GroupSpec p4 = group_from_name("p4");
  Tensor c = randn({4}, rng);
  Tensor C = build_circulant(c);
  for (GroupElement g : p4.elements())
    CHECK(commutator(C, permutation_matrix(p4, g)) == 0.0);

  const GroupSpec d4 = group_from_name("p4m");
  Tensor B = build_block_circulant(randn({4}, rng), randn({4}, rng));
  for (GroupElement g : d4.elements())
    CHECK(commutator(B, permutation_matrix(d4, g)) == 0.0);

  // anti-circulant layout (folded diagonals) does not commute with shifts
  Tensor anti({4, 4});
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) anti.v[anti.idx(i, j)] = c.v[(i + j) % 4];
  CHECK(commutator(anti, permutation_matrix(p4, {1, 0})) > 1e-3);

  // a block-circulant with circulant (not reversal) off-diagonal blocks fails
  // on the mirrored elements
  Tensor naive({8, 8});
  Tensor C2 = build_circulant(Tensor({4}, {0.7, -0.3, 1.1, 0.2}));
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j) {
      naive.v[naive.idx(i, j)] = C.v[C.idx(i, j)];
      naive.v[naive.idx(4 + i, 4 + j)] = C.v[C.idx(i, j)];
      naive.v[naive.idx(i, 4 + j)] = C2.v[C2.idx(i, j)];
      naive.v[naive.idx(4 + i, j)] = C2.v[C2.idx(i, j)];
    }
  double worst = 0.0;
  for (GroupElement g : d4.elements())
    worst = std::max(worst, commutator(naive, permutation_matrix(d4, g)));
  CHECK(worst > 1e-3);
}

TEST_CASE("compact_attend reproduces frozen values") {
  // identity map: scores depend on x alone
  Tensor x({4}, {2, 0, 0, 0});
  Tensor I({4, 4});
  for (int i = 0; i < 4; ++i) I.v[I.idx(i, i)] = 1.0;
  Tensor out = compact_attend(x, I);
  CHECK(out.v[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(out.v[1] == doctest::Approx(0.0).epsilon(1e-15));

  Tensor x2({4}, {2, 1, 1, 1});
  Tensor out2 = compact_attend(x2, I);
  CHECK(out2.v[0] == doctest::Approx(2.0).epsilon(1e-15));
  for (int j = 1; j < 4; ++j)
    CHECK(out2.v[j] == doctest::Approx(0.7788007830714049).epsilon(1e-14));

  // through an actual circulant: a = x*C = [1,0,2,3], peak at index 3
  Tensor x3({4}, {1, 2, 0, -1});
  Tensor C = build_circulant(Tensor({4}, {1, 0, 2, 0}));
  Tensor out3 = compact_attend(x3, C);
  CHECK(out3.v[0] == doctest::Approx(0.6065306597126334).epsilon(1e-14));
  CHECK(out3.v[1] == doctest::Approx(0.9447331054820294).epsilon(1e-14));
  CHECK(out3.v[2] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(out3.v[3] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("a uniform vector is a fixed point of compact attention") {
  Rng rng(67);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor c = randn({4}, rng);
    Tensor x({4});
    const double level = rng.uniform(0.5, 2.0);
    for (auto& v : x.v) v = level;
    Tensor out = compact_attend(x, build_circulant(c));
    for (int i = 0; i < 4; ++i) CHECK(out.v[i] == doctest::Approx(level).epsilon(1e-14));
  }
}

TEST_CASE("circulant attention is shift-equivariant; a generic full map is not") {
  Rng rng(71);
  const GroupSpec p4 = group_from_name("p4");
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = randn({4}, rng);
    Tensor C = build_circulant(randn({4}, rng));
    for (GroupElement g : p4.elements()) {
      Tensor xs({4}, cyclic_shift(x.v, g.r));
      const double dev =
          max_abs_diff(compact_attend(xs, C), Tensor({4}, cyclic_shift(compact_attend(x, C).v, g.r)));
      CHECK(dev < 1e-12);
    }
  }

  double worst = 0.0;
  for (int trial = 0; trial < 100 && worst <= 1e-3; ++trial) {
    Tensor x = randn({4}, rng);
    Tensor A = randn({4, 4}, rng);
    Tensor xs({4}, cyclic_shift(x.v, 1));
    worst = std::max(worst, max_abs_diff(compact_attend(xs, A),
                                         Tensor({4}, cyclic_shift(compact_attend(x, A).v, 1))));
  }
  CHECK(worst > 1e-3);
}

TEST_CASE("attend_backward matches finite differences, including the parameter tying") {
  Rng rng(73);
  int done = 0;
  for (int trial = 0; trial < 40 && done < 10; ++trial) {
    Tensor x = randn({4}, rng);
    Tensor c = randn({4}, rng);
    Tensor C = build_circulant(c);
    if (peak_gap(x, C) < 0.2) continue;  // keep the argmax stable under probes
    ++done;
    const Tensor probe = randn({4}, rng);
    AttendBack g = attend_backward(x, C, probe);

    auto loss_x = [&](const Tensor& t) { return dot_loss(compact_attend(t, C), probe); };
    CHECK(rel_err(g.d_x, finite_diff_grad(loss_x, x, 1e-3)) < 1e-4);

    auto loss_A = [&](const Tensor& t) { return dot_loss(compact_attend(x, t), probe); };
    CHECK(rel_err(g.d_atilde, finite_diff_grad(loss_A, C, 1e-3)) < 1e-4);

    // folding the dense gradient equals differentiating through the tying
    auto loss_c = [&](const Tensor& t) {
      return dot_loss(compact_attend(x, build_circulant(t)), probe);
    };
    CHECK(rel_err(fold_circulant_grad(g.d_atilde), finite_diff_grad(loss_c, c, 1e-3)) < 1e-4);
  }
  REQUIRE(done == 10);

  done = 0;
  for (int trial = 0; trial < 40 && done < 10; ++trial) {
    Tensor x = randn({8}, rng);
    Tensor c1 = randn({4}, rng), c2 = randn({4}, rng);
    Tensor B = build_block_circulant(c1, c2);
    if (peak_gap(x, B) < 0.2) continue;
    ++done;
    const Tensor probe = randn({8}, rng);
    AttendBack g = attend_backward(x, B, probe);
    auto [d_c1, d_c2] = fold_block_circulant_grad(g.d_atilde);

    auto loss_c1 = [&](const Tensor& t) {
      return dot_loss(compact_attend(x, build_block_circulant(t, c2)), probe);
    };
    CHECK(rel_err(d_c1, finite_diff_grad(loss_c1, c1, 1e-3)) < 1e-4);
    auto loss_c2 = [&](const Tensor& t) {
      return dot_loss(compact_attend(x, build_block_circulant(c1, t)), probe);
    };
    CHECK(rel_err(d_c2, finite_diff_grad(loss_c2, c2, 1e-3)) < 1e-4);
  }
  REQUIRE(done == 10);
}

TEST_CASE("attention parameter containers know their size and count") {
  AttentionParams circ = circulant_attention(Tensor({4}, {1, 0, 0, 0}));
  CHECK(circ.n() == 4);
  CHECK(circ.count() == 4);
  AttentionParams block = block_circulant_attention(Tensor({4}), Tensor({4}));
  CHECK(block.n() == 8);
  CHECK(block.count() == 8);
  AttentionParams full = full_attention(Tensor({4, 4}));
  CHECK(full.n() == 4);
  CHECK(full.count() == 16);
  CHECK_THROWS(full_attention(Tensor({4, 3})));

  // materialize round-trips the defining vectors
  Tensor M = materialize(circ);
  for (int i = 0; i < 4; ++i) CHECK(M.v[M.idx(i, 0)] == circ.a_c.v[i]);
}

TEST_CASE("co_attentive_map applies per-channel attention along the group axis") {
  Rng rng(79);
  const GroupSpec p4 = group_from_name("p4");
  FeatureMap in{randn({2, 4, 2, 3, 3}, rng), p4};
  std::vector<AttentionParams> att;
  att.push_back(circulant_attention(randn({4}, rng)));
  att.push_back(circulant_attention(randn({4}, rng)));
  FeatureMap out = co_attentive_map(in, att);
  REQUIRE(out.t.shape == in.t.shape);

  // spot-check every site against the vector primitive
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t l = 0; l < 2; ++l) {
      Tensor A = materialize(att[static_cast<std::size_t>(l)]);
      for (std::int64_t y = 0; y < 3; ++y)
        for (std::int64_t x = 0; x < 3; ++x) {
          Tensor lane({4});
          for (std::int64_t g = 0; g < 4; ++g) lane.v[g] = in.t.v[in.t.idx(b, g, l, y, x)];
          Tensor want = compact_attend(lane, A);
          for (std::int64_t g = 0; g < 4; ++g)
            CHECK(out.t.v[out.t.idx(b, g, l, y, x)] ==
                  doctest::Approx(want.v[g]).epsilon(1e-14));
        }
    }

  CHECK_THROWS(co_attentive_map(in, {att[0]}));  // channel count mismatch
  std::vector<AttentionParams> wrong_n;
  wrong_n.push_back(circulant_attention(randn({8}, rng)));
  wrong_n.push_back(circulant_attention(randn({8}, rng)));
  CHECK_THROWS(co_attentive_map(in, wrong_n));  // vector length vs group size
}

TEST_CASE("co_attentive_backward matches finite differences") {
  Rng rng(83);
  const GroupSpec p4 = group_from_name("p4");
  FeatureMap in{Tensor({1, 4, 2, 2, 2}), p4};
  std::vector<AttentionParams> att;
  att.push_back(circulant_attention(randn({4}, rng)));
  att.push_back(circulant_attention(randn({4}, rng)));
  // redraw the input until every attention site has a comfortable peak gap
  for (int attempt = 0;; ++attempt) {
    REQUIRE(attempt < 50);
    for (auto& v : in.t.v) v = rng.normal();
    double gap = 1e300;
    for (std::int64_t l = 0; l < 2; ++l) {
      Tensor A = materialize(att[static_cast<std::size_t>(l)]);
      for (std::int64_t y = 0; y < 2; ++y)
        for (std::int64_t x = 0; x < 2; ++x) {
          Tensor lane({4});
          for (std::int64_t g = 0; g < 4; ++g) lane.v[g] = in.t.v[in.t.idx(0, g, l, y, x)];
          gap = std::min(gap, peak_gap(lane, A));
        }
    }
    if (gap > 0.2) break;
  }

  const Tensor probe = randn({1, 4, 2, 2, 2}, rng);
  CoAttendGrads g = co_attentive_backward(in, att, probe);

  auto loss_in = [&](const Tensor& t) {
    return dot_loss(co_attentive_map({t, p4}, att).t, probe);
  };
  CHECK(rel_err(g.d_input, finite_diff_grad(loss_in, in.t, 1e-3)) < 1e-4);

  for (std::size_t l = 0; l < 2; ++l) {
    auto loss_c = [&](const Tensor& t) {
      std::vector<AttentionParams> probe_att = att;
      probe_att[l] = circulant_attention(t);
      return dot_loss(co_attentive_map(in, probe_att).t, probe);
    };
    CHECK(rel_err(g.d_params[l].a_c, finite_diff_grad(loss_c, att[l].a_c, 1e-3)) < 1e-4);
  }
}
