#include <cmath>
#include <vector>

#include "doctest.h"

#include "coattn/rng.hpp"
#include "coattn/tensor.hpp"

using namespace coattn;

namespace {

// Six-loop reference correlation, deliberately written in the dumbest way
// possible so it cannot share a bug with the production kernel.
Tensor conv2d_reference(const Tensor& input, const Tensor& filters, int pad) {
  const std::int64_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::int64_t cout = filters.dim(0), kh = filters.dim(2), kw = filters.dim(3);
  const std::int64_t ho = h + 2 * pad - kh + 1, wo = w + 2 * pad - kw + 1;
  Tensor out({cout, ho, wo});
  for (std::int64_t co = 0; co < cout; ++co)
    for (std::int64_t y = 0; y < ho; ++y)
      for (std::int64_t x = 0; x < wo; ++x) {
        double acc = 0.0;
        for (std::int64_t ci = 0; ci < cin; ++ci)
          for (std::int64_t dy = 0; dy < kh; ++dy)
            for (std::int64_t dx = 0; dx < kw; ++dx) {
              const std::int64_t iy = y + dy - pad, ix = x + dx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += input.v[input.idx(ci, iy, ix)] * filters.v[filters.idx(co, ci, dy, dx)];
            }
        out.v[out.idx(co, y, x)] = acc;
      }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.dim(1) == 3);
  CHECK(t.shape_str() == "[2,3,4]");
  CHECK(t.idx(1, 2, 3) == 23);
  CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));  // data length mismatch
}

TEST_CASE("conv2d matches a hand-computed 3x3 all-ones neighborhood sum") {
  Tensor input({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor filt({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor out = conv2d(input, filt, 1);
  const std::vector<double> want = {12, 21, 16, 27, 45, 33, 24, 39, 28};
  REQUIRE(out.shape == std::vector<std::int64_t>{1, 3, 3});
  for (int i = 0; i < 9; ++i) CHECK(out.v[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("conv2d agrees with the six-loop reference over random shapes") {
  Rng rng(42);
  for (int trial = 0; trial < 60; ++trial) {
    const std::int64_t cin = 1 + rng.uniform_int(3), cout = 1 + rng.uniform_int(2);
    const std::int64_t h = 1 + rng.uniform_int(6), w = 1 + rng.uniform_int(6);
    const std::int64_t k = 2 * rng.uniform_int(3) + 1;  // 1, 3, 5
    const int pad = static_cast<int>(rng.uniform_int(3));
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    Tensor input({cin, h, w});
    for (auto& x : input.v) x = rng.normal();
    Tensor filt({cout, cin, k, k});
    for (auto& x : filt.v) x = rng.normal();
    CHECK(max_abs_diff(conv2d(input, filt, pad), conv2d_reference(input, filt, pad)) < 1e-12);
  }
}

TEST_CASE("conv2d validates its inputs") {
  Tensor input({1, 4, 4});
  CHECK_THROWS(conv2d(input, Tensor({1, 1, 2, 2}), 0));  // even kernel
  CHECK_THROWS(conv2d(input, Tensor({1, 2, 3, 3}), 1));  // channel mismatch
  CHECK_THROWS(conv2d(Tensor({4, 4}), Tensor({1, 1, 3, 3}), 1));  // rank
  CHECK_THROWS(conv2d(input, Tensor({1, 1, 5, 5}), 0));  // kernel exceeds padded input
}

TEST_CASE("rotate90 is the counter-clockwise quarter turn") {
  Tensor p({2, 2}, {1, 2, 3, 4});
  Tensor r1 = rotate90(p, 1);
  CHECK(r1.v == std::vector<double>{2, 4, 1, 3});
  CHECK(rotate90(p, 4).v == p.v);
  CHECK(rotate90(rotate90(p, 1), 1).v == rotate90(p, 2).v);
  CHECK(rotate90(rotate90(p, 1), 3).v == p.v);
  CHECK(rotate90(p, -1).v == rotate90(p, 3).v);
  CHECK_THROWS(rotate90(Tensor({2, 3}), 1));  // non-square
}

TEST_CASE("hflip mirrors left-right and is an involution") {
  Tensor p({2, 2}, {1, 2, 3, 4});
  CHECK(hflip(p).v == std::vector<double>{2, 1, 4, 3});
  CHECK(hflip(hflip(p)).v == p.v);
  Tensor wide({1, 3}, {7, 8, 9});
  CHECK(hflip(wide).v == std::vector<double>{9, 8, 7});
}

TEST_CASE("softmax basics and stability") {
  Tensor two({2}, {0.0, 0.0});
  CHECK(softmax(two).v[0] == doctest::Approx(0.5).epsilon(1e-15));

  // log-odds 1:2
  Tensor lo({2}, {0.0, std::log(2.0)});
  Tensor s = softmax(lo);
  CHECK(s.v[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(s.v[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  // a large common shift must not overflow
  Tensor big({2}, {1000.0, 1000.0 + std::log(2.0)});
  Tensor sb = softmax(big);
  CHECK(sb.v[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  double sum = 0.0;
  Tensor r({5}, {0.3, -1.2, 2.0, 0.0, -0.5});
  for (double x : softmax(r).v) sum += x;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS(softmax(Tensor({2, 2})));
}

TEST_CASE("finite_diff_grad recovers analytic gradients of smooth maps") {
  Tensor x({3}, {0.4, -1.1, 2.3});
  auto quad = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.v) s += v * v;
    return s;
  };
  Tensor g = finite_diff_grad(quad, x, 1e-4);
  for (int i = 0; i < 3; ++i) CHECK(g.v[i] == doctest::Approx(2.0 * x.v[i]).epsilon(1e-7));

  auto wavy = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.v) s += std::sin(v);
    return s;
  };
  Tensor gw = finite_diff_grad(wavy, x, 1e-4);
  for (int i = 0; i < 3; ++i) CHECK(gw.v[i] == doctest::Approx(std::cos(x.v[i])).epsilon(1e-7));
}

TEST_CASE("rng is deterministic and roughly uniform") {
  Rng a(123), b(123), c(124);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() != c.next_u64());
  Rng r(7);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += u;
  }
  CHECK(mean / 10000 == doctest::Approx(0.5).epsilon(0.05));
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t k = r.uniform_int(7);
    CHECK(k >= 0);
    CHECK(k < 7);
  }
}
