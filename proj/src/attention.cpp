#include "coattn/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace coattn {

namespace {

void require_vec(const Tensor& t, const char* who) {
  if (t.rank() != 1 || t.size() == 0)
    throw std::runtime_error(std::string(who) + ": need non-empty 1-D tensor, got " +
                             t.shape_str());
}

// forward pass pieces shared by compact_attend and attend_backward
struct AttendWork {
  std::vector<double> a, scores, w;
  std::int64_t peak = 0;
};

void attend_forward(const double* x, std::int64_t n, const double* A, AttendWork& wk) {
  wk.a.assign(static_cast<std::size_t>(n), 0.0);
  wk.scores.resize(static_cast<std::size_t>(n));
  wk.w.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = A + i * n;
    for (std::int64_t j = 0; j < n; ++j) wk.a[static_cast<std::size_t>(j)] += xi * row[j];
  }
  double mx = wk.a[0];
  for (double v : wk.a) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::int64_t j = 0; j < n; ++j) {
    wk.scores[static_cast<std::size_t>(j)] = std::exp(wk.a[static_cast<std::size_t>(j)] / static_cast<double>(n) - mx / static_cast<double>(n));
    sum += wk.scores[static_cast<std::size_t>(j)];
  }
  wk.peak = 0;
  for (std::int64_t j = 0; j < n; ++j) {
    wk.scores[static_cast<std::size_t>(j)] /= sum;
    if (wk.scores[static_cast<std::size_t>(j)] > wk.scores[static_cast<std::size_t>(wk.peak)])
      wk.peak = j;  // first max wins ties
  }
  const double peak = wk.scores[static_cast<std::size_t>(wk.peak)];
  for (std::int64_t j = 0; j < n; ++j)
    wk.w[static_cast<std::size_t>(j)] = wk.scores[static_cast<std::size_t>(j)] / peak;
}

// d_x and d_A accumulation for one vector; d_A may be null
void attend_backward_vec(const double* x, std::int64_t n, const double* A, const double* up,
                         AttendWork& wk, double* d_x, double* d_A) {
  attend_forward(x, n, A, wk);
  const double M = wk.scores[static_cast<std::size_t>(wk.peak)];
  // through the weighting w = scores/M, y = w .* x
  std::vector<double> g_s(static_cast<std::size_t>(n));
  double peak_acc = 0.0;
  for (std::int64_t j = 0; j < n; ++j) {
    const double gw = up[j] * x[j];
    g_s[static_cast<std::size_t>(j)] = gw / M;
    peak_acc += gw * wk.scores[static_cast<std::size_t>(j)];
  }
  g_s[static_cast<std::size_t>(wk.peak)] -= peak_acc / (M * M);
  // softmax jacobian, then the 1/n scale of the scores' argument
  double dot = 0.0;
  for (std::int64_t j = 0; j < n; ++j) dot += g_s[static_cast<std::size_t>(j)] * wk.scores[static_cast<std::size_t>(j)];
  std::vector<double> g_a(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j)
    g_a[static_cast<std::size_t>(j)] =
        wk.scores[static_cast<std::size_t>(j)] * (g_s[static_cast<std::size_t>(j)] - dot) / static_cast<double>(n);
  // a = x * A
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = up[i] * wk.w[static_cast<std::size_t>(i)];
    const double* row = A + i * n;
    for (std::int64_t j = 0; j < n; ++j) acc += row[j] * g_a[static_cast<std::size_t>(j)];
    d_x[i] += acc;
    if (d_A) {
      double* drow = d_A + i * n;
      const double xi = x[i];
      for (std::int64_t j = 0; j < n; ++j) drow[j] += xi * g_a[static_cast<std::size_t>(j)];
    }
  }
}

}  // namespace

std::int64_t AttentionParams::n() const {
  switch (kind) {
    case AttentionKind::Full: return atilde.rank() == 2 ? atilde.dim(0) : 0;
    case AttentionKind::Circulant: return a_c.size();
    default: return 2 * a_c1.size();
  }
}

std::int64_t AttentionParams::count() const {
  switch (kind) {
    case AttentionKind::Full: return atilde.size();
    case AttentionKind::Circulant: return a_c.size();
    default: return a_c1.size() + a_c2.size();
  }
}

AttentionParams full_attention(Tensor atilde) {
  if (atilde.rank() != 2 || atilde.dim(0) != atilde.dim(1) || atilde.size() == 0)
    throw std::runtime_error("full_attention: need square [n,n], got " + atilde.shape_str());
  AttentionParams p;
  p.kind = AttentionKind::Full;
  p.atilde = std::move(atilde);
  return p;
}

AttentionParams circulant_attention(Tensor a_c) {
  require_vec(a_c, "circulant_attention");
  AttentionParams p;
  p.kind = AttentionKind::Circulant;
  p.a_c = std::move(a_c);
  return p;
}

AttentionParams block_circulant_attention(Tensor a_c1, Tensor a_c2) {
  require_vec(a_c1, "block_circulant_attention");
  require_vec(a_c2, "block_circulant_attention");
  if (a_c1.size() != a_c2.size())
    throw std::runtime_error("block_circulant_attention: defining vectors differ in length, " +
                             a_c1.shape_str() + " vs " + a_c2.shape_str());
  AttentionParams p;
  p.kind = AttentionKind::BlockCirculant;
  p.a_c1 = std::move(a_c1);
  p.a_c2 = std::move(a_c2);
  return p;
}

Tensor build_circulant(const Tensor& c) {
  require_vec(c, "build_circulant");
  const std::int64_t n = c.size();
  Tensor A({n, n});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      A.v[static_cast<std::size_t>(i * n + j)] = c.v[static_cast<std::size_t>(((i - j) % n + n) % n)];
  return A;
}

Tensor build_block_circulant(const Tensor& c1, const Tensor& c2) {
  require_vec(c1, "build_block_circulant");
  require_vec(c2, "build_block_circulant");
  if (c1.size() != c2.size())
    throw std::runtime_error("build_block_circulant: defining vectors differ in length, " +
                             c1.shape_str() + " vs " + c2.shape_str());
  const std::int64_t r = c1.size(), n = 2 * r;
  Tensor A({n, n});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < r; ++j) {
      const double diag = c1.v[static_cast<std::size_t>(((i - j) % r + r) % r)];
      const double anti = c2.v[static_cast<std::size_t>((i + j) % r)];
      A.v[static_cast<std::size_t>(i * n + j)] = diag;
      A.v[static_cast<std::size_t>((i + r) * n + j + r)] = diag;
      A.v[static_cast<std::size_t>(i * n + j + r)] = anti;
      A.v[static_cast<std::size_t>((i + r) * n + j)] = anti;
    }
  return A;
}

Tensor materialize(const AttentionParams& p) {
  switch (p.kind) {
    case AttentionKind::Full: return p.atilde;
    case AttentionKind::Circulant: return build_circulant(p.a_c);
    default: return build_block_circulant(p.a_c1, p.a_c2);
  }
}

Tensor compact_attend(const Tensor& x, const Tensor& atilde) {
  require_vec(x, "compact_attend");
  const std::int64_t n = x.size();
  if (atilde.rank() != 2 || atilde.dim(0) != n || atilde.dim(1) != n)
    throw std::runtime_error("compact_attend: matrix " + atilde.shape_str() +
                             " does not match vector of length " + std::to_string(n));
  AttendWork wk;
  attend_forward(x.data(), n, atilde.data(), wk);
  Tensor out({n});
  for (std::int64_t i = 0; i < n; ++i)
    out.v[static_cast<std::size_t>(i)] = wk.w[static_cast<std::size_t>(i)] * x.v[static_cast<std::size_t>(i)];
  return out;
}

AttendBack attend_backward(const Tensor& x, const Tensor& atilde, const Tensor& upstream) {
  require_vec(x, "attend_backward");
  const std::int64_t n = x.size();
  if (upstream.shape != x.shape)
    throw std::runtime_error("attend_backward: upstream shape " + upstream.shape_str() +
                             " does not match " + x.shape_str());
  if (atilde.rank() != 2 || atilde.dim(0) != n || atilde.dim(1) != n)
    throw std::runtime_error("attend_backward: matrix " + atilde.shape_str() +
                             " does not match vector of length " + std::to_string(n));
  AttendBack g{Tensor({n}), Tensor({n, n})};
  AttendWork wk;
  attend_backward_vec(x.data(), n, atilde.data(), upstream.data(), wk, g.d_x.data(),
                      g.d_atilde.data());
  return g;
}

Tensor fold_circulant_grad(const Tensor& d_atilde) {
  if (d_atilde.rank() != 2 || d_atilde.dim(0) != d_atilde.dim(1))
    throw std::runtime_error("fold_circulant_grad: need square matrix, got " +
                             d_atilde.shape_str());
  const std::int64_t n = d_atilde.dim(0);
  Tensor g({n});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      g.v[static_cast<std::size_t>(((i - j) % n + n) % n)] += d_atilde.v[static_cast<std::size_t>(i * n + j)];
  return g;
}

std::pair<Tensor, Tensor> fold_block_circulant_grad(const Tensor& d_atilde) {
  if (d_atilde.rank() != 2 || d_atilde.dim(0) != d_atilde.dim(1) || d_atilde.dim(0) % 2 != 0)
    throw std::runtime_error("fold_block_circulant_grad: need even square matrix, got " +
                             d_atilde.shape_str());
  const std::int64_t n = d_atilde.dim(0), r = n / 2;
  Tensor g1({r}), g2({r});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < r; ++j) {
      const std::size_t diag = static_cast<std::size_t>(((i - j) % r + r) % r);
      const std::size_t anti = static_cast<std::size_t>((i + j) % r);
      g1.v[diag] += d_atilde.v[static_cast<std::size_t>(i * n + j)] +
                    d_atilde.v[static_cast<std::size_t>((i + r) * n + j + r)];
      g2.v[anti] += d_atilde.v[static_cast<std::size_t>(i * n + j + r)] +
                    d_atilde.v[static_cast<std::size_t>((i + r) * n + j)];
    }
  return {std::move(g1), std::move(g2)};
}

namespace {

void check_co_attend(const FeatureMap& in, const std::vector<AttentionParams>& per_channel) {
  if (static_cast<std::int64_t>(per_channel.size()) != in.L())
    throw std::runtime_error("co_attentive_map: " + std::to_string(per_channel.size()) +
                             " attention maps for " + std::to_string(in.L()) + " channels");
  for (const auto& p : per_channel)
    if (p.n() != in.G())
      throw std::runtime_error("co_attentive_map: attention size " + std::to_string(p.n()) +
                               " does not match group axis " + std::to_string(in.G()));
}

}  // namespace

FeatureMap co_attentive_map(const FeatureMap& in, const std::vector<AttentionParams>& per_channel) {
  check_co_attend(in, per_channel);
  const std::int64_t B = in.B(), G = in.G(), L = in.L(), HW = in.H() * in.W();
  FeatureMap out{Tensor(in.t.shape), in.group};
  AttendWork wk;
  std::vector<double> x(static_cast<std::size_t>(G));
  for (std::int64_t l = 0; l < L; ++l) {
    const Tensor A = materialize(per_channel[static_cast<std::size_t>(l)]);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t i = 0; i < HW; ++i) {
        const std::int64_t base = (b * G * L + l) * HW + i;
        const std::int64_t stride = L * HW;
        for (std::int64_t h = 0; h < G; ++h) x[static_cast<std::size_t>(h)] = in.t.v[static_cast<std::size_t>(base + h * stride)];
        attend_forward(x.data(), G, A.data(), wk);
        for (std::int64_t h = 0; h < G; ++h)
          out.t.v[static_cast<std::size_t>(base + h * stride)] =
              wk.w[static_cast<std::size_t>(h)] * x[static_cast<std::size_t>(h)];
      }
  }
  return out;
}

CoAttendGrads co_attentive_backward(const FeatureMap& in,
                                    const std::vector<AttentionParams>& per_channel,
                                    const Tensor& upstream) {
  check_co_attend(in, per_channel);
  if (upstream.shape != in.t.shape)
    throw std::runtime_error("co_attentive_backward: upstream shape " + upstream.shape_str() +
                             " does not match " + in.t.shape_str());
  const std::int64_t B = in.B(), G = in.G(), L = in.L(), HW = in.H() * in.W();
  CoAttendGrads g;
  g.d_input = Tensor(in.t.shape);
  AttendWork wk;
  std::vector<double> x(static_cast<std::size_t>(G)), up(static_cast<std::size_t>(G)),
      dx(static_cast<std::size_t>(G));
  for (std::int64_t l = 0; l < L; ++l) {
    const Tensor A = materialize(per_channel[static_cast<std::size_t>(l)]);
    Tensor dA({G, G});
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t i = 0; i < HW; ++i) {
        const std::int64_t base = (b * G * L + l) * HW + i;
        const std::int64_t stride = L * HW;
        for (std::int64_t h = 0; h < G; ++h) {
          x[static_cast<std::size_t>(h)] = in.t.v[static_cast<std::size_t>(base + h * stride)];
          up[static_cast<std::size_t>(h)] = upstream.v[static_cast<std::size_t>(base + h * stride)];
          dx[static_cast<std::size_t>(h)] = 0.0;
        }
        attend_backward_vec(x.data(), G, A.data(), up.data(), wk, dx.data(), dA.data());
        for (std::int64_t h = 0; h < G; ++h)
          g.d_input.v[static_cast<std::size_t>(base + h * stride)] = dx[static_cast<std::size_t>(h)];
      }
    const auto& p = per_channel[static_cast<std::size_t>(l)];
    AttentionParams dp;
    dp.kind = p.kind;
    switch (p.kind) {
      case AttentionKind::Full: dp.atilde = std::move(dA); break;
      case AttentionKind::Circulant: dp.a_c = fold_circulant_grad(dA); break;
      default: {
        auto folded = fold_block_circulant_grad(dA);
        dp.a_c1 = std::move(folded.first);
        dp.a_c2 = std::move(folded.second);
        break;
      }
    }
    g.d_params.push_back(std::move(dp));
  }
  return g;
}

}  // namespace coattn
