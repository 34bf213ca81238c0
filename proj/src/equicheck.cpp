#include "coattn/equicheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace coattn {

namespace {

std::string fmt_dev(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

// group-axis permutation of a plain vector: out[h] = x[h*t]
std::vector<double> perm_vec(const GroupSpec& spec, GroupElement t, const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (int h = 0; h < spec.size; ++h)
    out[static_cast<std::size_t>(h)] =
        x[static_cast<std::size_t>(spec.index(spec.compose(spec.element(h), t)))];
  return out;
}

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = rng.normal();
  return t;
}

}  // namespace

std::string to_json(const CheckReport& r) {
  nlohmann::json j;
  j["check"] = r.check;
  j["trials"] = r.trials;
  j["max_dev"] = r.max_dev;
  j["tol"] = r.tol;
  j["pass"] = r.pass;
  if (!r.note.empty()) j["note"] = r.note;
  return j.dump();
}

std::string to_json(const std::vector<CheckReport>& rs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rs) arr.push_back(nlohmann::json::parse(to_json(r)));
  return arr.dump(2);
}

std::string report_table(const std::vector<CheckReport>& rs) {
  std::ostringstream os;
  std::size_t w = 10;
  for (const auto& r : rs) w = std::max(w, r.check.size());
  for (const auto& r : rs) {
    os << (r.pass ? "[pass] " : "[FAIL] ") << r.check << std::string(w - r.check.size() + 2, ' ')
       << "trials=" << r.trials << "  max_dev=" << fmt_dev(r.max_dev) << "  tol=" << fmt_dev(r.tol);
    if (!r.note.empty()) os << "  (" << r.note << ")";
    os << "\n";
  }
  return os.str();
}

CheckReport check_attention_equivariance(AttentionKind kind, const GroupSpec& spec, int trials,
                                         double tol, std::uint64_t seed) {
  CheckReport rep;
  rep.trials = trials;
  rep.tol = tol;
  const std::int64_t n = spec.size;
  switch (kind) {
    case AttentionKind::Full: rep.check = "attention-equivariance-full-" + spec.name(); break;
    case AttentionKind::Circulant:
      rep.check = "attention-equivariance-circulant-" + spec.name();
      break;
    default: rep.check = "attention-equivariance-block-" + spec.name(); break;
  }
  if (kind == AttentionKind::BlockCirculant && spec.kind != GroupKind::RotMirror)
    throw std::runtime_error("check_attention_equivariance: block attention needs a mirror group");

  Rng rng(seed);
  const auto elems = spec.elements();
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int trial = 0; trial < trials; ++trial) {
    for (auto& v : x) v = rng.normal();
    AttentionParams p;
    switch (kind) {
      case AttentionKind::Full: p = full_attention(random_tensor({n, n}, rng)); break;
      case AttentionKind::Circulant: p = circulant_attention(random_tensor({n}, rng)); break;
      default:
        p = block_circulant_attention(random_tensor({spec.r_max}, rng),
                                      random_tensor({spec.r_max}, rng));
        break;
    }
    const Tensor A = materialize(p);
    const Tensor y = compact_attend(Tensor({n}, x), A);
    for (const auto& t : elems) {
      const Tensor yp = compact_attend(Tensor({n}, perm_vec(spec, t, x)), A);
      const auto py = perm_vec(spec, t, y.v);
      for (std::int64_t h = 0; h < n; ++h) {
        const double dev = std::abs(yp.v[static_cast<std::size_t>(h)] - py[static_cast<std::size_t>(h)]);
        if (dev > rep.max_dev) {
          rep.max_dev = dev;
          if (dev > tol && rep.note.empty())
            rep.note = "first violation at trial " + std::to_string(trial) + ", element " +
                       std::to_string(spec.index(t));
        }
      }
    }
  }
  rep.pass = rep.max_dev <= tol;
  return rep;
}

CheckReport check_commutation(const Tensor& atilde, const GroupSpec& spec, double tol) {
  CheckReport rep;
  rep.check = "commutation-" + spec.name();
  rep.tol = tol;
  rep.trials = spec.size;
  if (atilde.rank() != 2 || atilde.dim(0) != spec.size || atilde.dim(1) != spec.size)
    throw std::runtime_error("check_commutation: matrix " + atilde.shape_str() +
                             " does not match group of size " + std::to_string(spec.size));
  const std::int64_t n = spec.size;
  for (const auto& t : spec.elements()) {
    const Tensor P = permutation_matrix(spec, t);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        double pa = 0.0, ap = 0.0;
        for (std::int64_t k = 0; k < n; ++k) {
          pa += P.v[static_cast<std::size_t>(i * n + k)] * atilde.v[static_cast<std::size_t>(k * n + j)];
          ap += atilde.v[static_cast<std::size_t>(i * n + k)] * P.v[static_cast<std::size_t>(k * n + j)];
        }
        const double dev = std::abs(pa - ap);
        if (dev > rep.max_dev) {
          rep.max_dev = dev;
          if (dev > tol && rep.note.empty())
            rep.note = "element " + std::to_string(spec.index(t)) + " at (" + std::to_string(i) +
                       "," + std::to_string(j) + ")";
        }
      }
  }
  rep.pass = rep.max_dev <= tol;
  return rep;
}

CheckReport check_layer_equivariance(const std::string& name, const LayerFactory& make_layer,
                                     const GroupSpec& spec, bool lifted_input,
                                     std::int64_t channels, std::int64_t hw, int trials,
                                     double tol, std::uint64_t seed) {
  CheckReport rep;
  rep.check = name;
  rep.trials = trials;
  rep.tol = tol;
  Rng rng(seed);
  const std::int64_t Gin = lifted_input ? spec.size : 1;
  for (int trial = 0; trial < trials; ++trial) {
    auto layer = make_layer(rng);
    FeatureMap x{random_tensor({1, Gin, channels, hw, hw}, rng),
                 lifted_input ? spec : make_group(GroupKind::Trans, 1)};
    const FeatureMap y = layer(x);
    for (const auto& g : spec.elements()) {
      FeatureMap xg{lifted_input ? act_on_feature(spec, g, x.t) : act_on_input(spec, g, x.t),
                    x.group};
      const FeatureMap yg = layer(xg);
      const Tensor want =
          y.G() == 1 ? act_on_input(spec, g, y.t) : act_on_feature(spec, g, y.t);
      for (std::int64_t i = 0; i < want.size(); ++i) {
        const double dev = std::abs(yg.t.v[static_cast<std::size_t>(i)] - want.v[static_cast<std::size_t>(i)]);
        if (dev > rep.max_dev) {
          rep.max_dev = dev;
          if (dev > tol && rep.note.empty())
            rep.note = "first violation at trial " + std::to_string(trial) + ", element " +
                       std::to_string(spec.index(g));
        }
      }
    }
  }
  rep.pass = rep.max_dev <= tol;
  return rep;
}

namespace {

// model truncated before orientation pooling (the equivariant stack)
FeatureMap forward_prefix(const Model& m, const Tensor& images) {
  FeatureMap cur = from_images(images);
  for (const auto& l : m.layers) {
    switch (l.kind) {
      case LayerKind::Lift: cur = lift_conv(cur, l.conv, m.group, l.padding); break;
      case LayerKind::GConv: cur = group_conv(cur, l.conv, l.padding); break;
      case LayerKind::Attend: cur = co_attentive_map(cur, l.att); break;
      case LayerKind::Relu: cur = relu(cur); break;
      case LayerKind::SpatialMaxPool: cur = spatial_max_pool(cur, l.pool); break;
      case LayerKind::OrientPool:
      case LayerKind::GlobalAvg:
      case LayerKind::Dense: return cur;
    }
  }
  return cur;
}

}  // namespace

CheckReport check_network_equivariance(const Model& m, const GroupSpec& spec, int n_images,
                                       double tol, std::uint64_t seed) {
  CheckReport rep;
  rep.check = "network-" + m.arch + "-under-" + spec.name();
  rep.trials = n_images;
  rep.tol = tol;
  Rng rng(seed);
  const bool stack_applies = m.group.size == spec.size && m.group.kind == spec.kind;
  double logit_dev = 0.0, stack_dev = 0.0;
  for (int i = 0; i < n_images; ++i) {
    const Tensor images = random_tensor({1, 1, 28, 28}, rng);
    const Tensor logits = model_forward(m, images);
    const FeatureMap stack = stack_applies ? forward_prefix(m, images) : FeatureMap{};
    for (const auto& g : spec.elements()) {
      const Tensor moved = act_on_input(spec, g, images);
      const Tensor logits_g = model_forward(m, moved);
      for (std::int64_t c = 0; c < logits.size(); ++c)
        logit_dev = std::max(logit_dev, std::abs(logits_g.v[static_cast<std::size_t>(c)] -
                                                 logits.v[static_cast<std::size_t>(c)]));
      if (stack_applies) {
        const FeatureMap stack_g = forward_prefix(m, moved);
        const Tensor want = act_on_feature(spec, g, stack.t);
        for (std::int64_t c = 0; c < want.size(); ++c)
          stack_dev = std::max(stack_dev, std::abs(stack_g.t.v[static_cast<std::size_t>(c)] -
                                                   want.v[static_cast<std::size_t>(c)]));
      }
    }
  }
  rep.max_dev = std::max(logit_dev, stack_dev);
  rep.pass = rep.max_dev <= tol;
  rep.note = "logit_dev=" + fmt_dev(logit_dev) +
             (stack_applies ? " stack_dev=" + fmt_dev(stack_dev) : " stack: n/a");
  return rep;
}

CheckReport check_synchrony(const Model& m, const Tensor& image) {
  CheckReport rep;
  rep.check = "synchrony-" + m.arch;
  rep.tol = 0.0;
  if (image.rank() != 4 || image.dim(0) != 1)
    throw std::runtime_error("check_synchrony: need a single image [1,C,H,W], got " +
                             image.shape_str());
  if (m.group.size <= 1)
    throw std::runtime_error("check_synchrony: model has no group axis");

  // locate the last group conv and a following attention stage, if any
  int last_gconv = -1;
  for (std::size_t i = 0; i < m.layers.size(); ++i)
    if (m.layers[i].kind == LayerKind::GConv) last_gconv = static_cast<int>(i);
  if (last_gconv < 0) throw std::runtime_error("check_synchrony: model has no group conv");
  const bool attended = static_cast<std::size_t>(last_gconv + 1) < m.layers.size() &&
                        m.layers[static_cast<std::size_t>(last_gconv) + 1].kind == LayerKind::Attend;

  // forward up to a layer index (exclusive), staying in feature-map mode
  auto run_until = [&m](const Tensor& images, int stop) {
    FeatureMap cur = from_images(images);
    for (int i = 0; i < stop; ++i) {
      const Layer& l = m.layers[static_cast<std::size_t>(i)];
      switch (l.kind) {
        case LayerKind::Lift: cur = lift_conv(cur, l.conv, m.group, l.padding); break;
        case LayerKind::GConv: cur = group_conv(cur, l.conv, l.padding); break;
        case LayerKind::Attend: cur = co_attentive_map(cur, l.att); break;
        case LayerKind::Relu: cur = relu(cur); break;
        case LayerKind::SpatialMaxPool: cur = spatial_max_pool(cur, l.pool); break;
        default: throw std::runtime_error("check_synchrony: prefix hit a pooled stage");
      }
    }
    return cur;
  };

  const GroupSpec& spec = m.group;
  const std::vector<int> taps = attended ? std::vector<int>{last_gconv + 1, last_gconv + 2}
                                         : std::vector<int>{last_gconv + 1};
  bool all_match = true;
  bool ambiguous = false;
  for (std::size_t ti = 0; ti < taps.size(); ++ti) {
    const FeatureMap base = run_until(image, taps[ti]);
    const std::int64_t G = base.G(), L = base.L(), HW = base.H() * base.W();
    for (const auto& g : spec.elements()) {
      if (g.m != 0) continue;  // rotation sweep
      const FeatureMap resp = run_until(act_on_input(spec, g, image), taps[ti]);
      const Tensor undone = act_on_input(spec, spec.inverse(g), resp.t);
      // per channel, recover the group translation aligning undone to base
      for (std::int64_t l = 0; l < L; ++l) {
        double best = 0.0, second = 0.0, at_expected = 0.0;
        int best_t = -1;
        for (int t = 0; t < spec.size; ++t) {
          double ssd = 0.0;
          for (int h = 0; h < spec.size; ++h) {
            const int src = spec.index(spec.compose(spec.element(h), spec.element(t)));
            const double* u = undone.data() + ((0 * G + h) * L + l) * HW;
            const double* b = base.t.data() + ((0 * G + src) * L + l) * HW;
            for (std::int64_t p = 0; p < HW; ++p) {
              const double dd = u[p] - b[p];
              ssd += dd * dd;
            }
          }
          if (t == spec.index(g)) at_expected = ssd;
          if (best_t < 0 || ssd < best) {
            second = best_t < 0 ? 1e300 : best;
            best = ssd;
            best_t = t;
          } else if (ssd < second) {
            second = ssd;
          }
        }
        if (second - best <= 1e-9 * (1.0 + best)) ambiguous = true;
        if (best_t != spec.index(g)) all_match = false;
        rep.max_dev = std::max(rep.max_dev, at_expected);
      }
    }
  }
  rep.trials = static_cast<int>(taps.size()) * spec.r_max;
  rep.tol = 1e-12;  // residual at the expected alignment
  if (ambiguous) {
    rep.pass = false;
    rep.note = "inconclusive: degenerate alignment";
  } else {
    rep.pass = all_match;
    rep.note = all_match ? "indices uniform across channels" : "channel disagreed with input motion";
  }
  return rep;
}

}  // namespace coattn
