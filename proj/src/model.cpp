#include "coattn/model.hpp"

#include <cmath>
#include <stdexcept>

#include "coattn/rng.hpp"

namespace coattn {

namespace {

constexpr int kChannels = 8;
constexpr int kKernel = 3;
constexpr int kClasses = 10;

Tensor normal_tensor(std::vector<std::int64_t> shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.v) x = stddev * rng.normal();
  return t;
}

GConvParams init_conv(std::int64_t lout, std::int64_t lin, std::int64_t gin, Rng& rng,
                      double* stddev_out) {
  const double fan_in = static_cast<double>(lin * gin * kKernel * kKernel);
  const double stddev = std::sqrt(2.0 / fan_in);
  if (stddev_out) *stddev_out = stddev;
  return {normal_tensor({lout, lin, gin, kKernel, kKernel}, stddev, rng), Tensor({lout})};
}

Layer make_attend(const GroupSpec& group, double stddev, Rng& rng) {
  Layer a;
  a.kind = LayerKind::Attend;
  for (int l = 0; l < kChannels; ++l) {
    if (group.kind == GroupKind::RotMirror) {
      Tensor c1 = normal_tensor({group.r_max}, stddev, rng);
      Tensor c2 = normal_tensor({group.r_max}, stddev, rng);
      c1.v[0] = 1.0;  // unit diagonal of the materialized map
      a.att.push_back(block_circulant_attention(std::move(c1), std::move(c2)));
    } else {
      Tensor c = normal_tensor({group.size}, stddev, rng);
      c.v[0] = 1.0;
      a.att.push_back(circulant_attention(std::move(c)));
    }
  }
  return a;
}

}  // namespace

Model build_model(const std::string& arch, std::uint64_t seed) {
  const bool attended = arch == "a-p4cnn" || arch == "a-p4mcnn";
  GroupSpec group;
  if (arch == "z2cnn")
    group = make_group(GroupKind::Trans, 1);
  else if (arch == "p4cnn" || arch == "a-p4cnn")
    group = make_group(GroupKind::Rot, 4);
  else if (arch == "p4mcnn" || arch == "a-p4mcnn")
    group = make_group(GroupKind::RotMirror, 4);
  else
    throw std::runtime_error("build_model: unknown architecture '" + arch + "'");

  Rng rng(seed);
  Model m;
  m.arch = arch;
  m.group = group;

  auto push = [&m](Layer l) { m.layers.push_back(std::move(l)); };
  auto simple = [&push](LayerKind k) {
    Layer l;
    l.kind = k;
    push(std::move(l));
  };

  // lift
  {
    Layer l;
    l.kind = LayerKind::Lift;
    l.conv = init_conv(kChannels, 1, 1, rng, nullptr);
    push(std::move(l));
  }
  simple(LayerKind::Relu);

  // three group convolutions; 2x2 pooling after the second conv layer
  for (int i = 0; i < 3; ++i) {
    Layer l;
    l.kind = LayerKind::GConv;
    double stddev = 0.0;
    l.conv = init_conv(kChannels, kChannels, group.size, rng, &stddev);
    push(std::move(l));
    if (attended) push(make_attend(group, stddev, rng));
    simple(LayerKind::Relu);
    if (i == 0) {
      Layer p;
      p.kind = LayerKind::SpatialMaxPool;
      p.pool = 2;
      push(std::move(p));
    }
  }

  if (group.size > 1) simple(LayerKind::OrientPool);
  simple(LayerKind::GlobalAvg);

  {
    Layer l;
    l.kind = LayerKind::Dense;
    const double stddev = std::sqrt(2.0 / kChannels);
    l.w = normal_tensor({kClasses, kChannels}, stddev, rng);
    l.b = Tensor({kClasses});
    push(std::move(l));
  }
  return m;
}

void for_each_param(Model& m, const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    Layer& l = m.layers[i];
    const std::string p = "layer" + std::to_string(i);
    switch (l.kind) {
      case LayerKind::Lift:
      case LayerKind::GConv:
        fn(p + ".filters", l.conv.filters);
        fn(p + ".bias", l.conv.bias);
        break;
      case LayerKind::Attend:
        for (std::size_t j = 0; j < l.att.size(); ++j) {
          AttentionParams& a = l.att[j];
          const std::string q = p + ".att" + std::to_string(j);
          switch (a.kind) {
            case AttentionKind::Full: fn(q + ".atilde", a.atilde); break;
            case AttentionKind::Circulant: fn(q + ".a_c", a.a_c); break;
            default:
              fn(q + ".a_c1", a.a_c1);
              fn(q + ".a_c2", a.a_c2);
              break;
          }
        }
        break;
      case LayerKind::Dense:
        fn(p + ".weight", l.w);
        fn(p + ".bias", l.b);
        break;
      default: break;
    }
  }
}

void for_each_param(const Model& m,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
  for_each_param(const_cast<Model&>(m),
                 [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

std::int64_t param_count(const Model& m) {
  std::int64_t n = 0;
  for_each_param(m, [&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

Model zeros_like(const Model& m) {
  Model z = m;
  for_each_param(z, [](const std::string&, Tensor& t) { t = Tensor(t.shape); });
  return z;
}

Tensor model_forward(const Model& m, const Tensor& images, Trace* trace) {
  if (images.rank() != 4)
    throw std::runtime_error("model_forward: images must be [B,C,H,W], got " +
                             images.shape_str());
  FeatureMap cur = from_images(images);
  Tensor vec;
  bool in_vec = false;
  if (trace) {
    trace->fm_in.assign(m.layers.size(), FeatureMap{});
    trace->vec_in.assign(m.layers.size(), Tensor{});
  }
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const Layer& l = m.layers[i];
    if (trace) {
      if (in_vec)
        trace->vec_in[i] = vec;
      else
        trace->fm_in[i] = cur;
    }
    switch (l.kind) {
      case LayerKind::Lift: cur = lift_conv(cur, l.conv, m.group, l.padding); break;
      case LayerKind::GConv: cur = group_conv(cur, l.conv, l.padding); break;
      case LayerKind::Attend: cur = co_attentive_map(cur, l.att); break;
      case LayerKind::Relu:
        if (in_vec)
          vec = relu(vec);
        else
          cur = relu(cur);
        break;
      case LayerKind::SpatialMaxPool: cur = spatial_max_pool(cur, l.pool); break;
      case LayerKind::OrientPool: cur = orientation_pool(cur); break;
      case LayerKind::GlobalAvg:
        vec = global_avg(cur);
        in_vec = true;
        break;
      case LayerKind::Dense: vec = dense(vec, l.w, l.b); break;
    }
  }
  if (!in_vec) throw std::runtime_error("model_forward: model never reached a vector head");
  if (trace) trace->logits = vec;
  return vec;
}

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (std::int64_t i = 0; i < dst.size(); ++i)
    dst.v[static_cast<std::size_t>(i)] += src.v[static_cast<std::size_t>(i)];
}

}  // namespace

void model_backward(const Model& m, const Trace& trace, const Tensor& d_logits, Model& grads,
                    Tensor* d_images) {
  if (grads.layers.size() != m.layers.size())
    throw std::runtime_error("model_backward: gradient container does not match model");
  Tensor up_vec = d_logits;
  Tensor up_fm;
  bool in_vec = true;
  for (std::size_t idx = m.layers.size(); idx-- > 0;) {
    const Layer& l = m.layers[idx];
    Layer& g = grads.layers[idx];
    switch (l.kind) {
      case LayerKind::Dense: {
        DenseGrads dg = dense_backward(trace.vec_in[idx], l.w, up_vec);
        add_into(g.w, dg.d_weights);
        add_into(g.b, dg.d_bias);
        up_vec = std::move(dg.d_x);
        break;
      }
      case LayerKind::GlobalAvg:
        up_fm = global_avg_backward(trace.fm_in[idx].t.shape, up_vec);
        in_vec = false;
        break;
      case LayerKind::OrientPool:
        up_fm = orientation_pool_backward(trace.fm_in[idx].t, up_fm);
        break;
      case LayerKind::SpatialMaxPool:
        up_fm = spatial_max_pool_backward(trace.fm_in[idx].t, l.pool, up_fm);
        break;
      case LayerKind::Relu:
        if (in_vec)
          up_vec = relu_backward(trace.vec_in[idx], up_vec);
        else
          up_fm = relu_backward(trace.fm_in[idx].t, up_fm);
        break;
      case LayerKind::Attend: {
        CoAttendGrads ag = co_attentive_backward(trace.fm_in[idx], l.att, up_fm);
        for (std::size_t j = 0; j < l.att.size(); ++j) {
          AttentionParams& gp = g.att[j];
          const AttentionParams& dp = ag.d_params[j];
          switch (dp.kind) {
            case AttentionKind::Full: add_into(gp.atilde, dp.atilde); break;
            case AttentionKind::Circulant: add_into(gp.a_c, dp.a_c); break;
            default:
              add_into(gp.a_c1, dp.a_c1);
              add_into(gp.a_c2, dp.a_c2);
              break;
          }
        }
        up_fm = std::move(ag.d_input);
        break;
      }
      case LayerKind::GConv: {
        ConvGrads cg = group_conv_backward(trace.fm_in[idx], l.conv, l.padding, up_fm);
        add_into(g.conv.filters, cg.d_filters);
        add_into(g.conv.bias, cg.d_bias);
        up_fm = std::move(cg.d_input);
        break;
      }
      case LayerKind::Lift: {
        ConvGrads cg = lift_conv_backward(trace.fm_in[idx], l.conv, m.group, l.padding, up_fm);
        add_into(g.conv.filters, cg.d_filters);
        add_into(g.conv.bias, cg.d_bias);
        up_fm = std::move(cg.d_input);
        break;
      }
    }
  }
  if (d_images) {
    // drop the synthetic group axis of the image wrapper [B,1,C,H,W]
    const auto& s = up_fm.shape;
    *d_images = Tensor({s[0], s[2], s[3], s[4]}, up_fm.v);
  }
}

LossGrad cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::runtime_error("cross_entropy: logits must be [B,C], got " + logits.shape_str());
  const std::int64_t B = logits.dim(0), C = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != B)
    throw std::runtime_error("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for batch of " + std::to_string(B));
  LossGrad out;
  out.d_logits = Tensor(logits.shape);
  for (std::int64_t b = 0; b < B; ++b) {
    const int lab = labels[static_cast<std::size_t>(b)];
    if (lab < 0 || lab >= C)
      throw std::runtime_error("cross_entropy: label " + std::to_string(lab) +
                               " out of range for " + std::to_string(C) + " classes");
    const double* row = logits.data() + b * C;
    double mx = row[0];
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::int64_t c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
    const double logz = std::log(sum) + mx;
    out.loss += (logz - row[lab]) / static_cast<double>(B);
    double* grow = out.d_logits.data() + b * C;
    for (std::int64_t c = 0; c < C; ++c)
      grow[c] = (std::exp(row[c] - logz) - (c == lab ? 1.0 : 0.0)) / static_cast<double>(B);
  }
  return out;
}

}  // namespace coattn
