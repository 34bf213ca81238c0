#include "coattn/gconv.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "coattn/plane_conv.hpp"

namespace coattn {

namespace {

// quarter-turns for one abstract rotation step (mirrors group.cpp's rule)
int quarter_turns(const GroupSpec& spec, int r) {
  if (spec.kind == GroupKind::Trans) return 0;
  if (4 % spec.r_max != 0)
    throw std::runtime_error("filter_transform: r_max " + std::to_string(spec.r_max) +
                             " has no exact lattice rotation; need r_max in {1,2,4}");
  return r * (4 / spec.r_max);
}

// index LUT of the filter's spatial op (array rotated clockwise by g.r, then
// mirrored if g.m): transformed[t] = original[lut[t]]
std::vector<std::int64_t> spatial_lut(const GroupSpec& spec, GroupElement g, std::int64_t kh,
                                      std::int64_t kw) {
  const int qt = quarter_turns(spec, g.r);
  std::vector<std::int64_t> lut(static_cast<std::size_t>(kh * kw));
  if (qt % 4 == 0 && g.m == 0) {
    std::iota(lut.begin(), lut.end(), 0);
    return lut;
  }
  if (kh != kw && qt % 4 != 0)
    throw std::runtime_error("filter_transform: rotation needs square filters, got [" +
                             std::to_string(kh) + "," + std::to_string(kw) + "]");
  Tensor iota({kh, kw});
  std::iota(iota.v.begin(), iota.v.end(), 0.0);
  Tensor moved = rotate90(iota, -qt);
  if (g.m) moved = hflip(moved);
  for (std::int64_t t = 0; t < kh * kw; ++t)
    lut[static_cast<std::size_t>(t)] = static_cast<std::int64_t>(moved.v[static_cast<std::size_t>(t)]);
  return lut;
}

// Transformed copies of a filter bank, one per output group element, plus the
// index maps needed to scatter gradients back onto the shared parameters.
struct TransformedBank {
  std::vector<Tensor> filt;                       // per g: [Lout,Lin,Gin,kH,kW]
  std::vector<std::vector<std::int64_t>> lut;     // per g: spatial gather
  std::vector<std::vector<std::int64_t>> srcg;    // per g: group-axis gather
};

TransformedBank transform_bank(const Tensor& F, const GroupSpec& spec) {
  if (F.rank() != 5)
    throw std::runtime_error("gconv: filters must be [Lout,Lin,Gin,kH,kW], got " + F.shape_str());
  const std::int64_t Lo = F.dim(0), Li = F.dim(1), Gin = F.dim(2);
  const std::int64_t kh = F.dim(3), kw = F.dim(4);
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::runtime_error("gconv: filter dims must be odd, got " + F.shape_str());
  if (Gin != 1 && Gin != spec.size)
    throw std::runtime_error("gconv: filter group axis " + std::to_string(Gin) +
                             " does not match " + spec.name());
  TransformedBank bank;
  for (auto g : spec.elements()) {
    auto lut = spatial_lut(spec, g, kh, kw);
    const GroupElement ginv = spec.inverse(g);
    std::vector<std::int64_t> srcg(static_cast<std::size_t>(Gin), 0);
    if (Gin != 1)
      for (int h = 0; h < spec.size; ++h)
        srcg[static_cast<std::size_t>(h)] = spec.index(spec.compose(spec.element(h), ginv));
    Tensor T(F.shape);
    const std::int64_t kk = kh * kw;
    for (std::int64_t lo = 0; lo < Lo; ++lo)
      for (std::int64_t li = 0; li < Li; ++li)
        for (std::int64_t h = 0; h < Gin; ++h) {
          const double* src = F.data() + ((lo * Li + li) * Gin + srcg[static_cast<std::size_t>(h)]) * kk;
          double* dst = T.data() + ((lo * Li + li) * Gin + h) * kk;
          for (std::int64_t t = 0; t < kk; ++t) dst[t] = src[lut[static_cast<std::size_t>(t)]];
        }
    bank.filt.push_back(std::move(T));
    bank.lut.push_back(std::move(lut));
    bank.srcg.push_back(std::move(srcg));
  }
  return bank;
}

void check_conv_args(const FeatureMap& in, const GConvParams& p, int padding, std::int64_t want_gin,
                     const char* who) {
  if (in.t.rank() != 5)
    throw std::runtime_error(std::string(who) + ": input must be [B,G,L,H,W], got " +
                             in.t.shape_str());
  if (padding < 0) throw std::runtime_error(std::string(who) + ": padding must be >= 0");
  if (p.filters.rank() != 5)
    throw std::runtime_error(std::string(who) + ": filters must be [Lout,Lin,Gin,kH,kW], got " +
                             p.filters.shape_str());
  if (p.bias.rank() != 1 || p.bias.dim(0) != p.filters.dim(0))
    throw std::runtime_error(std::string(who) + ": bias must be [Lout], got " + p.bias.shape_str());
  if (p.filters.dim(1) != in.L())
    throw std::runtime_error(std::string(who) + ": channel mismatch, input " + in.t.shape_str() +
                             " vs filters " + p.filters.shape_str());
  if (p.filters.dim(2) != want_gin || in.G() != want_gin)
    throw std::runtime_error(std::string(who) + ": group-axis mismatch, input G " +
                             std::to_string(in.G()) + ", filter Gin " +
                             std::to_string(p.filters.dim(2)) + ", expected " +
                             std::to_string(want_gin));
}

FeatureMap conv_core(const FeatureMap& in, const GConvParams& p, const GroupSpec& out_group,
                     int padding) {
  const TransformedBank bank = transform_bank(p.filters, out_group);
  const std::int64_t B = in.B(), Gin = in.G(), Li = in.L(), H = in.H(), W = in.W();
  const std::int64_t Gout = out_group.size, Lo = p.filters.dim(0);
  const std::int64_t kh = p.filters.dim(3), kw = p.filters.dim(4);
  const std::int64_t Ho = H + 2 * padding - kh + 1, Wo = W + 2 * padding - kw + 1;
  if (Ho <= 0 || Wo <= 0) throw std::runtime_error("gconv: kernel larger than padded input");

  FeatureMap out{Tensor({B, Gout, Lo, Ho, Wo}), out_group};
  const std::int64_t kk = kh * kw;
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t gi = 0; gi < Gout; ++gi) {
      const Tensor& T = bank.filt[static_cast<std::size_t>(gi)];
      for (std::int64_t lo = 0; lo < Lo; ++lo) {
        double* oplane = out.t.data() + ((b * Gout + gi) * Lo + lo) * Ho * Wo;
        const double bv = p.bias.v[static_cast<std::size_t>(lo)];
        for (std::int64_t i = 0; i < Ho * Wo; ++i) oplane[i] = bv;
        for (std::int64_t h = 0; h < Gin; ++h)
          for (std::int64_t li = 0; li < Li; ++li)
            detail::corr2_acc(in.t.data() + ((b * Gin + h) * Li + li) * H * W, H, W,
                              T.data() + ((lo * Li + li) * Gin + h) * kk, kh, kw, padding, oplane,
                              Ho, Wo);
      }
    }
  return out;
}

ConvGrads conv_backward_core(const FeatureMap& in, const GConvParams& p,
                             const GroupSpec& out_group, int padding, const Tensor& upstream) {
  const TransformedBank bank = transform_bank(p.filters, out_group);
  const std::int64_t B = in.B(), Gin = in.G(), Li = in.L(), H = in.H(), W = in.W();
  const std::int64_t Gout = out_group.size, Lo = p.filters.dim(0);
  const std::int64_t kh = p.filters.dim(3), kw = p.filters.dim(4);
  const std::int64_t Ho = H + 2 * padding - kh + 1, Wo = W + 2 * padding - kw + 1;
  if (upstream.rank() != 5 || upstream.dim(0) != B || upstream.dim(1) != Gout ||
      upstream.dim(2) != Lo || upstream.dim(3) != Ho || upstream.dim(4) != Wo)
    throw std::runtime_error("gconv backward: upstream shape " + upstream.shape_str() +
                             " does not match output");

  ConvGrads g{Tensor(in.t.shape), Tensor(p.filters.shape), Tensor(p.bias.shape)};
  const std::int64_t kk = kh * kw;
  std::vector<Tensor> dWt;
  dWt.reserve(static_cast<std::size_t>(Gout));
  for (std::int64_t gi = 0; gi < Gout; ++gi) dWt.emplace_back(p.filters.shape);

  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t gi = 0; gi < Gout; ++gi) {
      const Tensor& T = bank.filt[static_cast<std::size_t>(gi)];
      Tensor& dT = dWt[static_cast<std::size_t>(gi)];
      for (std::int64_t lo = 0; lo < Lo; ++lo) {
        const double* up = upstream.data() + ((b * Gout + gi) * Lo + lo) * Ho * Wo;
        double acc = 0.0;
        for (std::int64_t i = 0; i < Ho * Wo; ++i) acc += up[i];
        g.d_bias.v[static_cast<std::size_t>(lo)] += acc;
        for (std::int64_t h = 0; h < Gin; ++h)
          for (std::int64_t li = 0; li < Li; ++li) {
            const std::int64_t in_off = ((b * Gin + h) * Li + li) * H * W;
            const std::int64_t k_off = ((lo * Li + li) * Gin + h) * kk;
            detail::corr2_back_input(g.d_input.data() + in_off, H, W, T.data() + k_off, kh, kw,
                                     padding, up, Ho, Wo);
            detail::corr2_back_weight(in.t.data() + in_off, H, W, dT.data() + k_off, kh, kw,
                                      padding, up, Ho, Wo);
          }
      }
    }

  // scatter the transformed-filter gradients back onto the shared parameters
  for (std::int64_t gi = 0; gi < Gout; ++gi) {
    const auto& lut = bank.lut[static_cast<std::size_t>(gi)];
    const auto& srcg = bank.srcg[static_cast<std::size_t>(gi)];
    const Tensor& dT = dWt[static_cast<std::size_t>(gi)];
    for (std::int64_t lo = 0; lo < Lo; ++lo)
      for (std::int64_t li = 0; li < Li; ++li)
        for (std::int64_t h = 0; h < Gin; ++h) {
          const double* src = dT.data() + ((lo * Li + li) * Gin + h) * kk;
          double* dst =
              g.d_filters.data() + ((lo * Li + li) * Gin + srcg[static_cast<std::size_t>(h)]) * kk;
          for (std::int64_t t = 0; t < kk; ++t) dst[lut[static_cast<std::size_t>(t)]] += src[t];
        }
  }
  return g;
}

}  // namespace

FeatureMap from_images(const Tensor& images) {
  if (images.rank() != 4)
    throw std::runtime_error("from_images: need [N,C,H,W], got " + images.shape_str());
  Tensor t({images.dim(0), 1, images.dim(1), images.dim(2), images.dim(3)}, images.v);
  return {std::move(t), make_group(GroupKind::Trans, 1)};
}

Tensor filter_transform(const GroupSpec& spec, GroupElement g, const Tensor& filt) {
  spec.index(g);  // rejects elements outside the group
  if (filt.rank() == 2) {
    const auto lut = spatial_lut(spec, g, filt.dim(0), filt.dim(1));
    Tensor out(filt.shape);
    for (std::int64_t t = 0; t < filt.size(); ++t)
      out.v[static_cast<std::size_t>(t)] = filt.v[static_cast<std::size_t>(lut[static_cast<std::size_t>(t)])];
    return out;
  }
  if (filt.rank() != 3)
    throw std::runtime_error("filter_transform: need [kH,kW] or [Gin,kH,kW], got " +
                             filt.shape_str());
  if (filt.dim(0) != spec.size)
    throw std::runtime_error("filter_transform: group axis " + std::to_string(filt.dim(0)) +
                             " does not match " + spec.name());
  const std::int64_t kk = filt.dim(1) * filt.dim(2);
  const auto lut = spatial_lut(spec, g, filt.dim(1), filt.dim(2));
  const GroupElement ginv = spec.inverse(g);
  Tensor out(filt.shape);
  for (int h = 0; h < spec.size; ++h) {
    const std::int64_t src = spec.index(spec.compose(spec.element(h), ginv));
    for (std::int64_t t = 0; t < kk; ++t)
      out.v[static_cast<std::size_t>(h * kk + t)] =
          filt.v[static_cast<std::size_t>(src * kk + lut[static_cast<std::size_t>(t)])];
  }
  return out;
}

FeatureMap lift_conv(const FeatureMap& in, const GConvParams& p, const GroupSpec& out_group,
                     int padding) {
  check_conv_args(in, p, padding, 1, "lift_conv");
  return conv_core(in, p, out_group, padding);
}

ConvGrads lift_conv_backward(const FeatureMap& in, const GConvParams& p,
                             const GroupSpec& out_group, int padding, const Tensor& upstream) {
  check_conv_args(in, p, padding, 1, "lift_conv");
  return conv_backward_core(in, p, out_group, padding, upstream);
}

FeatureMap group_conv(const FeatureMap& in, const GConvParams& p, int padding) {
  check_conv_args(in, p, padding, in.group.size, "group_conv");
  return conv_core(in, p, in.group, padding);
}

ConvGrads group_conv_backward(const FeatureMap& in, const GConvParams& p, int padding,
                              const Tensor& upstream) {
  check_conv_args(in, p, padding, in.group.size, "group_conv");
  return conv_backward_core(in, p, in.group, padding, upstream);
}

Tensor relu(const Tensor& in) {
  Tensor out = in;
  for (auto& x : out.v) x = x > 0.0 ? x : 0.0;
  return out;
}

FeatureMap relu(const FeatureMap& in) { return {relu(in.t), in.group}; }

Tensor relu_backward(const Tensor& in, const Tensor& upstream) {
  if (in.shape != upstream.shape)
    throw std::runtime_error("relu backward: shape mismatch " + in.shape_str() + " vs " +
                             upstream.shape_str());
  Tensor g(in.shape);
  for (std::int64_t i = 0; i < in.size(); ++i)
    g.v[static_cast<std::size_t>(i)] =
        in.v[static_cast<std::size_t>(i)] > 0.0 ? upstream.v[static_cast<std::size_t>(i)] : 0.0;
  return g;
}

FeatureMap spatial_max_pool(const FeatureMap& in, int size) {
  if (size < 1) throw std::runtime_error("spatial_max_pool: size must be >= 1");
  const std::int64_t B = in.B(), G = in.G(), L = in.L(), H = in.H(), W = in.W();
  if (H % size != 0 || W % size != 0)
    throw std::runtime_error("spatial_max_pool: spatial dims " + in.t.shape_str() +
                             " not divisible by " + std::to_string(size));
  const std::int64_t Ho = H / size, Wo = W / size;
  FeatureMap out{Tensor({B, G, L, Ho, Wo}), in.group};
  for (std::int64_t p = 0; p < B * G * L; ++p) {
    const double* ip = in.t.data() + p * H * W;
    double* op = out.t.data() + p * Ho * Wo;
    for (std::int64_t y = 0; y < Ho; ++y)
      for (std::int64_t x = 0; x < Wo; ++x) {
        double m = ip[y * size * W + x * size];
        for (std::int64_t dy = 0; dy < size; ++dy)
          for (std::int64_t dx = 0; dx < size; ++dx)
            m = std::max(m, ip[(y * size + dy) * W + x * size + dx]);
        op[y * Wo + x] = m;
      }
  }
  return out;
}

Tensor spatial_max_pool_backward(const Tensor& in, int size, const Tensor& upstream) {
  const std::int64_t H = in.dim(3), W = in.dim(4);
  const std::int64_t Ho = H / size, Wo = W / size;
  Tensor g(in.shape);
  const std::int64_t planes = in.size() / (H * W);
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* ip = in.data() + p * H * W;
    const double* up = upstream.data() + p * Ho * Wo;
    double* gp = g.data() + p * H * W;
    for (std::int64_t y = 0; y < Ho; ++y)
      for (std::int64_t x = 0; x < Wo; ++x) {
        std::int64_t best = (y * size) * W + x * size;
        for (std::int64_t dy = 0; dy < size; ++dy)
          for (std::int64_t dx = 0; dx < size; ++dx) {
            const std::int64_t i = (y * size + dy) * W + x * size + dx;
            if (ip[i] > ip[best]) best = i;  // first max wins ties
          }
        gp[best] += up[y * Wo + x];
      }
  }
  return g;
}

FeatureMap orientation_pool(const FeatureMap& in) {
  const std::int64_t B = in.B(), G = in.G(), L = in.L(), H = in.H(), W = in.W();
  if (G <= 1) throw std::runtime_error("orientation_pool: needs a group axis with G > 1");
  FeatureMap out{Tensor({B, 1, L, H, W}), make_group(GroupKind::Trans, 1)};
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t l = 0; l < L; ++l)
      for (std::int64_t i = 0; i < H * W; ++i) {
        double m = in.t.v[static_cast<std::size_t>(((b * G) * L + l) * H * W + i)];
        for (std::int64_t h = 1; h < G; ++h)
          m = std::max(m, in.t.v[static_cast<std::size_t>(((b * G + h) * L + l) * H * W + i)]);
        out.t.v[static_cast<std::size_t>((b * L + l) * H * W + i)] = m;
      }
  return out;
}

Tensor orientation_pool_backward(const Tensor& in, const Tensor& upstream) {
  const std::int64_t B = in.dim(0), G = in.dim(1), L = in.dim(2), H = in.dim(3), W = in.dim(4);
  Tensor g(in.shape);
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t l = 0; l < L; ++l)
      for (std::int64_t i = 0; i < H * W; ++i) {
        std::int64_t best = 0;
        for (std::int64_t h = 1; h < G; ++h)
          if (in.v[static_cast<std::size_t>(((b * G + h) * L + l) * H * W + i)] >
              in.v[static_cast<std::size_t>(((b * G + best) * L + l) * H * W + i)])
            best = h;
        g.v[static_cast<std::size_t>(((b * G + best) * L + l) * H * W + i)] +=
            upstream.v[static_cast<std::size_t>((b * L + l) * H * W + i)];
      }
  return g;
}

Tensor global_avg(const FeatureMap& in) {
  const std::int64_t B = in.B(), GL = in.G() * in.L(), HW = in.H() * in.W();
  Tensor out({B, GL});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < GL; ++c) {
      const double* p = in.t.data() + (b * GL + c) * HW;
      double s = 0.0;
      for (std::int64_t i = 0; i < HW; ++i) s += p[i];
      out.v[static_cast<std::size_t>(b * GL + c)] = s / static_cast<double>(HW);
    }
  return out;
}

Tensor global_avg_backward(const std::vector<std::int64_t>& in_shape, const Tensor& upstream) {
  Tensor g(in_shape);
  const std::int64_t HW = in_shape[3] * in_shape[4];
  const std::int64_t BGL = in_shape[0] * in_shape[1] * in_shape[2];
  for (std::int64_t c = 0; c < BGL; ++c) {
    const double u = upstream.v[static_cast<std::size_t>(c)] / static_cast<double>(HW);
    double* p = g.data() + c * HW;
    for (std::int64_t i = 0; i < HW; ++i) p[i] = u;
  }
  return g;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (x.rank() != 2 || weights.rank() != 2 || x.dim(1) != weights.dim(1))
    throw std::runtime_error("dense: shape mismatch " + x.shape_str() + " vs " +
                             weights.shape_str());
  const std::int64_t B = x.dim(0), din = x.dim(1), dout = weights.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != dout)
    throw std::runtime_error("dense: bias must be [dout], got " + bias.shape_str());
  Tensor out({B, dout});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < dout; ++o) {
      double s = bias.v[static_cast<std::size_t>(o)];
      for (std::int64_t i = 0; i < din; ++i)
        s += x.v[static_cast<std::size_t>(b * din + i)] *
             weights.v[static_cast<std::size_t>(o * din + i)];
      out.v[static_cast<std::size_t>(b * dout + o)] = s;
    }
  return out;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& upstream) {
  const std::int64_t B = x.dim(0), din = x.dim(1), dout = weights.dim(0);
  DenseGrads g{Tensor(x.shape), Tensor(weights.shape), Tensor({dout})};
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < dout; ++o) {
      const double u = upstream.v[static_cast<std::size_t>(b * dout + o)];
      g.d_bias.v[static_cast<std::size_t>(o)] += u;
      for (std::int64_t i = 0; i < din; ++i) {
        g.d_x.v[static_cast<std::size_t>(b * din + i)] +=
            u * weights.v[static_cast<std::size_t>(o * din + i)];
        g.d_weights.v[static_cast<std::size_t>(o * din + i)] +=
            u * x.v[static_cast<std::size_t>(b * din + i)];
      }
    }
  return g;
}

}  // namespace coattn
