#pragma once

#include <algorithm>
#include <cstdint>

// Row-segment kernels for 2-D correlation with zero padding. All three walk
// the same index set (out[y][x] pairs with in[y+dy-pad][x+dx-pad]); they only
// differ in which array is read and which accumulated into.

namespace coattn::detail {

inline void corr2_acc(const double* in, std::int64_t H, std::int64_t W, const double* k,
                      std::int64_t kh, std::int64_t kw, std::int64_t pad, double* out,
                      std::int64_t Ho, std::int64_t Wo) {
  for (std::int64_t dy = 0; dy < kh; ++dy)
    for (std::int64_t dx = 0; dx < kw; ++dx) {
      const double w = k[dy * kw + dx];
      const std::int64_t y0 = std::max<std::int64_t>(0, pad - dy);
      const std::int64_t y1 = std::min(Ho, H + pad - dy);
      const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
      const std::int64_t x1 = std::min(Wo, W + pad - dx);
      for (std::int64_t y = y0; y < y1; ++y) {
        const double* irow = in + (y + dy - pad) * W + (x0 + dx - pad);
        double* orow = out + y * Wo + x0;
        for (std::int64_t x = 0; x < x1 - x0; ++x) orow[x] += w * irow[x];
      }
    }
}

inline void corr2_back_input(double* gin, std::int64_t H, std::int64_t W, const double* k,
                             std::int64_t kh, std::int64_t kw, std::int64_t pad,
                             const double* up, std::int64_t Ho, std::int64_t Wo) {
  for (std::int64_t dy = 0; dy < kh; ++dy)
    for (std::int64_t dx = 0; dx < kw; ++dx) {
      const double w = k[dy * kw + dx];
      const std::int64_t y0 = std::max<std::int64_t>(0, pad - dy);
      const std::int64_t y1 = std::min(Ho, H + pad - dy);
      const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
      const std::int64_t x1 = std::min(Wo, W + pad - dx);
      for (std::int64_t y = y0; y < y1; ++y) {
        double* grow = gin + (y + dy - pad) * W + (x0 + dx - pad);
        const double* urow = up + y * Wo + x0;
        for (std::int64_t x = 0; x < x1 - x0; ++x) grow[x] += w * urow[x];
      }
    }
}

inline void corr2_back_weight(const double* in, std::int64_t H, std::int64_t W, double* gk,
                              std::int64_t kh, std::int64_t kw, std::int64_t pad,
                              const double* up, std::int64_t Ho, std::int64_t Wo) {
  for (std::int64_t dy = 0; dy < kh; ++dy)
    for (std::int64_t dx = 0; dx < kw; ++dx) {
      const std::int64_t y0 = std::max<std::int64_t>(0, pad - dy);
      const std::int64_t y1 = std::min(Ho, H + pad - dy);
      const std::int64_t x0 = std::max<std::int64_t>(0, pad - dx);
      const std::int64_t x1 = std::min(Wo, W + pad - dx);
      double acc = 0.0;
      for (std::int64_t y = y0; y < y1; ++y) {
        const double* irow = in + (y + dy - pad) * W + (x0 + dx - pad);
        const double* urow = up + y * Wo + x0;
        for (std::int64_t x = 0; x < x1 - x0; ++x) acc += irow[x] * urow[x];
      }
      gk[dy * kw + dx] += acc;
    }
}

}  // namespace coattn::detail
