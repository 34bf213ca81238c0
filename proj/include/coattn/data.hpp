#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coattn/tensor.hpp"

namespace coattn {

struct DatasetBundle {
  Tensor images;            // [N, 1, H, W], values in [0,1] until clipping
  std::vector<int> labels;  // length N, classes 0..9
  std::string name;
};

std::int64_t dataset_size(const DatasetBundle& d);
DatasetBundle slice(const DatasetBundle& d, std::int64_t start, std::int64_t count);

// Text format: one example per line, 784 reals then the label, whitespace
// separated. Errors name the offending line.
DatasetBundle load_amat(const std::string& path);
void save_amat(const DatasetBundle& d, const std::string& path);

// Big-endian binary image/label pair (magic 2051 / 2049), bytes scaled to
// [0,1] on load.
DatasetBundle load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const DatasetBundle& d, const std::string& images_path,
              const std::string& labels_path);

// Procedural 28x28 digit glyphs, balanced labels, deterministic in the seed.
DatasetBundle make_synthetic_digits(std::int64_t n, std::uint64_t seed);

// In-place rotation augmentation. mode "quarter": exact multiples of 90
// degrees; mode "uniform": bilinear rotation by an angle from [0, 2pi).
void synth_rotations(DatasetBundle& d, const std::string& mode, std::uint64_t seed);

// Bilinear rotation of one [N,N] plane about its center, zero fill outside;
// angle 0 is an exact identity and pi/2 matches rotate90(plane, 1) on the
// sampling grid.
Tensor rotate_bilinear(const Tensor& plane, double angle);

// p-th percentile (linear interpolation between order statistics) of |x| over
// the whole bundle; clamps in place to [-t, t] and returns t. 0 < p <= 100.
double clip_percentile(DatasetBundle& d, double p);
void clamp_abs(DatasetBundle& d, double threshold);

struct SplitBundles {
  DatasetBundle train, valid, test;
};

// The desk-scale corpus: 2000/500/2000 examples, rotations per mode, clipped
// at the 99th percentile of the training split (threshold reused verbatim on
// valid/test).
SplitBundles make_synthetic_corpus(const std::string& mode, std::uint64_t seed);

}  // namespace coattn
