#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "auxskip/autodiff.hpp"
#include "auxskip/rng.hpp"

namespace auxskip {

struct Dataset {
  ad::Tensor images;  // [N, C, H, W]
  std::vector<int> labels;
  int num_classes = 0;
  // Position of each sample in the dataset it was split from.
  std::vector<std::size_t> origin;

  std::size_t size() const { return labels.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

// k-class concentric-ring images: sample i has class i mod k and pixel values
// sin(2*pi*f_class*r + phase) + noise*N(0,1), where r is the distance to a
// random center near the image middle. Each image is standardized to zero mean
// and unit (sample) standard deviation.
struct ConcentricSpec {
  int num_samples = 512;
  int image_size = 8;
  double noise = 0.3;
  std::vector<double> freqs{0.12, 0.22, 0.32, 0.42};
  // Centers are drawn uniformly from the middle +- center_jitter.
  double center_jitter = 1.0;

  int num_classes() const { return static_cast<int>(freqs.size()); }
  void validate() const;
};

Dataset make_concentric(const ConcentricSpec& spec, std::uint64_t seed);

// Label-stratified split: per class, round(ratio * count) samples (a seeded
// shuffle picks which) go to the first split. Both splits keep the original
// sample order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double ratio, std::uint64_t seed);

}  // namespace auxskip
