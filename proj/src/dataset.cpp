#include "auxskip/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace auxskip {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  ad::Shape shape = images.shape();
  const std::size_t per = ad::numel(shape) / shape[0];
  shape[0] = indices.size();
  std::vector<double> data(indices.size() * per);
  const auto src = images.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = indices[k];
    if (i >= size()) throw std::out_of_range("subset index " + std::to_string(i) + " of " + std::to_string(size()));
    std::copy_n(src.data() + i * per, per, data.data() + k * per);
    out.labels.push_back(labels[i]);
    out.origin.push_back(origin.empty() ? i : origin[i]);
  }
  if (!indices.empty()) out.images = ad::Tensor(std::move(shape), std::move(data));
  return out;
}

void ConcentricSpec::validate() const {
  if (num_samples < 1) throw std::invalid_argument("dataset: num_samples must be >= 1");
  if (image_size < 2) throw std::invalid_argument("dataset: image_size must be >= 2");
  if (freqs.size() < 2) throw std::invalid_argument("dataset: need at least two class frequencies");
  if (noise < 0.0 || center_jitter < 0.0) throw std::invalid_argument("dataset: noise and center_jitter must be >= 0");
}

Dataset make_concentric(const ConcentricSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, "data");
  const auto n = static_cast<std::size_t>(spec.num_samples);
  const auto s = static_cast<std::size_t>(spec.image_size);
  const auto k = spec.freqs.size();
  const double mid = (static_cast<double>(s) - 1.0) / 2.0;
  Dataset d;
  d.num_classes = static_cast<int>(k);
  std::vector<double> px(n * s * s);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = i % k;
    d.labels.push_back(static_cast<int>(label));
    d.origin.push_back(i);
    const double cy = mid + rng.uniform(-spec.center_jitter, spec.center_jitter);
    const double cx = mid + rng.uniform(-spec.center_jitter, spec.center_jitter);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double* img = px.data() + i * s * s;
    for (std::size_t y = 0; y < s; ++y)
      for (std::size_t x = 0; x < s; ++x) {
        const double r = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
        img[y * s + x] = std::sin(2.0 * std::numbers::pi * spec.freqs[label] * r + phase) + spec.noise * rng.normal();
      }
    double mean = 0.0;
    for (std::size_t p = 0; p < s * s; ++p) mean += img[p];
    mean /= static_cast<double>(s * s);
    double var = 0.0;
    for (std::size_t p = 0; p < s * s; ++p) var += (img[p] - mean) * (img[p] - mean);
    const double sd = std::sqrt(var / static_cast<double>(s * s - 1));
    for (std::size_t p = 0; p < s * s; ++p) img[p] = sd > 0.0 ? (img[p] - mean) / sd : 0.0;
  }
  d.images = ad::Tensor({n, 1, s, s}, std::move(px));
  return d;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  if (data.size() == 0) throw std::invalid_argument("cannot split an empty dataset");
  Rng rng(seed, "split");
  std::vector<bool> first(data.size(), false);
  for (int c = 0; c < data.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data.labels[i] == c) members.push_back(i);
    const auto take = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size())));
    if (take == 0 || take == members.size()) {
      throw std::invalid_argument("split leaves class " + std::to_string(c) + " absent from one side (" +
                                  std::to_string(members.size()) + " samples, ratio " + std::to_string(ratio) + ")");
    }
    rng.shuffle(members.begin(), members.end());
    for (std::size_t m = 0; m < take; ++m) first[members[m]] = true;
  }
  std::vector<std::size_t> a, b;
  for (std::size_t i = 0; i < data.size(); ++i) (first[i] ? a : b).push_back(i);
  return {data.subset(a), data.subset(b)};
}

}  // namespace auxskip
