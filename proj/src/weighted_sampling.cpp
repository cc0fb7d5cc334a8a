#include "sampleval/weighted_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sampleval {

std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t count, Rng& rng) {
  struct Keyed {
    double key;
    std::size_t index;
  };
  std::vector<Keyed> keys;
  keys.reserve(weights.size());
  // One uniform per index regardless of its weight keeps the stream aligned.
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double u = rng.uniform();
    if (weights[i] > 0.0) keys.push_back({std::log(u) / weights[i], i});
  }
  const std::size_t take = std::min(count, keys.size());
  auto by_key = [](const Keyed& a, const Keyed& b) {
    return a.key > b.key || (a.key == b.key && a.index < b.index);
  };
  if (take < keys.size()) {
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(take), keys.end(),
                     by_key);
    keys.resize(take);
  }
  std::sort(keys.begin(), keys.end(), by_key);
  std::vector<std::size_t> out(keys.size());
  std::transform(keys.begin(), keys.end(), out.begin(), [](const Keyed& k) { return k.index; });
  return out;
}

std::vector<std::size_t> uniform_sample_without_replacement(std::size_t n, std::size_t count,
                                                            Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(count, n);
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  return idx;
}

}  // namespace sampleval
