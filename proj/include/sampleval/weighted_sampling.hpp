#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sampleval/rng.hpp"

namespace sampleval {

/// Draws `count` distinct indices without replacement with successive
/// renormalization semantics (Efraimidis-Spirakis exponentiated keys,
/// evaluated in log space as log(U)/w). Zero-weight indices are never drawn,
/// so the result may be shorter than `count`. Output is in draw order
/// (largest key first).
std::vector<std::size_t> weighted_sample_without_replacement(std::span<const double> weights,
                                                             std::size_t count, Rng& rng);

/// Uniform sample of `count` distinct indices from [0, n) (partial
/// Fisher-Yates). Output is in draw order.
std::vector<std::size_t> uniform_sample_without_replacement(std::size_t n, std::size_t count,
                                                            Rng& rng);

}  // namespace sampleval
