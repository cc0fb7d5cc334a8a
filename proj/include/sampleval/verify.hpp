#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sampleval/evaluation.hpp"

namespace sampleval {

struct SuiteResult {
  std::string name;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  /// First few failure descriptions plus summary statistics.
  std::vector<std::string> notes;
  double statistic = 0.0;  // suite-specific headline number (max error, max TV, ...)

  bool ok() const { return failed == 0; }
};

using MetricFunction =
    std::function<double(MetricKind, std::span<const std::uint8_t>, std::size_t, std::size_t)>;

struct VerifyOptions {
  std::uint64_t seed = 7;
  /// Implementation under test for the metric oracle suite.
  MetricFunction metric = metric_at_k;
  std::size_t metric_cases = 1000;
  std::size_t tau_cases = 1000;
  std::size_t monotonicity_pairs = 500;
  std::size_t sampler_draws = 100000;
  double sampler_tv_tolerance = 0.02;
  bool include_determinism = true;
};

/// Independent brute-force metric: walks the first k positions one by one.
double reference_metric(MetricKind kind, std::span<const std::uint8_t> relevance, std::size_t n_positives,
                        std::size_t k);
/// O(M^2) pair counting tau-b; `defined` false when either side is all tied.
TauResult reference_tau_b(std::span<const double> a, std::span<const double> b);

SuiteResult verify_metric_oracle(const VerifyOptions& o);
SuiteResult verify_tau_oracle(const VerifyOptions& o);
SuiteResult verify_monotonicity(const VerifyOptions& o);
SuiteResult verify_tie_break_uniformity(const VerifyOptions& o);
/// Single-draw inclusion frequencies of each weighted strategy against its
/// normalized weights on the user's candidate pool (total variation).
SuiteResult verify_sampler_distributions(const VerifyOptions& o);
/// Retained counts, positive coverage and repair counts over every policy and
/// default sparsity on a synthetic bundle.
SuiteResult verify_logger(const VerifyOptions& o);
/// Rebuilds evaluation sets and runs a tiny grid with different worker counts.
SuiteResult verify_determinism(const VerifyOptions& o);

std::vector<SuiteResult> run_verify(const VerifyOptions& o);
nlohmann::json to_json(const std::vector<SuiteResult>& suites);

}  // namespace sampleval
