#include <gtest/gtest.h>

#include <cmath>

#include "sampleval/verify.hpp"

using namespace sampleval;

namespace {

VerifyOptions quick() {
  VerifyOptions o;
  o.metric_cases = 300;
  o.tau_cases = 300;
  o.monotonicity_pairs = 100;
  o.sampler_draws = 20000;
  o.sampler_tv_tolerance = 0.03;
  o.include_determinism = false;
  return o;
}

}  // namespace

TEST(Verify, ReferencesAgreeOnHandCases) {
  const std::vector<std::uint8_t> rel{1, 0, 1, 0};
  EXPECT_NEAR(reference_metric(MetricKind::ndcg, rel, 2, 4), 0.9197, 1e-4);
  const std::vector<double> a{4, 3, 2, 1}, b{4, 3, 1, 2};
  EXPECT_NEAR(reference_tau_b(a, b).tau, 4.0 / 6.0, 1e-15);
}

TEST(Verify, SuitesPass) {
  auto o = quick();
  for (const auto& s : {verify_metric_oracle(o), verify_tau_oracle(o), verify_monotonicity(o),
                        verify_tie_break_uniformity(o), verify_sampler_distributions(o), verify_logger(o)}) {
    EXPECT_TRUE(s.ok()) << s.name << ": " << (s.notes.empty() ? "" : s.notes.front());
    EXPECT_GT(s.passed, 0u) << s.name;
  }
}

TEST(Verify, OffByOneDiscountIsCaught) {
  // Mutant: discounts by log2(rank + 2) instead of log2(rank + 1).
  auto o = quick();
  o.metric = [](MetricKind kind, std::span<const std::uint8_t> rel, std::size_t n_pos, std::size_t k) {
    if (kind != MetricKind::ndcg) return metric_at_k(kind, rel, n_pos, k);
    double dcg = 0, idcg = 0;
    for (std::size_t p = 0; p < std::min(k, rel.size()); ++p)
      if (rel[p]) dcg += 1.0 / std::log2(static_cast<double>(p) + 3.0);
    for (std::size_t p = 0; p < std::min(k, n_pos); ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    return dcg / idcg;
  };
  auto s = verify_metric_oracle(o);
  EXPECT_FALSE(s.ok());
  EXPECT_GT(s.failed, 0u);
}

TEST(Verify, JsonSummary) {
  auto o = quick();
  auto suites = std::vector<SuiteResult>{verify_metric_oracle(o), verify_tau_oracle(o)};
  auto j = to_json(suites);
  EXPECT_TRUE(j.at("ok").get<bool>());
  EXPECT_EQ(j.at("suites").size(), 2u);
}
