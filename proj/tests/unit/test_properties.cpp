// Randomized invariants over many generated cases.
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sampleval/evaluation.hpp"
#include "sampleval/rng.hpp"
#include "sampleval/weighted_sampling.hpp"

using namespace sampleval;

namespace {

double brute_ndcg(const std::vector<std::uint8_t>& rel, std::size_t n_pos, std::size_t k) {
  double dcg = 0, idcg = 0;
  for (std::size_t p = 0; p < std::min(k, rel.size()); ++p)
    if (rel[p]) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  for (std::size_t p = 0; p < std::min(k, n_pos); ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

std::vector<double> random_values(Rng& rng, std::size_t m, std::size_t levels) {
  std::vector<double> v(m);
  for (auto& x : v) x = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
  return v;
}

}  // namespace

TEST(Property, NdcgMatchesBruteForce) {
  Rng rng(101);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t len = 1 + rng.below(60);
    std::vector<std::uint8_t> rel(len);
    std::size_t pos = 0;
    for (auto& r : rel) pos += (r = rng.uniform() < 0.3);
    if (pos == 0) rel[rng.below(len)] = 1, pos = 1;
    const std::size_t k = 1 + rng.below(80);
    ASSERT_NEAR(metric_at_k(MetricKind::ndcg, rel, pos, k), brute_ndcg(rel, pos, k), 1e-12);
  }
}

TEST(Property, MetricsStayInUnitInterval) {
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const std::size_t len = 1 + rng.below(30);
    std::vector<std::uint8_t> rel(len);
    std::size_t pos = 0;
    for (auto& r : rel) pos += (r = rng.uniform() < 0.5);
    pos += rng.below(3);  // positives outside the candidate list
    if (pos == 0) continue;
    for (auto kind : {MetricKind::precision, MetricKind::recall, MetricKind::ndcg}) {
      const double v = metric_at_k(kind, rel, pos, 1 + rng.below(40));
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0 + 1e-12);
    }
  }
}

TEST(Property, TauInvariantUnderMonotoneTransform) {
  Rng rng(7);
  for (int t = 0; t < 500; ++t) {
    const std::size_t m = 2 + rng.below(10);
    auto a = random_values(rng, m, 5), b = random_values(rng, m, 5);
    auto base = kendall_tau_b(a, b);
    std::vector<double> ta(m), tb(m);
    for (std::size_t i = 0; i < m; ++i) {
      ta[i] = std::exp(3 * a[i]);
      tb[i] = b[i] * b[i] * b[i] + 2;
    }
    auto moved = kendall_tau_b(ta, tb);
    ASSERT_EQ(base.defined, moved.defined);
    if (base.defined) {
      ASSERT_DOUBLE_EQ(base.tau, moved.tau);
      ASSERT_GE(base.tau, -1.0);
      ASSERT_LE(base.tau, 1.0);
    }
  }
}

TEST(Property, TauIsSymmetric) {
  Rng rng(8);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = 2 + rng.below(12);
    auto a = random_values(rng, m, 4), b = random_values(rng, m, 4);
    auto ab = kendall_tau_b(a, b), ba = kendall_tau_b(b, a);
    ASSERT_EQ(ab.defined, ba.defined);
    if (ab.defined) ASSERT_DOUBLE_EQ(ab.tau, ba.tau);
  }
}

TEST(Property, DistinctPerturbationRemovesTies) {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 2 + rng.below(8);
    auto v = random_values(rng, m, 3);
    for (std::size_t i = 0; i < m; ++i) v[i] += 1e-6 * static_cast<double>(i + 1) / static_cast<double>(m + 1);
    ASSERT_DOUBLE_EQ(tie_rate(v), 0.0);
  }
}

TEST(Property, AddingNegativesNeverRaisesNdcg) {
  Rng rng(11);
  for (int t = 0; t < 300; ++t) {
    const std::size_t items = 40;
    std::vector<double> scores(items);
    for (auto& s : scores) s = static_cast<double>(rng.below(8));  // frequent ties
    std::vector<Col> all(items);
    std::iota(all.begin(), all.end(), Col{0});
    rng.shuffle(all);
    const std::size_t n_pos = 1 + rng.below(5);
    std::set<Col> positives(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_pos));
    const std::size_t small_n = n_pos + rng.below(10);
    const std::size_t big_n = small_n + rng.below(items - small_n + 1);
    const std::uint64_t seed = rng();
    auto ndcg_of = [&](std::size_t n) {
      std::vector<Col> cands(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
      std::vector<double> s(cands.size());
      for (std::size_t k = 0; k < cands.size(); ++k) s[k] = scores[cands[k]];
      auto ranked = rank_candidates(s, cands, seed);
      std::vector<std::uint8_t> rel;
      for (Col c : ranked) rel.push_back(positives.count(c) ? 1 : 0);
      return metric_at_k(MetricKind::ndcg, rel, n_pos, 10);
    };
    ASSERT_LE(ndcg_of(big_n), ndcg_of(small_n) + 1e-12);
  }
}

TEST(Property, RankingIsAPermutationOfCandidates) {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<Col> cands(n);
    for (std::size_t k = 0; k < n; ++k) cands[k] = static_cast<Col>(k * 3 + 1);
    std::vector<double> scores(n);
    for (auto& s : scores) s = static_cast<double>(rng.below(4));
    auto ranked = rank_candidates(scores, cands, rng());
    auto sorted = ranked;
    std::sort(sorted.begin(), sorted.end());
    ASSERT_EQ(sorted, cands);
    for (std::size_t k = 1; k < ranked.size(); ++k)
      ASSERT_GE(scores[(ranked[k - 1] - 1) / 3], scores[(ranked[k] - 1) / 3]);
  }
}

TEST(Property, WithoutReplacementDrawsAreDistinct) {
  Rng rng(13);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<double> w(n);
    for (auto& x : w) x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    const std::size_t want = rng.below(n + 5);
    auto picked = weighted_sample_without_replacement(w, want, rng);
    const auto nonzero = static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double x) { return x > 0; }));
    ASSERT_EQ(picked.size(), std::min(want, nonzero));
    std::set<std::size_t> unique(picked.begin(), picked.end());
    ASSERT_EQ(unique.size(), picked.size());
    auto u = uniform_sample_without_replacement(n, std::min(want, n), rng);
    ASSERT_EQ(std::set<std::size_t>(u.begin(), u.end()).size(), std::min(want, n));
  }
}

TEST(Property, DeriveSeedSeparatesTags) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t p = 0; p < 20; ++p)
    for (int k = 0; k < 50; ++k) {
      seen.insert(derive_seed(p, "a", k));
      seen.insert(derive_seed(p, "b", k));
    }
  EXPECT_EQ(seen.size(), 2000u);
  EXPECT_EQ(derive_seed(1, "x", 2), derive_seed(1, "x", 2));
  EXPECT_NE(derive_seed(1, "x", 2), derive_seed(1, 2, "x"));
}
