#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sampleval/dataset.hpp"
#include "sampleval/logger.hpp"
#include "toy.hpp"

using namespace sampleval;

namespace {

GroundTruthMatrix dense_g(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> rel) {
  std::vector<UserId> users(rows);
  std::vector<ItemId> items(cols);
  std::iota(users.begin(), users.end(), UserId{0});
  std::iota(items.begin(), items.end(), ItemId{0});
  return GroundTruthMatrix(users, items, std::move(rel));
}

HoldoutPartition no_holdout(const GroundTruthMatrix& g) { return HoldoutPartition(g.rows(), g.cols(), 0.0, {}); }

// Spearman correlation with average ranks for ties.
std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return rank;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ra = average_ranks(a), rb = average_ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(ExposureWeights, UniformOverFourItems) {
  DatasetBundle b;
  b.ground_truth = dense_g(1, 4, {1, 0, 0, 0});
  auto w = exposure_weights(LoggerPolicy::uniform, b);
  ASSERT_EQ(w.size(), 4u);
  for (double p : w.p) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(ExposureWeights, PositivitySmoothed) {
  // Column positive counts [3, 1, 0] -> [4, 2, 1] / 7.
  DatasetBundle b;
  b.ground_truth = dense_g(3, 3, {1, 1, 0, 1, 0, 0, 1, 0, 0});
  auto w = exposure_weights(LoggerPolicy::positivity, b);
  EXPECT_NEAR(w.p[0], 4.0 / 7.0, 1e-12);
  EXPECT_NEAR(w.p[1], 2.0 / 7.0, 1e-12);
  EXPECT_NEAR(w.p[2], 1.0 / 7.0, 1e-12);
  EXPECT_NO_THROW(w.check());
}

TEST(ExposureWeights, PopularityTracksTrainCounts) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 2);
  auto w = exposure_weights(LoggerPolicy::popularity, b);
  const auto counts = b.train_log.item_interaction_counts();
  std::vector<double> raw, ws;
  for (Col c = 0; c < b.ground_truth.cols(); ++c) {
    raw.push_back(static_cast<double>(counts[b.ground_truth.items()[c]]));
    ws.push_back(w.p[c]);
  }
  EXPECT_GT(spearman(ws, raw), 0.95);
}

TEST(ExposureWeights, EmptyCatalogRejected) {
  DatasetBundle b;
  EXPECT_THROW(exposure_weights(LoggerPolicy::uniform, b), Error);
}

TEST(RetainedTarget, RoundsRetainedShare) {
  EXPECT_EQ(retained_target(10, 0.5), 5u);
  EXPECT_EQ(retained_target(10, 0.0), 10u);
  EXPECT_EQ(retained_target(7, 0.9), 1u);
  EXPECT_EQ(retained_target(100, 0.95), 5u);
}

TEST(SimulateLog, ZeroSparsityKeepsEveryEligibleCell) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 4);
  const auto& g = b.ground_truth;
  auto w = exposure_weights(LoggerPolicy::popularity, b);
  auto l = simulate_log(g, b.holdout, w, {LoggerPolicy::popularity, 0.0, 9});
  EXPECT_EQ(l.repair_count, 0u);
  for (Row r = 0; r < g.rows(); ++r) {
    std::size_t eligible_neg = 0, eligible = 0;
    for (Col c = 0; c < g.cols(); ++c) {
      if (b.holdout.contains(r, c)) continue;
      ++eligible;
      eligible_neg += g.positive(r, c) ? 0 : 1;
    }
    EXPECT_EQ(l.exposed[r].size(), eligible);
    EXPECT_EQ(l.exposed_negatives[r], eligible_neg);
  }
}

TEST(SimulateLog, RetainsExactCountAndCopiesLabels) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 4);
  const auto& g = b.ground_truth;
  for (auto policy : {LoggerPolicy::uniform, LoggerPolicy::popularity, LoggerPolicy::positivity}) {
    auto w = exposure_weights(policy, b);
    auto l = simulate_log(g, b.holdout, w, {policy, 0.7, 21});
    for (Row r = 0; r < g.rows(); ++r) {
      EXPECT_EQ(l.exposed[r].size(), retained_target(l.eligible[r], 0.7));
      EXPECT_GE(l.positive_count(r), 1u);
      EXPECT_TRUE(std::is_sorted(l.exposed[r].begin(), l.exposed[r].end()));
      for (std::size_t k = 0; k < l.exposed[r].size(); ++k) {
        const Col c = l.exposed[r][k];
        EXPECT_FALSE(b.holdout.contains(r, c));
        EXPECT_EQ(l.labels[r][k], g.positive(r, c) ? 1 : 0);
      }
    }
  }
}

TEST(SimulateLog, TenEligibleHalfSparsityKeepsFive) {
  auto g = dense_g(1, 10, {1, 0, 1, 0, 0, 0, 0, 0, 0, 0});
  std::vector<double> raw(10, 1.0);
  auto l = simulate_log(g, no_holdout(g), normalize_weights(raw, "uniform"), {LoggerPolicy::uniform, 0.5, 1});
  EXPECT_EQ(l.exposed[0].size(), 5u);
}

TEST(SimulateLog, UniformRetentionFrequencyIsHalf) {
  const std::size_t users = 10000, items = 10;
  // All-positive rows, so the positive repair never moves the draw.
  std::vector<std::uint8_t> rel(users * items, 1);
  auto g = dense_g(users, items, rel);
  auto l = simulate_log(g, no_holdout(g), normalize_weights(std::vector<double>(items, 1.0), "uniform"),
                        {LoggerPolicy::uniform, 0.5, 77});
  std::vector<std::size_t> kept(items, 0);
  for (Row r = 0; r < users; ++r)
    for (Col c : l.exposed[r]) ++kept[c];
  EXPECT_EQ(l.repair_count, 0u);
  for (Col c = 0; c < items; ++c) EXPECT_NEAR(static_cast<double>(kept[c]) / users, 0.5, 0.02) << c;
}

TEST(SimulateLog, SingleDrawFollowsWeights) {
  const std::size_t users = 10000;
  std::vector<std::uint8_t> rel(users * 2, 1);
  auto g = dense_g(users, 2, rel);
  auto l = simulate_log(g, no_holdout(g), normalize_weights({0.9, 0.1}, "fixed"), {LoggerPolicy::popularity, 0.5, 5});
  std::size_t a = 0;
  for (Row r = 0; r < users; ++r) {
    ASSERT_EQ(l.exposed[r].size(), 1u);
    a += l.exposed[r][0] == 0 ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(a) / users, 0.9, 0.01);
}

TEST(SimulateLog, RepairSwapsInHighestWeightPositive) {
  // Only positive is column 2 (low weight); retain 1 of 4.
  auto g = dense_g(1, 4, {0, 0, 1, 0});
  auto w = normalize_weights({0.4, 0.3, 0.01, 0.29}, "fixed");
  std::size_t repairs = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto l = simulate_log(g, no_holdout(g), w, {LoggerPolicy::popularity, 0.75, seed});
    ASSERT_EQ(l.exposed[0].size(), 1u);
    EXPECT_EQ(l.exposed[0][0], 2u);
    repairs += l.repair_count;
  }
  EXPECT_GT(repairs, 40u);
}

TEST(SimulateLog, RealizedSparsityNearTarget) {
  auto cfg = sampleval::testing::small_synth();
  cfg.n_test_users = 150;
  auto b = generate_synthetic(cfg, 8);
  for (double s : default_sparsities()) {
    auto l = simulate_log(b.ground_truth, b.holdout, exposure_weights(LoggerPolicy::uniform, b),
                          {LoggerPolicy::uniform, s, 3});
    EXPECT_NEAR(l.realized_sparsity(), s, 0.01) << s;
  }
}

TEST(SimulateLog, Deterministic) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 4);
  auto w = exposure_weights(LoggerPolicy::positivity, b);
  auto a = simulate_log(b.ground_truth, b.holdout, w, {LoggerPolicy::positivity, 0.9, 13});
  auto c = simulate_log(b.ground_truth, b.holdout, w, {LoggerPolicy::positivity, 0.9, 13});
  EXPECT_EQ(a.exposed, c.exposed);
  EXPECT_EQ(a.labels, c.labels);
  EXPECT_EQ(a.repair_count, c.repair_count);
}

TEST(SimulateLog, PositivityRetainsMorePositivesThanUniform) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 6);
  const auto& g = b.ground_truth;
  auto frac = [&](LoggerPolicy p, std::uint64_t seed) {
    auto l = simulate_log(g, b.holdout, exposure_weights(p, b), {p, 0.7, seed});
    std::size_t pos = 0, kept = 0;
    for (Row r = 0; r < g.rows(); ++r) {
      pos += l.positive_count(r);
      kept += l.exposed[r].size();
    }
    return static_cast<double>(pos) / static_cast<double>(kept);
  };
  double uni = 0, posi = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    uni += frac(LoggerPolicy::uniform, seed);
    posi += frac(LoggerPolicy::positivity, seed);
  }
  EXPECT_GE(posi, uni);
}

TEST(SimulateLog, RejectsFullSparsity) {
  auto g = dense_g(1, 4, {1, 0, 0, 0});
  auto w = normalize_weights({1, 1, 1, 1}, "u");
  EXPECT_THROW(simulate_log(g, no_holdout(g), w, {LoggerPolicy::uniform, 1.0, 1}), Error);
}

TEST(LoggerPolicy, ParseRoundTrip) {
  for (auto p : {LoggerPolicy::uniform, LoggerPolicy::popularity, LoggerPolicy::positivity})
    EXPECT_EQ(parse_logger_policy(to_string(p)), p);
  EXPECT_FALSE(parse_logger_policy("bogus").has_value());
}
