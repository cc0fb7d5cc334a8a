#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "sampleval/dataset.hpp"
#include "sampleval/io.hpp"
#include "toy.hpp"

using namespace sampleval;
using sampleval::testing::TempDir;
using sampleval::testing::write_text;

namespace {

SynthConfig table_scale_config() {
  SynthConfig c;
  c.n_test_users = 200;
  c.n_train_users = 400;
  c.n_items = 500;
  c.positive_rate_target = 0.05;
  c.train_density_target = 0.15;
  return c;
}

// 10 x 100 grid, every other cell positive.
GroundTruthMatrix striped_g() {
  std::vector<UserId> users(10);
  std::vector<ItemId> items(100);
  for (UserId u = 0; u < 10; ++u) users[u] = u;
  for (ItemId i = 0; i < 100; ++i) items[i] = i;
  std::vector<std::uint8_t> rel(1000);
  for (std::size_t k = 0; k < rel.size(); ++k) rel[k] = k % 2;
  return GroundTruthMatrix(users, items, rel);
}

}  // namespace

TEST(Binarize, StrictlyMoreThanTwiceDuration) {
  EXPECT_EQ(binarize_engagement(21.0, 10.0), Label::positive);
  EXPECT_EQ(binarize_engagement(20.0, 10.0), Label::negative);
  EXPECT_EQ(binarize_engagement(0.0, 10.0), Label::negative);
  EXPECT_THROW(binarize_engagement(5.0, 0.0), Error);
  EXPECT_THROW(binarize_engagement(5.0, -1.0), Error);
}

TEST(Synthetic, ShapeAndPositivePerUser) {
  auto b = generate_synthetic(table_scale_config(), 7);
  EXPECT_EQ(b.ground_truth.rows(), 200u);
  EXPECT_EQ(b.ground_truth.cols(), 500u);
  EXPECT_EQ(b.ground_truth.cells(), 200u * 500u);
  for (Row r = 0; r < b.ground_truth.rows(); ++r) EXPECT_GE(b.ground_truth.positive_count(r), 1u);
  EXPECT_NO_THROW(b.validate());
}

TEST(Synthetic, Deterministic) {
  auto a = generate_synthetic(table_scale_config(), 7);
  auto b = generate_synthetic(table_scale_config(), 7);
  EXPECT_EQ(a.ground_truth, b.ground_truth);
  EXPECT_EQ(a.train_log, b.train_log);
  EXPECT_EQ(a.holdout, b.holdout);
  auto c = generate_synthetic(table_scale_config(), 8);
  EXPECT_NE(a.ground_truth, c.ground_truth);
}

TEST(Synthetic, MeanPositivesPerUserNearTarget) {
  // 5% of 500 items: about 25 positives per user.
  auto cfg = table_scale_config();
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto b = generate_synthetic(cfg, seed);
    const double mean = static_cast<double>(b.ground_truth.total_positives()) / 200.0;
    EXPECT_GE(mean, 20.0) << "seed " << seed;
    EXPECT_LE(mean, 30.0) << "seed " << seed;
    total += mean;
  }
  EXPECT_NEAR(total / 100.0, 25.0, 5.0);
}

TEST(Synthetic, TrainDensityWithinTolerance) {
  auto b = generate_synthetic(table_scale_config(), 3);
  EXPECT_NEAR(b.train_log.density(), 0.15, 0.15 * 0.2);
  EXPECT_LT(b.train_log.density(), 1.0);
}

TEST(Synthetic, PopularityIsHeavyTailed) {
  auto cfg = table_scale_config();
  cfg.popularity_skew_exponent = 1.0;
  auto b = generate_synthetic(cfg, 5);
  auto counts = b.train_log.item_interaction_counts();
  std::sort(counts.begin(), counts.end(), std::greater<>());
  std::size_t total = 0, top = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    total += counts[k];
    if (k < counts.size() / 10) top += counts[k];
  }
  // Uniform exposure would give the top decile ~10% of the mass.
  EXPECT_GT(static_cast<double>(top) / static_cast<double>(total), 0.25);
}

TEST(Synthetic, RejectsInvalidConfig) {
  auto cfg = table_scale_config();
  cfg.positive_rate_target = 0.0;
  EXPECT_THROW(generate_synthetic(cfg, 1), Error);
  cfg = table_scale_config();
  cfg.latent_dim = 0;
  EXPECT_THROW(generate_synthetic(cfg, 1), Error);
  cfg = table_scale_config();
  cfg.n_items = 0;
  EXPECT_THROW(generate_synthetic(cfg, 1), Error);
}

TEST(Holdout, SizeIsRoundedFraction) {
  auto g = striped_g();
  auto h = make_holdout(g, 0.10, 1);
  EXPECT_EQ(h.size(), 100u);
  std::set<std::pair<Row, Col>> unique(h.cells().begin(), h.cells().end());
  EXPECT_EQ(unique.size(), 100u);
  for (auto [r, c] : h.cells()) EXPECT_TRUE(h.contains(r, c));
}

TEST(Holdout, SameSeedSamePartition) {
  auto g = striped_g();
  EXPECT_EQ(make_holdout(g, 0.10, 4), make_holdout(g, 0.10, 4));
}

TEST(Holdout, RejectsFractionOutsideRange) {
  auto g = striped_g();
  EXPECT_THROW(make_holdout(g, 0.0, 1), Error);
  EXPECT_THROW(make_holdout(g, 0.6, 1), Error);
}

TEST(Holdout, OverlapMatchesHypergeometricExpectation) {
  // Two independent uniform 100-subsets of 1000 cells share 100*100/1000 = 10 cells on average.
  auto g = striped_g();
  double overlap = 0.0;
  const int pairs = 1000;
  for (int k = 0; k < pairs; ++k) {
    auto a = make_holdout(g, 0.10, 2 * k + 1);
    auto b = make_holdout(g, 0.10, 2 * k + 2);
    std::vector<std::pair<Row, Col>> common;
    std::set_intersection(a.cells().begin(), a.cells().end(), b.cells().begin(), b.cells().end(),
                          std::back_inserter(common));
    overlap += static_cast<double>(common.size());
  }
  EXPECT_NEAR(overlap / pairs, 10.0, 0.5);
}

TEST(Holdout, RedrawsWhenAUserWouldLoseEveryPositive) {
  // One positive per user in a 2 x 2 grid: half the cells held out often hits a positive.
  GroundTruthMatrix g({0, 1}, {0, 1}, {1, 0, 0, 1});
  std::size_t redraws_total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::size_t redraws = 0;
    auto h = make_holdout(g, 0.25, seed, &redraws);
    EXPECT_FALSE(h.contains(0, 0));
    EXPECT_FALSE(h.contains(1, 1));
    redraws_total += redraws;
  }
  EXPECT_GT(redraws_total, 0u);
}

TEST(Ingest, ToyMatrixIsIdentity) {
  TempDir dir;
  write_text(dir / "test.csv", "user_id,item_id,label\nu1,a,1\nu1,b,0\nu1,c,1\nu2,a,0\nu2,b,1\nu2,c,0\n");
  write_text(dir / "train.csv", "user_id,item_id,label\nt1,a,1\nt1,b,0\nt2,c,1\n");
  IngestPaths p;
  p.test = dir / "test.csv";
  p.train = dir / "train.csv";
  auto b = ingest_fully_observed(p);
  ASSERT_EQ(b.ground_truth.rows(), 2u);
  ASSERT_EQ(b.ground_truth.cols(), 3u);
  const std::vector<std::uint8_t> expected{1, 0, 1, 0, 1, 0};
  EXPECT_EQ(b.ground_truth.relevance(), expected);
  EXPECT_EQ(b.report.imputed_cells, 0u);
  EXPECT_EQ(b.train_log.entries.size(), 3u);
}

TEST(Ingest, MissingCellImputedNegative) {
  TempDir dir;
  std::ostringstream test;
  test << "user_id,item_id,label\n";
  for (int u = 0; u < 20; ++u)
    for (int i = 0; i < 30; ++i) {
      if (u == 3 && i == 7) continue;
      test << "u" << u << ",i" << i << "," << ((u + i) % 3 == 0 ? 1 : 0) << "\n";
    }
  write_text(dir / "test.csv", test.str());
  write_text(dir / "train.csv", "user_id,item_id,label\nt,i0,1\n");
  IngestPaths p{dir / "test.csv", dir / "train.csv", std::nullopt, 0.1, 3};
  auto b = ingest_fully_observed(p);
  EXPECT_EQ(b.report.imputed_cells, 1u);
  EXPECT_EQ(b.ground_truth.cells(), 600u);
  EXPECT_FALSE(b.ground_truth.positive(3, 7));
  EXPECT_FALSE(b.report.warnings.empty());
}

TEST(Ingest, DropsUserWithoutPositives) {
  TempDir dir;
  write_text(dir / "test.csv", "user_id,item_id,label\nu1,a,1\nu1,b,0\nu2,a,0\nu2,b,0\nu3,a,0\nu3,b,1\n");
  write_text(dir / "train.csv", "user_id,item_id,label\nt,a,1\n");
  IngestPaths p{dir / "test.csv", dir / "train.csv", std::nullopt, 0.25, 1};
  auto b = ingest_fully_observed(p);
  EXPECT_EQ(b.ground_truth.rows(), 2u);
  EXPECT_EQ(b.report.dropped_users, 1u);
}

TEST(Ingest, UnparseableRowNamesLine) {
  TempDir dir;
  write_text(dir / "test.csv", "user_id,item_id,label\nu1,a,1\nu1,b,maybe\n");
  write_text(dir / "train.csv", "user_id,item_id,label\nt,a,1\n");
  IngestPaths p{dir / "test.csv", dir / "train.csv", std::nullopt, 0.1, 1};
  try {
    ingest_fully_observed(p);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST(Ingest, LowCoverageRejected) {
  TempDir dir;
  write_text(dir / "test.csv", "user_id,item_id,label\nu1,a,1\nu2,b,1\n");
  write_text(dir / "train.csv", "user_id,item_id,label\nt,a,1\n");
  IngestPaths p{dir / "test.csv", dir / "train.csv", std::nullopt, 0.1, 1};
  EXPECT_THROW(ingest_fully_observed(p), Error);
}

TEST(Bundle, WriteReadRoundTrip) {
  TempDir dir;
  auto b = generate_synthetic(sampleval::testing::small_synth(), 11);
  write_bundle(b, dir.path());
  auto r = read_bundle(dir.path());
  EXPECT_EQ(r.ground_truth, b.ground_truth);
  EXPECT_EQ(r.train_log, b.train_log);
  EXPECT_EQ(r.holdout, b.holdout);
  EXPECT_EQ(r.user_names, b.user_names);
  EXPECT_EQ(r.item_names, b.item_names);

  // Writing the re-read bundle reproduces the same bytes.
  TempDir again;
  write_bundle(r, again.path());
  for (const char* f : {"train.csv", "test.csv", "holdout.csv"})
    EXPECT_EQ(io::read_file(dir / f), io::read_file(again / f)) << f;
}

TEST(Bundle, TamperedFileRejected) {
  TempDir dir;
  auto b = generate_synthetic(sampleval::testing::small_synth(), 11);
  write_bundle(b, dir.path());
  auto text = io::read_file(dir / "train.csv");
  text.back() = text.back() == '\n' ? ' ' : '\n';
  write_text(dir / "train.csv", text);
  EXPECT_THROW(read_bundle(dir.path()), Error);
}
