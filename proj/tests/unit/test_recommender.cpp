#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "sampleval/evaluation.hpp"
#include "sampleval/recommender.hpp"
#include "toy.hpp"

using namespace sampleval;
using sampleval::testing::block_log;

namespace {

TrainLog log_of(std::size_t users, std::size_t items, std::vector<std::pair<UserId, ItemId>> positives) {
  TrainLog log;
  log.n_users = users;
  log.n_items = items;
  for (auto [u, i] : positives) log.entries.push_back({u, i, Label::positive, 1.0});
  return log;
}

// Mean per-user AUC of positives against unobserved items.
double auc(const Scorer& s, const TrainLog& log) {
  std::vector<std::vector<std::uint8_t>> pos(log.n_users, std::vector<std::uint8_t>(log.n_items, 0));
  for (const auto& e : log.entries)
    if (e.label == Label::positive) pos[e.user][e.item] = 1;
  double total = 0.0;
  for (UserId u = 0; u < log.n_users; ++u) {
    double wins = 0, pairs = 0;
    for (ItemId i = 0; i < log.n_items; ++i)
      for (ItemId j = 0; j < log.n_items; ++j)
        if (pos[u][i] && !pos[u][j]) {
          const double a = s.score(u, i), b = s.score(u, j);
          wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
          pairs += 1;
        }
    total += wins / pairs;
  }
  return total / static_cast<double>(log.n_users);
}

Eigen::MatrixXd seeded_init(std::size_t rows, std::size_t dim, double scale, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, dim);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  return m;
}

void expect_round_trip(const Scorer& s, std::size_t users, std::size_t items) {
  std::stringstream buf;
  s.save(buf);
  auto loaded = load_scorer(buf);
  ASSERT_TRUE(loaded);
  EXPECT_EQ(loaded->family(), s.family());
  for (UserId u = 0; u < users; ++u)
    for (ItemId i = 0; i < items; ++i) EXPECT_EQ(loaded->score(u, i), s.score(u, i)) << s.family();
}

}  // namespace

TEST(Popularity, CountsOrderItems) {
  // a: 5 entries, b: 2 entries.
  std::vector<std::pair<UserId, ItemId>> p;
  for (UserId u = 0; u < 5; ++u) p.emplace_back(u, 0);
  for (UserId u = 0; u < 2; ++u) p.emplace_back(u, 1);
  auto log = log_of(6, 3, p);
  auto s = fit_popularity(log);
  for (UserId u = 0; u < 6; ++u) {
    EXPECT_EQ(s->score(u, 0), 5.0);
    EXPECT_EQ(s->score(u, 1), 2.0);
    EXPECT_EQ(s->score(u, 2), 0.0);
  }
  EXPECT_EQ(s->score(0, 99), 0.0);
  expect_round_trip(*s, 6, 3);
}

TEST(Random, DeterministicAndUniform) {
  auto s = fit_random(3);
  EXPECT_EQ(s->score(4, 9), s->score(4, 9));
  double sum = 0;
  for (UserId u = 0; u < 100; ++u)
    for (ItemId i = 0; i < 100; ++i) {
      const double v = s->score(u, i);
      ASSERT_GT(v, 0.0);
      ASSERT_LT(v, 1.0);
      sum += v;
    }
  EXPECT_NEAR(sum / 1e4, 0.5, 0.02);
  expect_round_trip(*s, 4, 4);
}

TEST(Random, SeedsGiveIndependentRankings) {
  auto a = fit_random(1), b = fit_random(2);
  const std::size_t items = 500;
  double total = 0;
  for (UserId u = 0; u < 100; ++u) {
    std::vector<double> sa(items), sb(items);
    for (ItemId i = 0; i < items; ++i) {
      sa[i] = a->score(u, i);
      sb[i] = b->score(u, i);
    }
    total += std::abs(kendall_tau_b(sa, sb).tau);
  }
  EXPECT_LT(total / 100.0, 0.05);
}

TEST(Sar, ClosedForms) {
  EXPECT_DOUBLE_EQ(cosine_similarity(1, 4, 1), 0.5);
  EXPECT_DOUBLE_EQ(jaccard_similarity(1, 4, 1), 0.25);
  EXPECT_DOUBLE_EQ(cosine_similarity(0, 0, 3), 0.0);
  EXPECT_DOUBLE_EQ(jaccard_similarity(0, 0, 0), 0.0);
}

TEST(Sar, CoOccurrenceFromLog) {
  // Item 0 liked by four users, item 1 by one of them: C00 = 4, C11 = 1, C01 = 1.
  auto log = log_of(4, 3, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {0, 1}});
  auto cos = fit_sar(log, Similarity::cosine);
  auto jac = fit_sar(log, Similarity::jaccard);
  EXPECT_DOUBLE_EQ(cos->similarity(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(jac->similarity(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(cos->similarity(2, 0), 0.0);
}

TEST(Sar, IdenticalSupportIsOne) {
  auto log = log_of(3, 3, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 2}});
  for (auto sim : {Similarity::cosine, Similarity::jaccard}) {
    auto s = fit_sar(log, sim);
    EXPECT_DOUBLE_EQ(s->similarity(0, 1), 1.0);
  }
}

TEST(Sar, SymmetricBoundedAndScoresSumSimilarities) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 3);
  const auto& log = b.train_log;
  std::vector<std::vector<ItemId>> pos(log.n_users);
  for (const auto& e : log.entries)
    if (e.label == Label::positive) pos[e.user].push_back(e.item);
  std::vector<std::size_t> item_pos(log.n_items, 0);
  for (const auto& p : pos)
    for (auto i : p) ++item_pos[i];
  for (auto kind : {Similarity::cosine, Similarity::jaccard}) {
    auto s = fit_sar(log, kind);
    for (ItemId i = 0; i < log.n_items; ++i) {
      if (item_pos[i] > 0) EXPECT_NEAR(s->similarity(i, i), 1.0, 1e-12);
      for (ItemId j = 0; j < log.n_items; ++j) {
        const double v = s->similarity(i, j);
        EXPECT_EQ(v, s->similarity(j, i));
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-12);
      }
    }
    for (UserId u = 0; u < 10; ++u)
      for (ItemId i = 0; i < log.n_items; ++i) {
        double expected = 0;
        for (auto j : pos[u]) expected += s->similarity(j, i);
        EXPECT_NEAR(s->score(u, i), expected, 1e-9);
      }
    expect_round_trip(*s, 10, log.n_items);
  }
}

TEST(Sar, BatchScoreMatchesSingle) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 3);
  auto s = fit_sar(b.train_log, Similarity::cosine);
  std::vector<ItemId> items(b.train_log.n_items);
  std::iota(items.begin(), items.end(), ItemId{0});
  std::vector<double> out(items.size());
  s->score(5, items, out);
  for (ItemId i = 0; i < items.size(); ++i) EXPECT_EQ(out[i], s->score(5, i));
}

TEST(Als, ObjectiveNonIncreasing) {
  auto b = generate_synthetic(sampleval::testing::small_synth(), 1);
  AlsParams p{8, 0.1, 10.0, 10};
  auto r = fit_als(b.train_log, p, 5);
  ASSERT_EQ(r.objective.size(), 10u);
  for (std::size_t k = 1; k < r.objective.size(); ++k)
    EXPECT_LE(r.objective[k], r.objective[k - 1] * (1 + 1e-12)) << k;
}

TEST(Als, BlockStructureRecovered) {
  auto log = block_log(20, 20, 5);
  auto r = fit_als(log, {4, 0.1, 10.0, 5}, 2);
  for (UserId u = 0; u < 20; ++u) {
    const ItemId lo = u < 10 ? 0 : 10;
    double within = 0, cross = 0;
    for (ItemId i = 0; i < 20; ++i) (i >= lo && i < lo + 10 ? within : cross) += r.model->score(u, i);
    EXPECT_GT(within / 10, cross / 10) << u;
  }
}

TEST(Als, ZeroAlphaIsPlainRidge) {
  // With unit confidences the last half sweep is an unweighted ridge solve for
  // the item factors given the user factors.
  auto log = block_log(12, 10, 3);
  const double lambda = 0.3;
  auto r = fit_als(log, {3, lambda, 0.0, 4}, 9);
  const auto& X = r.model->user_factors();
  const auto& Y = r.model->item_factors();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(12, 10);
  for (const auto& e : log.entries) P(e.user, e.item) = 1.0;
  Eigen::MatrixXd A = X.transpose() * X + lambda * Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd expected = A.ldlt().solve(X.transpose() * P).transpose();
  EXPECT_LT((expected - Y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Als, RegularizationFloor) {
  auto log = block_log(6, 6, 2);
  auto r = fit_als(log, {2, 0.0, 1.0, 2}, 1);
  EXPECT_TRUE(r.regularization_floored);
  EXPECT_FALSE(fit_als(log, {2, 0.5, 1.0, 2}, 1).regularization_floored);
}

TEST(Als, RoundTrip) {
  auto log = block_log(8, 8, 3);
  auto r = fit_als(log, {3, 0.1, 2.0, 3}, 4);
  expect_round_trip(*r.model, 8, 8);
}

TEST(Bpr, GradientMatchesFiniteDifferences) {
  Rng rng(17);
  const int d = 6;
  const double h = 1e-6;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd u(d), i(d), j(d);
    for (int k = 0; k < d; ++k) {
      u[k] = rng.normal();
      i[k] = rng.normal();
      j[k] = rng.normal();
    }
    const double reg = 0.01 + rng.uniform() * 0.1;
    auto g = bpr_triple_gradient(u, i, j, reg);
    auto check = [&](Eigen::VectorXd& v, const Eigen::VectorXd& grad) {
      for (int k = 0; k < d; ++k) {
        const double keep = v[k];
        v[k] = keep + h;
        const double up = bpr_triple_loss(u, i, j, reg);
        v[k] = keep - h;
        const double down = bpr_triple_loss(u, i, j, reg);
        v[k] = keep;
        const double fd = (up - down) / (2 * h);
        const double rel = std::abs(fd - grad[k]) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, rel);
      }
    };
    check(u, g.du);
    check(i, g.di);
    check(j, g.dj);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Bpr, LearnsSeparableLog) {
  auto log = block_log(20, 20, 5);
  auto s = fit_bpr(log, {8, 0.05, 0.01, 60, 1}, 3);
  EXPECT_GT(auc(*s, log), 0.9);
  expect_round_trip(*s, 20, 20);
}

TEST(Bpr, ZeroEpochsReturnsInitialization) {
  auto log = block_log(6, 8, 2);
  auto s = fit_bpr(log, {4, 0.05, 0.01, 0, 1}, 12);
  EXPECT_EQ(s->user_factors(), seeded_init(6, 4, 0.1, derive_seed(12, "bpr-users")));
  EXPECT_EQ(s->item_factors(), seeded_init(8, 4, 0.1, derive_seed(12, "bpr-items")));
}

TEST(Bpr, DeterministicGivenSeed) {
  auto log = block_log(10, 10, 3);
  auto a = fit_bpr(log, {4, 0.05, 0.01, 5, 2}, 8);
  auto b = fit_bpr(log, {4, 0.05, 0.01, 5, 2}, 8);
  EXPECT_EQ(a->user_factors(), b->user_factors());
  EXPECT_EQ(a->item_factors(), b->item_factors());
}

TEST(Bpr, DivergenceAborts) {
  auto log = block_log(10, 10, 3);
  EXPECT_THROW(fit_bpr(log, {4, 1e6, 0.0, 20, 1}, 1), Error);
}

TEST(FactorScorer, ColdUsersAndItemsScoreZero) {
  auto log = block_log(4, 4, 2);
  auto s = fit_bpr(log, {2, 0.05, 0.01, 2, 1}, 1);
  EXPECT_EQ(s->score(100, 0), 0.0);
  EXPECT_EQ(s->score(0, 100), 0.0);
}

namespace {

// "signal" 1 fits SAR (learns the blocks), 0 fits a random scorer.
FitFunction planted_fit() {
  return [](const TrainLog& log, const ParamSet& p, std::uint64_t seed) -> std::unique_ptr<Scorer> {
    if (p.at("signal") > 0.5) return fit_sar(log, Similarity::cosine);
    return fit_random(seed);
  };
}

HyperparamSpace planted_space(std::size_t iterations) {
  HyperparamSpace s;
  ParamRange r;
  r.name = "signal";
  r.kind = ParamRange::Kind::categorical;
  r.choices = {0.0, 1.0};
  s.ranges = {r};
  s.iterations = iterations;
  s.folds = 3;
  s.cutoff = 10;
  s.validation_negatives = 20;
  return s;
}

}  // namespace

TEST(RandomSearch, SingleIterationReturnsTheDraw) {
  auto log = block_log(30, 40, 6);
  auto res = random_search(planted_fit(), planted_space(1), log, 5);
  ASSERT_EQ(res.trials.size(), 1u);
  EXPECT_EQ(res.best, res.trials[0].first);
}

TEST(RandomSearch, FindsPlantedOptimum) {
  auto log = block_log(30, 40, 6);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto res = random_search(planted_fit(), planted_space(8), log, seed);
    hits += res.best.at("signal") > 0.5;
  }
  EXPECT_GE(hits, 45);
}

TEST(RandomSearch, Deterministic) {
  auto log = block_log(30, 40, 6);
  auto space = default_als_space();
  space.iterations = 3;
  space.folds = 2;
  FitFunction fit = [](const TrainLog& l, const ParamSet& p, std::uint64_t seed) -> std::unique_ptr<Scorer> {
    auto params = als_params_from(p);
    params.iterations = 3;
    return std::move(fit_als(l, params, seed).model);
  };
  auto a = random_search(fit, space, log, 42);
  auto b = random_search(fit, space, log, 42);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best_score, b.best_score);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t t = 0; t < a.trials.size(); ++t) EXPECT_EQ(a.trials[t].second, b.trials[t].second);
}

TEST(RandomSearch, FailedTrialsScoreMinusInfinity) {
  auto log = block_log(30, 40, 6);
  FitFunction fit = [](const TrainLog& l, const ParamSet& p, std::uint64_t) -> std::unique_ptr<Scorer> {
    if (p.at("signal") < 0.5) throw Error("no");
    return fit_sar(l, Similarity::jaccard);
  };
  auto res = random_search(fit, planted_space(8), log, 3);
  for (const auto& [params, score] : res.trials)
    if (params.at("signal") < 0.5) EXPECT_TRUE(std::isinf(score) && score < 0);
  EXPECT_EQ(res.best.at("signal"), 1.0);

  FitFunction broken = [](const TrainLog&, const ParamSet&, std::uint64_t) -> std::unique_ptr<Scorer> {
    throw Error("no");
  };
  EXPECT_THROW(random_search(broken, planted_space(2), log, 3), Error);
}

TEST(HyperparamSpace, DrawsStayInRange) {
  for (const auto& space : {default_als_space(), default_bpr_space()}) {
    EXPECT_NO_THROW(space.validate());
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
      auto p = space.draw(rng);
      for (const auto& r : space.ranges) {
        const double v = p.at(r.name);
        if (r.kind == ParamRange::Kind::categorical) {
          EXPECT_NE(std::find(r.choices.begin(), r.choices.end(), v), r.choices.end());
        } else {
          EXPECT_GE(v, r.lo);
          EXPECT_LE(v, r.hi);
        }
        if (r.kind == ParamRange::Kind::int_log_uniform || r.kind == ParamRange::Kind::int_uniform)
          EXPECT_EQ(v, std::round(v));
      }
    }
  }
  HyperparamSpace bad;
  bad.iterations = 0;
  EXPECT_THROW(bad.validate(), Error);
}
