#include "sampleval/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "sampleval/harness.hpp"
#include "sampleval/io.hpp"
#include "sampleval/logger.hpp"
#include "sampleval/rng.hpp"
#include "sampleval/sampler.hpp"
#include "sampleval/weighted_sampling.hpp"

namespace sampleval {

namespace {

void note(SuiteResult& s, std::string msg) {
  if (s.notes.size() < 8) s.notes.push_back(std::move(msg));
}

void check(SuiteResult& s, bool ok, const std::string& what) {
  if (ok) {
    ++s.passed;
  } else {
    ++s.failed;
    note(s, what);
  }
}

long long q12(double v) { return std::llround(v * 1e12); }

SynthConfig small_synth() {
  SynthConfig c;
  c.n_test_users = 60;
  c.n_train_users = 120;
  c.n_items = 40;
  c.positive_rate_target = 0.10;
  return c;
}

}  // namespace

double reference_metric(MetricKind kind, std::span<const std::uint8_t> relevance, std::size_t n_positives,
                        std::size_t k) {
  std::size_t hits = 0;
  double dcg = 0.0;
  std::size_t position = 1;
  for (auto it = relevance.begin(); it != relevance.end() && position <= k; ++it, ++position) {
    if (*it) {
      ++hits;
      dcg += std::log(2.0) / std::log(static_cast<double>(position) + 1.0);
    }
  }
  if (kind == MetricKind::precision) return static_cast<double>(hits) / static_cast<double>(k);
  if (kind == MetricKind::recall) return static_cast<double>(hits) / static_cast<double>(n_positives);
  double ideal = 0.0;
  for (std::size_t p = 1; p <= k && p <= n_positives; ++p) ideal += std::log(2.0) / std::log(static_cast<double>(p) + 1.0);
  return dcg / ideal;
}

TauResult reference_tau_b(std::span<const double> a, std::span<const double> b) {
  const std::size_t m = a.size();
  long long concordant = 0, discordant = 0, tied_a = 0, tied_b = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      const long long da = q12(a[i]) - q12(a[j]);
      const long long db = q12(b[i]) - q12(b[j]);
      if (da == 0) ++tied_a;
      if (db == 0) ++tied_b;
      if (da == 0 || db == 0) continue;
      ((da > 0) == (db > 0) ? concordant : discordant) += 1;
    }
  const auto pairs = static_cast<double>(m * (m - 1) / 2);
  const double denom = (pairs - static_cast<double>(tied_a)) * (pairs - static_cast<double>(tied_b));
  if (denom <= 0.0) return {0.0, false};
  return {static_cast<double>(concordant - discordant) / std::sqrt(denom), true};
}

SuiteResult verify_metric_oracle(const VerifyOptions& o) {
  SuiteResult s;
  s.name = "metric_oracle";
  Rng rng(derive_seed(o.seed, "metric-oracle"));
  std::vector<std::uint8_t> rel;
  for (std::size_t c = 0; c < o.metric_cases; ++c) {
    const std::size_t len = 1 + rng.below(200);
    const double density = rng.uniform();
    rel.resize(len);
    std::size_t hits = 0;
    for (auto& r : rel) {
      r = rng.uniform() < density ? 1 : 0;
      hits += r;
    }
    const std::size_t n_pos = hits + rng.below(20) + (hits == 0 ? 1 : 0);
    const std::size_t k = 1 + rng.below(150);
    for (auto kind : {MetricKind::precision, MetricKind::recall, MetricKind::ndcg}) {
      const double got = o.metric(kind, rel, n_pos, k);
      const double want = reference_metric(kind, rel, n_pos, k);
      const double err = std::abs(got - want);
      s.statistic = std::max(s.statistic, err);
      check(s, err <= 1e-12,
            std::string(to_string(kind)) + "@" + std::to_string(k) + " case " + std::to_string(c) + ": got " +
                io::format_double(got, 15) + ", oracle " + io::format_double(want, 15));
    }
  }
  return s;
}

SuiteResult verify_tau_oracle(const VerifyOptions& o) {
  SuiteResult s;
  s.name = "tau_oracle";
  Rng rng(derive_seed(o.seed, "tau-oracle"));
  std::vector<double> a, b;
  for (std::size_t c = 0; c < o.tau_cases; ++c) {
    const std::size_t m = 2 + rng.below(12);
    const std::size_t levels = 1 + rng.below(6);  // few levels -> many ties
    a.resize(m);
    b.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      a[i] = static_cast<double>(rng.below(levels)) / 7.0;
      b[i] = static_cast<double>(rng.below(levels)) / 7.0;
    }
    const auto got = kendall_tau_b(a, b);
    const auto want = reference_tau_b(a, b);
    check(s, got.defined == want.defined && (!want.defined || got.tau == want.tau),
          "case " + std::to_string(c) + ": got " + io::format_double(got.tau, 15) + ", oracle " +
              io::format_double(want.tau, 15));
  }
  return s;
}

SuiteResult verify_monotonicity(const VerifyOptions& o) {
  SuiteResult s;
  s.name = "candidate_monotonicity";
  Rng rng(derive_seed(o.seed, "monotonicity"));
  for (std::size_t c = 0; c < o.monotonicity_pairs; ++c) {
    // A fixed "model": one score per catalog item, coarsely quantized so ties occur.
    const std::size_t catalog = 50 + rng.below(400);
    std::vector<double> item_score(catalog);
    for (auto& v : item_score) v = std::floor(rng.uniform() * 20.0) / 20.0;
    const std::size_t n_pos = 1 + rng.below(10);
    auto picks = uniform_sample_without_replacement(catalog, catalog, rng);
    std::vector<Col> positives(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(n_pos));
    std::vector<Col> rest(picks.begin() + static_cast<std::ptrdiff_t>(n_pos), picks.end());
    const std::size_t small = rng.below(rest.size() / 2 + 1);
    const std::size_t large = small + 1 + rng.below(rest.size() - small);
    const std::uint64_t tie_seed = rng.below(1u << 30);
    auto ndcg_on = [&](std::size_t n_neg) {
      std::vector<Col> cand(positives);
      cand.insert(cand.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_neg));
      std::vector<double> sc(cand.size());
      for (std::size_t k = 0; k < cand.size(); ++k) sc[k] = item_score[cand[k]];
      const auto ranked = rank_candidates(sc, cand, tie_seed);
      std::vector<std::uint8_t> rel(ranked.size());
      for (std::size_t p = 0; p < ranked.size(); ++p)
        rel[p] = std::find(positives.begin(), positives.end(), ranked[p]) != positives.end();
      return metric_at_k(MetricKind::ndcg, rel, n_pos, 100);
    };
    const double subset = ndcg_on(small), superset = ndcg_on(large);
    check(s, superset <= subset + 1e-15,
          "pair " + std::to_string(c) + ": nDCG rose from " + io::format_double(subset) + " to " +
              io::format_double(superset));
  }
  return s;
}

SuiteResult verify_tie_break_uniformity(const VerifyOptions& o) {
  SuiteResult s;
  s.name = "tie_break_uniformity";
  const std::size_t n = 10, runs = 1000;
  std::vector<double> scores(n, 0.5);
  std::vector<Col> cand(n);
  std::iota(cand.begin(), cand.end(), Col{0});
  std::vector<double> mean_pos(n, 0.0);
  for (std::size_t t = 0; t < runs; ++t) {
    const auto ranked = rank_candidates(scores, cand, derive_seed(o.seed, "uniformity", t));
    for (std::size_t p = 0; p < n; ++p) mean_pos[ranked[p]] += static_cast<double>(p) / runs;
  }
  // Tolerance: 5% of the number of positions.
  const double expect = (n - 1) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rel = std::abs(mean_pos[i] - expect) / static_cast<double>(n);
    s.statistic = std::max(s.statistic, rel);
    check(s, rel <= 0.05, "item " + std::to_string(i) + " mean position " + io::format_double(mean_pos[i], 3));
  }
  return s;
}

SuiteResult verify_sampler_distributions(const VerifyOptions& o) {
  SuiteResult s;
  s.name = "sampler_distributions";
  const auto bundle = generate_synthetic(small_synth(), derive_seed(o.seed, "sampler-bundle"));
  const LoggerConfig lc{LoggerPolicy::positivity, 0.5, derive_seed(o.seed, "sampler-logger")};
  const auto l = simulate_log(bundle.ground_truth, bundle.holdout,
                              exposure_weights(LoggerPolicy::positivity, bundle), lc);
  const auto src = EvaluationSource::from_logged(l, bundle.holdout);
  const Row row = 0;
  for (auto strategy : {Strategy::popularity, Strategy::positivity, Strategy::skew, Strategy::wtd, Strategy::wtdh}) {
    SamplerSpec spec;
    spec.strategy = strategy;
    spec.n = 1;
    const auto weights = *strategy_weights(src, spec);
    const auto pool = candidate_pool(src, row, strategy);
    std::vector<double> target(pool.size());
    double total = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k) total += target[k] = weights.p[pool[k]];
    for (auto& t : target) t /= total;
    std::vector<double> freq(src.cols(), 0.0);
    for (std::size_t t = 0; t < o.sampler_draws; ++t) {
      const auto uc = sample_user(src, row, spec, 1, &weights, derive_seed(o.seed, "draw", to_string(strategy), t));
      freq[uc.negatives.at(0)] += 1.0;
    }
    double tv = 0.0, covered = 0.0;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      tv += std::abs(freq[pool[k]] / static_cast<double>(o.sampler_draws) - target[k]);
      covered += freq[pool[k]];
    }
    tv = 0.5 * (tv + (static_cast<double>(o.sampler_draws) - covered) / static_cast<double>(o.sampler_draws));
    s.statistic = std::max(s.statistic, tv);
    note(s, std::string(to_string(strategy)) + " TV " + io::format_double(tv, 5));
    check(s, tv <= o.sampler_tv_tolerance,
          std::string(to_string(strategy)) + ": total variation " + io::format_double(tv, 5) + " exceeds tolerance");
  }
  return s;
}

SuiteResult verify_logger(const VerifyOptions& o) {
  SuiteResult s;
  s.name = "logger_fidelity";
  const auto bundle = generate_synthetic(SynthConfig{}, derive_seed(o.seed, "logger-bundle"));
  const auto& g = bundle.ground_truth;
  for (auto policy : {LoggerPolicy::uniform, LoggerPolicy::popularity, LoggerPolicy::positivity}) {
    const auto weights = exposure_weights(policy, bundle);
    for (double sparsity : default_sparsities()) {
      const LoggerConfig lc{policy, sparsity, derive_seed(o.seed, "logger", to_string(policy), sparsity)};
      const auto l = simulate_log(g, bundle.holdout, weights, lc);
      const std::string tag = std::string(to_string(policy)) + "@" + io::format_double(sparsity, 2);
      std::size_t count_mismatch = 0, no_positive = 0, outside = 0;
      for (std::size_t r = 0; r < l.rows(); ++r) {
        std::size_t eligible = 0;
        for (std::size_t c = 0; c < g.cols(); ++c) eligible += !bundle.holdout.contains(static_cast<Row>(r), static_cast<Col>(c));
        const std::size_t target = static_cast<std::size_t>(std::llround((1.0 - sparsity) * static_cast<double>(eligible)));
        // A repaired user with a zero target keeps the one inserted positive.
        const bool zero_target_repair = target == 0 && l.exposed[r].size() == 1;
        if (l.exposed[r].size() != target && !zero_target_repair) ++count_mismatch;
        if (l.positive_count(static_cast<Row>(r)) == 0) ++no_positive;
        for (std::size_t k = 0; k < l.exposed[r].size(); ++k) {
          const Col c = l.exposed[r][k];
          if (bundle.holdout.contains(static_cast<Row>(r), c) || (l.labels[r][k] != 0) != g.positive(static_cast<Row>(r), c))
            ++outside;
        }
      }
      check(s, count_mismatch == 0, tag + ": " + std::to_string(count_mismatch) + " users with wrong retained count");
      check(s, no_positive == 0, tag + ": " + std::to_string(no_positive) + " users without a positive");
      check(s, outside == 0, tag + ": " + std::to_string(outside) + " retained cells outside G minus holdout");
      if (sparsity == 0.0) check(s, l.repair_count == 0, tag + ": repairs at sparsity 0");
    }
  }
  return s;
}

SuiteResult verify_determinism(const VerifyOptions& o) {
  SuiteResult s;
  s.name = "determinism";
  if (!o.include_determinism) {
    ++s.skipped;
    return s;
  }
  const auto bundle = generate_synthetic(small_synth(), derive_seed(o.seed, "det-bundle"));
  const LoggerConfig lc{LoggerPolicy::popularity, 0.7, derive_seed(o.seed, "det-logger")};
  const auto w = exposure_weights(lc.policy, bundle);
  const auto l1 = simulate_log(bundle.ground_truth, bundle.holdout, w, lc);
  const auto l2 = simulate_log(bundle.ground_truth, bundle.holdout, w, lc);
  check(s, l1.exposed == l2.exposed && l1.labels == l2.labels, "logger output differs between identical calls");
  const auto src = EvaluationSource::from_logged(l1, bundle.holdout);
  for (auto strategy : {Strategy::random, Strategy::popularity, Strategy::wtd}) {
    SamplerSpec spec;
    spec.strategy = strategy;
    spec.n = 5;
    const auto a = build_evaluation_set(src, spec, {}, 99);
    const auto b = build_evaluation_set(src, spec, {}, 99);
    bool same = a.weight_digest == b.weight_digest;
    for (std::size_t r = 0; r < a.rows(); ++r) same = same && a.users[r].negatives == b.users[r].negatives;
    check(s, same, std::string(to_string(strategy)) + ": evaluation set differs between identical calls");
  }

  // Tiny grid under two worker counts.
  RunConfig cfg = RunConfig::defaults();
  cfg.dataset.synthetic = small_synth();
  cfg.policies = {LoggerPolicy::uniform, LoggerPolicy::positivity};
  cfg.sparsities = {0.0, 0.5};
  cfg.fixed_samplers = {Strategy::full, Strategy::random_at_e};
  cfg.parametric_samplers = {Strategy::random, Strategy::wtdh};
  cfg.sample_sizes = {2, 10};
  cfg.models = {{"sar", "sar_cosine", {}, {}}, {"pop", "popularity", {}, {}}, {"rand", "random", {}, {}}};
  cfg.metrics = {{MetricKind::ndcg, 100}, {MetricKind::precision, 5}};
  cfg.bootstrap_resamples = 200;
  cfg.master_seed = o.seed;
  const auto base = std::filesystem::temp_directory_path() / ("sampleval-verify-" + std::to_string(o.seed));
  std::string first;
  for (std::size_t workers : {1, 3}) {
    RunOptions ro;
    ro.workers = workers;
    ro.out_dir = base / ("w" + std::to_string(workers));
    const auto summary = run_grid(cfg, ro);
    check(s, summary.failed == 0, "tiny grid had failed scenarios with " + std::to_string(workers) + " workers");
    const auto bytes = io::read_file(*ro.out_dir / "results.csv") + io::read_file(*ro.out_dir / "scenarios.csv");
    if (first.empty())
      first = bytes;
    else
      check(s, bytes == first, "results differ between 1 and 3 workers");
  }
  std::error_code ec;
  std::filesystem::remove_all(base, ec);
  return s;
}

std::vector<SuiteResult> run_verify(const VerifyOptions& o) {
  return {verify_metric_oracle(o),         verify_tau_oracle(o), verify_monotonicity(o),
          verify_tie_break_uniformity(o),  verify_sampler_distributions(o), verify_logger(o),
          verify_determinism(o)};
}

nlohmann::json to_json(const std::vector<SuiteResult>& suites) {
  nlohmann::json out = nlohmann::json::array();
  std::size_t failed = 0;
  for (const auto& s : suites) {
    out.push_back({{"suite", s.name},
                   {"passed", s.passed},
                   {"failed", s.failed},
                   {"skipped", s.skipped},
                   {"statistic", s.statistic},
                   {"notes", s.notes}});
    failed += s.failed;
  }
  return {{"suites", out}, {"ok", failed == 0}};
}

}  // namespace sampleval
