#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sampleval/common.hpp"
#include "sampleval/sampler.hpp"

namespace sampleval {

enum class MetricKind { precision, recall, ndcg };
std::string_view to_string(MetricKind k);
std::optional<MetricKind> parse_metric_kind(std::string_view s);

struct MetricSpec {
  MetricKind kind = MetricKind::ndcg;
  std::size_t k = 100;

  bool operator==(const MetricSpec&) const = default;
  std::string label() const;  // "ndcg@100"
};

/// Candidates ordered by descending score. Exact score ties are resolved by a
/// seeded random permutation of the candidates followed by a stable sort; the
/// permutation comes from per-item keys hash(seed, item), so two candidate
/// sets sharing items order those items identically.
std::vector<Col> rank_candidates(std::span<const double> scores, std::span<const Col> candidates,
                                 std::uint64_t seed);

/// precision@k = hits/k, recall@k = hits/|positives|,
/// nDCG@k = DCG@k / IDCG@k with binary gains and 1/log2(rank + 1) discounts.
/// `relevance` is the 0/1 label of each ranked position.
double metric_at_k(MetricKind kind, std::span<const std::uint8_t> relevance, std::size_t n_positives,
                   std::size_t k);

/// Per (test user, model) metric values for one evaluation set.
struct UserModelMetrics {
  MetricSpec metric;
  std::size_t n_models = 0;
  std::vector<double> values;           // rows x n_models
  std::vector<std::uint8_t> excluded;   // per row: no positives in the set

  std::size_t rows() const { return excluded.size(); }
  std::span<const double> row(Row r) const { return {values.data() + static_cast<std::size_t>(r) * n_models, n_models}; }
  std::size_t excluded_count() const;
};

/// Precomputed scores of each model over (test row, catalog column).
struct ScoreTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::string> model_names;
  std::vector<std::vector<double>> scores;  // per model: rows x cols

  std::size_t n_models() const { return scores.size(); }
  double at(std::size_t model, Row r, Col c) const { return scores[model][static_cast<std::size_t>(r) * cols + c]; }
};

/// Ranks each user's candidates under every model and computes every metric.
/// The tie-break seed of a row is derive_seed(tie_seed, "tiebreak", row).
std::vector<UserModelMetrics> evaluate_models(const EvaluationSet& set, const ScoreTable& scores,
                                              std::span<const MetricSpec> metrics, std::uint64_t tie_seed);

/// Fraction of model pairs with equal values (after rounding to 12 decimals).
double tie_rate(std::span<const double> model_values);

struct TauResult {
  double tau = 0.0;
  bool defined = false;  // false when either side is all tied
};

/// Kendall's tau-b between two value vectors over the same models.
TauResult kendall_tau_b(std::span<const double> a, std::span<const double> b);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  bool degenerate = false;  // fewer than 2 values: point estimate
};

/// Percentile bootstrap CI of the mean under resampling with replacement.
ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t resamples, double level,
                                std::uint64_t seed);

enum class Question { q1, q2, q3, q4 };
std::string_view to_string(Question q);
std::optional<Question> parse_question(std::string_view s);

enum class MetaKind { tie_rate, fidelity_tau, robustness_tau, predictive_tau };
std::string_view to_string(MetaKind k);
MetaKind meta_kind_of(Question q);

struct MetaResult {
  MetaKind kind = MetaKind::tie_rate;
  MetricSpec metric;
  std::vector<double> per_user;  // contributing users only
  double mean = 0.0;
  ConfidenceInterval ci;
  double level = 0.95;
  std::size_t resamples = 0;
  std::size_t n_users = 0;
  std::size_t n_excluded = 0;
  std::size_t dropped_users = 0;  // unmatched between scenario and reference
};

struct BootstrapOptions {
  std::size_t resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Q1: tie rate of the scenario. Q2-Q4: per-user tau-b between scenario and
/// reference, averaged. Users are matched by row; users excluded on either
/// side, and users whose tau is undefined, are counted in n_excluded.
MetaResult meta_compare(Question question, const UserModelMetrics& scenario, const UserModelMetrics* reference,
                        const BootstrapOptions& bootstrap);

}  // namespace sampleval
