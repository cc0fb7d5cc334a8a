#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sampleval/common.hpp"
#include "sampleval/dataset.hpp"
#include "sampleval/logger.hpp"

namespace sampleval {

enum class Strategy { full, exposed, random_at_e, random, popularity, positivity, wtd, wtdh, skew };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);
/// Strategies that take a sample size n.
bool is_parametric(Strategy s);

inline const std::vector<Strategy>& fixed_strategies() {
  static const std::vector<Strategy> v{Strategy::full, Strategy::exposed, Strategy::random_at_e};
  return v;
}
inline const std::vector<Strategy>& parametric_strategies() {
  static const std::vector<Strategy> v{Strategy::random, Strategy::popularity, Strategy::positivity,
                                       Strategy::wtd,    Strategy::wtdh,       Strategy::skew};
  return v;
}
inline const std::vector<std::size_t>& default_sample_sizes() {
  static const std::vector<std::size_t> v{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
  return v;
}

struct WeightClip {
  double lo = 1e-6;
  double hi = 1e3;
};

struct SamplerSpec {
  Strategy strategy = Strategy::full;
  std::optional<std::size_t> n;
  double zipf_exponent = 1.0;
  WeightClip clip;

  /// Throws unless n is present exactly for parametric strategies.
  void validate() const;
  /// e.g. "full", "random@20".
  std::string label() const;
};

enum class SourceKind { ground_truth, logged };
std::string_view to_string(SourceKind s);

/// Read-only per-user view of G or of a LoggedMatrix, as seen by samplers.
/// Holds non-owning references: the matrix and holdout must outlive it.
class EvaluationSource {
 public:
  static EvaluationSource from_ground_truth(const GroundTruthMatrix& g, const HoldoutPartition& holdout);
  static EvaluationSource from_logged(const LoggedMatrix& l, const HoldoutPartition& holdout);

  SourceKind kind() const { return kind_; }
  std::size_t rows() const { return positives_.size(); }
  std::size_t cols() const { return cols_; }
  const HoldoutPartition& holdout() const { return *holdout_; }
  const LoggedMatrix* logged() const { return logged_; }

  /// Known positives of a row (ascending; never holdout cells).
  const std::vector<Col>& positives(Row r) const { return positives_[r]; }
  /// Exposed non-positives of a row (ascending). On G every non-holdout cell is exposed.
  const std::vector<Col>& exposed_negatives(Row r) const { return exposed_negatives_[r]; }

  /// Per column: rows with the cell exposed / labeled positive.
  std::vector<std::size_t> exposure_counts() const;
  std::vector<std::size_t> positive_counts() const;

 private:
  SourceKind kind_ = SourceKind::ground_truth;
  std::size_t cols_ = 0;
  const HoldoutPartition* holdout_ = nullptr;
  const LoggedMatrix* logged_ = nullptr;
  std::vector<std::vector<Col>> positives_;
  std::vector<std::vector<Col>> exposed_negatives_;
};

/// Non-positive candidates of a row: catalog minus known positives minus
/// holdout cells, or only the exposed non-positives for Strategy::exposed.
std::vector<Col> candidate_pool(const EvaluationSource& src, Row r, Strategy strategy);

/// weight(rank) ~ rank^-s, ranks 1..|I| by descending statistic, ties broken
/// by lower column.
ItemWeights zipf_weights(std::span<const double> statistic, double exponent);

/// weight(i) ~ count(i) + 1.
ItemWeights empirical_weights(std::span<const std::size_t> counts);

/// weight(i) ~ clip(target(i) / propensity(i)); an empty target means a
/// constant target of 1.
ItemWeights propensity_ratio_weights(std::span<const double> propensity, std::span<const double> target,
                                     WeightClip clip, std::string statistic);

/// Smoothed exposure frequency: (rows exposing i + 1) / (rows + 1).
std::vector<double> exposure_propensity(const EvaluationSource& src);

/// Holdout-cell distribution relative to uniform: |I| (h_i + 1) / (|H| + |I|).
std::vector<double> holdout_target(const HoldoutPartition& holdout);

/// WTD: clip(target / propensity), target estimated from the holdout.
ItemWeights wtd_weights(const EvaluationSource& src, WeightClip clip);
/// WTDH: clip(1 / propensity); uniform target, needs no holdout.
ItemWeights wtdh_weights(const EvaluationSource& src, WeightClip clip);

/// Catalog-level weights of a strategy on a source, or nullopt for the
/// non-sampling strategies (Full, Exposed).
std::optional<ItemWeights> strategy_weights(const EvaluationSource& src, const SamplerSpec& spec);

struct UserCandidates {
  std::vector<Col> positives;
  std::vector<Col> negatives;  // ascending
  bool capped = false;         // fewer negatives than requested
  bool empty_pool = false;
};

struct EvaluationSet {
  SourceKind source = SourceKind::ground_truth;
  SamplerSpec spec;
  std::uint64_t seed = 0;
  std::optional<LoggerConfig> logger;
  bool true_labels_available = false;
  std::string weight_statistic;
  std::string weight_digest;
  std::vector<UserCandidates> users;

  std::size_t rows() const { return users.size(); }
};

/// One row of an evaluation set: the row's known positives plus `requested`
/// non-positives drawn with Rng(derive_seed(seed, "sampler-user", r)).
/// `weights` is required for the weighted strategies.
UserCandidates sample_user(const EvaluationSource& src, Row r, const SamplerSpec& spec, std::size_t requested,
                           const ItemWeights* weights, std::uint64_t seed);

/// Pairs every row's known positives with non-positives chosen by `spec`.
/// `e_map` (exposed negatives per row of the paired L) is required for
/// Random@e on G; on L it defaults to L's own counts. `weights` may carry
/// precomputed strategy_weights(src, spec).
EvaluationSet build_evaluation_set(const EvaluationSource& src, const SamplerSpec& spec,
                                   std::span<const std::size_t> e_map, std::uint64_t seed,
                                   const ItemWeights* weights = nullptr);

/// CSV `user_id,item_id,role` plus a JSON sidecar.
void write_evaluation_set(const EvaluationSet& set, const DatasetBundle& bundle,
                          const std::filesystem::path& csv_path);

}  // namespace sampleval
