#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sampleval/common.hpp"
#include "sampleval/dataset.hpp"

namespace sampleval {

enum class LoggerPolicy { uniform, popularity, positivity };

std::string_view to_string(LoggerPolicy p);
std::optional<LoggerPolicy> parse_logger_policy(std::string_view s);

/// The eight sparsity levels of the default logger grid.
inline const std::vector<double>& default_sparsities() {
  static const std::vector<double> levels{0.0, 0.10, 0.30, 0.50, 0.70, 0.85, 0.90, 0.95};
  return levels;
}

struct LoggerConfig {
  LoggerPolicy policy = LoggerPolicy::uniform;
  double sparsity = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Probability vector over the evaluation catalog (G's columns).
struct ItemWeights {
  std::vector<double> p;
  std::string statistic;

  std::size_t size() const { return p.size(); }
  /// Throws unless nonnegative and summing to 1 within 1e-9.
  void check() const;
};

/// Normalizes nonnegative raw weights; throws if all are zero.
ItemWeights normalize_weights(std::vector<double> raw, std::string statistic);

/// Exposure probabilities of a logging policy over G's columns.
///  uniform:    1/|I|
///  popularity: train-log interaction count + 1
///  positivity: positive count in G + 1
ItemWeights exposure_weights(LoggerPolicy policy, const DatasetBundle& bundle);

/// Exposure-masked view of G produced by one logger run.
struct LoggedMatrix {
  LoggerConfig config;
  /// Per test row: exposed columns (ascending) and their G labels.
  std::vector<std::vector<Col>> exposed;
  std::vector<std::vector<std::uint8_t>> labels;
  /// Per test row: number of eligible cells and exposed negatives (e_u).
  std::vector<std::size_t> eligible;
  std::vector<std::size_t> exposed_negatives;
  std::size_t repair_count = 0;
  std::size_t n_cols = 0;

  std::size_t rows() const { return exposed.size(); }
  std::size_t retained_total() const;
  std::size_t eligible_total() const;
  double realized_sparsity() const;
  std::vector<Col> positives(Row r) const;
  std::size_t positive_count(Row r) const;
};

/// Per-user retention target: round((1 - sparsity) * eligible).
std::size_t retained_target(std::size_t eligible, double sparsity);

/// Retains, per test user, round((1 - sparsity) * |eligible|) cells drawn
/// without replacement in proportion to `weights`, where eligible cells are G
/// minus the holdout. A draw with no positive is repaired by swapping the
/// lowest-weight retained cell for the user's highest-weight eligible positive.
LoggedMatrix simulate_log(const GroundTruthMatrix& g, const HoldoutPartition& holdout,
                          const ItemWeights& weights, const LoggerConfig& config);

/// CSV `user_id,item_id,label` plus a JSON sidecar next to it.
void write_logged_matrix(const LoggedMatrix& l, const DatasetBundle& bundle,
                         const std::filesystem::path& csv_path);

}  // namespace sampleval
