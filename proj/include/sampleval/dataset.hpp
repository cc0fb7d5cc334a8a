#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sampleval/common.hpp"

namespace sampleval {

/// Fully observed binary relevance for every (test user, catalog item) cell.
/// Rows are test users, columns the evaluation catalog.
class GroundTruthMatrix {
 public:
  GroundTruthMatrix() = default;
  GroundTruthMatrix(std::vector<UserId> test_users, std::vector<ItemId> items,
                    std::vector<std::uint8_t> relevance);

  std::size_t rows() const { return test_users_.size(); }
  std::size_t cols() const { return items_.size(); }
  std::size_t cells() const { return relevance_.size(); }

  const std::vector<UserId>& test_users() const { return test_users_; }
  const std::vector<ItemId>& items() const { return items_; }

  bool positive(Row r, Col c) const { return relevance_[static_cast<std::size_t>(r) * cols() + c] != 0; }
  std::span<const std::uint8_t> row(Row r) const {
    return {relevance_.data() + static_cast<std::size_t>(r) * cols(), cols()};
  }
  const std::vector<std::uint8_t>& relevance() const { return relevance_; }

  std::size_t positive_count(Row r) const;
  std::size_t total_positives() const;
  /// Per-column positive counts.
  std::vector<std::size_t> item_positive_counts() const;

  bool operator==(const GroundTruthMatrix&) const = default;

 private:
  std::vector<UserId> test_users_;
  std::vector<ItemId> items_;
  std::vector<std::uint8_t> relevance_;
};

struct TrainInteraction {
  UserId user = 0;
  ItemId item = 0;
  Label label = Label::negative;
  double weight = 1.0;

  bool operator==(const TrainInteraction&) const = default;
};

/// Partially observed training log over the (user index x item index) grid.
struct TrainLog {
  std::vector<TrainInteraction> entries;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  bool has_weights = false;

  std::size_t positives() const;
  double density() const;
  /// Number of log entries per item (all labels).
  std::vector<std::size_t> item_interaction_counts() const;

  bool operator==(const TrainLog&) const = default;
};

/// Cells of G withheld from every logger; used only for propensity estimation.
class HoldoutPartition {
 public:
  HoldoutPartition() = default;
  HoldoutPartition(std::size_t rows, std::size_t cols, double fraction,
                   std::vector<std::pair<Row, Col>> cells);

  double fraction() const { return fraction_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }
  /// Sorted row-major.
  const std::vector<std::pair<Row, Col>>& cells() const { return cells_; }
  bool contains(Row r, Col c) const {
    return !mask_.empty() && mask_[static_cast<std::size_t>(r) * cols_ + c] != 0;
  }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  bool operator==(const HoldoutPartition&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  double fraction_ = 0.0;
  std::vector<std::pair<Row, Col>> cells_;
  std::vector<std::uint8_t> mask_;
};

struct SynthConfig {
  std::size_t n_test_users = 200;
  std::size_t n_train_users = 400;
  std::size_t n_items = 500;
  std::size_t latent_dim = 8;
  double positive_rate_target = 0.05;
  double popularity_skew_exponent = 1.0;
  double train_density_target = 0.15;
  double label_noise = 0.05;
  /// Log-normal spread of per-user positive rates around the target.
  double activity_spread = 0.5;
  double holdout_fraction = 0.10;

  void validate() const;
};

struct Provenance {
  std::string kind;  // "synthetic" | "csv" | "kuairec"
  std::string description;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> source_digests;
};

struct SplitStatistics {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double density = 0.0;

  bool operator==(const SplitStatistics&) const = default;
};

/// Counters and notes produced while building a bundle.
struct BuildReport {
  /// Source-row statistics before merging or imputation (what a dataset's
  /// published summary table counts).
  SplitStatistics observed_train;
  SplitStatistics observed_test;
  std::size_t forced_positive_users = 0;
  std::size_t imputed_cells = 0;
  std::size_t dropped_users = 0;
  std::size_t rejected_rows = 0;
  std::size_t merged_duplicates = 0;
  std::size_t holdout_redraws = 0;
  std::vector<std::string> warnings;
};

struct DatasetBundle {
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
  TrainLog train_log;
  GroundTruthMatrix ground_truth;
  HoldoutPartition holdout;
  Provenance provenance;
  BuildReport report;

  /// Throws if any bundle invariant is violated.
  void validate() const;
};

/// Deterministic synthetic bundle with latent-factor relevance and a
/// popularity-skewed training log. The holdout is drawn with a seed derived
/// from `seed`.
DatasetBundle generate_synthetic(const SynthConfig& config, std::uint64_t seed);

/// Label rule for engagement data: positive iff the watch time is strictly more
/// than twice the item duration.
Label binarize_engagement(double watch_seconds, double duration_seconds);

/// Uniform holdout of round(fraction * |cells|) cells of G. If a draw would
/// remove every positive of some test user it is redrawn from the next
/// derived seed; the number of redraws is returned through `redraws`.
HoldoutPartition make_holdout(const GroundTruthMatrix& g, double fraction, std::uint64_t seed,
                              std::size_t* redraws = nullptr);

struct IngestPaths {
  std::filesystem::path test;
  std::filesystem::path train;
  std::optional<std::filesystem::path> holdout;
  double holdout_fraction = 0.10;
  std::uint64_t holdout_seed = 0;
};

/// Reads the canonical CSV layout (`user_id,item_id,label[,weight]`).
DatasetBundle ingest_fully_observed(const IngestPaths& paths);

/// KuaiRec adapter: `small_matrix.csv` -> G, `big_matrix.csv` -> train log.
/// Repeated (user, video) rows are merged by summing play time before the
/// engagement rule is applied.
DatasetBundle ingest_kuairec(const std::filesystem::path& data_dir, double holdout_fraction,
                             std::uint64_t holdout_seed);

/// Statistics of the bundle as stored (after merging and imputation).
SplitStatistics train_statistics(const DatasetBundle& b);
SplitStatistics test_statistics(const DatasetBundle& b);

/// Canonical writer: train.csv, test.csv, holdout.csv and manifest.json with
/// SHA-256 digests of each file.
void write_bundle(const DatasetBundle& b, const std::filesystem::path& dir);
/// Reads a directory produced by write_bundle.
DatasetBundle read_bundle(const std::filesystem::path& dir);

}  // namespace sampleval
