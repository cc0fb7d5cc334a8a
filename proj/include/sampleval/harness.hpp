#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sampleval/dataset.hpp"
#include "sampleval/evaluation.hpp"
#include "sampleval/logger.hpp"
#include "sampleval/recommender.hpp"
#include "sampleval/sampler.hpp"

namespace sampleval {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetSection {
  /// "synthetic" | "bundle" (directory written by write_bundle) | "kuairec"
  std::string kind = "synthetic";
  SynthConfig synthetic;
  /// Seed for synthetic generation; defaults to the master seed.
  std::optional<std::uint64_t> seed;
  std::filesystem::path path;
  double holdout_fraction = 0.10;
};

struct ModelSpec {
  std::string name;
  /// "als" | "bpr" | "sar_cosine" | "sar_jaccard" | "popularity" | "random"
  std::string family;
  /// Fixed hyperparameters; the base configuration when `search` is set.
  ParamSet params;
  std::optional<HyperparamSpace> search;
};

struct RunConfig {
  DatasetSection dataset;
  std::vector<LoggerPolicy> policies;
  std::vector<double> sparsities;
  std::vector<Strategy> fixed_samplers;
  std::vector<Strategy> parametric_samplers;
  std::vector<std::size_t> sample_sizes;
  double zipf_exponent = 1.0;
  WeightClip weight_clip;
  std::vector<ModelSpec> models;
  std::vector<MetricSpec> metrics;
  /// Metric the report figures are drawn from.
  MetricSpec report_metric{MetricKind::ndcg, 100};
  std::vector<Question> questions;
  std::size_t bootstrap_resamples = 1000;
  double confidence_level = 0.95;
  std::uint64_t master_seed = 20240501;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::filesystem::path out_dir = "results";
  /// Reuse reference evaluations across scenarios (false recomputes them per
  /// scenario; outputs are identical either way).
  bool cache_references = true;
  /// Fit a fresh copy of every model per scenario, seeded by the scenario.
  bool retrain_per_scenario = false;
  /// Scenario keys forced to fail; used to test failure isolation.
  std::vector<std::string> inject_failures;

  /// The full default grid: 3 policies x 8 sparsities x 63 samplers.
  static RunConfig defaults();
  /// Throws on an empty axis, duplicate entries, or invalid values.
  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// The seven default models (ALS in two configurations, BPR, two SAR
/// variants, popularity, random).
std::vector<ModelSpec> default_models();

struct ScenarioId {
  LoggerPolicy policy = LoggerPolicy::uniform;
  double sparsity = 0.0;
  Strategy strategy = Strategy::full;
  std::optional<std::size_t> n;

  /// Canonical text form, e.g. "popularity|0.5000|random|20".
  std::string key() const;
  std::uint64_t hash() const;
  SamplerSpec sampler(const RunConfig& c) const;
};

std::optional<ScenarioId> parse_scenario_key(std::string_view key);

/// Policies in configuration order, sparsities ascending, then fixed samplers
/// followed by each parametric strategy at every size.
std::vector<ScenarioId> enumerate_grid(const RunConfig& config);

struct RunOptions {
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  /// Load previously saved models from <out>/models instead of refitting.
  bool reuse_models = false;
  /// Overrides the iteration count of every model's search space.
  std::optional<std::size_t> search_iterations;
  std::ostream* progress = nullptr;
};

struct RunSummary {
  std::size_t scenarios = 0;
  std::size_t failed = 0;
  std::filesystem::path out_dir;
  double seconds = 0.0;
};

DatasetBundle build_dataset(const RunConfig& config);

/// Executes the grid and writes results.csv, scenarios.csv, failures.csv,
/// manifest.json and models/ under the output directory.
RunSummary run_grid(const RunConfig& config, const RunOptions& options = {});

enum class Figure { fig2, fig3, fig4, fig5 };
std::optional<Figure> parse_figure(std::string_view s);
std::string_view to_string(Figure f);
Question question_of(Figure f);

struct ReportFiles {
  std::filesystem::path csv;
  std::vector<std::filesystem::path> charts;
};

/// Long-format CSV plus one SVG chart per (policy, sparsity) panel, read from
/// a run directory. Throws listing every scenario without data.
ReportFiles emit_report(const std::filesystem::path& run_dir, Figure figure,
                        const std::filesystem::path& report_dir);

}  // namespace sampleval
