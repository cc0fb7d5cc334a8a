#include "sampleval/logger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "sampleval/io.hpp"
#include "sampleval/rng.hpp"
#include "sampleval/weighted_sampling.hpp"

namespace sampleval {

std::string_view to_string(LoggerPolicy p) {
  switch (p) {
    case LoggerPolicy::uniform: return "uniform";
    case LoggerPolicy::popularity: return "popularity";
    case LoggerPolicy::positivity: return "positivity";
  }
  return "?";
}

std::optional<LoggerPolicy> parse_logger_policy(std::string_view s) {
  for (auto p : {LoggerPolicy::uniform, LoggerPolicy::popularity, LoggerPolicy::positivity})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

void LoggerConfig::validate() const {
  if (!(sparsity >= 0.0 && sparsity <= 0.99))
    throw Error("logger: sparsity must lie in [0, 0.99], got " + std::to_string(sparsity));
}

void ItemWeights::check() const {
  double sum = 0.0;
  for (double w : p) {
    if (!(w >= 0.0)) throw Error("item weights: negative or NaN weight (" + statistic + ")");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("item weights do not sum to 1 (" + statistic + ")");
}

ItemWeights normalize_weights(std::vector<double> raw, std::string statistic) {
  if (raw.empty()) throw Error("item weights: empty catalog");
  double sum = 0.0;
  for (double w : raw) {
    if (!(w >= 0.0)) throw Error("item weights: negative or NaN raw weight (" + statistic + ")");
    sum += w;
  }
  if (!(sum > 0.0)) throw Error("item weights: all raw weights are zero (" + statistic + ")");
  for (double& w : raw) w /= sum;
  return {std::move(raw), std::move(statistic)};
}

ItemWeights exposure_weights(LoggerPolicy policy, const DatasetBundle& bundle) {
  const auto& g = bundle.ground_truth;
  if (g.cols() == 0) throw Error("exposure_weights: empty catalog");
  std::vector<double> raw(g.cols(), 1.0);
  switch (policy) {
    case LoggerPolicy::uniform:
      return normalize_weights(std::move(raw), "uniform");
    case LoggerPolicy::popularity: {
      const auto counts = bundle.train_log.item_interaction_counts();
      for (std::size_t c = 0; c < g.cols(); ++c) {
        const auto item = g.items()[c];
        raw[c] = static_cast<double>(item < counts.size() ? counts[item] : 0) + 1.0;
      }
      return normalize_weights(std::move(raw), "train-log interaction count + 1");
    }
    case LoggerPolicy::positivity: {
      const auto counts = g.item_positive_counts();
      for (std::size_t c = 0; c < g.cols(); ++c) raw[c] = static_cast<double>(counts[c]) + 1.0;
      return normalize_weights(std::move(raw), "ground-truth positive count + 1");
    }
  }
  throw Error("exposure_weights: unknown policy");
}

std::size_t retained_target(std::size_t eligible, double sparsity) {
  return static_cast<std::size_t>(std::llround((1.0 - sparsity) * static_cast<double>(eligible)));
}

std::size_t LoggedMatrix::retained_total() const {
  std::size_t n = 0;
  for (const auto& e : exposed) n += e.size();
  return n;
}

std::size_t LoggedMatrix::eligible_total() const { return std::accumulate(eligible.begin(), eligible.end(), std::size_t{0}); }

double LoggedMatrix::realized_sparsity() const {
  const auto elig = eligible_total();
  return elig ? 1.0 - static_cast<double>(retained_total()) / static_cast<double>(elig) : 0.0;
}

std::vector<Col> LoggedMatrix::positives(Row r) const {
  std::vector<Col> out;
  for (std::size_t k = 0; k < exposed[r].size(); ++k)
    if (labels[r][k]) out.push_back(exposed[r][k]);
  return out;
}

std::size_t LoggedMatrix::positive_count(Row r) const {
  return static_cast<std::size_t>(std::count(labels[r].begin(), labels[r].end(), std::uint8_t{1}));
}

LoggedMatrix simulate_log(const GroundTruthMatrix& g, const HoldoutPartition& holdout,
                          const ItemWeights& weights, const LoggerConfig& config) {
  config.validate();
  if (weights.size() != g.cols()) throw Error("simulate_log: weight vector does not match the catalog");
  if (holdout.rows() != 0 && (holdout.rows() != g.rows() || holdout.cols() != g.cols()))
    throw Error("simulate_log: holdout and ground truth come from different bundles");

  LoggedMatrix l;
  l.config = config;
  l.n_cols = g.cols();
  l.exposed.resize(g.rows());
  l.labels.resize(g.rows());
  l.eligible.resize(g.rows());
  l.exposed_negatives.resize(g.rows());

  std::vector<Col> elig;
  std::vector<double> elig_w;
  for (std::size_t rr = 0; rr < g.rows(); ++rr) {
    const auto r = static_cast<Row>(rr);
    elig.clear();
    elig_w.clear();
    bool has_positive = false;
    for (std::size_t c = 0; c < g.cols(); ++c) {
      if (holdout.contains(r, static_cast<Col>(c))) continue;
      elig.push_back(static_cast<Col>(c));
      elig_w.push_back(weights.p[c]);
      has_positive = has_positive || g.positive(r, static_cast<Col>(c));
    }
    if (!has_positive)
      throw Error("simulate_log: test row " + std::to_string(r) + " has no eligible positive; bundle is invalid");
    l.eligible[r] = elig.size();

    const std::size_t target = retained_target(elig.size(), config.sparsity);
    std::vector<Col> kept;
    if (target == elig.size()) {
      kept = elig;
    } else {
      Rng rng(derive_seed(config.seed, "logger-user", r));
      const auto picked = weighted_sample_without_replacement(elig_w, target, rng);
      if (picked.size() < target)
        throw Error("simulate_log: exposure weights have too few nonzero entries to retain " +
                    std::to_string(target) + " cells");
      kept.reserve(picked.size());
      for (auto k : picked) kept.push_back(elig[k]);
    }

    const bool any_pos = std::any_of(kept.begin(), kept.end(), [&](Col c) { return g.positive(r, c); });
    if (!any_pos) {
      Col best = 0;
      double best_w = -1.0;
      for (Col c : elig)
        if (g.positive(r, c) && weights.p[c] > best_w) {
          best = c;
          best_w = weights.p[c];
        }
      if (kept.empty()) {
        kept.push_back(best);
      } else {
        auto worst = std::min_element(kept.begin(), kept.end(), [&](Col a, Col b) {
          return weights.p[a] < weights.p[b] || (weights.p[a] == weights.p[b] && a > b);
        });
        *worst = best;
      }
      ++l.repair_count;
    }

    std::sort(kept.begin(), kept.end());
    auto& labels = l.labels[r];
    labels.resize(kept.size());
    std::size_t neg = 0;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      labels[k] = g.positive(r, kept[k]) ? 1 : 0;
      neg += labels[k] ? 0 : 1;
    }
    l.exposed_negatives[r] = neg;
    l.exposed[r] = std::move(kept);
  }
  return l;
}

void write_logged_matrix(const LoggedMatrix& l, const DatasetBundle& bundle, const std::filesystem::path& csv_path) {
  const auto& g = bundle.ground_truth;
  std::string csv = "user_id,item_id,label\n";
  for (std::size_t r = 0; r < l.rows(); ++r)
    for (std::size_t k = 0; k < l.exposed[r].size(); ++k) {
      csv += bundle.user_names[g.test_users()[r]];
      csv += ',';
      csv += bundle.item_names[g.items()[l.exposed[r][k]]];
      csv += l.labels[r][k] ? ",1\n" : ",0\n";
    }
  io::write_file(csv_path, csv);
  nlohmann::json side = {{"policy", std::string(to_string(l.config.policy))},
                         {"sparsity", l.config.sparsity},
                         {"seed", l.config.seed},
                         {"repair_count", l.repair_count},
                         {"realized_sparsity", l.realized_sparsity()}};
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  io::write_file(sidecar, side.dump(2) + "\n");
}

}  // namespace sampleval
