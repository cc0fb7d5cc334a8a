#include "sampleval/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "sampleval/io.hpp"
#include "sampleval/rng.hpp"
#include "sampleval/weighted_sampling.hpp"

namespace sampleval {

using nlohmann::json;

// ---------------------------------------------------------------------------
// GroundTruthMatrix / TrainLog / HoldoutPartition

GroundTruthMatrix::GroundTruthMatrix(std::vector<UserId> test_users, std::vector<ItemId> items,
                                     std::vector<std::uint8_t> relevance)
    : test_users_(std::move(test_users)), items_(std::move(items)), relevance_(std::move(relevance)) {
  if (relevance_.size() != test_users_.size() * items_.size())
    throw Error("ground truth: relevance has " + std::to_string(relevance_.size()) +
                " cells, expected " + std::to_string(test_users_.size() * items_.size()));
}

std::size_t GroundTruthMatrix::positive_count(Row r) const {
  const auto rr = row(r);
  return static_cast<std::size_t>(std::count(rr.begin(), rr.end(), std::uint8_t{1}));
}

std::size_t GroundTruthMatrix::total_positives() const {
  return static_cast<std::size_t>(std::count(relevance_.begin(), relevance_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> GroundTruthMatrix::item_positive_counts() const {
  std::vector<std::size_t> counts(cols(), 0);
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto rr = row(static_cast<Row>(r));
    for (std::size_t c = 0; c < cols(); ++c) counts[c] += rr[c];
  }
  return counts;
}

std::size_t TrainLog::positives() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) {
    return e.label == Label::positive;
  }));
}

double TrainLog::density() const {
  const double grid = static_cast<double>(n_users) * static_cast<double>(n_items);
  return grid > 0 ? static_cast<double>(entries.size()) / grid : 0.0;
}

std::vector<std::size_t> TrainLog::item_interaction_counts() const {
  std::vector<std::size_t> counts(n_items, 0);
  for (const auto& e : entries) ++counts[e.item];
  return counts;
}

HoldoutPartition::HoldoutPartition(std::size_t rows, std::size_t cols, double fraction,
                                   std::vector<std::pair<Row, Col>> cells)
    : rows_(rows), cols_(cols), fraction_(fraction), cells_(std::move(cells)), mask_(rows * cols, 0) {
  std::sort(cells_.begin(), cells_.end());
  for (const auto& [r, c] : cells_) {
    if (r >= rows || c >= cols) throw Error("holdout cell outside the ground-truth grid");
    auto& m = mask_[static_cast<std::size_t>(r) * cols + c];
    if (m) throw Error("holdout: duplicate cell");
    m = 1;
  }
}

void SynthConfig::validate() const {
  if (n_test_users < 1 || n_train_users < 1 || n_items < 1)
    throw Error("synthetic config: user and item counts must be >= 1");
  if (latent_dim < 1) throw Error("synthetic config: latent_dim must be >= 1");
  auto in_open01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_open01(positive_rate_target)) throw Error("synthetic config: positive_rate_target must lie in (0,1)");
  if (!in_open01(train_density_target)) throw Error("synthetic config: train_density_target must lie in (0,1)");
  if (popularity_skew_exponent < 0.0) throw Error("synthetic config: popularity_skew_exponent must be >= 0");
  if (label_noise < 0.0 || label_noise >= 0.5) throw Error("synthetic config: label_noise must lie in [0, 0.5)");
  if (activity_spread < 0.0) throw Error("synthetic config: activity_spread must be >= 0");
  if (!(holdout_fraction > 0.0 && holdout_fraction <= 0.5))
    throw Error("synthetic config: holdout_fraction must lie in (0, 0.5]");
}

void DatasetBundle::validate() const {
  const auto& g = ground_truth;
  for (auto u : g.test_users())
    if (u >= user_names.size()) throw Error("bundle: test user id outside the user index");
  for (auto i : g.items())
    if (i >= item_names.size()) throw Error("bundle: catalog item id outside the item index");
  for (std::size_t r = 0; r < g.rows(); ++r)
    if (g.positive_count(static_cast<Row>(r)) == 0)
      throw Error("bundle: test user '" + user_names[g.test_users()[r]] + "' has no positive item");
  if (train_log.n_users > user_names.size() || train_log.n_items > item_names.size())
    throw Error("bundle: train log grid exceeds the indexes");
  std::vector<std::pair<UserId, ItemId>> keys;
  keys.reserve(train_log.entries.size());
  for (const auto& e : train_log.entries) {
    if (e.user >= train_log.n_users || e.item >= train_log.n_items)
      throw Error("bundle: train log entry outside the grid");
    if (e.weight < 0.0) throw Error("bundle: negative engagement weight");
    keys.emplace_back(e.user, e.item);
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
    throw Error("bundle: duplicate (user, item) pair in train log");
  if (!train_log.entries.empty() && train_log.density() >= 1.0)
    throw Error("bundle: train log must be partially observed");
  if (holdout.rows() != 0 && (holdout.rows() != g.rows() || holdout.cols() != g.cols()))
    throw Error("bundle: holdout grid does not match ground truth");
}

// ---------------------------------------------------------------------------
// Engagement rule and holdout

Label binarize_engagement(double watch_seconds, double duration_seconds) {
  if (!(duration_seconds > 0.0)) throw Error("binarize_engagement: duration must be > 0");
  if (watch_seconds < 0.0) throw Error("binarize_engagement: watch time must be >= 0");
  return watch_seconds > 2.0 * duration_seconds ? Label::positive : Label::negative;
}

HoldoutPartition make_holdout(const GroundTruthMatrix& g, double fraction, std::uint64_t seed,
                              std::size_t* redraws) {
  if (!(fraction > 0.0 && fraction <= 0.5))
    throw Error("make_holdout: fraction must lie in (0, 0.5], got " + std::to_string(fraction));
  const std::size_t cells = g.cells();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cells)));
  constexpr std::size_t max_attempts = 64;
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng(attempt == 0 ? seed : derive_seed(seed, "holdout-redraw", attempt));
    const auto picked = uniform_sample_without_replacement(cells, count, rng);
    std::vector<std::pair<Row, Col>> out;
    out.reserve(picked.size());
    std::vector<std::size_t> removed_pos(g.rows(), 0);
    for (auto idx : picked) {
      const auto r = static_cast<Row>(idx / g.cols());
      const auto c = static_cast<Col>(idx % g.cols());
      out.emplace_back(r, c);
      removed_pos[r] += g.positive(r, c) ? 1 : 0;
    }
    bool feasible = true;
    for (std::size_t r = 0; r < g.rows() && feasible; ++r)
      feasible = removed_pos[r] < g.positive_count(static_cast<Row>(r));
    if (feasible) {
      if (redraws) *redraws = attempt;
      return HoldoutPartition(g.rows(), g.cols(), fraction, std::move(out));
    }
  }
  throw Error("make_holdout: could not leave every test user a positive after " +
              std::to_string(max_attempts) + " draws; fraction too large for this matrix");
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

std::vector<double> normal_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> m(rows * cols);
  for (auto& v : m) v = rng.normal();
  return m;
}

/// Columns of the top `k` scores (ties broken by lower column).
std::vector<std::uint8_t> top_k_mask(std::span<const double> scores, std::size_t k) {
  std::vector<Col> order(scores.size());
  std::iota(order.begin(), order.end(), Col{0});
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                   [&](Col a, Col b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  std::vector<std::uint8_t> mask(scores.size(), 0);
  for (std::size_t j = 0; j < k; ++j) mask[order[j]] = 1;
  return mask;
}

}  // namespace

DatasetBundle generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n_users = std::max(cfg.n_train_users, cfg.n_test_users);
  const std::size_t n_items = cfg.n_items;
  const std::size_t d = cfg.latent_dim;

  const auto user_f = normal_matrix(n_users, d, derive_seed(seed, "user-factors"));
  const auto item_f = normal_matrix(n_items, d, derive_seed(seed, "item-factors"));

  DatasetBundle b;
  b.user_names.resize(n_users);
  b.item_names.resize(n_items);
  for (std::size_t u = 0; u < n_users; ++u) b.user_names[u] = "u" + std::to_string(u);
  for (std::size_t i = 0; i < n_items; ++i) b.item_names[i] = "i" + std::to_string(i);

  // Per-user positive count from a log-normal activity around the target rate;
  // relevance = top-k_u items by latent inner product (per-user quantile rule).
  Rng activity(derive_seed(seed, "activity"));
  const double sigma = cfg.activity_spread;
  std::vector<std::vector<std::uint8_t>> relevant(n_users);
  std::vector<double> scores(n_items);
  std::size_t forced = 0;
  for (std::size_t u = 0; u < n_users; ++u) {
    const double rate = cfg.positive_rate_target * std::exp(sigma * activity.normal() - 0.5 * sigma * sigma);
    auto k = static_cast<long long>(std::llround(rate * static_cast<double>(n_items)));
    if (k < 1) {
      k = 1;
      if (u < cfg.n_test_users) ++forced;
    }
    k = std::min<long long>(k, static_cast<long long>(n_items));
    for (std::size_t i = 0; i < n_items; ++i) {
      double s = 0.0;
      for (std::size_t f = 0; f < d; ++f) s += user_f[u * d + f] * item_f[i * d + f];
      scores[i] = s;
    }
    relevant[u] = top_k_mask(scores, static_cast<std::size_t>(k));
  }

  std::vector<std::uint8_t> rel(cfg.n_test_users * n_items);
  std::vector<UserId> test_users(cfg.n_test_users);
  for (std::size_t u = 0; u < cfg.n_test_users; ++u) {
    test_users[u] = static_cast<UserId>(u);
    std::copy(relevant[u].begin(), relevant[u].end(), rel.begin() + static_cast<std::ptrdiff_t>(u * n_items));
  }
  std::vector<ItemId> items(n_items);
  std::iota(items.begin(), items.end(), ItemId{0});
  b.ground_truth = GroundTruthMatrix(std::move(test_users), std::move(items), std::move(rel));

  const double realized_rate =
      static_cast<double>(b.ground_truth.total_positives()) / static_cast<double>(b.ground_truth.cells());
  if (std::abs(realized_rate - cfg.positive_rate_target) > 0.2 * cfg.positive_rate_target)
    throw Error("generate_synthetic: infeasible positive_rate_target " +
                std::to_string(cfg.positive_rate_target) + " over " + std::to_string(n_items) +
                " items; forcing one positive for " + std::to_string(forced) +
                " test users gives realized rate " + std::to_string(realized_rate));
  b.report.forced_positive_users = forced;
  if (forced > 0)
    b.report.warnings.push_back("forced one positive for " + std::to_string(forced) + " test users");

  // Item popularity: rank by how many train users find the item relevant,
  // weight rank^-skew. Exposures are drawn without replacement under it.
  std::vector<std::size_t> appeal(n_items, 0);
  for (std::size_t u = 0; u < cfg.n_train_users; ++u)
    for (std::size_t i = 0; i < n_items; ++i) appeal[i] += relevant[u][i];
  std::vector<ItemId> by_appeal(n_items);
  std::iota(by_appeal.begin(), by_appeal.end(), ItemId{0});
  std::stable_sort(by_appeal.begin(), by_appeal.end(),
                   [&](ItemId a, ItemId c) { return appeal[a] > appeal[c]; });
  std::vector<double> pop_weight(n_items);
  for (std::size_t rank = 0; rank < n_items; ++rank)
    pop_weight[by_appeal[rank]] = std::pow(static_cast<double>(rank + 1), -cfg.popularity_skew_exponent);

  TrainLog& log = b.train_log;
  log.n_users = cfg.n_train_users;
  log.n_items = n_items;
  for (std::size_t u = 0; u < cfg.n_train_users; ++u) {
    Rng rng(derive_seed(seed, "train-log", u));
    const double act = std::exp(sigma * rng.normal() - 0.5 * sigma * sigma);
    auto m = static_cast<long long>(std::llround(cfg.train_density_target * act * static_cast<double>(n_items)));
    m = std::clamp<long long>(m, 1, static_cast<long long>(n_items) - (n_items > 1 ? 1 : 0));
    auto picked = weighted_sample_without_replacement(pop_weight, static_cast<std::size_t>(m), rng);
    std::sort(picked.begin(), picked.end());
    for (auto i : picked) {
      bool pos = relevant[u][i] != 0;
      if (rng.uniform() < cfg.label_noise) pos = !pos;
      log.entries.push_back({static_cast<UserId>(u), static_cast<ItemId>(i),
                             pos ? Label::positive : Label::negative, 1.0});
    }
  }
  const double density = log.density();
  if (std::abs(density - cfg.train_density_target) > 0.2 * cfg.train_density_target)
    throw Error("generate_synthetic: realized train density " + std::to_string(density) +
                " is outside +-20% of the target " + std::to_string(cfg.train_density_target));

  std::size_t redraws = 0;
  b.holdout = make_holdout(b.ground_truth, cfg.holdout_fraction, derive_seed(seed, "holdout"), &redraws);
  b.report.holdout_redraws = redraws;

  json desc = {{"n_test_users", cfg.n_test_users},
               {"n_train_users", cfg.n_train_users},
               {"n_items", cfg.n_items},
               {"latent_dim", cfg.latent_dim},
               {"positive_rate_target", cfg.positive_rate_target},
               {"popularity_skew_exponent", cfg.popularity_skew_exponent},
               {"train_density_target", cfg.train_density_target},
               {"label_noise", cfg.label_noise},
               {"activity_spread", cfg.activity_spread},
               {"holdout_fraction", cfg.holdout_fraction}};
  b.provenance = {"synthetic", desc.dump(), seed, {}};
  b.report.observed_train = train_statistics(b);
  b.report.observed_test = test_statistics(b);
  b.validate();
  return b;
}

// ---------------------------------------------------------------------------
// Statistics

SplitStatistics train_statistics(const DatasetBundle& b) {
  SplitStatistics s;
  const auto& log = b.train_log;
  std::vector<std::uint8_t> seen_u(log.n_users, 0), seen_i(log.n_items, 0);
  for (const auto& e : log.entries) {
    seen_u[e.user] = 1;
    seen_i[e.item] = 1;
    (e.label == Label::positive ? s.positives : s.negatives) += 1;
  }
  s.users = static_cast<std::size_t>(std::count(seen_u.begin(), seen_u.end(), 1));
  s.items = static_cast<std::size_t>(std::count(seen_i.begin(), seen_i.end(), 1));
  const double grid = static_cast<double>(s.users) * static_cast<double>(s.items);
  s.density = grid > 0 ? static_cast<double>(s.positives + s.negatives) / grid : 0.0;
  return s;
}

SplitStatistics test_statistics(const DatasetBundle& b) {
  const auto& g = b.ground_truth;
  SplitStatistics s;
  s.users = g.rows();
  s.items = g.cols();
  s.positives = g.total_positives();
  s.negatives = g.cells() - s.positives;
  s.density = g.cells() > 0 ? 1.0 : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

class NameIndex {
 public:
  explicit NameIndex(std::vector<std::string>& names) : names_(names) {
    for (std::size_t i = 0; i < names_.size(); ++i) ids_.emplace(names_[i], static_cast<std::uint32_t>(i));
  }
  std::uint32_t intern(std::string_view name) {
    auto [it, inserted] = ids_.try_emplace(std::string(name), static_cast<std::uint32_t>(names_.size()));
    if (inserted) names_.emplace_back(name);
    return it->second;
  }
  std::optional<std::uint32_t> find(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string>& names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

Label parse_label(std::string_view f, const io::CsvReader& at) {
  if (f == "1") return Label::positive;
  if (f == "0") return Label::negative;
  at.fail("label must be 0 or 1, found '" + std::string(f) + "'");
}

std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  return in;
}

struct DenseCells {
  std::vector<std::uint8_t> label;    // 0/1
  std::vector<std::uint8_t> present;  // observed?
};

/// Builds G from per-cell observations: checks coverage, imputes missing cells
/// as negative, drops test users without positives.
void finish_ground_truth(DatasetBundle& b, const std::vector<UserId>& row_users,
                         const std::vector<ItemId>& col_items, DenseCells cells,
                         const std::string& source) {
  const std::size_t rows = row_users.size();
  const std::size_t cols = col_items.size();
  const std::size_t total = rows * cols;
  const auto observed = static_cast<std::size_t>(std::count(cells.present.begin(), cells.present.end(), 1));
  const double coverage = total ? static_cast<double>(observed) / static_cast<double>(total) : 0.0;
  if (coverage < 0.99)
    throw Error(source + ": test matrix covers " + std::to_string(coverage * 100.0) +
                "% of the user x item grid; at least 99% is required");
  b.report.imputed_cells = total - observed;
  if (b.report.imputed_cells > 0)
    b.report.warnings.push_back("imputed " + std::to_string(b.report.imputed_cells) +
                                " missing test cells as negative");

  std::vector<UserId> kept_users;
  std::vector<std::uint8_t> rel;
  rel.reserve(total);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto first = cells.label.begin() + static_cast<std::ptrdiff_t>(r * cols);
    if (std::find(first, first + static_cast<std::ptrdiff_t>(cols), std::uint8_t{1}) == first + static_cast<std::ptrdiff_t>(cols)) {
      ++b.report.dropped_users;
      b.report.warnings.push_back("dropped test user '" + b.user_names[row_users[r]] + "' with no positives");
      continue;
    }
    kept_users.push_back(row_users[r]);
    rel.insert(rel.end(), first, first + static_cast<std::ptrdiff_t>(cols));
  }
  b.ground_truth = GroundTruthMatrix(std::move(kept_users), col_items, std::move(rel));
}

void fill_observed_stats(SplitStatistics& s, std::size_t users, std::size_t items, std::size_t pos,
                         std::size_t neg) {
  s = {users, items, pos, neg, 0.0};
  const double grid = static_cast<double>(users) * static_cast<double>(items);
  s.density = grid > 0 ? static_cast<double>(pos + neg) / grid : 0.0;
}

}  // namespace

DatasetBundle ingest_fully_observed(const IngestPaths& paths) {
  DatasetBundle b;
  NameIndex users(b.user_names);
  NameIndex items(b.item_names);

  // Test matrix.
  std::vector<UserId> row_users;
  std::vector<ItemId> col_items;
  std::unordered_map<UserId, Row> row_of;
  std::unordered_map<ItemId, Col> col_of;
  struct Obs {
    Row r;
    Col c;
    std::uint8_t label;
  };
  std::vector<Obs> obs;
  {
    auto in = open_or_throw(paths.test);
    io::CsvReader csv(in, paths.test.string());
    const auto cu = csv.column("user_id"), ci = csv.column("item_id"), cl = csv.column("label");
    std::vector<std::string_view> f;
    while (csv.next(f)) {
      const auto u = users.intern(f[cu]);
      const auto i = items.intern(f[ci]);
      auto [ru, new_r] = row_of.try_emplace(u, static_cast<Row>(row_users.size()));
      if (new_r) row_users.push_back(u);
      auto [ci_, new_c] = col_of.try_emplace(i, static_cast<Col>(col_items.size()));
      if (new_c) col_items.push_back(i);
      obs.push_back({ru->second, ci_->second, static_cast<std::uint8_t>(parse_label(f[cl], csv) == Label::positive)});
    }
  }
  DenseCells cells{std::vector<std::uint8_t>(row_users.size() * col_items.size(), 0),
                   std::vector<std::uint8_t>(row_users.size() * col_items.size(), 0)};
  std::size_t test_pos = 0;
  for (const auto& o : obs) {
    const std::size_t idx = static_cast<std::size_t>(o.r) * col_items.size() + o.c;
    if (cells.present[idx])
      throw Error(paths.test.string() + ": duplicate cell (" + b.user_names[row_users[o.r]] + ", " +
                  b.item_names[col_items[o.c]] + ")");
    cells.present[idx] = 1;
    cells.label[idx] = o.label;
    test_pos += o.label;
  }
  fill_observed_stats(b.report.observed_test, row_users.size(), col_items.size(), test_pos, obs.size() - test_pos);
  obs.clear();
  finish_ground_truth(b, row_users, col_items, std::move(cells), paths.test.string());

  // Train log.
  {
    auto in = open_or_throw(paths.train);
    io::CsvReader csv(in, paths.train.string());
    const auto cu = csv.column("user_id"), ci = csv.column("item_id"), cl = csv.column("label");
    const bool weighted = csv.has_column("weight");
    const std::size_t cw = weighted ? csv.column("weight") : 0;
    b.train_log.has_weights = weighted;
    std::vector<std::string_view> f;
    std::vector<std::pair<UserId, ItemId>> seen;
    while (csv.next(f)) {
      TrainInteraction e;
      e.user = users.intern(f[cu]);
      e.item = items.intern(f[ci]);
      e.label = parse_label(f[cl], csv);
      if (weighted) {
        e.weight = io::parse_double(f[cw], csv);
        if (e.weight < 0.0) csv.fail("engagement weight must be nonnegative");
      }
      b.train_log.entries.push_back(e);
    }
  }
  {
    std::vector<std::size_t> order(b.train_log.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto& es = b.train_log.entries;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
      return std::tie(es[a].user, es[a].item) < std::tie(es[c].user, es[c].item);
    });
    for (std::size_t k = 1; k < order.size(); ++k)
      if (es[order[k]].user == es[order[k - 1]].user && es[order[k]].item == es[order[k - 1]].item)
        throw Error(paths.train.string() + ": duplicate pair (" + b.user_names[es[order[k]].user] + ", " +
                    b.item_names[es[order[k]].item] + ") at data row " + std::to_string(order[k] + 1));
  }
  b.train_log.n_users = b.user_names.size();
  b.train_log.n_items = b.item_names.size();
  b.report.observed_train = train_statistics(b);

  // Holdout.
  const auto& g = b.ground_truth;
  if (paths.holdout) {
    std::unordered_map<UserId, Row> grow;
    for (std::size_t r = 0; r < g.rows(); ++r) grow.emplace(g.test_users()[r], static_cast<Row>(r));
    auto in = open_or_throw(*paths.holdout);
    io::CsvReader csv(in, paths.holdout->string());
    const auto cu = csv.column("user_id"), ci = csv.column("item_id");
    std::vector<std::pair<Row, Col>> hcells;
    std::vector<std::string_view> f;
    while (csv.next(f)) {
      auto u = users.find(f[cu]);
      auto i = items.find(f[ci]);
      if (!u || !grow.count(*u)) csv.fail("holdout user is not a test user");
      if (!i || !col_of.count(*i)) csv.fail("holdout item is not in the test catalog");
      hcells.emplace_back(grow.at(*u), col_of.at(*i));
    }
    const double frac = g.cells() ? static_cast<double>(hcells.size()) / static_cast<double>(g.cells()) : 0.0;
    b.holdout = HoldoutPartition(g.rows(), g.cols(), frac, std::move(hcells));
  } else {
    b.holdout = make_holdout(g, paths.holdout_fraction, paths.holdout_seed, &b.report.holdout_redraws);
  }

  b.provenance.kind = "csv";
  b.provenance.description = paths.test.string() + ";" + paths.train.string();
  b.provenance.seed = paths.holdout ? 0 : paths.holdout_seed;
  b.provenance.source_digests = {{"test", io::sha256_file(paths.test)}, {"train", io::sha256_file(paths.train)}};
  if (paths.holdout) b.provenance.source_digests.emplace_back("holdout", io::sha256_file(*paths.holdout));
  b.validate();
  return b;
}

namespace {

struct KuaiRecCell {
  double play = 0.0;
  double duration = 0.0;
  std::size_t rows = 0;
};

struct KuaiRecTable {
  std::vector<std::uint32_t> users, items;  // interned ids
  std::map<std::pair<std::uint32_t, std::uint32_t>, KuaiRecCell> cells;
  std::size_t row_pos = 0, row_neg = 0, rejected = 0;
  std::vector<std::uint8_t> seen_user, seen_item;
};

KuaiRecTable read_kuairec_matrix(const std::filesystem::path& p, NameIndex& users, NameIndex& items) {
  auto in = open_or_throw(p);
  io::CsvReader csv(in, p.string());
  const auto cu = csv.column("user_id"), cv = csv.column("video_id");
  const auto cp = csv.column("play_duration"), cd = csv.column("video_duration");
  KuaiRecTable t;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    const auto u = users.intern(f[cu]);
    const auto i = items.intern(f[cv]);
    const double play = io::parse_double(f[cp], csv);
    const double dur = io::parse_double(f[cd], csv);
    if (!(dur > 0.0) || play < 0.0) {
      ++t.rejected;
      continue;
    }
    (binarize_engagement(play, dur) == Label::positive ? t.row_pos : t.row_neg) += 1;
    auto& cell = t.cells[{u, i}];
    cell.play += play;
    cell.duration = std::max(cell.duration, dur);
    ++cell.rows;
    if (t.seen_user.size() <= u) t.seen_user.resize(u + 1, 0);
    if (t.seen_item.size() <= i) t.seen_item.resize(i + 1, 0);
    if (!t.seen_user[u]) t.users.push_back(u);
    if (!t.seen_item[i]) t.items.push_back(i);
    t.seen_user[u] = t.seen_item[i] = 1;
  }
  return t;
}

}  // namespace

DatasetBundle ingest_kuairec(const std::filesystem::path& dir, double holdout_fraction,
                             std::uint64_t holdout_seed) {
  DatasetBundle b;
  NameIndex users(b.user_names);
  NameIndex items(b.item_names);
  const auto small = dir / "small_matrix.csv";
  const auto big = dir / "big_matrix.csv";

  auto test = read_kuairec_matrix(small, users, items);
  fill_observed_stats(b.report.observed_test, test.users.size(), test.items.size(), test.row_pos, test.row_neg);
  std::vector<UserId> row_users(test.users.begin(), test.users.end());
  std::vector<ItemId> col_items(test.items.begin(), test.items.end());
  std::sort(row_users.begin(), row_users.end());
  std::sort(col_items.begin(), col_items.end());
  std::unordered_map<UserId, Row> row_of;
  std::unordered_map<ItemId, Col> col_of;
  for (std::size_t r = 0; r < row_users.size(); ++r) row_of.emplace(row_users[r], static_cast<Row>(r));
  for (std::size_t c = 0; c < col_items.size(); ++c) col_of.emplace(col_items[c], static_cast<Col>(c));
  DenseCells cells{std::vector<std::uint8_t>(row_users.size() * col_items.size(), 0),
                   std::vector<std::uint8_t>(row_users.size() * col_items.size(), 0)};
  for (const auto& [key, cell] : test.cells) {
    const std::size_t idx = static_cast<std::size_t>(row_of.at(key.first)) * col_items.size() + col_of.at(key.second);
    cells.present[idx] = 1;
    cells.label[idx] = binarize_engagement(cell.play, cell.duration) == Label::positive;
    if (cell.rows > 1) ++b.report.merged_duplicates;
  }
  b.report.rejected_rows += test.rejected;
  finish_ground_truth(b, row_users, col_items, std::move(cells), small.string());

  auto train = read_kuairec_matrix(big, users, items);
  fill_observed_stats(b.report.observed_train, train.users.size(), train.items.size(), train.row_pos, train.row_neg);
  b.report.rejected_rows += train.rejected;
  for (const auto& [key, cell] : train.cells) {
    b.train_log.entries.push_back({key.first, key.second, binarize_engagement(cell.play, cell.duration),
                                   cell.play / cell.duration});
    if (cell.rows > 1) ++b.report.merged_duplicates;
  }
  b.train_log.has_weights = true;
  b.train_log.n_users = b.user_names.size();
  b.train_log.n_items = b.item_names.size();
  if (b.report.rejected_rows)
    b.report.warnings.push_back("rejected " + std::to_string(b.report.rejected_rows) +
                                " rows with nonpositive video_duration");
  if (b.report.merged_duplicates)
    b.report.warnings.push_back("merged " + std::to_string(b.report.merged_duplicates) +
                                " repeated (user, video) pairs by summing play_duration");

  b.holdout = make_holdout(b.ground_truth, holdout_fraction, holdout_seed, &b.report.holdout_redraws);
  b.provenance.kind = "kuairec";
  b.provenance.description = dir.string();
  b.provenance.seed = holdout_seed;
  b.provenance.source_digests = {{"small_matrix.csv", io::sha256_file(small)},
                                 {"big_matrix.csv", io::sha256_file(big)}};
  b.validate();
  return b;
}

// ---------------------------------------------------------------------------
// Canonical writer / reader

namespace {

json stats_json(const SplitStatistics& s) {
  return {{"users", s.users}, {"items", s.items}, {"positives", s.positives}, {"negatives", s.negatives},
          {"density", s.density}};
}

SplitStatistics stats_from_json(const json& j) {
  return {j.at("users").get<std::size_t>(), j.at("items").get<std::size_t>(),
          j.at("positives").get<std::size_t>(), j.at("negatives").get<std::size_t>(),
          j.at("density").get<double>()};
}

}  // namespace

void write_bundle(const DatasetBundle& b, const std::filesystem::path& dir) {
  const auto& g = b.ground_truth;
  std::string test = "user_id,item_id,label\n";
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) {
      test += b.user_names[g.test_users()[r]];
      test += ',';
      test += b.item_names[g.items()[c]];
      test += g.positive(static_cast<Row>(r), static_cast<Col>(c)) ? ",1\n" : ",0\n";
    }
  std::string train = b.train_log.has_weights ? "user_id,item_id,label,weight\n" : "user_id,item_id,label\n";
  auto entries = b.train_log.entries;
  std::sort(entries.begin(), entries.end(),
            [](const auto& x, const auto& y) { return std::tie(x.user, x.item) < std::tie(y.user, y.item); });
  for (const auto& e : entries) {
    train += b.user_names[e.user];
    train += ',';
    train += b.item_names[e.item];
    train += e.label == Label::positive ? ",1" : ",0";
    if (b.train_log.has_weights) {
      train += ',';
      train += io::format_double(e.weight);
    }
    train += '\n';
  }
  std::string hold = "user_id,item_id\n";
  for (const auto& [r, c] : b.holdout.cells()) {
    hold += b.user_names[g.test_users()[r]];
    hold += ',';
    hold += b.item_names[g.items()[c]];
    hold += '\n';
  }
  io::write_file(dir / "test.csv", test);
  io::write_file(dir / "train.csv", train);
  io::write_file(dir / "holdout.csv", hold);

  json digests = json::object();
  for (const auto& [k, v] : b.provenance.source_digests) digests[k] = v;
  json manifest = {
      {"format", "sampleval-bundle/1"},
      {"provenance",
       {{"kind", b.provenance.kind},
        {"description", b.provenance.description},
        {"seed", b.provenance.seed},
        {"source_digests", digests}}},
      {"files",
       {{"test.csv", io::sha256_hex(test)}, {"train.csv", io::sha256_hex(train)}, {"holdout.csv", io::sha256_hex(hold)}}},
      {"holdout_fraction", b.holdout.fraction()},
      {"counts",
       {{"users", b.user_names.size()},
        {"items", b.item_names.size()},
        {"test_users", g.rows()},
        {"catalog_items", g.cols()},
        {"train_entries", b.train_log.entries.size()},
        {"holdout_cells", b.holdout.size()}}},
      {"observed_train", stats_json(b.report.observed_train)},
      {"observed_test", stats_json(b.report.observed_test)},
      {"report",
       {{"forced_positive_users", b.report.forced_positive_users},
        {"imputed_cells", b.report.imputed_cells},
        {"imputation_rule", "missing test cells are labeled negative"},
        {"dropped_users", b.report.dropped_users},
        {"rejected_rows", b.report.rejected_rows},
        {"merged_duplicates", b.report.merged_duplicates},
        {"holdout_redraws", b.report.holdout_redraws},
        {"warnings", b.report.warnings}}}};
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

DatasetBundle read_bundle(const std::filesystem::path& dir) {
  const json manifest = json::parse(io::read_file(dir / "manifest.json"));
  for (const auto& [name, digest] : manifest.at("files").items())
    if (io::sha256_file(dir / name) != digest.get<std::string>())
      throw Error("bundle file '" + name + "' does not match its manifest digest");
  IngestPaths paths{dir / "test.csv", dir / "train.csv", dir / "holdout.csv"};
  DatasetBundle b = ingest_fully_observed(paths);
  // The holdout file fixes the cells; restore the nominal fraction and the
  // original provenance and counters.
  b.holdout = HoldoutPartition(b.holdout.rows(), b.holdout.cols(), manifest.at("holdout_fraction").get<double>(),
                               b.holdout.cells());
  const auto& p = manifest.at("provenance");
  b.provenance.kind = p.at("kind").get<std::string>();
  b.provenance.description = p.at("description").get<std::string>();
  b.provenance.seed = p.at("seed").get<std::uint64_t>();
  b.provenance.source_digests.clear();
  for (const auto& [k, v] : p.at("source_digests").items()) b.provenance.source_digests.emplace_back(k, v.get<std::string>());
  const auto& r = manifest.at("report");
  b.report.forced_positive_users = r.at("forced_positive_users").get<std::size_t>();
  b.report.imputed_cells = r.at("imputed_cells").get<std::size_t>();
  b.report.dropped_users = r.at("dropped_users").get<std::size_t>();
  b.report.rejected_rows = r.at("rejected_rows").get<std::size_t>();
  b.report.merged_duplicates = r.at("merged_duplicates").get<std::size_t>();
  b.report.holdout_redraws = r.at("holdout_redraws").get<std::size_t>();
  b.report.warnings = r.at("warnings").get<std::vector<std::string>>();
  b.report.observed_train = stats_from_json(manifest.at("observed_train"));
  b.report.observed_test = stats_from_json(manifest.at("observed_test"));
  return b;
}

}  // namespace sampleval
