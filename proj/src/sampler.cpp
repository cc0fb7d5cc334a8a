#include "sampleval/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "sampleval/io.hpp"
#include "sampleval/rng.hpp"
#include "sampleval/weighted_sampling.hpp"

namespace sampleval {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::full: return "full";
    case Strategy::exposed: return "exposed";
    case Strategy::random_at_e: return "random_at_e";
    case Strategy::random: return "random";
    case Strategy::popularity: return "popularity";
    case Strategy::positivity: return "positivity";
    case Strategy::wtd: return "wtd";
    case Strategy::wtdh: return "wtdh";
    case Strategy::skew: return "skew";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto v : fixed_strategies())
    if (to_string(v) == s) return v;
  for (auto v : parametric_strategies())
    if (to_string(v) == s) return v;
  return std::nullopt;
}

bool is_parametric(Strategy s) {
  return s != Strategy::full && s != Strategy::exposed && s != Strategy::random_at_e;
}

std::string_view to_string(SourceKind s) { return s == SourceKind::ground_truth ? "G" : "L"; }

void SamplerSpec::validate() const {
  if (is_parametric(strategy) != n.has_value())
    throw Error("sampler spec: strategy '" + std::string(to_string(strategy)) +
                (n ? "' takes no sample size" : "' requires a sample size n"));
  if (n && *n < 1) throw Error("sampler spec: n must be >= 1");
  if (!(zipf_exponent > 0.0)) throw Error("sampler spec: zipf exponent must be > 0");
  if (!(clip.lo > 0.0 && clip.lo <= clip.hi)) throw Error("sampler spec: invalid weight clip range");
}

std::string SamplerSpec::label() const {
  std::string s(to_string(strategy));
  if (n) s += "@" + std::to_string(*n);
  return s;
}

// ---------------------------------------------------------------------------

EvaluationSource EvaluationSource::from_ground_truth(const GroundTruthMatrix& g, const HoldoutPartition& holdout) {
  EvaluationSource s;
  s.kind_ = SourceKind::ground_truth;
  s.cols_ = g.cols();
  s.holdout_ = &holdout;
  s.positives_.resize(g.rows());
  s.exposed_negatives_.resize(g.rows());
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t c = 0; c < g.cols(); ++c) {
      const auto rr = static_cast<Row>(r);
      const auto cc = static_cast<Col>(c);
      if (holdout.contains(rr, cc)) continue;
      (g.positive(rr, cc) ? s.positives_[r] : s.exposed_negatives_[r]).push_back(cc);
    }
  return s;
}

EvaluationSource EvaluationSource::from_logged(const LoggedMatrix& l, const HoldoutPartition& holdout) {
  EvaluationSource s;
  s.kind_ = SourceKind::logged;
  s.cols_ = l.n_cols;
  s.holdout_ = &holdout;
  s.logged_ = &l;
  s.positives_.resize(l.rows());
  s.exposed_negatives_.resize(l.rows());
  for (std::size_t r = 0; r < l.rows(); ++r)
    for (std::size_t k = 0; k < l.exposed[r].size(); ++k)
      (l.labels[r][k] ? s.positives_[r] : s.exposed_negatives_[r]).push_back(l.exposed[r][k]);
  return s;
}

std::vector<std::size_t> EvaluationSource::exposure_counts() const {
  std::vector<std::size_t> counts(cols_, 0);
  for (std::size_t r = 0; r < rows(); ++r) {
    for (Col c : positives_[r]) ++counts[c];
    for (Col c : exposed_negatives_[r]) ++counts[c];
  }
  return counts;
}

std::vector<std::size_t> EvaluationSource::positive_counts() const {
  std::vector<std::size_t> counts(cols_, 0);
  for (const auto& row : positives_)
    for (Col c : row) ++counts[c];
  return counts;
}

std::vector<Col> candidate_pool(const EvaluationSource& src, Row r, Strategy strategy) {
  if (r >= src.rows()) throw Error("candidate_pool: row outside the source");
  if (strategy == Strategy::exposed) return src.exposed_negatives(r);
  const auto& pos = src.positives(r);
  std::vector<Col> pool;
  pool.reserve(src.cols() - pos.size());
  auto p = pos.begin();
  for (std::size_t c = 0; c < src.cols(); ++c) {
    const auto cc = static_cast<Col>(c);
    if (p != pos.end() && *p == cc) {
      ++p;
      continue;
    }
    if (src.holdout().contains(r, cc)) continue;
    pool.push_back(cc);
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Weights

ItemWeights zipf_weights(std::span<const double> statistic, double exponent) {
  if (statistic.empty()) throw Error("zipf_weights: empty pool");
  if (!(exponent > 0.0)) throw Error("zipf_weights: exponent must be > 0");
  std::vector<Col> order(statistic.size());
  std::iota(order.begin(), order.end(), Col{0});
  std::stable_sort(order.begin(), order.end(), [&](Col a, Col b) { return statistic[a] > statistic[b]; });
  std::vector<double> raw(statistic.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    raw[order[rank]] = std::pow(static_cast<double>(rank + 1), -exponent);
  return normalize_weights(std::move(raw), "zipf(s=" + io::format_double(exponent, 6) + ")");
}

ItemWeights empirical_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw Error("empirical_weights: empty source");
  std::vector<double> raw(counts.size());
  std::transform(counts.begin(), counts.end(), raw.begin(), [](std::size_t c) { return static_cast<double>(c) + 1.0; });
  return normalize_weights(std::move(raw), "exposure count + 1");
}

ItemWeights propensity_ratio_weights(std::span<const double> propensity, std::span<const double> target,
                                     WeightClip clip, std::string statistic) {
  if (!target.empty() && target.size() != propensity.size())
    throw Error("propensity_ratio_weights: target and propensity sizes differ");
  std::vector<double> raw(propensity.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(propensity[i] > 0.0)) throw Error("propensity_ratio_weights: propensity must be > 0");
    const double t = target.empty() ? 1.0 : target[i];
    raw[i] = std::clamp(t / propensity[i], clip.lo, clip.hi);
  }
  return normalize_weights(std::move(raw), std::move(statistic));
}

std::vector<double> exposure_propensity(const EvaluationSource& src) {
  const auto counts = src.exposure_counts();
  const double denom = static_cast<double>(src.rows()) + 1.0;
  std::vector<double> p(counts.size());
  std::transform(counts.begin(), counts.end(), p.begin(),
                 [&](std::size_t c) { return (static_cast<double>(c) + 1.0) / denom; });
  return p;
}

std::vector<double> holdout_target(const HoldoutPartition& holdout) {
  std::vector<double> counts(holdout.cols(), 0.0);
  for (const auto& [r, c] : holdout.cells()) counts[c] += 1.0;
  const double items = static_cast<double>(holdout.cols());
  const double denom = static_cast<double>(holdout.size()) + items;
  for (auto& h : counts) h = items * (h + 1.0) / denom;
  return counts;
}

ItemWeights wtd_weights(const EvaluationSource& src, WeightClip clip) {
  if (src.holdout().empty())
    throw Error("wtd_weights: WTD needs a nonempty holdout for its target distribution; use WTDH instead");
  const auto p = exposure_propensity(src);
  const auto q = holdout_target(src.holdout());
  return propensity_ratio_weights(p, q, clip, "wtd: clip(holdout target / smoothed exposure frequency)");
}

ItemWeights wtdh_weights(const EvaluationSource& src, WeightClip clip) {
  const auto p = exposure_propensity(src);
  return propensity_ratio_weights(p, {}, clip, "wtdh: clip(1 / smoothed exposure frequency)");
}

std::optional<ItemWeights> strategy_weights(const EvaluationSource& src, const SamplerSpec& spec) {
  switch (spec.strategy) {
    case Strategy::full:
    case Strategy::exposed:
      return std::nullopt;
    case Strategy::random_at_e:
    case Strategy::random:
      return normalize_weights(std::vector<double>(src.cols(), 1.0), "uniform");
    case Strategy::popularity: {
      const auto counts = src.exposure_counts();
      std::vector<double> stat(counts.begin(), counts.end());
      auto w = zipf_weights(stat, spec.zipf_exponent);
      w.statistic = "popularity rank (exposure count in source), " + w.statistic;
      return w;
    }
    case Strategy::positivity: {
      const auto counts = src.positive_counts();
      std::vector<double> stat(counts.begin(), counts.end());
      auto w = zipf_weights(stat, spec.zipf_exponent);
      w.statistic = "positivity rank (positive count in source), " + w.statistic;
      return w;
    }
    case Strategy::wtd:
      return wtd_weights(src, spec.clip);
    case Strategy::wtdh:
      return wtdh_weights(src, spec.clip);
    case Strategy::skew: {
      const auto counts = src.exposure_counts();
      return empirical_weights(counts);
    }
  }
  throw Error("strategy_weights: unknown strategy");
}

// ---------------------------------------------------------------------------

namespace {

std::string digest_weights(const ItemWeights& w) {
  std::string bytes(w.p.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), w.p.data(), bytes.size());
  return io::sha256_hex(bytes);
}

}  // namespace

UserCandidates sample_user(const EvaluationSource& src, Row r, const SamplerSpec& spec, std::size_t requested,
                           const ItemWeights* weights, std::uint64_t seed) {
  UserCandidates uc;
  uc.positives = src.positives(r);
  auto pool = candidate_pool(src, r, spec.strategy);
  uc.empty_pool = pool.empty();
  if (spec.strategy == Strategy::full || spec.strategy == Strategy::exposed) {
    uc.negatives = std::move(pool);
    return uc;
  }
  uc.capped = requested > pool.size();
  Rng rng(derive_seed(seed, "sampler-user", r));
  std::vector<std::size_t> picked;
  if (spec.strategy == Strategy::random || spec.strategy == Strategy::random_at_e) {
    picked = uniform_sample_without_replacement(pool.size(), requested, rng);
  } else {
    if (!weights) throw Error("sample_user: weighted strategy without weights");
    std::vector<double> pool_w(pool.size());
    for (std::size_t k = 0; k < pool.size(); ++k) pool_w[k] = weights->p[pool[k]];
    picked = weighted_sample_without_replacement(pool_w, requested, rng);
    uc.capped = uc.capped || picked.size() < requested;
  }
  uc.negatives.reserve(picked.size());
  for (auto k : picked) uc.negatives.push_back(pool[k]);
  std::sort(uc.negatives.begin(), uc.negatives.end());
  return uc;
}

EvaluationSet build_evaluation_set(const EvaluationSource& src, const SamplerSpec& spec,
                                   std::span<const std::size_t> e_map, std::uint64_t seed,
                                   const ItemWeights* weights) {
  spec.validate();
  EvaluationSet out;
  out.source = src.kind();
  out.spec = spec;
  out.seed = seed;
  if (src.logged()) out.logger = src.logged()->config;
  out.true_labels_available = src.kind() == SourceKind::ground_truth;

  std::vector<std::size_t> own_e;
  if (spec.strategy == Strategy::random_at_e && e_map.empty()) {
    if (!src.logged()) throw Error("build_evaluation_set: Random@e on G needs the paired logger's e_u map");
    own_e = src.logged()->exposed_negatives;
    e_map = own_e;
  }
  if (spec.strategy == Strategy::random_at_e && e_map.size() != src.rows())
    throw Error("build_evaluation_set: e_u map does not cover every test row");

  std::optional<ItemWeights> computed;
  if (!weights && spec.strategy != Strategy::full && spec.strategy != Strategy::exposed) {
    computed = strategy_weights(src, spec);
    weights = &*computed;
  }
  if (weights) {
    if (weights->size() != src.cols()) throw Error("build_evaluation_set: weights do not match the catalog");
    out.weight_statistic = weights->statistic;
    out.weight_digest = digest_weights(*weights);
  }
  out.users.resize(src.rows());
  for (std::size_t rr = 0; rr < src.rows(); ++rr) {
    const auto r = static_cast<Row>(rr);
    const std::size_t requested =
        spec.strategy == Strategy::random_at_e ? e_map[r] : spec.n.value_or(0);
    out.users[r] = sample_user(src, r, spec, requested, weights, seed);
  }
  return out;
}

void write_evaluation_set(const EvaluationSet& set, const DatasetBundle& bundle,
                          const std::filesystem::path& csv_path) {
  const auto& g = bundle.ground_truth;
  std::string csv = "user_id,item_id,role\n";
  for (std::size_t r = 0; r < set.rows(); ++r) {
    const auto& user = bundle.user_names[g.test_users()[r]];
    for (Col c : set.users[r].positives) csv += user + "," + bundle.item_names[g.items()[c]] + ",pos\n";
    for (Col c : set.users[r].negatives) csv += user + "," + bundle.item_names[g.items()[c]] + ",neg\n";
  }
  io::write_file(csv_path, csv);
  nlohmann::json spec = {{"strategy", std::string(to_string(set.spec.strategy))},
                         {"zipf_exponent", set.spec.zipf_exponent},
                         {"weight_clip", {set.spec.clip.lo, set.spec.clip.hi}}};
  spec["n"] = set.spec.n ? nlohmann::json(*set.spec.n) : nlohmann::json(nullptr);
  nlohmann::json side = {{"source", std::string(to_string(set.source))},
                         {"sampler", spec},
                         {"seed", set.seed},
                         {"true_labels_available", set.true_labels_available},
                         {"weight_statistic", set.weight_statistic},
                         {"weight_digest", set.weight_digest}};
  if (set.logger)
    side["logger"] = {{"policy", std::string(to_string(set.logger->policy))},
                      {"sparsity", set.logger->sparsity},
                      {"seed", set.logger->seed}};
  std::size_t capped = 0, empty = 0;
  for (const auto& u : set.users) {
    capped += u.capped;
    empty += u.empty_pool;
  }
  side["capped_users"] = capped;
  side["empty_pool_users"] = empty;
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  io::write_file(sidecar, side.dump(2) + "\n");
}

}  // namespace sampleval
