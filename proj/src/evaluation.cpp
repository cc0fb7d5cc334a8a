#include "sampleval/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sampleval/rng.hpp"

namespace sampleval {

std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::precision: return "precision";
    case MetricKind::recall: return "recall";
    case MetricKind::ndcg: return "ndcg";
  }
  return "?";
}

std::optional<MetricKind> parse_metric_kind(std::string_view s) {
  for (auto k : {MetricKind::precision, MetricKind::recall, MetricKind::ndcg})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::string MetricSpec::label() const { return std::string(to_string(kind)) + "@" + std::to_string(k); }

std::string_view to_string(Question q) {
  switch (q) {
    case Question::q1: return "Q1";
    case Question::q2: return "Q2";
    case Question::q3: return "Q3";
    case Question::q4: return "Q4";
  }
  return "?";
}

std::optional<Question> parse_question(std::string_view s) {
  for (auto q : {Question::q1, Question::q2, Question::q3, Question::q4})
    if (to_string(q) == s) return q;
  return std::nullopt;
}

std::string_view to_string(MetaKind k) {
  switch (k) {
    case MetaKind::tie_rate: return "tie_rate";
    case MetaKind::fidelity_tau: return "fidelity_tau";
    case MetaKind::robustness_tau: return "robustness_tau";
    case MetaKind::predictive_tau: return "predictive_tau";
  }
  return "?";
}

MetaKind meta_kind_of(Question q) {
  switch (q) {
    case Question::q1: return MetaKind::tie_rate;
    case Question::q2: return MetaKind::fidelity_tau;
    case Question::q3: return MetaKind::robustness_tau;
    case Question::q4: return MetaKind::predictive_tau;
  }
  return MetaKind::tie_rate;
}

// ---------------------------------------------------------------------------
// Ranking

namespace {

struct RankKey {
  double score;
  std::uint64_t tie;
  Col col;
};

bool rank_before(const RankKey& a, const RankKey& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tie != b.tie) return a.tie < b.tie;
  return a.col < b.col;
}

std::uint64_t tie_key(std::uint64_t seed, Col c) { return derive_seed(seed, static_cast<std::uint64_t>(c)); }

/// Quantized value used for every equality test on metric values.
double quantize(double v) { return std::nearbyint(v * 1e12); }

}  // namespace

std::vector<Col> rank_candidates(std::span<const double> scores, std::span<const Col> candidates,
                                 std::uint64_t seed) {
  if (scores.size() != candidates.size()) throw Error("rank_candidates: scores do not cover the candidates");
  std::vector<RankKey> keys(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (std::isnan(scores[k])) throw Error("rank_candidates: NaN score for candidate " + std::to_string(candidates[k]));
    keys[k] = {scores[k], tie_key(seed, candidates[k]), candidates[k]};
  }
  std::sort(keys.begin(), keys.end(), rank_before);
  std::vector<Col> out(keys.size());
  std::transform(keys.begin(), keys.end(), out.begin(), [](const RankKey& k) { return k.col; });
  return out;
}

double metric_at_k(MetricKind kind, std::span<const std::uint8_t> relevance, std::size_t n_positives,
                   std::size_t k) {
  if (k < 1) throw Error("metric_at_k: k must be >= 1");
  if (n_positives == 0) throw Error("metric_at_k: empty positive set");
  const std::size_t depth = std::min(k, relevance.size());
  switch (kind) {
    case MetricKind::precision:
    case MetricKind::recall: {
      std::size_t hits = 0;
      for (std::size_t p = 0; p < depth; ++p) hits += relevance[p] ? 1 : 0;
      return static_cast<double>(hits) / static_cast<double>(kind == MetricKind::precision ? k : n_positives);
    }
    case MetricKind::ndcg: {
      double dcg = 0.0;
      for (std::size_t p = 0; p < depth; ++p)
        if (relevance[p]) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
      double idcg = 0.0;
      const std::size_t ideal = std::min(k, n_positives);
      for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
      return dcg / idcg;
    }
  }
  throw Error("metric_at_k: unknown metric");
}

std::size_t UserModelMetrics::excluded_count() const {
  return static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), std::uint8_t{1}));
}

std::vector<UserModelMetrics> evaluate_models(const EvaluationSet& set, const ScoreTable& scores,
                                              std::span<const MetricSpec> metrics, std::uint64_t tie_seed) {
  if (metrics.empty()) throw Error("evaluate_models: no metrics requested");
  if (scores.rows != set.rows()) throw Error("evaluate_models: score table rows do not match the evaluation set");
  const std::size_t n_models = scores.n_models();
  std::size_t depth = 0;
  for (const auto& m : metrics) depth = std::max(depth, m.k);

  std::vector<UserModelMetrics> out(metrics.size());
  for (std::size_t m = 0; m < metrics.size(); ++m) {
    out[m].metric = metrics[m];
    out[m].n_models = n_models;
    out[m].values.assign(set.rows() * n_models, 0.0);
    out[m].excluded.assign(set.rows(), 0);
  }

  std::vector<RankKey> keys;
  std::vector<std::uint64_t> ties;
  std::vector<std::uint8_t> rel;
  for (std::size_t rr = 0; rr < set.rows(); ++rr) {
    const auto r = static_cast<Row>(rr);
    const auto& uc = set.users[r];
    if (uc.positives.empty()) {
      for (auto& o : out) o.excluded[r] = 1;
      continue;
    }
    const std::uint64_t row_seed = derive_seed(tie_seed, "tiebreak", r);
    const std::size_t n_cand = uc.positives.size() + uc.negatives.size();
    ties.resize(n_cand);
    for (std::size_t k = 0; k < uc.positives.size(); ++k) ties[k] = tie_key(row_seed, uc.positives[k]);
    for (std::size_t k = 0; k < uc.negatives.size(); ++k)
      ties[uc.positives.size() + k] = tie_key(row_seed, uc.negatives[k]);
    const std::size_t top = std::min(depth, n_cand);

    for (std::size_t model = 0; model < n_models; ++model) {
      keys.resize(n_cand);
      for (std::size_t k = 0; k < n_cand; ++k) {
        const bool is_pos = k < uc.positives.size();
        const Col c = is_pos ? uc.positives[k] : uc.negatives[k - uc.positives.size()];
        const double s = scores.at(model, r, c);
        if (std::isnan(s))
          throw Error("evaluate_models: model '" + scores.model_names[model] + "' produced a NaN score");
        keys[k] = {s, ties[k], c};
      }
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(top), keys.end(), rank_before);
      rel.resize(top);
      for (std::size_t p = 0; p < top; ++p)
        rel[p] = std::binary_search(uc.positives.begin(), uc.positives.end(), keys[p].col) ? 1 : 0;
      for (std::size_t m = 0; m < metrics.size(); ++m)
        out[m].values[rr * n_models + model] = metric_at_k(metrics[m].kind, rel, uc.positives.size(), metrics[m].k);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Meta-metrics

double tie_rate(std::span<const double> v) {
  const std::size_t m = v.size();
  if (m < 2) throw Error("tie_rate: need at least two models");
  std::vector<double> q(m);
  std::transform(v.begin(), v.end(), q.begin(), quantize);
  std::sort(q.begin(), q.end());
  std::size_t tied = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && q[j] == q[i]) ++j;
    const std::size_t t = j - i;
    tied += t * (t - 1) / 2;
    i = j;
  }
  return static_cast<double>(tied) / static_cast<double>(m * (m - 1) / 2);
}

namespace {

std::size_t tied_pairs_sorted(std::span<const double> sorted) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    total += (j - i) * (j - i - 1) / 2;
    i = j;
  }
  return total;
}

/// Stable merge sort on `b`, returning the number of strictly discordant
/// exchanges.
std::size_t merge_count(std::vector<double>& b, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::size_t swaps = merge_count(b, buf, lo, mid) + merge_count(b, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (b[j] < b[i]) {
      swaps += mid - i;
      buf[k++] = b[j++];
    } else {
      buf[k++] = b[i++];
    }
  }
  while (i < mid) buf[k++] = b[i++];
  while (j < hi) buf[k++] = b[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            b.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

TauResult kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("kendall_tau_b: value vectors cover different model sets");
  const std::size_t m = a.size();
  if (m < 2) throw Error("kendall_tau_b: need at least two models");

  // Knight's O(M log M) algorithm with tie corrections.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> qa(m), qb(m);
  std::transform(a.begin(), a.end(), qa.begin(), quantize);
  std::transform(b.begin(), b.end(), qb.begin(), quantize);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return qa[x] < qa[y] || (qa[x] == qa[y] && qb[x] < qb[y]);
  });

  std::size_t ties_a = 0, ties_joint = 0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && qa[order[j]] == qa[order[i]]) ++j;
    ties_a += (j - i) * (j - i - 1) / 2;
    for (std::size_t p = i; p < j;) {
      std::size_t q = p;
      while (q < j && qb[order[q]] == qb[order[p]]) ++q;
      ties_joint += (q - p) * (q - p - 1) / 2;
      p = q;
    }
    i = j;
  }
  std::vector<double> bs(m), buf(m);
  for (std::size_t i = 0; i < m; ++i) bs[i] = qb[order[i]];
  const std::size_t swaps = merge_count(bs, buf, 0, m);
  const std::size_t ties_b = tied_pairs_sorted(bs);

  const auto pairs = static_cast<double>(m * (m - 1) / 2);
  const double denom = (pairs - static_cast<double>(ties_a)) * (pairs - static_cast<double>(ties_b));
  if (denom <= 0.0) return {0.0, false};
  const double diff = pairs - static_cast<double>(ties_a) - static_cast<double>(ties_b) +
                      static_cast<double>(ties_joint) - 2.0 * static_cast<double>(swaps);
  return {diff / std::sqrt(denom), true};
}

ConfidenceInterval bootstrap_ci(std::span<const double> values, std::size_t resamples, double level,
                                std::uint64_t seed) {
  const std::size_t n = values.size();
  const double mean = n ? std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n) : 0.0;
  if (n < 2 || resamples == 0) return {mean, mean, true};
  if (!(level > 0.0 && level < 1.0)) throw Error("bootstrap_ci: level must lie in (0,1)");
  Rng rng(seed);
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += values[rng.below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, resamples - 1);
    const double frac = pos - static_cast<double>(lo);
    return means[lo] + frac * (means[hi] - means[lo]);
  };
  const double alpha = (1.0 - level) / 2.0;
  ConfidenceInterval ci{quantile(alpha), quantile(1.0 - alpha), false};
  ci.low = std::min(ci.low, mean);
  ci.high = std::max(ci.high, mean);
  return ci;
}

MetaResult meta_compare(Question question, const UserModelMetrics& scenario, const UserModelMetrics* reference,
                        const BootstrapOptions& bootstrap) {
  MetaResult res;
  res.kind = meta_kind_of(question);
  res.metric = scenario.metric;
  res.level = bootstrap.level;
  res.resamples = bootstrap.resamples;
  if (scenario.n_models < 2) throw Error("meta_compare: need at least two models");

  if (question == Question::q1) {
    for (std::size_t r = 0; r < scenario.rows(); ++r) {
      if (scenario.excluded[r]) {
        ++res.n_excluded;
        continue;
      }
      res.per_user.push_back(tie_rate(scenario.row(static_cast<Row>(r))));
    }
  } else {
    if (!reference) throw Error("meta_compare: " + std::string(to_string(question)) + " requires a reference evaluation");
    if (reference->n_models != scenario.n_models)
      throw Error("meta_compare: scenario and reference cover different model sets");
    const std::size_t rows = std::min(scenario.rows(), reference->rows());
    res.dropped_users = std::max(scenario.rows(), reference->rows()) - rows;
    for (std::size_t r = 0; r < rows; ++r) {
      if (scenario.excluded[r] || reference->excluded[r]) {
        ++res.n_excluded;
        continue;
      }
      const auto t = kendall_tau_b(scenario.row(static_cast<Row>(r)), reference->row(static_cast<Row>(r)));
      if (!t.defined) {
        ++res.n_excluded;
        continue;
      }
      res.per_user.push_back(t.tau);
    }
  }
  res.n_users = res.per_user.size();
  res.mean = res.n_users ? std::accumulate(res.per_user.begin(), res.per_user.end(), 0.0) / static_cast<double>(res.n_users)
                         : 0.0;
  res.ci = bootstrap_ci(res.per_user, bootstrap.resamples, bootstrap.level, bootstrap.seed);
  return res;
}

}  // namespace sampleval
