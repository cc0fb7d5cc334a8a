#include "sampleval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "sampleval/io.hpp"

namespace sampleval {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

std::vector<ModelSpec> default_models() {
  std::vector<ModelSpec> m;
  m.push_back({"als", "als", {{"iterations", 10}}, default_als_space()});
  m.push_back({"als_alt", "als", {{"latent_dim", 8}, {"regularization", 1.0}, {"confidence_alpha", 2.0}, {"iterations", 10}}, {}});
  m.push_back({"bpr", "bpr", {}, default_bpr_space()});
  m.push_back({"sar_cosine", "sar_cosine", {}, {}});
  m.push_back({"sar_jaccard", "sar_jaccard", {}, {}});
  m.push_back({"popularity", "popularity", {}, {}});
  m.push_back({"random", "random", {}, {}});
  return m;
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.policies = {LoggerPolicy::uniform, LoggerPolicy::popularity, LoggerPolicy::positivity};
  c.sparsities = default_sparsities();
  c.fixed_samplers = fixed_strategies();
  c.parametric_samplers = parametric_strategies();
  c.sample_sizes = default_sample_sizes();
  c.models = default_models();
  for (auto kind : {MetricKind::precision, MetricKind::recall, MetricKind::ndcg})
    for (std::size_t k : {5, 10, 50, 100}) c.metrics.push_back({kind, k});
  c.questions = {Question::q1, Question::q2, Question::q3, Question::q4};
  return c;
}

namespace {

const std::set<std::string> kFamilies{"als", "bpr", "sar_cosine", "sar_jaccard", "popularity", "random"};

template <typename T>
void reject_duplicates(const std::vector<T>& v, const std::string& axis) {
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j)
      if (v[i] == v[j]) throw Error("config: duplicate entry in " + axis);
}

}  // namespace

void RunConfig::validate() const {
  auto nonempty = [](bool empty, const char* axis) {
    if (empty) throw Error(std::string("config: axis '") + axis + "' is empty");
  };
  nonempty(policies.empty(), "logger.policies");
  nonempty(sparsities.empty(), "logger.sparsities");
  nonempty(fixed_samplers.empty() && parametric_samplers.empty(), "sampler");
  nonempty(!parametric_samplers.empty() && sample_sizes.empty(), "sampler.sizes");
  nonempty(models.empty(), "models");
  nonempty(metrics.empty(), "metrics");
  nonempty(questions.empty(), "questions");
  reject_duplicates(policies, "logger.policies");
  reject_duplicates(sparsities, "logger.sparsities");
  reject_duplicates(fixed_samplers, "sampler.fixed");
  reject_duplicates(parametric_samplers, "sampler.parametric");
  reject_duplicates(sample_sizes, "sampler.sizes");
  reject_duplicates(metrics, "metrics");
  reject_duplicates(questions, "questions");
  for (double s : sparsities) LoggerConfig{LoggerPolicy::uniform, s, 0}.validate();
  for (auto s : fixed_samplers)
    if (is_parametric(s)) throw Error("config: '" + std::string(to_string(s)) + "' needs a sample size; list it under sampler.parametric");
  for (auto s : parametric_samplers)
    if (!is_parametric(s)) throw Error("config: '" + std::string(to_string(s)) + "' takes no sample size; list it under sampler.fixed");
  for (auto n : sample_sizes)
    if (n == 0) throw Error("config: sample sizes must be >= 1");
  if (!(zipf_exponent > 0.0)) throw Error("config: zipf_exponent must be > 0");
  if (!(weight_clip.lo > 0.0 && weight_clip.lo <= weight_clip.hi)) throw Error("config: invalid weight_clip");
  if (models.size() < 2) throw Error("config: at least two models are needed to compare rankings");
  std::set<std::string> names;
  for (const auto& m : models) {
    if (m.name.empty() || !names.insert(m.name).second) throw Error("config: model names must be unique and nonempty");
    if (!kFamilies.count(m.family)) throw Error("config: unknown model family '" + m.family + "'");
    if (m.search) m.search->validate();
  }
  for (const auto& m : metrics)
    if (m.k == 0) throw Error("config: metric cutoff must be >= 1");
  if (std::find(metrics.begin(), metrics.end(), report_metric) == metrics.end())
    throw Error("config: report_metric " + report_metric.label() + " is not among the computed metrics");
  if (bootstrap_resamples == 0) throw Error("config: bootstrap.resamples must be >= 1");
  if (!(confidence_level > 0.0 && confidence_level < 1.0)) throw Error("config: bootstrap.level must be in (0,1)");
  if (dataset.kind == "synthetic") {
    dataset.synthetic.validate();
  } else if (dataset.kind == "bundle" || dataset.kind == "kuairec") {
    if (dataset.path.empty()) throw Error("config: dataset.path is required for kind '" + dataset.kind + "'");
  } else {
    throw Error("config: unknown dataset kind '" + dataset.kind + "'");
  }
}

namespace {

MetricSpec parse_metric(const std::string& s) {
  const auto at = s.find('@');
  auto kind = parse_metric_kind(s.substr(0, at));
  if (at == std::string::npos || !kind) throw Error("config: bad metric '" + s + "' (expected e.g. ndcg@100)");
  std::size_t k = 0;
  try {
    k = std::stoul(s.substr(at + 1));
  } catch (const std::exception&) {
    throw Error("config: bad metric cutoff in '" + s + "'");
  }
  return {*kind, k};
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw Error("config: unknown key '" + key + "' in " + where);
}

const char* kind_name(ParamRange::Kind k) {
  switch (k) {
    case ParamRange::Kind::log_uniform: return "log_uniform";
    case ParamRange::Kind::uniform: return "uniform";
    case ParamRange::Kind::int_log_uniform: return "int_log_uniform";
    case ParamRange::Kind::int_uniform: return "int_uniform";
    case ParamRange::Kind::categorical: return "categorical";
  }
  return "uniform";
}

ParamRange::Kind parse_kind(const std::string& s) {
  for (auto k : {ParamRange::Kind::log_uniform, ParamRange::Kind::uniform, ParamRange::Kind::int_log_uniform,
                 ParamRange::Kind::int_uniform, ParamRange::Kind::categorical})
    if (s == kind_name(k)) return k;
  throw Error("config: unknown range kind '" + s + "'");
}

json space_to_json(const HyperparamSpace& s) {
  json ranges = json::array();
  for (const auto& r : s.ranges) {
    json jr = {{"name", r.name}, {"kind", kind_name(r.kind)}};
    if (r.kind == ParamRange::Kind::categorical)
      jr["choices"] = r.choices;
    else
      jr["lo"] = r.lo, jr["hi"] = r.hi;
    ranges.push_back(jr);
  }
  return {{"iterations", s.iterations},
          {"folds", s.folds},
          {"cutoff", s.cutoff},
          {"validation_negatives", s.validation_negatives},
          {"ranges", ranges}};
}

HyperparamSpace space_from_json(const json& j) {
  check_keys(j, {"iterations", "folds", "cutoff", "validation_negatives", "ranges"}, "search");
  HyperparamSpace s;
  s.iterations = j.value("iterations", s.iterations);
  s.folds = j.value("folds", s.folds);
  s.cutoff = j.value("cutoff", s.cutoff);
  s.validation_negatives = j.value("validation_negatives", s.validation_negatives);
  for (const auto& jr : j.at("ranges")) {
    check_keys(jr, {"name", "kind", "lo", "hi", "choices"}, "search.ranges[]");
    ParamRange r;
    r.name = jr.at("name").get<std::string>();
    r.kind = parse_kind(jr.at("kind").get<std::string>());
    r.lo = jr.value("lo", 0.0);
    r.hi = jr.value("hi", 0.0);
    if (jr.contains("choices")) r.choices = jr.at("choices").get<std::vector<double>>();
    s.ranges.push_back(std::move(r));
  }
  return s;
}

json synth_to_json(const SynthConfig& s) {
  return {{"n_test_users", s.n_test_users},
          {"n_train_users", s.n_train_users},
          {"n_items", s.n_items},
          {"latent_dim", s.latent_dim},
          {"positive_rate_target", s.positive_rate_target},
          {"popularity_skew_exponent", s.popularity_skew_exponent},
          {"train_density_target", s.train_density_target},
          {"label_noise", s.label_noise},
          {"activity_spread", s.activity_spread},
          {"holdout_fraction", s.holdout_fraction}};
}

SynthConfig synth_from_json(const json& j) {
  check_keys(j,
             {"n_test_users", "n_train_users", "n_items", "latent_dim", "positive_rate_target",
              "popularity_skew_exponent", "train_density_target", "label_noise", "activity_spread",
              "holdout_fraction"},
             "dataset.synthetic");
  SynthConfig s;
  s.n_test_users = j.value("n_test_users", s.n_test_users);
  s.n_train_users = j.value("n_train_users", s.n_train_users);
  s.n_items = j.value("n_items", s.n_items);
  s.latent_dim = j.value("latent_dim", s.latent_dim);
  s.positive_rate_target = j.value("positive_rate_target", s.positive_rate_target);
  s.popularity_skew_exponent = j.value("popularity_skew_exponent", s.popularity_skew_exponent);
  s.train_density_target = j.value("train_density_target", s.train_density_target);
  s.label_noise = j.value("label_noise", s.label_noise);
  s.activity_spread = j.value("activity_spread", s.activity_spread);
  s.holdout_fraction = j.value("holdout_fraction", s.holdout_fraction);
  return s;
}

template <typename E, typename Parse>
std::vector<E> parse_enum_list(const json& j, Parse parse, const char* what) {
  std::vector<E> out;
  for (const auto& v : j) {
    const auto s = v.get<std::string>();
    auto e = parse(s);
    if (!e) throw Error(std::string("config: unknown ") + what + " '" + s + "'");
    out.push_back(*e);
  }
  return out;
}

template <typename E>
json enum_list(const std::vector<E>& v) {
  json out = json::array();
  for (auto e : v) out.push_back(std::string(to_string(e)));
  return out;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j,
             {"$schema", "dataset", "logger", "sampler", "models", "metrics", "report_metric", "questions",
              "bootstrap", "master_seed", "workers", "out_dir", "cache_references", "retrain_per_scenario",
              "inject_failures"},
             "config");
  RunConfig c = RunConfig::defaults();
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"kind", "synthetic", "seed", "path", "holdout_fraction"}, "dataset");
    c.dataset.kind = d.value("kind", c.dataset.kind);
    if (d.contains("synthetic")) c.dataset.synthetic = synth_from_json(d.at("synthetic"));
    if (d.contains("seed")) c.dataset.seed = d.at("seed").get<std::uint64_t>();
    if (d.contains("path")) c.dataset.path = d.at("path").get<std::string>();
    c.dataset.holdout_fraction = d.value("holdout_fraction", c.dataset.holdout_fraction);
  }
  if (j.contains("logger")) {
    const auto& l = j.at("logger");
    check_keys(l, {"policies", "sparsities"}, "logger");
    if (l.contains("policies"))
      c.policies = parse_enum_list<LoggerPolicy>(l.at("policies"), parse_logger_policy, "logger policy");
    if (l.contains("sparsities")) {
      c.sparsities = l.at("sparsities").get<std::vector<double>>();
      std::sort(c.sparsities.begin(), c.sparsities.end());
    }
  }
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    check_keys(s, {"fixed", "parametric", "sizes", "zipf_exponent", "weight_clip"}, "sampler");
    if (s.contains("fixed")) c.fixed_samplers = parse_enum_list<Strategy>(s.at("fixed"), parse_strategy, "sampler");
    if (s.contains("parametric"))
      c.parametric_samplers = parse_enum_list<Strategy>(s.at("parametric"), parse_strategy, "sampler");
    if (s.contains("sizes")) c.sample_sizes = s.at("sizes").get<std::vector<std::size_t>>();
    c.zipf_exponent = s.value("zipf_exponent", c.zipf_exponent);
    if (s.contains("weight_clip")) {
      const auto clip = s.at("weight_clip").get<std::vector<double>>();
      if (clip.size() != 2) throw Error("config: sampler.weight_clip must be [lo, hi]");
      c.weight_clip = {clip[0], clip[1]};
    }
  }
  if (j.contains("models")) {
    c.models.clear();
    for (const auto& jm : j.at("models")) {
      check_keys(jm, {"name", "family", "params", "search"}, "models[]");
      ModelSpec m;
      m.family = jm.at("family").get<std::string>();
      m.name = jm.value("name", m.family);
      if (jm.contains("params")) m.params = jm.at("params").get<ParamSet>();
      if (jm.contains("search") && !jm.at("search").is_null()) {
        if (jm.at("search").is_string() && jm.at("search").get<std::string>() == "default") {
          if (m.family == "als") m.search = default_als_space();
          else if (m.family == "bpr") m.search = default_bpr_space();
          else throw Error("config: model family '" + m.family + "' has no default search space");
        } else {
          m.search = space_from_json(jm.at("search"));
        }
      }
      c.models.push_back(std::move(m));
    }
  }
  if (j.contains("metrics")) {
    c.metrics.clear();
    for (const auto& m : j.at("metrics")) c.metrics.push_back(parse_metric(m.get<std::string>()));
  }
  if (j.contains("report_metric")) c.report_metric = parse_metric(j.at("report_metric").get<std::string>());
  if (j.contains("questions"))
    c.questions = parse_enum_list<Question>(j.at("questions"), parse_question, "question");
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    check_keys(b, {"resamples", "level"}, "bootstrap");
    c.bootstrap_resamples = b.value("resamples", c.bootstrap_resamples);
    c.confidence_level = b.value("level", c.confidence_level);
  }
  c.master_seed = j.value("master_seed", c.master_seed);
  c.workers = j.value("workers", c.workers);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  c.cache_references = j.value("cache_references", c.cache_references);
  c.retrain_per_scenario = j.value("retrain_per_scenario", c.retrain_per_scenario);
  if (j.contains("inject_failures")) c.inject_failures = j.at("inject_failures").get<std::vector<std::string>>();
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json dataset = {{"kind", c.dataset.kind}, {"holdout_fraction", c.dataset.holdout_fraction}};
  if (c.dataset.kind == "synthetic") dataset["synthetic"] = synth_to_json(c.dataset.synthetic);
  if (c.dataset.seed) dataset["seed"] = *c.dataset.seed;
  if (!c.dataset.path.empty()) dataset["path"] = c.dataset.path.string();
  json models = json::array();
  for (const auto& m : c.models) {
    json jm = {{"name", m.name}, {"family", m.family}, {"params", m.params}};
    if (m.search) jm["search"] = space_to_json(*m.search);
    models.push_back(jm);
  }
  json metrics = json::array();
  for (const auto& m : c.metrics) metrics.push_back(m.label());
  return {{"dataset", dataset},
          {"logger", {{"policies", enum_list(c.policies)}, {"sparsities", c.sparsities}}},
          {"sampler",
           {{"fixed", enum_list(c.fixed_samplers)},
            {"parametric", enum_list(c.parametric_samplers)},
            {"sizes", c.sample_sizes},
            {"zipf_exponent", c.zipf_exponent},
            {"weight_clip", {c.weight_clip.lo, c.weight_clip.hi}}}},
          {"models", models},
          {"metrics", metrics},
          {"report_metric", c.report_metric.label()},
          {"questions", enum_list(c.questions)},
          {"bootstrap", {{"resamples", c.bootstrap_resamples}, {"level", c.confidence_level}}},
          {"master_seed", c.master_seed},
          {"cache_references", c.cache_references},
          {"retrain_per_scenario", c.retrain_per_scenario},
          {"inject_failures", c.inject_failures}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  RunConfig c = run_config_from_json(j);
  // Relative dataset paths resolve against the config file's directory.
  if (!c.dataset.path.empty() && c.dataset.path.is_relative() && !std::filesystem::exists(c.dataset.path))
    c.dataset.path = path.parent_path() / c.dataset.path;
  return c;
}

// ---------------------------------------------------------------------------
// Grid

namespace {

std::string sparsity_key(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", s);
  return buf;
}

}  // namespace

std::string ScenarioId::key() const {
  return std::string(to_string(policy)) + "|" + sparsity_key(sparsity) + "|" + std::string(to_string(strategy)) + "|" +
         (n ? std::to_string(*n) : std::string("-"));
}

std::uint64_t ScenarioId::hash() const { return hash_string(key()); }

SamplerSpec ScenarioId::sampler(const RunConfig& c) const {
  return SamplerSpec{strategy, n, c.zipf_exponent, c.weight_clip};
}

std::optional<ScenarioId> parse_scenario_key(std::string_view key) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : key) {
    if (ch == '|') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 4) return std::nullopt;
  auto policy = parse_logger_policy(parts[0]);
  auto strategy = parse_strategy(parts[2]);
  if (!policy || !strategy) return std::nullopt;
  ScenarioId id;
  id.policy = *policy;
  id.strategy = *strategy;
  try {
    id.sparsity = std::stod(parts[1]);
    if (parts[3] != "-") id.n = std::stoul(parts[3]);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return id;
}

std::vector<ScenarioId> enumerate_grid(const RunConfig& config) {
  config.validate();
  auto sparsities = config.sparsities;
  std::sort(sparsities.begin(), sparsities.end());
  std::vector<ScenarioId> out;
  for (auto p : config.policies)
    for (double s : sparsities) {
      for (auto f : config.fixed_samplers) out.push_back({p, s, f, std::nullopt});
      for (auto st : config.parametric_samplers)
        for (auto n : config.sample_sizes) out.push_back({p, s, st, n});
    }
  return out;
}

// ---------------------------------------------------------------------------
// Execution

DatasetBundle build_dataset(const RunConfig& config) {
  const auto& d = config.dataset;
  if (d.kind == "synthetic") return generate_synthetic(d.synthetic, d.seed.value_or(config.master_seed));
  if (d.kind == "bundle") return read_bundle(d.path);
  if (d.kind == "kuairec")
    return ingest_kuairec(d.path, d.holdout_fraction, derive_seed(config.master_seed, "holdout"));
  throw Error("unknown dataset kind '" + d.kind + "'");
}

namespace {

/// Computes each keyed value once; concurrent requesters wait for it.
template <typename T>
class Memo {
 public:
  template <typename Make>
  std::shared_ptr<const T> get(const std::string& key, Make&& make) {
    std::promise<std::shared_ptr<const T>> promise;
    std::shared_future<std::shared_ptr<const T>> future;
    bool owner = false;
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find(key);
      if (it == cache_.end()) {
        future = promise.get_future().share();
        cache_.emplace(key, future);
        owner = true;
      } else {
        future = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(make());
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return future.get();
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_future<std::shared_ptr<const T>>> cache_;
};

struct LoggerEntry {
  LoggedMatrix matrix;
  std::optional<EvaluationSource> source;
};

using MetricsList = std::vector<UserModelMetrics>;

struct TrainedModel {
  std::unique_ptr<Scorer> scorer;
  ParamSet params;
  json search;  // null when untuned
};

std::unique_ptr<Scorer> fit_family(const std::string& family, const TrainLog& log, const ParamSet& p,
                                   std::uint64_t seed) {
  if (family == "als") return fit_als(log, als_params_from(p), seed).model;
  if (family == "bpr") return fit_bpr(log, bpr_params_from(p), seed);
  if (family == "sar_cosine") return fit_sar(log, Similarity::cosine);
  if (family == "sar_jaccard") return fit_sar(log, Similarity::jaccard);
  if (family == "popularity") return fit_popularity(log);
  if (family == "random") return fit_random(seed);
  throw Error("unknown model family '" + family + "'");
}

TrainedModel train_model(const ModelSpec& spec, const TrainLog& log, std::uint64_t master_seed) {
  TrainedModel out;
  out.params = spec.params;
  const auto seed = derive_seed(master_seed, "model", spec.name);
  if (spec.search) {
    const ParamSet base = spec.params;
    FitFunction fit = [&](const TrainLog& l, const ParamSet& drawn, std::uint64_t s) {
      ParamSet merged = base;
      for (const auto& [k, v] : drawn) merged[k] = v;
      return fit_family(spec.family, l, merged, s);
    };
    auto res = random_search(fit, *spec.search, log, derive_seed(seed, "search"));
    for (const auto& [k, v] : res.best) out.params[k] = v;
    json trials = json::array();
    for (const auto& [p, score] : res.trials)
      trials.push_back({{"params", p}, {"score", std::isfinite(score) ? json(score) : json(nullptr)}});
    out.search = {{"best_score", res.best_score}, {"trials", trials}, {"log", res.log}, {"space", space_to_json(*spec.search)}};
  }
  out.scorer = fit_family(spec.family, log, out.params, derive_seed(seed, "fit"));
  return out;
}

ScoreTable score_table(const std::vector<const Scorer*>& models, const std::vector<std::string>& names,
                       const GroundTruthMatrix& g) {
  ScoreTable t;
  t.rows = g.rows();
  t.cols = g.cols();
  t.model_names = names;
  const auto& items = g.items();
  for (const auto* m : models) {
    std::vector<double> s(t.rows * t.cols);
    for (std::size_t r = 0; r < t.rows; ++r)
      m->score(g.test_users()[r], items, std::span<double>(s.data() + r * t.cols, t.cols));
    for (double v : s)
      if (!std::isfinite(v)) throw Error("model '" + m->family() + "' produced a non-finite score");
    t.scores.push_back(std::move(s));
  }
  return t;
}

/// Output CSVs are unquoted; free text has separators replaced.
std::string csv_escape(std::string s) {
  for (auto& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
    if (ch == ',') ch = ';';
    if (ch == '"') ch = '\'';
  }
  return s;
}

struct ScenarioOutput {
  std::string results;
  std::string scenario_row;
  std::string failure_row;
  bool failed = false;
};

class Runner {
 public:
  Runner(const RunConfig& cfg, const DatasetBundle& bundle, const std::vector<TrainedModel>& models,
         const ScoreTable& scores)
      : cfg_(cfg),
        bundle_(bundle),
        models_(models),
        scores_(scores),
        g_source_(EvaluationSource::from_ground_truth(bundle.ground_truth, bundle.holdout)),
        tie_seed_(derive_seed(cfg.master_seed, "tiebreak")) {
    for (auto p : cfg.policies) policy_weights_.emplace(p, exposure_weights(p, bundle));
  }

  ScenarioOutput run(std::size_t index, const ScenarioId& id) {
    ScenarioOutput out;
    std::string stage = "logger";
    try {
      if (std::find(cfg_.inject_failures.begin(), cfg_.inject_failures.end(), id.key()) != cfg_.inject_failures.end())
        throw Error("injected failure");
      const auto logger = logger_entry(id);
      const auto& src = *logger->source;

      std::optional<ScoreTable> own_scores;
      const ScoreTable* scores = &scores_;
      if (cfg_.retrain_per_scenario) {
        stage = "train";
        own_scores = retrained_scores(id);
        scores = &*own_scores;
      }
      const bool cached = cfg_.cache_references && !cfg_.retrain_per_scenario;

      stage = "sample";
      const auto spec = id.sampler(cfg_);
      const auto set = build_evaluation_set(src, spec, {}, derive_seed(cfg_.master_seed, id.hash(), "sampler"));
      stage = "evaluate";
      const auto metrics = evaluate_models(set, *scores, cfg_.metrics, tie_seed_);

      std::size_t capped = 0, empty = 0, candidates = 0;
      for (const auto& u : set.users) {
        capped += u.capped;
        empty += u.empty_pool;
        candidates += u.positives.size() + u.negatives.size();
      }
      std::size_t n_users = 0, n_excluded = 0;
      for (auto q : cfg_.questions) {
        stage = std::string("reference ") + std::string(to_string(q));
        const auto ref = reference(q, id, *logger, *scores, cached);
        stage = std::string("compare ") + std::string(to_string(q));
        for (std::size_t m = 0; m < cfg_.metrics.size(); ++m) {
          BootstrapOptions b{cfg_.bootstrap_resamples, cfg_.confidence_level,
                             derive_seed(cfg_.master_seed, id.hash(), to_string(q), cfg_.metrics[m].label(), "bootstrap")};
          const auto res = meta_compare(q, metrics[m], ref ? &(*ref)[m] : nullptr, b);
          out.results += id.key() + "," + std::string(to_string(q)) + "," +
                         std::string(to_string(cfg_.metrics[m].kind)) + "," + std::to_string(cfg_.metrics[m].k) + "," +
                         io::format_double(res.mean) + "," + io::format_double(res.ci.low) + "," +
                         io::format_double(res.ci.high) + "," + std::to_string(res.n_users) + "," +
                         std::to_string(res.n_excluded) + "\n";
          if (q == Question::q1 && cfg_.metrics[m] == cfg_.report_metric) {
            n_users = res.n_users;
            n_excluded = res.n_excluded;
          }
        }
      }
      out.scenario_row = scenario_row(index, id, "ok") + "," + std::to_string(n_users) + "," +
                         std::to_string(n_excluded) + "," + std::to_string(capped) + "," + std::to_string(empty) + "," +
                         io::format_double(static_cast<double>(candidates) / std::max<std::size_t>(1, set.rows()), 4) +
                         "," + csv_escape(set.weight_statistic) + "," + set.weight_digest + "," +
                         std::to_string(logger->matrix.repair_count) + "," +
                         io::format_double(logger->matrix.realized_sparsity(), 6) + "\n";
    } catch (const std::exception& e) {
      out = {};
      out.failed = true;
      out.scenario_row = scenario_row(index, id, "failed") + ",,,,,,,,,\n";
      out.failure_row = id.key() + "," + csv_escape(stage) + "," + csv_escape(e.what()) + "\n";
    }
    return out;
  }

 private:
  std::string scenario_row(std::size_t index, const ScenarioId& id, const char* status) const {
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(id.hash()));
    return std::to_string(index) + "," + id.key() + "," + hash + "," + std::string(to_string(id.policy)) + "," +
           sparsity_key(id.sparsity) + "," + std::string(to_string(id.strategy)) + "," +
           (id.n ? std::to_string(*id.n) : std::string()) + "," + status;
  }

  static std::string logger_key(const ScenarioId& id) {
    return std::string(to_string(id.policy)) + "|" + sparsity_key(id.sparsity);
  }

  std::shared_ptr<const LoggerEntry> logger_entry(const ScenarioId& id) {
    return loggers_.get(logger_key(id), [&] {
      auto e = std::make_shared<LoggerEntry>();
      LoggerConfig lc{id.policy, id.sparsity,
                      derive_seed(cfg_.master_seed, "logger", to_string(id.policy), sparsity_key(id.sparsity))};
      e->matrix = simulate_log(bundle_.ground_truth, bundle_.holdout, policy_weights_.at(id.policy), lc);
      e->source.emplace(EvaluationSource::from_logged(e->matrix, bundle_.holdout));
      return std::shared_ptr<const LoggerEntry>(std::move(e));
    });
  }

  MetricsList evaluate_set(const EvaluationSource& src, const SamplerSpec& spec, std::span<const std::size_t> e_map,
                           std::uint64_t seed, const ScoreTable& scores) const {
    const auto set = build_evaluation_set(src, spec, e_map, seed);
    return evaluate_models(set, scores, cfg_.metrics, tie_seed_);
  }

  /// Reference evaluation a question compares against, or null for Q1.
  std::shared_ptr<const MetricsList> reference(Question q, const ScenarioId& id, const LoggerEntry& logger,
                                               const ScoreTable& scores, bool cached) {
    const SamplerSpec full{Strategy::full, std::nullopt, cfg_.zipf_exponent, cfg_.weight_clip};
    std::string key;
    std::function<MetricsList()> make;
    switch (q) {
      case Question::q1: return nullptr;
      case Question::q2:
        key = "L-full|" + logger_key(id);
        make = [&] { return evaluate_set(*logger.source, full, {}, 0, scores); };
        break;
      case Question::q3: {
        const auto spec = id.sampler(cfg_);
        std::uint64_t seed = derive_seed(cfg_.master_seed, "G", spec.label());
        key = "G|" + spec.label();
        if (id.strategy == Strategy::random_at_e) {
          seed = derive_seed(seed, logger_key(id));
          key += "|" + logger_key(id);
        }
        make = [&, spec, seed] {
          return evaluate_set(g_source_, spec, logger.matrix.exposed_negatives, seed, scores);
        };
        break;
      }
      case Question::q4:
        key = "G-full";
        make = [&] { return evaluate_set(g_source_, full, {}, 0, scores); };
        break;
    }
    if (!cached) return std::make_shared<const MetricsList>(make());
    return references_.get(key, [&] { return std::make_shared<const MetricsList>(make()); });
  }

  ScoreTable retrained_scores(const ScenarioId& id) const {
    std::vector<std::unique_ptr<Scorer>> fitted;
    std::vector<const Scorer*> ptrs;
    std::vector<std::string> names;
    for (std::size_t m = 0; m < cfg_.models.size(); ++m) {
      fitted.push_back(fit_family(cfg_.models[m].family, bundle_.train_log, models_[m].params,
                                  derive_seed(cfg_.master_seed, id.hash(), "fit", cfg_.models[m].name)));
      ptrs.push_back(fitted.back().get());
      names.push_back(cfg_.models[m].name);
    }
    return score_table(ptrs, names, bundle_.ground_truth);
  }

  const RunConfig& cfg_;
  const DatasetBundle& bundle_;
  const std::vector<TrainedModel>& models_;
  const ScoreTable& scores_;
  EvaluationSource g_source_;
  std::uint64_t tie_seed_;
  std::map<LoggerPolicy, ItemWeights> policy_weights_;
  Memo<LoggerEntry> loggers_;
  Memo<MetricsList> references_;
};

/// Runs fn(i) for i in [0, n) on `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, n); ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json design_choices(const RunConfig& c) {
  return {
      {"popularity_sampler_statistic", "per-item exposure count in the evaluated source matrix, Zipf rank weights"},
      {"positivity_sampler_statistic", "per-item positive count in the evaluated source matrix, Zipf rank weights"},
      {"skew_weights", "exposure count + 1"},
      {"wtd_formula", "clip(q/p): p = (rows exposing item + 1) / (rows + 1); q = |I| (holdout cells of item + 1) / (|H| + |I|)"},
      {"wtdh_formula", "clip(1/p) with the same p"},
      {"weight_clip", {c.weight_clip.lo, c.weight_clip.hi}},
      {"zipf_exponent", c.zipf_exponent},
      {"logger_popularity_weights", "train-log interaction count + 1"},
      {"logger_positivity_weights", "ground-truth positive count + 1"},
      {"logger_retention", "round((1 - sparsity) * eligible) cells per user, weighted without replacement"},
      {"tie_tolerance", "values equal after rounding to 12 decimal digits"},
      {"score_tie_break", "per-item keys hashed from a per-user seed shared by every scenario and model"},
      {"tau_variant", "Kendall tau-b, reported in [-1, 1]; users with an all-tied side excluded and counted"},
      {"bootstrap", "percentile interval of the user mean, linear interpolation"},
      {"q3_reference_seed", "derived from sampler label only (independent of the logger) except Random@e"},
      {"models_trained", c.retrain_per_scenario ? "per scenario" : "once per dataset"},
      {"factor_score_cold_start", "users or items absent from training score 0"},
  };
}

}  // namespace

RunSummary run_grid(const RunConfig& config_in, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = config_in;
  if (options.seed) cfg.master_seed = *options.seed;
  if (options.out_dir) cfg.out_dir = *options.out_dir;
  if (options.workers) cfg.workers = *options.workers;
  if (options.search_iterations)
    for (auto& m : cfg.models)
      if (m.search) m.search->iterations = *options.search_iterations;
  cfg.validate();
  std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  auto log = [&](const std::string& msg) {
    if (options.progress) *options.progress << msg << std::endl;
  };

  const auto grid = enumerate_grid(cfg);
  log("building dataset (" + cfg.dataset.kind + ")");
  const DatasetBundle bundle = build_dataset(cfg);
  bundle.validate();
  const auto out = cfg.out_dir;
  std::filesystem::create_directories(out / "models");

  // Models: trained once on the train log, in parallel across models.
  std::vector<TrainedModel> models(cfg.models.size());
  parallel_for(cfg.models.size(), workers, [&](std::size_t m) {
    const auto& spec = cfg.models[m];
    const auto path = out / "models" / (spec.name + ".model");
    const auto meta_path = out / "models" / (spec.name + ".json");
    if (options.reuse_models && std::filesystem::exists(path) && std::filesystem::exists(meta_path)) {
      std::ifstream in(path, std::ios::binary);
      models[m].scorer = load_scorer(in);
      const auto meta = json::parse(io::read_file(meta_path));
      models[m].params = meta.at("params").get<ParamSet>();
      models[m].search = meta.at("search");
      if (models[m].scorer->family() != spec.family)
        throw Error("saved model '" + spec.name + "' does not match family " + spec.family);
      return;
    }
    log("training " + spec.name);
    models[m] = train_model(spec, bundle.train_log, cfg.master_seed);
    std::ostringstream buf(std::ios::binary);
    models[m].scorer->save(buf);
    io::write_file(path, buf.str());
    io::write_file(meta_path,
                   json{{"name", spec.name}, {"family", spec.family}, {"params", models[m].params}, {"search", models[m].search}}
                           .dump(2) + "\n");
  });
  std::vector<const Scorer*> ptrs;
  std::vector<std::string> names;
  for (std::size_t m = 0; m < models.size(); ++m) {
    ptrs.push_back(models[m].scorer.get());
    names.push_back(cfg.models[m].name);
  }
  log("scoring " + std::to_string(bundle.ground_truth.rows()) + " test users");
  const ScoreTable scores = score_table(ptrs, names, bundle.ground_truth);

  Runner runner(cfg, bundle, models, scores);

  std::ofstream results(out / "results.csv", std::ios::binary);
  std::ofstream scenarios(out / "scenarios.csv", std::ios::binary);
  std::ofstream failures(out / "failures.csv", std::ios::binary);
  if (!results || !scenarios || !failures) throw Error("cannot write to " + out.string());
  results << "scenario_id,question,metric,k,mean,ci_low,ci_high,n_users,n_excluded\n";
  scenarios << "index,scenario_id,hash,policy,sparsity,strategy,n,status,n_users,n_excluded,capped_users,"
               "empty_pool_users,mean_candidates,weight_statistic,weight_digest,logger_repairs,realized_sparsity\n";
  failures << "scenario_id,stage,message\n";

  // Workers fill slots; this thread writes them in grid order. A bounded
  // window keeps at most a few scenarios buffered.
  const std::size_t window = 4 * workers;
  std::vector<std::optional<ScenarioOutput>> slots(grid.size());
  std::mutex mu;
  std::condition_variable cv;
  std::size_t written = 0;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return i < written + window; });
      }
      auto res = runner.run(i, grid[i]);
      {
        std::lock_guard lock(mu);
        slots[i] = std::move(res);
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ScenarioOutput res;
    {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return slots[i].has_value(); });
      res = std::move(*slots[i]);
      slots[i].reset();
      written = i + 1;
    }
    cv.notify_all();
    results << res.results;
    scenarios << res.scenario_row;
    if (res.failed) {
      ++failed;
      failures << res.failure_row;
      log("FAILED " + grid[i].key() + ": " + res.failure_row);
    }
    if ((i + 1) % 25 == 0 || i + 1 == grid.size())
      log("scenarios " + std::to_string(i + 1) + "/" + std::to_string(grid.size()));
  }
  for (auto& t : pool) t.join();
  results.close();
  scenarios.close();
  failures.close();

  json model_info = json::array();
  for (std::size_t m = 0; m < models.size(); ++m)
    model_info.push_back({{"name", cfg.models[m].name},
                          {"family", cfg.models[m].family},
                          {"params", models[m].params},
                          {"tuned", cfg.models[m].search.has_value()}});
  const auto train = train_statistics(bundle);
  const auto test = test_statistics(bundle);
  auto stats = [](const SplitStatistics& s) {
    return json{{"users", s.users}, {"items", s.items}, {"positives", s.positives}, {"negatives", s.negatives}};
  };
  json manifest = {
      {"software", "sampleval"},
      {"version", kVersion},
      {"master_seed", cfg.master_seed},
      {"config", to_json(cfg)},
      {"design_choices", design_choices(cfg)},
      {"dataset",
       {{"provenance", bundle.provenance.kind},
        {"description", bundle.provenance.description},
        {"train", stats(train)},
        {"test", stats(test)},
        {"holdout_cells", bundle.holdout.size()}}},
      {"models", model_info},
      {"scenarios", grid.size()},
      {"failed_scenarios", failed},
      {"outputs", {"results.csv", "scenarios.csv", "failures.csv", "models/"}},
  };
  io::write_file(out / "manifest.json", manifest.dump(2) + "\n");

  RunSummary summary;
  summary.scenarios = grid.size();
  summary.failed = failed;
  summary.out_dir = out;
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

}  // namespace sampleval
