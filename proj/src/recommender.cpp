#include "sampleval/recommender.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include <json.hpp>

#include "sampleval/evaluation.hpp"
#include "sampleval/weighted_sampling.hpp"

namespace sampleval {

using nlohmann::json;
static_assert(std::endian::native == std::endian::little, "model serialization assumes a little-endian host");

// ---------------------------------------------------------------------------
// Serialization helpers

namespace {

struct ArrayHeader {
  std::string name;
  std::size_t size;
};

void write_model(std::ostream& out, json header, const std::vector<std::pair<std::string, std::vector<double>>>& arrays) {
  json spec = json::array();
  for (const auto& [name, data] : arrays) spec.push_back({{"name", name}, {"size", data.size()}});
  header["arrays"] = spec;
  header["format"] = "sampleval-model/1";
  out << header.dump() << '\n';
  for (const auto& [name, data] : arrays)
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw Error("model serialization failed");
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
  std::vector<double> v(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[k++] = m(r, c);
  return v;
}

Eigen::MatrixXd unflatten(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) throw Error("model file: array size does not match its shape");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t k = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[k++];
  return m;
}

Eigen::MatrixXd initial_factors(std::size_t rows, std::size_t dim, double scale, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  return m;
}

/// Per-user sorted positive item lists.
std::vector<std::vector<ItemId>> positives_by_user(const TrainLog& log) {
  std::vector<std::vector<ItemId>> pos(log.n_users);
  for (const auto& e : log.entries)
    if (e.label == Label::positive) pos[e.user].push_back(e.item);
  for (auto& p : pos) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
  return pos;
}

std::vector<std::vector<UserId>> positives_by_item(const std::vector<std::vector<ItemId>>& by_user, std::size_t n_items) {
  std::vector<std::vector<UserId>> out(n_items);
  for (std::size_t u = 0; u < by_user.size(); ++u)
    for (auto i : by_user[u]) out[i].push_back(static_cast<UserId>(u));
  return out;
}

}  // namespace

void Scorer::score(UserId user, std::span<const ItemId> items, std::span<double> out) const {
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = score(user, items[k]);
}

// ---------------------------------------------------------------------------
// Baselines

namespace {

class PopularityScorer final : public Scorer {
 public:
  explicit PopularityScorer(std::vector<double> counts) : counts_(std::move(counts)) {}
  std::string family() const override { return "popularity"; }
  double score(UserId, ItemId item) const override { return item < counts_.size() ? counts_[item] : 0.0; }
  void save(std::ostream& out) const override { write_model(out, {{"family", family()}}, {{"counts", counts_}}); }

 private:
  std::vector<double> counts_;
};

class RandomScorer final : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  std::string family() const override { return "random"; }
  double score(UserId user, ItemId item) const override {
    return to_unit_open(derive_seed(seed_, "random-score", user, item));
  }
  void save(std::ostream& out) const override {
    write_model(out, {{"family", family()}, {"seed", seed_}}, {});
  }

 private:
  std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<Scorer> fit_popularity(const TrainLog& log) {
  if (log.entries.empty()) throw Error("fit_popularity: empty train log");
  const auto counts = log.item_interaction_counts();
  return std::make_unique<PopularityScorer>(std::vector<double>(counts.begin(), counts.end()));
}

std::unique_ptr<Scorer> fit_random(std::uint64_t seed) { return std::make_unique<RandomScorer>(seed); }

// ---------------------------------------------------------------------------
// SAR

double cosine_similarity(double c_ij, double c_ii, double c_jj) {
  return (c_ii > 0.0 && c_jj > 0.0) ? c_ij / std::sqrt(c_ii * c_jj) : 0.0;
}

double jaccard_similarity(double c_ij, double c_ii, double c_jj) {
  const double denom = c_ii + c_jj - c_ij;
  return denom > 0.0 ? c_ij / denom : 0.0;
}

SarScorer::SarScorer(Similarity sim, std::size_t n_items, std::vector<std::vector<ItemId>> user_positives,
                     std::vector<std::vector<std::pair<ItemId, double>>> sim_rows)
    : sim_(sim), n_items_(n_items), user_positives_(std::move(user_positives)), rows_(std::move(sim_rows)) {}

std::string SarScorer::family() const { return sim_ == Similarity::cosine ? "sar_cosine" : "sar_jaccard"; }

double SarScorer::similarity(ItemId a, ItemId b) const {
  if (a >= rows_.size()) return 0.0;
  const auto& row = rows_[a];
  auto it = std::lower_bound(row.begin(), row.end(), b, [](const auto& p, ItemId v) { return p.first < v; });
  return (it != row.end() && it->first == b) ? it->second : 0.0;
}

double SarScorer::score(UserId user, ItemId item) const {
  if (user >= user_positives_.size()) return 0.0;
  double s = 0.0;
  for (auto j : user_positives_[user]) s += similarity(j, item);
  return s;
}

void SarScorer::score(UserId user, std::span<const ItemId> items, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  if (user >= user_positives_.size()) return;
  std::vector<double> acc(n_items_, 0.0);
  for (auto j : user_positives_[user])
    for (const auto& [i, v] : rows_[j]) acc[i] += v;
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = items[k] < n_items_ ? acc[items[k]] : 0.0;
}

void SarScorer::save(std::ostream& out) const {
  std::vector<double> pos_off{0.0}, pos_items, row_off{0.0}, row_items, row_vals;
  for (const auto& p : user_positives_) {
    for (auto i : p) pos_items.push_back(i);
    pos_off.push_back(static_cast<double>(pos_items.size()));
  }
  for (const auto& r : rows_) {
    for (const auto& [i, v] : r) {
      row_items.push_back(i);
      row_vals.push_back(v);
    }
    row_off.push_back(static_cast<double>(row_items.size()));
  }
  write_model(out, {{"family", family()}, {"n_items", n_items_}},
              {{"positive_offsets", pos_off},
               {"positive_items", pos_items},
               {"similarity_offsets", row_off},
               {"similarity_items", row_items},
               {"similarity_values", row_vals}});
}

std::unique_ptr<SarScorer> fit_sar(const TrainLog& log, Similarity similarity) {
  auto by_user = positives_by_user(log);
  const auto by_item = positives_by_item(by_user, log.n_items);
  std::size_t n_pos = 0;
  for (const auto& p : by_user) n_pos += p.size();
  if (n_pos == 0) throw Error("fit_sar: train log has no positives");

  std::vector<double> diag(log.n_items);
  for (std::size_t i = 0; i < log.n_items; ++i) diag[i] = static_cast<double>(by_item[i].size());

  std::vector<std::vector<std::pair<ItemId, double>>> rows(log.n_items);
  std::vector<double> acc(log.n_items, 0.0);
  std::vector<ItemId> touched;
  for (std::size_t j = 0; j < log.n_items; ++j) {
    touched.clear();
    for (auto u : by_item[j])
      for (auto i : by_user[u]) {
        if (acc[i] == 0.0) touched.push_back(i);
        acc[i] += 1.0;
      }
    std::sort(touched.begin(), touched.end());
    auto& row = rows[j];
    row.reserve(touched.size());
    for (auto i : touched) {
      const double c = acc[i];
      acc[i] = 0.0;
      const double s = similarity == Similarity::cosine ? cosine_similarity(c, diag[j], diag[i])
                                                        : jaccard_similarity(c, diag[j], diag[i]);
      row.emplace_back(i, s);
    }
  }
  return std::make_unique<SarScorer>(similarity, log.n_items, std::move(by_user), std::move(rows));
}

// ---------------------------------------------------------------------------
// Factor models

FactorScorer::FactorScorer(std::string family, Eigen::MatrixXd users, Eigen::MatrixXd items)
    : family_(std::move(family)), users_(std::move(users)), items_(std::move(items)) {
  if (users_.cols() != items_.cols()) throw Error("factor model: user and item factor widths differ");
}

double FactorScorer::score(UserId user, ItemId item) const {
  if (user >= users_.rows() || item >= items_.rows()) return 0.0;
  return users_.row(user).dot(items_.row(item));
}

void FactorScorer::score(UserId user, std::span<const ItemId> items, std::span<double> out) const {
  for (std::size_t k = 0; k < items.size(); ++k) out[k] = score(user, items[k]);
}

void FactorScorer::save(std::ostream& out) const {
  write_model(out,
              {{"family", family_},
               {"n_users", users_.rows()},
               {"n_items", items_.rows()},
               {"latent_dim", users_.cols()}},
              {{"user_factors", flatten(users_)}, {"item_factors", flatten(items_)}});
}

double als_objective(const TrainLog& log, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const AlsParams& params) {
  const double alpha = params.confidence_alpha;
  // sum over every cell of s^2, then correct the positive cells.
  const Eigen::MatrixXd gx = X.transpose() * X;
  const Eigen::MatrixXd gy = Y.transpose() * Y;
  double total = (gx.cwiseProduct(gy)).sum();
  const auto pos = positives_by_user(log);
  for (std::size_t u = 0; u < pos.size(); ++u)
    for (auto i : pos[u]) {
      const double s = X.row(static_cast<Eigen::Index>(u)).dot(Y.row(i));
      total += (1.0 + alpha) * (1.0 - s) * (1.0 - s) - s * s;
    }
  const double reg = std::max(params.regularization, 1e-8);
  return total + reg * (X.squaredNorm() + Y.squaredNorm());
}

namespace {

/// Solves every row of `target` given the fixed `other` factors.
void als_half_sweep(Eigen::MatrixXd& target, const Eigen::MatrixXd& other,
                    const std::vector<std::vector<ItemId>>& links, double alpha, double reg) {
  const auto d = other.cols();
  const Eigen::MatrixXd gram = other.transpose() * other;
  Eigen::MatrixXd a(d, d);
  Eigen::VectorXd b(d);
  for (std::size_t r = 0; r < links.size(); ++r) {
    a = gram;
    a.diagonal().array() += reg;
    b.setZero();
    for (auto j : links[r]) {
      const auto y = other.row(j);
      a.noalias() += alpha * y.transpose() * y;
      b.noalias() += (1.0 + alpha) * y.transpose();
    }
    target.row(static_cast<Eigen::Index>(r)) = a.llt().solve(b).transpose();
  }
}

}  // namespace

AlsResult fit_als(const TrainLog& log, const AlsParams& params, std::uint64_t seed) {
  if (params.latent_dim < 1) throw Error("fit_als: latent_dim must be >= 1");
  if (params.iterations < 1) throw Error("fit_als: iterations must be >= 1");
  if (params.confidence_alpha < 0.0) throw Error("fit_als: confidence_alpha must be >= 0");
  AlsResult res;
  double reg = params.regularization;
  if (!(reg >= 1e-8)) {
    reg = 1e-8;
    res.regularization_floored = true;
  }
  AlsParams effective = params;
  effective.regularization = reg;

  const auto by_user = positives_by_user(log);
  const auto by_item_u = positives_by_item(by_user, log.n_items);
  std::vector<std::vector<ItemId>> by_item(by_item_u.size());
  for (std::size_t i = 0; i < by_item_u.size(); ++i) by_item[i].assign(by_item_u[i].begin(), by_item_u[i].end());

  Eigen::MatrixXd X = initial_factors(log.n_users, params.latent_dim, 0.01, derive_seed(seed, "als-users"));
  Eigen::MatrixXd Y = initial_factors(log.n_items, params.latent_dim, 0.01, derive_seed(seed, "als-items"));
  for (std::size_t it = 0; it < params.iterations; ++it) {
    als_half_sweep(X, Y, by_user, params.confidence_alpha, reg);
    als_half_sweep(Y, X, by_item, params.confidence_alpha, reg);
    res.objective.push_back(als_objective(log, X, Y, effective));
    if (!std::isfinite(res.objective.back())) throw Error("fit_als: objective is not finite");
  }
  res.model = std::make_unique<FactorScorer>("als", std::move(X), std::move(Y));
  return res;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Gradient of the triple loss; shared by training and the public helper.
template <typename U, typename I, typename J, typename DU, typename DI, typename DJ>
void triple_gradient(const U& u, const I& i, const J& j, double reg, DU&& du, DI&& di, DJ&& dj) {
  const double x = u.dot(i - j);
  const double g = sigmoid(-x);  // -d/dx ln sigma(x)
  du = -g * (i - j) + reg * u;
  di = -g * u + reg * i;
  dj = g * u + reg * j;
}

}  // namespace

double bpr_triple_loss(const Eigen::VectorXd& u, const Eigen::VectorXd& i, const Eigen::VectorXd& j, double reg) {
  const double x = u.dot(i - j);
  // -ln sigma(x) = ln(1 + e^-x), evaluated stably.
  const double nll = x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
  return nll + 0.5 * reg * (u.squaredNorm() + i.squaredNorm() + j.squaredNorm());
}

BprGradient bpr_triple_gradient(const Eigen::VectorXd& u, const Eigen::VectorXd& i, const Eigen::VectorXd& j,
                                double reg) {
  BprGradient g{Eigen::VectorXd(u.size()), Eigen::VectorXd(u.size()), Eigen::VectorXd(u.size())};
  triple_gradient(u, i, j, reg, g.du, g.di, g.dj);
  return g;
}

std::unique_ptr<FactorScorer> fit_bpr(const TrainLog& log, const BprParams& params, std::uint64_t seed) {
  if (params.latent_dim < 1 || !(params.learning_rate > 0.0) || params.regularization < 0.0 ||
      params.negatives_per_positive < 1)
    throw Error("fit_bpr: hyperparameters must be positive");
  const auto by_user = positives_by_user(log);
  std::vector<std::pair<UserId, ItemId>> pairs;
  for (std::size_t u = 0; u < by_user.size(); ++u)
    for (auto i : by_user[u]) pairs.emplace_back(static_cast<UserId>(u), i);
  if (pairs.empty() && params.epochs > 0) throw Error("fit_bpr: train log has no positives");

  Eigen::MatrixXd P = initial_factors(log.n_users, params.latent_dim, 0.1, derive_seed(seed, "bpr-users"));
  Eigen::MatrixXd Q = initial_factors(log.n_items, params.latent_dim, 0.1, derive_seed(seed, "bpr-items"));
  const auto d = static_cast<Eigen::Index>(params.latent_dim);
  Eigen::VectorXd du(d), di(d), dj(d);
  std::vector<std::size_t> order(pairs.size());
  const double lr = params.learning_rate;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    Rng rng(derive_seed(seed, "bpr-epoch", epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (auto k : order) {
      const auto [u, i] = pairs[k];
      const auto& pos = by_user[u];
      if (pos.size() >= log.n_items) continue;
      for (std::size_t s = 0; s < params.negatives_per_positive; ++s) {
        ItemId j = 0;
        do {
          j = static_cast<ItemId>(rng.below(log.n_items));
        } while (std::binary_search(pos.begin(), pos.end(), j));
        triple_gradient(P.row(u).transpose(), Q.row(i).transpose(), Q.row(j).transpose(), params.regularization, du,
                        di, dj);
        P.row(u) -= lr * du.transpose();
        Q.row(i) -= lr * di.transpose();
        Q.row(j) -= lr * dj.transpose();
      }
    }
    if (!P.allFinite() || !Q.allFinite())
      throw Error("fit_bpr: diverged (non-finite factors) at epoch " + std::to_string(epoch) +
                  "; lower learning_rate");
  }
  return std::make_unique<FactorScorer>("bpr", std::move(P), std::move(Q));
}

// ---------------------------------------------------------------------------
// Loading

std::unique_ptr<Scorer> load_scorer(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("model file: missing header");
  const json header = json::parse(line);
  if (header.value("format", "") != "sampleval-model/1") throw Error("model file: unknown format");
  std::map<std::string, std::vector<double>> arrays;
  for (const auto& a : header.at("arrays")) {
    std::vector<double> data(a.at("size").get<std::size_t>());
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw Error("model file: truncated array '" + a.at("name").get<std::string>() + "'");
    arrays.emplace(a.at("name").get<std::string>(), std::move(data));
  }
  const auto family = header.at("family").get<std::string>();
  if (family == "popularity") return std::make_unique<PopularityScorer>(arrays.at("counts"));
  if (family == "random") return std::make_unique<RandomScorer>(header.at("seed").get<std::uint64_t>());
  if (family == "sar_cosine" || family == "sar_jaccard") {
    const auto n_items = header.at("n_items").get<std::size_t>();
    const auto& po = arrays.at("positive_offsets");
    const auto& pi = arrays.at("positive_items");
    const auto& ro = arrays.at("similarity_offsets");
    const auto& ri = arrays.at("similarity_items");
    const auto& rv = arrays.at("similarity_values");
    std::vector<std::vector<ItemId>> pos(po.size() - 1);
    for (std::size_t u = 0; u + 1 < po.size(); ++u)
      for (auto k = static_cast<std::size_t>(po[u]); k < static_cast<std::size_t>(po[u + 1]); ++k)
        pos[u].push_back(static_cast<ItemId>(pi[k]));
    std::vector<std::vector<std::pair<ItemId, double>>> rows(ro.size() - 1);
    for (std::size_t j = 0; j + 1 < ro.size(); ++j)
      for (auto k = static_cast<std::size_t>(ro[j]); k < static_cast<std::size_t>(ro[j + 1]); ++k)
        rows[j].emplace_back(static_cast<ItemId>(ri[k]), rv[k]);
    return std::make_unique<SarScorer>(family == "sar_cosine" ? Similarity::cosine : Similarity::jaccard, n_items,
                                       std::move(pos), std::move(rows));
  }
  // Factor models (als, bpr and named ALS variants).
  const auto nu = header.at("n_users").get<std::size_t>();
  const auto ni = header.at("n_items").get<std::size_t>();
  const auto d = header.at("latent_dim").get<std::size_t>();
  return std::make_unique<FactorScorer>(family, unflatten(arrays.at("user_factors"), nu, d),
                                        unflatten(arrays.at("item_factors"), ni, d));
}

// ---------------------------------------------------------------------------
// Random search

void HyperparamSpace::validate() const {
  if (iterations < 1) throw Error("hyperparameter space: iterations must be >= 1");
  if (folds < 2) throw Error("hyperparameter space: folds must be >= 2");
  if (cutoff < 1) throw Error("hyperparameter space: cutoff must be >= 1");
  for (const auto& r : ranges) {
    using K = ParamRange::Kind;
    if (r.kind == K::categorical) {
      if (r.choices.empty()) throw Error("hyperparameter '" + r.name + "': empty choice list");
    } else if (!(r.lo <= r.hi) || ((r.kind == K::log_uniform || r.kind == K::int_log_uniform) && !(r.lo > 0.0))) {
      throw Error("hyperparameter '" + r.name + "': invalid range");
    }
  }
}

ParamSet HyperparamSpace::draw(Rng& rng) const {
  using K = ParamRange::Kind;
  ParamSet p;
  for (const auto& r : ranges) {
    double v = 0.0;
    switch (r.kind) {
      case K::log_uniform: v = std::exp(std::log(r.lo) + rng.uniform() * (std::log(r.hi) - std::log(r.lo))); break;
      case K::uniform: v = r.lo + rng.uniform() * (r.hi - r.lo); break;
      case K::int_log_uniform:
        v = std::round(std::exp(std::log(r.lo) + rng.uniform() * (std::log(r.hi) - std::log(r.lo))));
        break;
      case K::int_uniform:
        v = r.lo + static_cast<double>(rng.below(static_cast<std::uint64_t>(r.hi - r.lo) + 1));
        break;
      case K::categorical: v = r.choices[rng.below(r.choices.size())]; break;
    }
    p[r.name] = v;
  }
  return p;
}

namespace {

struct FoldData {
  TrainLog train;
  std::vector<UserId> users;
  std::vector<std::vector<ItemId>> candidates;
  std::vector<std::vector<std::uint8_t>> is_positive;
  std::vector<std::size_t> n_positives;
};

std::vector<FoldData> make_folds(const HyperparamSpace& space, const TrainLog& log, std::uint64_t seed) {
  const auto by_user = positives_by_user(log);
  std::vector<std::size_t> pos_idx;
  for (std::size_t k = 0; k < log.entries.size(); ++k)
    if (log.entries[k].label == Label::positive) pos_idx.push_back(k);
  if (pos_idx.size() < space.folds) throw Error("random_search: fewer positives than folds");
  Rng rng(derive_seed(seed, "folds"));
  rng.shuffle(pos_idx);
  std::vector<int> fold_of(log.entries.size(), -1);
  for (std::size_t k = 0; k < pos_idx.size(); ++k) fold_of[pos_idx[k]] = static_cast<int>(k % space.folds);

  std::vector<FoldData> folds(space.folds);
  for (std::size_t f = 0; f < space.folds; ++f) {
    auto& fd = folds[f];
    fd.train.n_users = log.n_users;
    fd.train.n_items = log.n_items;
    fd.train.has_weights = log.has_weights;
    std::vector<std::vector<ItemId>> held(log.n_users);
    for (std::size_t k = 0; k < log.entries.size(); ++k) {
      if (fold_of[k] == static_cast<int>(f))
        held[log.entries[k].user].push_back(log.entries[k].item);
      else
        fd.train.entries.push_back(log.entries[k]);
    }
    for (std::size_t u = 0; u < log.n_users; ++u) {
      if (held[u].empty()) continue;
      // Fold-local uniform negatives: items that are not positives of u.
      std::vector<ItemId> non_pos;
      const auto& pos = by_user[u];
      for (std::size_t i = 0; i < log.n_items; ++i)
        if (!std::binary_search(pos.begin(), pos.end(), static_cast<ItemId>(i))) non_pos.push_back(static_cast<ItemId>(i));
      Rng nrng(derive_seed(seed, "fold-negatives", f, u));
      const auto picked = uniform_sample_without_replacement(non_pos.size(), space.validation_negatives, nrng);
      std::sort(held[u].begin(), held[u].end());
      std::vector<ItemId> cand = held[u];
      std::vector<std::uint8_t> flag(held[u].size(), 1);
      for (auto k : picked) {
        cand.push_back(non_pos[k]);
        flag.push_back(0);
      }
      fd.users.push_back(static_cast<UserId>(u));
      fd.n_positives.push_back(held[u].size());
      fd.candidates.push_back(std::move(cand));
      fd.is_positive.push_back(std::move(flag));
    }
  }
  return folds;
}

double validation_ndcg(const Scorer& model, const FoldData& fd, std::size_t cutoff, std::uint64_t seed) {
  if (fd.users.empty()) return 0.0;
  double total = 0.0;
  std::vector<double> scores;
  std::vector<Col> cols;
  std::vector<std::uint8_t> rel;
  for (std::size_t k = 0; k < fd.users.size(); ++k) {
    const auto& cand = fd.candidates[k];
    scores.resize(cand.size());
    model.score(fd.users[k], cand, scores);
    cols.assign(cand.begin(), cand.end());
    const auto ranked = rank_candidates(scores, cols, derive_seed(seed, "validation-tiebreak", fd.users[k]));
    rel.resize(ranked.size());
    for (std::size_t p = 0; p < ranked.size(); ++p) {
      const auto pos = std::find(cols.begin(), cols.end(), ranked[p]) - cols.begin();
      rel[p] = fd.is_positive[k][static_cast<std::size_t>(pos)];
    }
    total += metric_at_k(MetricKind::ndcg, rel, fd.n_positives[k], cutoff);
  }
  return total / static_cast<double>(fd.users.size());
}

}  // namespace

SearchResult random_search(const FitFunction& fit, const HyperparamSpace& space, const TrainLog& log,
                           std::uint64_t seed) {
  space.validate();
  const auto folds = make_folds(space, log, seed);
  Rng draw_rng(derive_seed(seed, "search-draws"));
  SearchResult res;
  res.best_score = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (std::size_t t = 0; t < space.iterations; ++t) {
    ParamSet params = space.draw(draw_rng);
    double score = 0.0;
    try {
      for (std::size_t f = 0; f < folds.size(); ++f) {
        auto model = fit(folds[f].train, params, derive_seed(seed, "search-fit", t, f));
        score += validation_ndcg(*model, folds[f], space.cutoff, seed);
      }
      score /= static_cast<double>(folds.size());
    } catch (const std::exception& e) {
      score = -std::numeric_limits<double>::infinity();
      res.log.push_back("trial " + std::to_string(t) + " failed: " + e.what());
    }
    res.trials.emplace_back(params, score);
    if (!have_best || score > res.best_score) {
      if (std::isfinite(score) || !have_best) {
        res.best = params;
        res.best_score = score;
        have_best = std::isfinite(score);
      }
    }
  }
  if (!have_best) throw Error("random_search: every configuration failed to train");
  return res;
}

AlsParams als_params_from(const ParamSet& p, AlsParams base) {
  if (auto it = p.find("latent_dim"); it != p.end()) base.latent_dim = static_cast<std::size_t>(it->second);
  if (auto it = p.find("regularization"); it != p.end()) base.regularization = it->second;
  if (auto it = p.find("confidence_alpha"); it != p.end()) base.confidence_alpha = it->second;
  if (auto it = p.find("iterations"); it != p.end()) base.iterations = static_cast<std::size_t>(it->second);
  return base;
}

BprParams bpr_params_from(const ParamSet& p, BprParams base) {
  if (auto it = p.find("latent_dim"); it != p.end()) base.latent_dim = static_cast<std::size_t>(it->second);
  if (auto it = p.find("learning_rate"); it != p.end()) base.learning_rate = it->second;
  if (auto it = p.find("regularization"); it != p.end()) base.regularization = it->second;
  if (auto it = p.find("epochs"); it != p.end()) base.epochs = static_cast<std::size_t>(it->second);
  if (auto it = p.find("negatives_per_positive"); it != p.end())
    base.negatives_per_positive = static_cast<std::size_t>(it->second);
  return base;
}

HyperparamSpace default_als_space() {
  using K = ParamRange::Kind;
  HyperparamSpace s;
  s.ranges = {{"latent_dim", K::int_log_uniform, 4, 64, {}},
              {"regularization", K::log_uniform, 1e-3, 10.0, {}},
              {"confidence_alpha", K::log_uniform, 0.5, 50.0, {}}};
  return s;
}

HyperparamSpace default_bpr_space() {
  using K = ParamRange::Kind;
  HyperparamSpace s;
  s.ranges = {{"latent_dim", K::int_log_uniform, 4, 64, {}},
              {"learning_rate", K::log_uniform, 5e-3, 0.2, {}},
              {"regularization", K::log_uniform, 1e-4, 0.1, {}},
              {"epochs", K::int_uniform, 10, 60, {}},
              {"negatives_per_positive", K::categorical, 0, 0, {1, 2, 4}}};
  return s;
}

}  // namespace sampleval
