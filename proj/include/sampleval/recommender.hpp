#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sampleval/common.hpp"
#include "sampleval/dataset.hpp"
#include "sampleval/rng.hpp"

namespace sampleval {

/// A fitted model. Scores are pure functions of (user, item); users or items
/// outside the training grid score 0.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::string family() const = 0;
  virtual double score(UserId user, ItemId item) const = 0;
  virtual void score(UserId user, std::span<const ItemId> items, std::span<double> out) const;

  /// JSON header line followed by flat little-endian float64 arrays.
  virtual void save(std::ostream& out) const = 0;
};

std::unique_ptr<Scorer> load_scorer(std::istream& in);

// --- Baselines --------------------------------------------------------------

/// score(u, i) = number of train-log entries for item i.
std::unique_ptr<Scorer> fit_popularity(const TrainLog& log);

/// score(u, i) = hash(seed, u, i) mapped to (0, 1).
std::unique_ptr<Scorer> fit_random(std::uint64_t seed);

// --- SAR --------------------------------------------------------------------

enum class Similarity { cosine, jaccard };

/// Item-item similarity from the positive co-occurrence matrix C = A^T A,
/// stored sparsely by row.
class SarScorer final : public Scorer {
 public:
  SarScorer(Similarity sim, std::size_t n_items, std::vector<std::vector<ItemId>> user_positives,
            std::vector<std::vector<std::pair<ItemId, double>>> sim_rows);

  std::string family() const override;
  double score(UserId user, ItemId item) const override;
  void score(UserId user, std::span<const ItemId> items, std::span<double> out) const override;
  void save(std::ostream& out) const override;

  double similarity(ItemId a, ItemId b) const;
  std::size_t n_items() const { return n_items_; }

 private:
  Similarity sim_;
  std::size_t n_items_;
  std::vector<std::vector<ItemId>> user_positives_;
  std::vector<std::vector<std::pair<ItemId, double>>> rows_;  // sorted by item
};

std::unique_ptr<SarScorer> fit_sar(const TrainLog& log, Similarity similarity);

/// Closed forms on co-occurrence counts (0 when undefined).
double cosine_similarity(double c_ij, double c_ii, double c_jj);
double jaccard_similarity(double c_ij, double c_ii, double c_jj);

// --- Factor models ----------------------------------------------------------

class FactorScorer final : public Scorer {
 public:
  FactorScorer(std::string family, Eigen::MatrixXd users, Eigen::MatrixXd items);

  std::string family() const override { return family_; }
  double score(UserId user, ItemId item) const override;
  void score(UserId user, std::span<const ItemId> items, std::span<double> out) const override;
  void save(std::ostream& out) const override;

  const Eigen::MatrixXd& user_factors() const { return users_; }
  const Eigen::MatrixXd& item_factors() const { return items_; }

 private:
  std::string family_;
  Eigen::MatrixXd users_;  // n_users x d
  Eigen::MatrixXd items_;  // n_items x d
};

struct AlsParams {
  std::size_t latent_dim = 16;
  double regularization = 0.1;
  double confidence_alpha = 10.0;
  std::size_t iterations = 10;
};

struct AlsResult {
  std::unique_ptr<FactorScorer> model;
  /// Training objective after each sweep.
  std::vector<double> objective;
  bool regularization_floored = false;
};

/// Implicit-feedback ALS: confidence 1 + alpha on positives, 1 elsewhere;
/// preference 1 iff positive; exact alternating ridge solves.
AlsResult fit_als(const TrainLog& log, const AlsParams& params, std::uint64_t seed);

/// Full-grid weighted squared loss plus L2 penalty for given factors.
double als_objective(const TrainLog& log, const Eigen::MatrixXd& users, const Eigen::MatrixXd& items,
                     const AlsParams& params);

struct BprParams {
  std::size_t latent_dim = 16;
  double learning_rate = 0.05;
  double regularization = 0.01;
  std::size_t epochs = 30;
  std::size_t negatives_per_positive = 1;
};

std::unique_ptr<FactorScorer> fit_bpr(const TrainLog& log, const BprParams& params, std::uint64_t seed);

/// Per-triple BPR loss -ln sigma(u.(i - j)) + reg/2 (|u|^2 + |i|^2 + |j|^2)
/// and its gradient with respect to (u, i, j).
double bpr_triple_loss(const Eigen::VectorXd& u, const Eigen::VectorXd& i, const Eigen::VectorXd& j, double reg);
struct BprGradient {
  Eigen::VectorXd du, di, dj;
};
BprGradient bpr_triple_gradient(const Eigen::VectorXd& u, const Eigen::VectorXd& i, const Eigen::VectorXd& j,
                                double reg);

// --- Hyperparameter search --------------------------------------------------

using ParamSet = std::map<std::string, double>;

struct ParamRange {
  enum class Kind { log_uniform, uniform, int_log_uniform, int_uniform, categorical };
  std::string name;
  Kind kind = Kind::uniform;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> choices;
};

struct HyperparamSpace {
  std::vector<ParamRange> ranges;
  std::size_t iterations = 16;
  std::size_t folds = 5;
  std::size_t cutoff = 100;
  std::size_t validation_negatives = 100;

  void validate() const;
  ParamSet draw(Rng& rng) const;
};

/// Fits one configuration on a training log.
using FitFunction = std::function<std::unique_ptr<Scorer>(const TrainLog&, const ParamSet&, std::uint64_t seed)>;

struct SearchResult {
  ParamSet best;
  double best_score = 0.0;
  std::vector<std::pair<ParamSet, double>> trials;  // in draw order; failed trials score -inf
  std::vector<std::string> log;
};

/// Random search with k-fold cross-validation: each fold holds out its share
/// of the positives, which are ranked against fold-local uniform non-positives
/// by nDCG@cutoff. Ties between configurations go to the earliest draw.
SearchResult random_search(const FitFunction& fit, const HyperparamSpace& space, const TrainLog& log,
                           std::uint64_t seed);

AlsParams als_params_from(const ParamSet& p, AlsParams base = {});
BprParams bpr_params_from(const ParamSet& p, BprParams base = {});

/// Default search spaces for the tunable families.
HyperparamSpace default_als_space();
HyperparamSpace default_bpr_space();

}  // namespace sampleval
