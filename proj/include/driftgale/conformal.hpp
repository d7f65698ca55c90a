#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "driftgale/episode.hpp"
#include "driftgale/martingale.hpp"
#include "driftgale/nn.hpp"
#include "driftgale/rng.hpp"

namespace driftgale {

// Bag of observed points with incrementally maintained nearest-neighbor
// distances: scores()[i] is the minimum Euclidean distance from point i to
// any other point currently in the bag, kept exactly consistent after every
// insertion (O(n*d) per insert). A singleton bag's score is +inf.
class NonconformityBag {
 public:
  explicit NonconformityBag(int dim) : dim_(dim) {}

  void insert(std::vector<double> point);
  // Min distance from x (not in the bag) to any bag point. Throws on an
  // empty bag or dimension mismatch.
  double nonconformity(std::span<const double> x) const;

  const std::vector<double>& scores() const { return scores_; }
  std::size_t size() const { return points_.size(); }
  int dim() const { return dim_; }
  const std::vector<std::vector<double>>& points() const { return points_; }

  // O(n^2) recompute from scratch; the exactness oracle for the incremental
  // maintenance.
  std::vector<double> brute_force_scores() const;

 private:
  int dim_;
  std::vector<std::vector<double>> points_;
  std::vector<double> scores_;
};

// Smoothed conformal p-value from the scores of all points observed so far,
// the newest point's score last:
//   p = (#{alpha_i > alpha_j} + theta * #{alpha_i = alpha_j}) / j.
// theta in [0,1] is the tie-breaking draw; the result lies in (0,1] whenever
// theta > 0 (the new point always ties with itself).
double conformal_p(std::span<const double> scores_including_new, double theta);

// Composite power martingale over uniform p-values: the average over a grid
// of K epsilons evenly spaced in (0,1] of prod_i eps * p_i^(eps-1), tracked
// per-epsilon in log space and combined by log-mean-exp.
class BettingMartingale {
 public:
  explicit BettingMartingale(int grid_size = 100);

  // p must lie in (0,1].
  void update(double p);

  double log_value() const { return log_value_; }
  double value() const;
  std::int64_t steps() const { return n_; }
  int grid_size() const { return int(log_eps_.size()); }
  const std::vector<double>& per_epsilon_log_values() const { return per_eps_log_; }

 private:
  std::vector<double> eps_;
  std::vector<double> log_eps_;
  std::vector<double> per_eps_log_;
  double log_value_ = 0.0;
  std::int64_t n_ = 0;
};

// Feature map applied before nonconformity scoring: identity (CM) or a
// mean-centered top-k principal component projection (CM-FV).
struct FeatureExtractor {
  enum class Kind { identity, pca };
  Kind kind = Kind::identity;
  std::vector<double> mean;
  Tensor2 components;  // k x d, orthonormal rows
  int requested_dim = 0;
  bool rank_reduced = false;  // requested k exceeded the data rank
  double explained_variance_ratio = 1.0;

  int output_dim() const;
  std::vector<double> apply(std::span<const double> x) const;
};

// PCA fit on training points only. Deterministic: each component's
// largest-magnitude entry is made positive. k greater than the numerical
// rank is clamped with rank_reduced set.
FeatureExtractor fit_pca(const std::vector<std::vector<double>>& training_points, int k);

// One CM / CM-FV detector instance: feature extractor, growing bag seeded
// with the training points, betting martingale, first-crossing alert.
struct CmDetector {
  FeatureExtractor extractor;
  NonconformityBag bag;
  BettingMartingale martingale;
  AlertState alert;
  Rng tie_rng;
  std::int64_t steps_observed = 0;
};

CmDetector make_cm_detector(const std::vector<Episode>& d_orig, double threshold_c,
                            const Rng& rng, std::optional<int> pca_dim = std::nullopt,
                            int grid_size = 100);

struct CmStep {
  double p = 1.0;
  double log_martingale = 0.0;
  bool alerted_now = false;
};

// Scores the episode against the current bag, updates the betting
// martingale, checks the alert, and inserts the episode into the bag.
CmStep cm_observe(CmDetector& detector, const Episode& episode);

}  // namespace driftgale
