#include "driftgale/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace driftgale {

namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

void NonconformityBag::insert(std::vector<double> point) {
  if (int(point.size()) != dim_) throw std::invalid_argument("bag insert: dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double d = euclidean(points_[i], point);
    scores_[i] = std::min(scores_[i], d);
    best = std::min(best, d);
  }
  points_.push_back(std::move(point));
  scores_.push_back(best);
}

double NonconformityBag::nonconformity(std::span<const double> x) const {
  if (points_.empty()) throw std::invalid_argument("nonconformity: empty bag");
  if (int(x.size()) != dim_) throw std::invalid_argument("nonconformity: dimension mismatch");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : points_) best = std::min(best, euclidean(p, x));
  return best;
}

std::vector<double> NonconformityBag::brute_force_scores() const {
  std::vector<double> out(points_.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    for (std::size_t k = 0; k < points_.size(); ++k) {
      if (k == i) continue;
      out[i] = std::min(out[i], euclidean(points_[i], points_[k]));
    }
  }
  return out;
}

double conformal_p(std::span<const double> scores_including_new, double theta) {
  if (scores_including_new.empty()) throw std::invalid_argument("conformal_p: empty score list");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("conformal_p: theta outside [0,1]");
  const double alpha_new = scores_including_new.back();
  std::size_t greater = 0;
  std::size_t equal = 0;
  for (double a : scores_including_new) {
    if (a > alpha_new) {
      ++greater;
    } else if (a == alpha_new) {
      ++equal;
    }
  }
  return (double(greater) + theta * double(equal)) / double(scores_including_new.size());
}

BettingMartingale::BettingMartingale(int grid_size) {
  if (grid_size < 1) throw std::invalid_argument("betting martingale: grid size must be >= 1");
  eps_.resize(std::size_t(grid_size));
  log_eps_.resize(std::size_t(grid_size));
  per_eps_log_.assign(std::size_t(grid_size), 0.0);
  for (int i = 0; i < grid_size; ++i) {
    eps_[std::size_t(i)] = double(i + 1) / double(grid_size);
    log_eps_[std::size_t(i)] = std::log(eps_[std::size_t(i)]);
  }
}

void BettingMartingale::update(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("betting update: p outside (0,1]");
  const double log_p = std::log(p);
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < per_eps_log_.size(); ++i) {
    per_eps_log_[i] += log_eps_[i] + (eps_[i] - 1.0) * log_p;
    max_log = std::max(max_log, per_eps_log_[i]);
  }
  double acc = 0.0;
  for (double l : per_eps_log_) acc += std::exp(l - max_log);
  log_value_ = max_log + std::log(acc) - std::log(double(per_eps_log_.size()));
  ++n_;
}

double BettingMartingale::value() const { return std::exp(log_value_); }

int FeatureExtractor::output_dim() const {
  return kind == Kind::identity ? -1 : components.rows;
}

std::vector<double> FeatureExtractor::apply(std::span<const double> x) const {
  if (kind == Kind::identity) return {x.begin(), x.end()};
  if (int(x.size()) != components.cols) {
    throw std::invalid_argument("feature extractor: dimension mismatch");
  }
  std::vector<double> out(std::size_t(components.rows), 0.0);
  for (int k = 0; k < components.rows; ++k) {
    double acc = 0.0;
    for (int c = 0; c < components.cols; ++c) acc += components.at(k, c) * (x[std::size_t(c)] - mean[std::size_t(c)]);
    out[std::size_t(k)] = acc;
  }
  return out;
}

FeatureExtractor fit_pca(const std::vector<std::vector<double>>& training_points, int k) {
  if (k < 1) throw std::invalid_argument("fit_pca: k must be >= 1");
  if (training_points.size() < std::size_t(k) + 1) {
    throw std::invalid_argument("fit_pca: need at least k+1 points");
  }
  const int n = int(training_points.size());
  const int d = int(training_points.front().size());

  Eigen::MatrixXd x(n, d);
  for (int r = 0; r < n; ++r) {
    if (int(training_points[std::size_t(r)].size()) != d) {
      throw std::invalid_argument("fit_pca: inconsistent dimensions");
    }
    for (int c = 0; c < d; ++c) x(r, c) = training_points[std::size_t(r)][std::size_t(c)];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigensolver failed");

  // Eigenvalues ascending; walk from the top.
  const Eigen::VectorXd evals = solver.eigenvalues();
  const double total_var = std::max(evals.sum(), 0.0);
  const double rank_tol = std::max(evals(d - 1), 0.0) * 1e-10;
  int rank = 0;
  for (int i = 0; i < d; ++i) {
    if (evals(i) > rank_tol && evals(i) > 0.0) ++rank;
  }

  FeatureExtractor fx;
  fx.kind = FeatureExtractor::Kind::pca;
  fx.requested_dim = k;
  const int k_out = std::min({k, std::max(rank, 1), d});
  fx.rank_reduced = k_out < k;

  fx.mean.assign(mean.data(), mean.data() + d);
  fx.components = Tensor2(k_out, d);
  double captured = 0.0;
  for (int j = 0; j < k_out; ++j) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - j);
    // Sign convention: largest-magnitude entry positive.
    int arg = 0;
    for (int c = 1; c < d; ++c) {
      if (std::abs(v(c)) > std::abs(v(arg))) arg = c;
    }
    if (v(arg) < 0.0) v = -v;
    for (int c = 0; c < d; ++c) fx.components.at(j, c) = v(c);
    captured += std::max(evals(d - 1 - j), 0.0);
  }
  fx.explained_variance_ratio = total_var > 0.0 ? captured / total_var : 1.0;
  return fx;
}

CmDetector make_cm_detector(const std::vector<Episode>& d_orig, double threshold_c,
                            const Rng& rng, std::optional<int> pca_dim, int grid_size) {
  if (d_orig.empty()) throw std::invalid_argument("cm detector: empty training set");
  CmDetector det{FeatureExtractor{},
                 NonconformityBag(int(d_orig.front().features.size())),
                 BettingMartingale(grid_size),
                 AlertState{threshold_c, false, std::nullopt},
                 rng.split("ties")};
  if (pca_dim) {
    std::vector<std::vector<double>> points;
    points.reserve(d_orig.size());
    for (const Episode& ep : d_orig) points.push_back(ep.features);
    det.extractor = fit_pca(points, *pca_dim);
    det.bag = NonconformityBag(det.extractor.output_dim());
  }
  for (const Episode& ep : d_orig) det.bag.insert(det.extractor.apply(ep.features));
  return det;
}

CmStep cm_observe(CmDetector& detector, const Episode& episode) {
  detector.bag.insert(detector.extractor.apply(episode.features));
  const double theta = detector.tie_rng.uniform_open();
  const double p = conformal_p(detector.bag.scores(), theta);
  detector.martingale.update(p);
  ++detector.steps_observed;

  CmStep step;
  step.p = p;
  step.log_martingale = detector.martingale.log_value();
  if (!detector.alert.alerted && step.log_martingale >= std::log(detector.alert.threshold_c)) {
    detector.alert.alerted = true;
    detector.alert.discovery_step = detector.steps_observed;
    step.alerted_now = true;
  }
  return step;
}

}  // namespace driftgale
