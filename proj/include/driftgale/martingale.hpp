#pragma once

#include <cstdint>
#include <optional>

#include "driftgale/rng.hpp"

namespace driftgale {

// Parameters of the exponential Bernoulli martingale
//   M_n = exp(t * S_n) / (q + p * e^t)^n,  q = 1 - p.
// Defaults t = 1, p = 0.5 are the null configuration for a fair-coin
// correctness stream.
struct MartingaleParams {
  double t = 1.0;
  double p = 0.5;

  double q() const { return 1.0 - p; }
  // ln(q + p e^t), the per-step normalizer.
  double log_denominator() const;
  void validate() const;  // t > 0, p in (0,1)
};

// Running state of the exponential martingale. Only (n, S_n) are stored;
// log M is recomputed from the closed form on demand, so the identity
// log M = t*S_n - n*ln(q + p e^t) holds exactly at every step.
class ExponentialMartingale {
 public:
  ExponentialMartingale() : ExponentialMartingale(MartingaleParams{}) {}
  explicit ExponentialMartingale(MartingaleParams params);

  // y must be 0 or 1: increments n, adds y to S_n.
  void update(int y);

  std::int64_t steps() const { return n_; }
  std::int64_t correct_count() const { return s_; }
  double log_value() const { return params_.t * double(s_) - double(n_) * log_denom_; }
  // exp(log_value); may be +inf for extreme streaks, callers that care
  // compare in log space.
  double value() const;
  const MartingaleParams& params() const { return params_; }

 private:
  MartingaleParams params_;
  double log_denom_;
  std::int64_t n_ = 0;
  std::int64_t s_ = 0;
};

// First-crossing alert bookkeeping for a threshold C > 1 (C = 1 allowed for
// degenerate tests). discovery_step is set once and never changes.
struct AlertState {
  double threshold_c = 100.0;
  bool alerted = false;
  std::optional<std::int64_t> discovery_step;
};

// Sets the alert iff not already alerted and log M >= ln C (comparison done
// in log space); discovery_step becomes the martingale's current step count.
AlertState check_alert(const ExponentialMartingale& m, AlertState state);

struct NullSimResult {
  double crossing_fraction = 0.0;
  double mean_final_value = 0.0;
};

// Runs `trials` independent i.i.d. Bernoulli streams through the martingale
// and the crossing test at threshold C. stream_p defaults to params.p (the
// matched null); passing a different stream_p measures power under shift.
// Trials fan across `jobs` threads; the reduction is keyed by trial index,
// so results are independent of jobs.
NullSimResult simulate_null(const MartingaleParams& params, std::int64_t horizon,
                            std::int64_t trials, double threshold_c, const Rng& rng,
                            std::optional<double> stream_p = std::nullopt, int jobs = 1);

}  // namespace driftgale
