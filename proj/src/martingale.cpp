#include "driftgale/martingale.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace driftgale {

double MartingaleParams::log_denominator() const { return std::log(q() + p * std::exp(t)); }

void MartingaleParams::validate() const {
  if (!(t > 0.0)) throw std::invalid_argument("martingale params: t must be positive");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("martingale params: p must be in (0,1)");
}

ExponentialMartingale::ExponentialMartingale(MartingaleParams params)
    : params_(params), log_denom_(params.log_denominator()) {
  params_.validate();
}

void ExponentialMartingale::update(int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("martingale update: y must be 0 or 1");
  ++n_;
  s_ += y;
}

double ExponentialMartingale::value() const { return std::exp(log_value()); }

AlertState check_alert(const ExponentialMartingale& m, AlertState state) {
  if (!state.alerted && m.log_value() >= std::log(state.threshold_c)) {
    state.alerted = true;
    state.discovery_step = m.steps();
  }
  return state;
}

NullSimResult simulate_null(const MartingaleParams& params, std::int64_t horizon,
                            std::int64_t trials, double threshold_c, const Rng& rng,
                            std::optional<double> stream_p, int jobs) {
  if (horizon < 1) throw std::invalid_argument("simulate_null: horizon must be >= 1");
  if (trials < 1) throw std::invalid_argument("simulate_null: trials must be >= 1");
  params.validate();
  const double p_stream = stream_p.value_or(params.p);

  std::vector<char> crossed(std::size_t(trials), 0);
  std::vector<double> final_value(std::size_t(trials), 0.0);

  auto run_range = [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      Rng trial_rng = rng.split("trial-" + std::to_string(i));
      ExponentialMartingale m(params);
      AlertState alert{threshold_c, false, std::nullopt};
      for (std::int64_t s = 0; s < horizon; ++s) {
        m.update(trial_rng.bernoulli(p_stream) ? 1 : 0);
        alert = check_alert(m, alert);
      }
      crossed[std::size_t(i)] = alert.alerted ? 1 : 0;
      final_value[std::size_t(i)] = m.value();
    }
  };

  if (jobs <= 1) {
    run_range(0, trials);
  } else {
    std::vector<std::thread> workers;
    const std::int64_t chunk = (trials + jobs - 1) / jobs;
    for (int w = 0; w < jobs; ++w) {
      const std::int64_t lo = w * chunk;
      const std::int64_t hi = std::min(trials, lo + chunk);
      if (lo >= hi) break;
      workers.emplace_back(run_range, lo, hi);
    }
    for (auto& t : workers) t.join();
  }

  // Deterministic reduction in trial order.
  std::int64_t crossings = 0;
  double sum_final = 0.0;
  for (std::int64_t i = 0; i < trials; ++i) {
    crossings += crossed[std::size_t(i)];
    sum_final += final_value[std::size_t(i)];
  }
  return {double(crossings) / double(trials), sum_final / double(trials)};
}

}  // namespace driftgale
