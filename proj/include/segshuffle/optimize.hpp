#pragma once

// Protocol-parameter optimizer: picks the blanket rate m and the per-level
// Poisson rates lambda_1..lambda_K minimizing the mean-squared-error bound
//
//   (n*m + s * sum_k n_k*lambda_k) / (sum_k n_k*lambda_k)^2
//
// subject to every level passing the accountant's privacy check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "segshuffle/amplify.hpp"
#include "segshuffle/common.hpp"

namespace segshuffle {

struct SegmentedConfig {
  std::vector<double> levels;        // E_1 <= ... <= E_K
  std::vector<double> level_counts;  // observed counts, may be non-integer
  double delta = 0.0;
  std::int64_t domain_size = 0;  // d
  std::int64_t set_size = 0;     // s
  std::int64_t population = 0;   // n
};

struct ProtocolParams {
  double blanket_rate = 0.0;          // m
  std::vector<double> poisson_rates;  // lambda_k, each in [0, 1]
  double mse_bound = 0.0;
};

struct FeasibleRate {
  double lambda = 0.0;
  bool feasible = false;
};

inline void validate(const SegmentedConfig& cfg) {
  if (cfg.levels.empty() || cfg.levels.size() != cfg.level_counts.size()) {
    throw std::invalid_argument("config: levels and level_counts must match");
  }
  for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
    if (!(cfg.levels[k] > 0.0)) {
      throw std::invalid_argument("config: privacy levels must be positive");
    }
    if (k > 0 && cfg.levels[k] < cfg.levels[k - 1]) {
      throw std::invalid_argument("config: privacy levels must be increasing");
    }
    if (!(cfg.level_counts[k] >= 0.0)) {
      throw std::invalid_argument("config: level counts must be >= 0");
    }
  }
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) {
    throw std::invalid_argument("config: delta must lie in (0, 1)");
  }
  if (cfg.domain_size < 1) {
    throw std::invalid_argument("config: domain_size must be >= 1");
  }
  if (cfg.set_size < 1 || cfg.set_size > cfg.domain_size) {
    throw std::invalid_argument("config: set_size must lie in [1, d]");
  }
  if (cfg.population < 1) {
    throw std::invalid_argument("config: population must be >= 1");
  }
}

// Blanket-trial shape induced by rate m over population n: ceil(m) trials per
// user, each emitting with probability m/ceil(m). m = 0 degenerates to zero
// trials with gamma = 1.
struct BlanketShape {
  std::int64_t trials = 0;
  double gamma = 1.0;
};

inline BlanketShape blanket_shape(std::int64_t n, double m) {
  if (m <= 0.0) return {0, 1.0};
  double per_user = std::ceil(m);
  return {static_cast<std::int64_t>(std::llround(static_cast<double>(n) * per_user)),
          m / per_user};
}

// Accountant parameters for the Poisson randomizer at rate lambda with domain
// size d and blanket rate m: p = +infinity, beta = lambda, q = d*lambda.
inline AmplifyParams poisson_instantiation(double lambda, std::int64_t d,
                                           std::int64_t n, double m) {
  BlanketShape bs = blanket_shape(n, m);
  AmplifyParams params;
  params.p = std::numeric_limits<double>::infinity();
  params.beta = lambda;
  params.q = static_cast<double>(d) * lambda;
  params.blanket_trials = bs.trials;
  params.gamma = bs.gamma;
  return params;
}

inline double mse_bound(const SegmentedConfig& cfg, double m,
                        std::span<const double> rates) {
  validate(cfg);
  if (rates.size() != cfg.levels.size()) {
    throw std::invalid_argument("mse_bound: rate count must equal level count");
  }
  if (!(m >= 0.0)) {
    throw std::invalid_argument("mse_bound: m must be >= 0");
  }
  double denom = 0.0;
  for (std::size_t k = 0; k < rates.size(); ++k) {
    denom += cfg.level_counts[k] * rates[k];
  }
  if (!(denom > 0.0)) {
    throw std::domain_error("mse_bound: objective undefined, all rates zero");
  }
  double num = static_cast<double>(cfg.population) * m +
               static_cast<double>(cfg.set_size) * denom;
  return num / (denom * denom);
}

namespace detail {

inline bool level_holds(const SegmentedConfig& cfg, std::size_t k, double m,
                        double lambda) {
  if (lambda <= 0.0) return true;  // sends nothing, perfectly private
  PrivacyCheckRequest req;
  req.level_epsilon = cfg.levels[k];
  req.delta = cfg.delta;
  req.set_size = cfg.set_size;
  req.params = poisson_instantiation(lambda, cfg.domain_size, cfg.population, m);
  return check_privacy(req).holds;
}

}  // namespace detail

inline constexpr double kRateTolerance = 0x1.0p-40;

// Largest lambda in [0, 1] (within 2^-40) passing the privacy check for level
// k at blanket rate m. Relies on the divergence being monotone in lambda.
inline FeasibleRate max_feasible_rate(const SegmentedConfig& cfg,
                                      std::size_t level_index, double m) {
  validate(cfg);
  if (level_index >= cfg.levels.size()) {
    throw std::invalid_argument("max_feasible_rate: bad level index");
  }
  if (!(m >= 0.0)) {
    throw std::invalid_argument("max_feasible_rate: m must be >= 0");
  }
  if (detail::level_holds(cfg, level_index, m, 1.0)) return {1.0, true};
  if (!detail::level_holds(cfg, level_index, m, kRateTolerance)) {
    return {0.0, false};
  }
  double lo = kRateTolerance, hi = 1.0;  // holds(lo) && !holds(hi)
  while (hi - lo > kRateTolerance) {
    double mid = 0.5 * (lo + hi);
    (detail::level_holds(cfg, level_index, m, mid) ? lo : hi) = mid;
  }
  return {lo, true};
}

inline constexpr double kBlanketCap = 64.0;
inline constexpr double kBlanketFloor = 1e-9;

// Smallest m (within 1e-3 relative) making lambda = 1 feasible for level k,
// found by doubling then geometric bisection; feasibility is treated as
// monotone in m.
inline double min_blanket_rate(const SegmentedConfig& cfg,
                               std::size_t level_index) {
  validate(cfg);
  if (level_index >= cfg.levels.size()) {
    throw std::invalid_argument("min_blanket_rate: bad level index");
  }
  auto feasible_at = [&](double m) {
    return detail::level_holds(cfg, level_index, m, 1.0);
  };
  if (feasible_at(kBlanketFloor)) return kBlanketFloor;

  // Seed the doubling search from the closed-form heuristic at lambda = 1.
  double eps_virtual = cfg.levels[level_index] / static_cast<double>(cfg.set_size);
  double delta_virtual =
      delta_threshold(cfg.delta, cfg.set_size, cfg.levels[level_index]);
  double guess = static_cast<double>(cfg.domain_size) *
                 std::log(1.0 / delta_virtual) /
                 (static_cast<double>(cfg.population) * eps_virtual * eps_virtual);
  double hi = std::clamp(guess, 2.0 * kBlanketFloor, kBlanketCap);
  double lo = kBlanketFloor;
  while (!feasible_at(hi)) {
    lo = hi;
    if (hi >= kBlanketCap) {
      std::ostringstream msg;
      msg << "level " << level_index << " (epsilon " << cfg.levels[level_index]
          << ") infeasible at any blanket rate up to " << kBlanketCap;
      throw infeasible_error(msg.str());
    }
    hi = std::min(hi * 2.0, kBlanketCap);
  }
  while (hi > lo * (1.0 + 1e-3)) {
    double mid = std::sqrt(lo * hi);
    (feasible_at(mid) ? hi : lo) = mid;
  }
  return hi;
}

// Joint choice of m and the rate ladder. With m_override the blanket rate is
// pinned and only the rates are solved; otherwise m is grid-searched (log
// spacing) between the per-level minimum blanket rates of the strictest and
// most liberal levels and the bound-minimizing grid point wins.
inline ProtocolParams optimize_parameters(
    const SegmentedConfig& cfg, int grid_points = 32,
    std::optional<double> m_override = std::nullopt) {
  validate(cfg);
  if (grid_points < 2) {
    throw std::invalid_argument("optimize_parameters: grid_points must be >= 2");
  }
  const std::size_t K = cfg.levels.size();

  auto rates_at = [&](double m) {
    std::vector<double> rates(K);
    for (std::size_t k = 0; k < K; ++k) {
      rates[k] = max_feasible_rate(cfg, k, m).lambda;
    }
    return rates;
  };

  if (m_override.has_value()) {
    double m = *m_override;
    if (!(m >= 0.0)) {
      throw std::invalid_argument("optimize_parameters: m must be >= 0");
    }
    std::vector<double> rates = rates_at(m);
    double bound = mse_bound(cfg, m, rates);
    return {m, std::move(rates), bound};
  }

  double m_strict = min_blanket_rate(cfg, 0);
  double m_liberal = min_blanket_rate(cfg, K - 1);
  constexpr double kGridFloor = 1e-6;
  double lo = std::max(std::min(m_strict, m_liberal), kGridFloor);
  double hi = std::max({m_strict, m_liberal, lo});

  std::optional<ProtocolParams> best;
  for (int i = 0; i < grid_points; ++i) {
    double m =
        (hi <= lo) ? lo
                   : lo * std::pow(hi / lo, static_cast<double>(i) /
                                                static_cast<double>(grid_points - 1));
    std::vector<double> rates = rates_at(m);
    double denom = 0.0;
    for (std::size_t k = 0; k < K; ++k) denom += cfg.level_counts[k] * rates[k];
    if (!(denom > 0.0)) continue;
    double bound = mse_bound(cfg, m, rates);
    if (!best || bound < best->mse_bound) {
      best = ProtocolParams{m, std::move(rates), bound};
    }
    if (hi <= lo) break;  // degenerate single-point grid
  }
  if (!best) {
    throw infeasible_error(
        "optimize_parameters: no grid point yields a positive signal");
  }
  return *best;
}

}  // namespace segshuffle
