#pragma once

// Comparison protocols built on the same machinery: a uniform-privacy
// multi-message run pinning everyone to the strictest level, and per-segment
// separate aggregation (plain or precision-weighted).

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "segshuffle/optimize.hpp"
#include "segshuffle/protocol.hpp"

namespace segshuffle {

enum class BaselineKind { UniformMM, SepMM, WeightedSepMM };

struct BaselineSpec {
  BaselineKind kind = BaselineKind::UniformMM;
  std::optional<double> uniform_level;  // present iff kind == UniformMM
};

inline void validate(const BaselineSpec& spec) {
  if ((spec.kind == BaselineKind::UniformMM) != spec.uniform_level.has_value()) {
    throw std::invalid_argument(
        "baseline: uniform_level must be present exactly for UniformMM");
  }
}

// Precision weights for combining per-segment estimators, proportional to
// 1 / sqrt(d*s^2*ln(1/delta) / (n_k*E_k)^2 + s/n_k), normalized to sum 1.
inline std::vector<double> sepmm_weights(std::int64_t d, std::int64_t s,
                                         double delta,
                                         const std::vector<double>& populations,
                                         const std::vector<double>& levels) {
  if (populations.size() != levels.size() || populations.empty()) {
    throw std::invalid_argument("sepmm_weights: population/level mismatch");
  }
  std::vector<double> w(populations.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    double nk = populations[k];
    if (!(nk > 0.0)) {
      throw infeasible_error("sepmm_weights: empty segment");
    }
    double noise = static_cast<double>(d) * static_cast<double>(s) *
                   static_cast<double>(s) * std::log(1.0 / delta) /
                   ((nk * levels[k]) * (nk * levels[k]));
    double sampling = static_cast<double>(s) / nk;
    w[k] = 1.0 / std::sqrt(noise + sampling);
    total += w[k];
  }
  for (auto& v : w) v /= total;
  return w;
}

inline std::vector<double> sepmm_weights(const SegmentedConfig& cfg) {
  return sepmm_weights(cfg.domain_size, cfg.set_size, cfg.delta,
                       cfg.level_counts, cfg.levels);
}

namespace detail {

inline SegmentedConfig single_level_config(const SegmentedConfig& cfg,
                                           double level_eps,
                                           std::int64_t population) {
  SegmentedConfig one;
  one.levels = {level_eps};
  one.level_counts = {static_cast<double>(population)};
  one.delta = cfg.delta;
  one.domain_size = cfg.domain_size;
  one.set_size = cfg.set_size;
  one.population = population;
  return one;
}

}  // namespace detail

// One independently optimized single-level protocol instance per segment.
// Partitioning and parameter optimization are hoisted into a plan so repeated
// trials only pay for protocol runs.
struct SepmmPlan {
  std::vector<std::vector<UserRecord>> segments;
  std::vector<SegmentedConfig> segment_configs;
  std::vector<ProtocolParams> segment_params;
  std::vector<double> precision_weights;  // normalized
};

inline SepmmPlan plan_sepmm(const std::vector<UserRecord>& records,
                            const SegmentedConfig& cfg, int grid_points = 32) {
  validate(cfg);
  const std::size_t K = cfg.levels.size();
  SepmmPlan plan;
  plan.segments.resize(K);
  for (const auto& r : records) {
    if (r.level_index >= K) {
      throw std::invalid_argument("plan_sepmm: level index out of range");
    }
    auto copy = r;
    copy.level_index = 0;
    plan.segments[r.level_index].push_back(std::move(copy));
  }
  std::vector<double> populations(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (plan.segments[k].empty()) {
      throw infeasible_error("plan_sepmm: empty segment at level " +
                             std::to_string(k));
    }
    populations[k] = static_cast<double>(plan.segments[k].size());
  }
  for (std::size_t k = 0; k < K; ++k) {
    plan.segment_configs.push_back(detail::single_level_config(
        cfg, cfg.levels[k],
        static_cast<std::int64_t>(plan.segments[k].size())));
    plan.segment_params.push_back(
        optimize_parameters(plan.segment_configs[k], grid_points));
  }
  plan.precision_weights = sepmm_weights(cfg.domain_size, cfg.set_size,
                                         cfg.delta, populations, cfg.levels);
  return plan;
}

inline EstimateResult run_sepmm_plan(const SepmmPlan& plan, bool weighted,
                                     std::uint64_t seed) {
  const std::size_t K = plan.segments.size();
  std::vector<EstimateResult> parts;
  parts.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    parts.push_back(run_protocol(plan.segments[k], plan.segment_configs[k],
                                 plan.segment_params[k], derive_seed(seed, k)));
  }
  if (K == 1) return parts[0];
  EstimateResult combined;
  combined.estimates.assign(parts[0].estimates.size(), 0.0);
  combined.raw_counts.assign(parts[0].raw_counts.size(), 0);
  for (std::size_t k = 0; k < K; ++k) {
    double w = weighted ? plan.precision_weights[k]
                        : 1.0 / static_cast<double>(K);
    for (std::size_t j = 0; j < combined.estimates.size(); ++j) {
      combined.estimates[j] += w * parts[k].estimates[j];
    }
    for (std::size_t j = 0; j < combined.raw_counts.size(); ++j) {
      combined.raw_counts[j] += parts[k].raw_counts[j];
    }
    combined.denominator += parts[k].denominator;
    combined.blanket_expectation += parts[k].blanket_expectation;
  }
  return combined;
}

inline EstimateResult run_sepmm(const std::vector<UserRecord>& records,
                                const SegmentedConfig& cfg, std::uint64_t seed,
                                bool weighted) {
  return run_sepmm_plan(plan_sepmm(records, cfg), weighted, seed);
}

// Uniform-privacy analog: every user is pinned to the strictest level E_1 and
// a single-level instance is optimized and run on the whole population.
struct UniformMmPlan {
  std::vector<UserRecord> records;
  SegmentedConfig config;
  ProtocolParams params;
};

inline UniformMmPlan plan_uniform_mm(const std::vector<UserRecord>& records,
                                     const SegmentedConfig& cfg,
                                     int grid_points = 32) {
  validate(cfg);
  UniformMmPlan plan;
  plan.records = records;
  for (auto& r : plan.records) r.level_index = 0;
  plan.config = detail::single_level_config(cfg, cfg.levels[0], cfg.population);
  plan.params = optimize_parameters(plan.config, grid_points);
  return plan;
}

inline EstimateResult run_uniform_mm_plan(const UniformMmPlan& plan,
                                          std::uint64_t seed) {
  // Same seed derivation as a one-segment SepMM run, so the two coincide
  // exactly when K = 1.
  return run_protocol(plan.records, plan.config, plan.params,
                      derive_seed(seed, 0));
}

inline EstimateResult run_uniform_mm(const std::vector<UserRecord>& records,
                                     const SegmentedConfig& cfg,
                                     std::uint64_t seed) {
  return run_uniform_mm_plan(plan_uniform_mm(records, cfg), seed);
}

}  // namespace segshuffle
