#pragma once

// In-process simulation of the segmented multi-message shuffle protocol for
// set-valued frequency estimation: per-user Poisson randomization, blanket
// message generation, level aggregation and uniform shuffling, and the
// server-side debiased estimator.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "segshuffle/common.hpp"
#include "segshuffle/optimize.hpp"

namespace segshuffle {

struct UserRecord {
  std::vector<std::uint32_t> items;  // exactly s distinct indices in [0, d)
  std::uint32_t level_index = 0;     // in [0, K)
};

// Order-free view of the shuffled bag: occurrences per item index.
struct MessageMultiset {
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
};

struct EstimateResult {
  std::vector<double> estimates;          // debiased W-hat, unclipped
  std::vector<std::uint64_t> raw_counts;  // C_j
  double denominator = 0.0;               // sum_k n_k * lambda_k
  double blanket_expectation = 0.0;       // n * m / d
};

namespace detail {

// Stream ids hung off the root protocol seed.
inline constexpr std::uint64_t kLevelShuffleStream = 0;
inline constexpr std::uint64_t kMessageShuffleStream = 1;
inline constexpr std::uint64_t kUserStreamBase = 2;

}  // namespace detail

// Exact per-level histogram, computed from a uniformly shuffled bag of level
// indices (the tally is order-invariant; the shuffle mirrors the wire
// protocol, which reveals only the anonymized multiset of levels).
inline std::vector<double> aggregate_levels(const std::vector<UserRecord>& records,
                                            std::size_t num_levels,
                                            std::uint64_t seed = 0) {
  if (records.empty()) {
    throw std::invalid_argument("aggregate_levels: no records");
  }
  std::vector<std::uint32_t> bag;
  bag.reserve(records.size());
  for (const auto& r : records) {
    if (r.level_index >= num_levels) {
      throw std::invalid_argument("aggregate_levels: level index out of range");
    }
    bag.push_back(r.level_index);
  }
  auto rng = make_engine(seed);
  std::shuffle(bag.begin(), bag.end(), rng);
  std::vector<double> hist(num_levels, 0.0);
  for (auto k : bag) hist[k] += 1.0;
  return hist;
}

// One user's message bag: each held item is reported with probability
// lambda_{k_i}; then ceil(m) blanket trials each emit a uniform item with
// probability m/ceil(m).
inline std::vector<std::uint32_t> randomize_user(const UserRecord& record,
                                                 const ProtocolParams& params,
                                                 std::int64_t d,
                                                 std::mt19937_64& rng) {
  std::vector<std::uint32_t> out;
  double lambda = params.poisson_rates.at(record.level_index);
  for (auto item : record.items) {
    if (uniform01(rng) < lambda) out.push_back(item);
  }
  double m = params.blanket_rate;
  if (m > 0.0) {
    auto trials = static_cast<std::int64_t>(std::ceil(m));
    double gamma = m / static_cast<double>(trials);
    for (std::int64_t a = 0; a < trials; ++a) {
      if (uniform01(rng) < gamma) {
        out.push_back(static_cast<std::uint32_t>(
            uniform_below(rng, static_cast<std::uint64_t>(d))));
      }
    }
  }
  return out;
}

// Uniformly permutes the multiset union of all bags and tallies per-item
// occurrences. Counts do not depend on the permutation.
inline MessageMultiset shuffle_and_count(const std::vector<std::vector<std::uint32_t>>& bags,
                                         std::int64_t d, std::uint64_t seed = 0) {
  std::vector<std::uint32_t> pooled;
  std::size_t total = 0;
  for (const auto& b : bags) total += b.size();
  pooled.reserve(total);
  for (const auto& b : bags) pooled.insert(pooled.end(), b.begin(), b.end());
  auto rng = make_engine(seed);
  std::shuffle(pooled.begin(), pooled.end(), rng);
  MessageMultiset msgs;
  msgs.counts.assign(static_cast<std::size_t>(d), 0);
  for (auto y : pooled) msgs.counts.at(y) += 1;
  return msgs;
}

// Debiased frequency estimate W-hat_j = (C_j - n*m/d) / sum_k n_k*lambda_k.
// No clipping: estimates may be negative or exceed 1.
inline EstimateResult estimate(const MessageMultiset& msgs,
                               const std::vector<double>& histogram,
                               const ProtocolParams& params,
                               const SegmentedConfig& cfg) {
  if (histogram.size() != params.poisson_rates.size()) {
    throw std::invalid_argument("estimate: histogram/rate size mismatch");
  }
  if (msgs.counts.size() != static_cast<std::size_t>(cfg.domain_size)) {
    throw std::invalid_argument("estimate: count vector size mismatch");
  }
  double denom = 0.0;
  for (std::size_t k = 0; k < histogram.size(); ++k) {
    denom += histogram[k] * params.poisson_rates[k];
  }
  if (!(denom > 0.0)) {
    throw std::domain_error("estimate: estimator undefined, zero denominator");
  }
  double blanket = static_cast<double>(cfg.population) * params.blanket_rate /
                   static_cast<double>(cfg.domain_size);
  EstimateResult res;
  res.raw_counts = msgs.counts;
  res.denominator = denom;
  res.blanket_expectation = blanket;
  res.estimates.resize(msgs.counts.size());
  for (std::size_t j = 0; j < msgs.counts.size(); ++j) {
    res.estimates[j] = (static_cast<double>(msgs.counts[j]) - blanket) / denom;
  }
  return res;
}

// Full round: level aggregation, per-user randomization, shuffle, estimate.
// Per-user streams are derived from the root seed by counter split, so the
// result is independent of user iteration order.
inline EstimateResult run_protocol(const std::vector<UserRecord>& records,
                                   const SegmentedConfig& cfg,
                                   const ProtocolParams& params,
                                   std::uint64_t seed) {
  validate(cfg);
  if (params.poisson_rates.size() != cfg.levels.size()) {
    throw std::invalid_argument("run_protocol: rate/level count mismatch");
  }
  if (static_cast<std::int64_t>(records.size()) != cfg.population) {
    throw std::invalid_argument("run_protocol: record count != population");
  }
  for (const auto& r : records) {
    if (static_cast<std::int64_t>(r.items.size()) != cfg.set_size) {
      throw std::invalid_argument("run_protocol: record set size mismatch");
    }
    for (auto item : r.items) {
      if (item >= static_cast<std::uint32_t>(cfg.domain_size)) {
        throw std::invalid_argument("run_protocol: item index out of domain");
      }
    }
  }
  std::vector<double> hist =
      aggregate_levels(records, cfg.levels.size(),
                       derive_seed(seed, detail::kLevelShuffleStream));
  std::vector<std::vector<std::uint32_t>> bags(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto rng = make_engine(derive_seed(seed, detail::kUserStreamBase + i));
    bags[i] = randomize_user(records[i], params, cfg.domain_size, rng);
  }
  MessageMultiset msgs =
      shuffle_and_count(bags, cfg.domain_size,
                        derive_seed(seed, detail::kMessageShuffleStream));
  return estimate(msgs, hist, params, cfg);
}

// Neighboring datasets realizing the worst case for a single-item victim: the
// victim holds {item 0} vs {item 1}; everyone else holds an item outside that
// pair when the domain allows (d >= 3). At d = 2 the fillers necessarily sit
// on item 1; with lambda = 1 their contribution to the counts is a known
// constant that projections can subtract.
inline std::pair<std::vector<UserRecord>, std::vector<UserRecord>>
build_worstcase_pair(std::int64_t d, std::int64_t n, const SegmentedConfig& cfg,
                     std::size_t victim_index) {
  if (cfg.set_size != 1) {
    throw std::invalid_argument("build_worstcase_pair: requires set_size 1");
  }
  if (d < 2) {
    throw std::invalid_argument("build_worstcase_pair: requires domain size >= 2");
  }
  if (victim_index >= static_cast<std::size_t>(n)) {
    throw std::invalid_argument("build_worstcase_pair: victim index out of range");
  }
  std::uint32_t filler = d >= 3 ? 2u : 1u;
  std::vector<UserRecord> base(static_cast<std::size_t>(n));
  for (auto& r : base) {
    r.items = {filler};
    r.level_index = 0;
  }
  std::vector<UserRecord> left = base;
  std::vector<UserRecord> right = std::move(base);
  left[victim_index].items = {0u};
  right[victim_index].items = {1u};
  return {std::move(left), std::move(right)};
}

}  // namespace segshuffle
