#pragma once

// Dataset ingestion and synthesis: MSNBC-style session files, padding and
// sampling to a fixed set size, uniform synthetic set-valued data, and
// ground-truth item frequencies.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "segshuffle/common.hpp"
#include "segshuffle/protocol.hpp"

namespace segshuffle {

struct Dataset {
  std::vector<UserRecord> records;
  std::int64_t domain_size = 0;
  std::int64_t set_size = 0;
  std::vector<double> true_w;  // per-item frequency, sums to set_size
};

inline constexpr std::int64_t kMsnbcDomain = 17;

inline std::vector<double> compute_true_w(const std::vector<UserRecord>& records,
                                          std::int64_t d) {
  std::vector<double> w(static_cast<std::size_t>(d), 0.0);
  for (const auto& r : records) {
    for (auto item : r.items) w.at(item) += 1.0;
  }
  for (auto& v : w) v /= static_cast<double>(records.size());
  return w;
}

namespace detail {

// k distinct values drawn uniformly from `pool` (partial Fisher-Yates).
inline std::vector<std::uint32_t> sample_without_replacement(
    std::vector<std::uint32_t> pool, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(
                            uniform_below(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

// Grows or shrinks a deduplicated item set to exactly s elements: oversized
// sets are subsampled, undersized sets are padded with distinct uniform items
// from the complement of the set.
inline std::vector<std::uint32_t> fit_to_set_size(std::vector<std::uint32_t> items,
                                                  std::int64_t d, std::int64_t s,
                                                  std::mt19937_64& rng) {
  auto target = static_cast<std::size_t>(s);
  if (items.size() > target) {
    items = sample_without_replacement(std::move(items), target, rng);
  } else if (items.size() < target) {
    std::vector<bool> held(static_cast<std::size_t>(d), false);
    for (auto it : items) held[it] = true;
    std::vector<std::uint32_t> complement;
    complement.reserve(static_cast<std::size_t>(d) - items.size());
    for (std::int64_t j = 0; j < d; ++j) {
      if (!held[static_cast<std::size_t>(j)]) {
        complement.push_back(static_cast<std::uint32_t>(j));
      }
    }
    auto pad = sample_without_replacement(std::move(complement),
                                          target - items.size(), rng);
    items.insert(items.end(), pad.begin(), pad.end());
  }
  std::sort(items.begin(), items.end());
  return items;
}

}  // namespace detail

// Parses an MSNBC-style session file: optional '%' header lines, then one
// user per line as whitespace-separated item indices in [1, 17]. Repeat
// visits deduplicate; each kept user is fitted to exactly s items and
// n_target users are drawn without replacement.
inline Dataset load_msnbc(const std::string& path, std::int64_t s,
                          std::int64_t n_target, std::uint64_t seed) {
  if (s < 1 || s > kMsnbcDomain) {
    throw std::invalid_argument("load_msnbc: set size must lie in [1, 17]");
  }
  if (n_target < 1) {
    throw std::invalid_argument("load_msnbc: n_target must be >= 1");
  }
  std::ifstream in(path);
  if (!in) {
    throw data_error("load_msnbc: cannot open " + path);
  }
  std::vector<std::vector<std::uint32_t>> users;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    std::vector<std::uint32_t> items;
    bool header = false;
    while (ls >> tok) {
      if (items.empty() && tok[0] == '%') {
        header = true;
        break;
      }
      long v = 0;
      try {
        std::size_t used = 0;
        v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw data_error("load_msnbc: malformed token '" + tok + "' on line " +
                         std::to_string(line_no));
      }
      if (v < 1 || v > kMsnbcDomain) {
        throw data_error("load_msnbc: item " + std::to_string(v) +
                         " out of [1, 17] on line " + std::to_string(line_no));
      }
      items.push_back(static_cast<std::uint32_t>(v - 1));
    }
    if (header || items.empty()) continue;
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    users.push_back(std::move(items));
  }
  if (static_cast<std::int64_t>(users.size()) < n_target) {
    throw data_error("load_msnbc: only " + std::to_string(users.size()) +
                     " users available, need " + std::to_string(n_target));
  }

  auto rng = make_engine(derive_seed(seed, 0));
  std::vector<std::uint32_t> indices(users.size());
  std::iota(indices.begin(), indices.end(), 0u);
  auto chosen = detail::sample_without_replacement(
      std::move(indices), static_cast<std::size_t>(n_target), rng);

  Dataset ds;
  ds.domain_size = kMsnbcDomain;
  ds.set_size = s;
  ds.records.reserve(chosen.size());
  for (auto idx : chosen) {
    UserRecord rec;
    rec.items = detail::fit_to_set_size(users[idx], kMsnbcDomain, s, rng);
    ds.records.push_back(std::move(rec));
  }
  ds.true_w = compute_true_w(ds.records, ds.domain_size);
  return ds;
}

// n records of s distinct items drawn uniformly without replacement from [0, d).
inline Dataset synth_uniform(std::int64_t d, std::int64_t s, std::int64_t n,
                             std::uint64_t seed) {
  if (s < 1 || s > d) {
    throw std::invalid_argument("synth_uniform: need 1 <= s <= d");
  }
  if (n < 1) {
    throw std::invalid_argument("synth_uniform: n must be >= 1");
  }
  auto rng = make_engine(derive_seed(seed, 0));
  std::vector<std::uint32_t> domain(static_cast<std::size_t>(d));
  std::iota(domain.begin(), domain.end(), 0u);
  Dataset ds;
  ds.domain_size = d;
  ds.set_size = s;
  ds.records.resize(static_cast<std::size_t>(n));
  for (auto& rec : ds.records) {
    rec.items = detail::sample_without_replacement(
        domain, static_cast<std::size_t>(s), rng);
    std::sort(rec.items.begin(), rec.items.end());
  }
  ds.true_w = compute_true_w(ds.records, ds.domain_size);
  return ds;
}

// Assigns level indices by exact quota (largest-remainder rounding of the
// fractions) and shuffles the assignment across users.
inline Dataset assign_levels(Dataset ds, const std::vector<double>& fractions,
                             std::uint64_t seed) {
  if (fractions.empty()) {
    throw std::invalid_argument("assign_levels: no fractions");
  }
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) {
      throw std::invalid_argument("assign_levels: fractions must be >= 0");
    }
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("assign_levels: fractions must sum to 1");
  }
  const auto n = ds.records.size();
  std::vector<std::size_t> quota(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    double exact = fractions[k] * static_cast<double>(n);
    quota[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += quota[k];
    remainders.emplace_back(exact - static_cast<double>(quota[k]), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
    quota[remainders[i % remainders.size()].second] += 1;
  }

  std::vector<std::uint32_t> labels;
  labels.reserve(n);
  for (std::size_t k = 0; k < quota.size(); ++k) {
    labels.insert(labels.end(), quota[k], static_cast<std::uint32_t>(k));
  }
  auto rng = make_engine(derive_seed(seed, 1));
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < n; ++i) ds.records[i].level_index = labels[i];
  return ds;
}

}  // namespace segshuffle
