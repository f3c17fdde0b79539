#pragma once

// Exact numerical privacy-amplification accountant for the multi-message
// shuffle model. The shuffled view of a protocol execution is reduced to a
// pair of two-dimensional count distributions (P, Q) built from binomial and
// Bernoulli components; the accountant evaluates the Hockey-stick divergence
// D_{e^eps}(P || Q) between them and answers (eps, delta) feasibility
// questions, including group composition over set-valued inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include "segshuffle/common.hpp"

namespace segshuffle {

// Index of the count-pair distribution family.
//
//   C  ~ Binom(blanket_trials, rho),   rho = gamma * 2*beta*p / ((p-1)*q)
//   A  ~ Binom(C, 1/2)
//   D1 ~ Bernoulli(beta*p / (p-1))
//   D2 ~ Bernoulli(beta / (p-1-beta*p)) when D1 = 0, else 0
//
//   P = (A + D1, C - A + D2),   Q = (A + D2, C - A + D1)
//
// p = +infinity is a first-class value: D1 rate = beta, D2 rate = 0,
// rho = 2*beta*gamma/q. In the protocol instantiation beta = lambda_k and
// q = d*lambda_k, so rho = 2*gamma/d independent of lambda.
struct AmplifyParams {
  double p = std::numeric_limits<double>::infinity();
  double beta = 0.0;
  double q = 1.0;
  std::int64_t blanket_trials = 0;  // B: Bernoulli blanket trials feeding C
  double gamma = 1.0;               // per-trial blanket emission probability
};

struct CountPair {
  std::int64_t left = 0;
  std::int64_t right = 0;
};

enum class Family { P, Q };

// Per-user privacy question: does the configuration give the user-level
// (level_epsilon, delta) guarantee when the user's set contributes set_size
// virtual single-item users (group composition)?
struct PrivacyCheckRequest {
  double level_epsilon = 0.0;
  double delta = 0.0;
  std::int64_t set_size = 1;
  AmplifyParams params;
};

struct PrivacyCheckResult {
  bool holds = false;
  double achieved_delta = 0.0;
};

// Tail mass dropped by the truncated divergence enumeration; added back to
// every reported divergence so results stay conservative upper bounds.
inline constexpr double kTailMass = 1e-12;

struct FamilyRates {
  double delta1_rate = 0.0;
  double delta2_rate = 0.0;
  double rho = 0.0;
};

inline FamilyRates family_rates(const AmplifyParams& pr) {
  if (pr.beta == 0.0) return {0.0, 0.0, 0.0};
  if (std::isinf(pr.p)) {
    return {pr.beta, 0.0, 2.0 * pr.beta * pr.gamma / pr.q};
  }
  double a1 = pr.beta * pr.p / (pr.p - 1.0);
  double a2 = pr.beta / (pr.p - 1.0 - pr.beta * pr.p);
  double rho = pr.gamma * 2.0 * pr.beta * pr.p / ((pr.p - 1.0) * pr.q);
  return {a1, a2, rho};
}

inline void validate(const AmplifyParams& pr) {
  if (std::isnan(pr.p) || pr.p <= 1.0) {
    throw std::invalid_argument("amplify: p must exceed 1 (or be +infinity)");
  }
  if (!(pr.beta >= 0.0 && pr.beta <= 1.0)) {
    throw std::invalid_argument("amplify: beta must lie in [0, 1]");
  }
  if (std::isfinite(pr.p) && pr.beta > (pr.p - 1.0) / (pr.p + 1.0) + 1e-12) {
    throw std::invalid_argument("amplify: beta exceeds (p-1)/(p+1)");
  }
  if (pr.blanket_trials < 0) {
    throw std::invalid_argument("amplify: blanket_trials must be >= 0");
  }
  if (!(pr.gamma > 0.0 && pr.gamma <= 1.0)) {
    throw std::invalid_argument("amplify: gamma must lie in (0, 1]");
  }
  if (pr.beta > 0.0 && !(pr.q > 0.0)) {
    throw std::invalid_argument("amplify: q must be positive when beta > 0");
  }
  if (pr.blanket_trials > 0) {
    double rho = family_rates(pr).rho;
    if (!(rho >= 0.0 && rho <= 1.0 + 1e-12)) {
      throw std::invalid_argument(
          "amplify: binomial rate 2*beta*gamma*p/((p-1)*q) outside [0, 1]");
    }
  }
}

namespace detail {

struct FamilyTables {
  std::int64_t trials = 0;
  double rho = 0.0;
  double log_rho = 0.0;
  double log_1m_rho = 0.0;
  double w10 = 0.0, w01 = 0.0, w00 = 0.0;  // joint (D1, D2) probabilities
  double lw10 = 0.0, lw01 = 0.0, lw00 = 0.0;
  std::vector<double> lfact;

  explicit FamilyTables(const AmplifyParams& pr)
      : trials(pr.blanket_trials),
        lfact(log_factorial_table(pr.blanket_trials)) {
    FamilyRates r = family_rates(pr);
    rho = std::min(r.rho, 1.0);
    log_rho = rho > 0.0 ? std::log(rho) : 0.0;
    log_1m_rho = rho < 1.0 ? std::log1p(-rho) : 0.0;
    w10 = r.delta1_rate;
    w01 = (1.0 - r.delta1_rate) * r.delta2_rate;
    w00 = (1.0 - r.delta1_rate) * (1.0 - r.delta2_rate);
    lw10 = std::log(w10);
    lw01 = std::log(w01);
    lw00 = std::log(w00);
  }

  // log Pr[C = c]
  double log_f(std::int64_t c) const {
    if (c < 0 || c > trials) return -std::numeric_limits<double>::infinity();
    if (rho <= 0.0)
      return c == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (rho >= 1.0)
      return c == trials ? 0.0 : -std::numeric_limits<double>::infinity();
    return log_choose(lfact, trials, c) + static_cast<double>(c) * log_rho +
           static_cast<double>(trials - c) * log_1m_rho;
  }

  // log Pr[A = a | C = c]
  double log_g(std::int64_t c, std::int64_t a) const {
    if (a < 0 || a > c) return -std::numeric_limits<double>::infinity();
    return log_choose(lfact, c, a) - static_cast<double>(c) * 0.6931471805599453;
  }
};

// Pr[(left, right) = (u, v)] for one family, marginalizing over the three
// feasible (D1, D2) outcomes, with the blanket count restricted to
// [c_min, c_max]. Every product is assembled in log space and exponentiated
// once per term.
inline double pmf_point(const FamilyTables& t, std::int64_t u, std::int64_t v,
                        Family which, std::int64_t c_min, std::int64_t c_max) {
  if (u < 0 || v < 0) return 0.0;
  double acc = 0.0;
  std::int64_t c = u + v;  // (D1, D2) = (0, 0)
  if (c >= c_min && c <= c_max && t.w00 > 0.0) {
    acc += std::exp(t.lw00 + t.log_f(c) + t.log_g(c, u));
  }
  c = u + v - 1;  // one Bernoulli increment fired
  if (c >= c_min && c <= c_max) {
    if (which == Family::P) {
      // P = (A + D1, C - A + D2)
      if (t.w10 > 0.0 && u >= 1) {
        acc += std::exp(t.lw10 + t.log_f(c) + t.log_g(c, u - 1));
      }
      if (t.w01 > 0.0 && v >= 1) {
        acc += std::exp(t.lw01 + t.log_f(c) + t.log_g(c, u));
      }
    } else {
      // Q = (A + D2, C - A + D1)
      if (t.w10 > 0.0 && v >= 1) {
        acc += std::exp(t.lw10 + t.log_f(c) + t.log_g(c, u));
      }
      if (t.w01 > 0.0 && u >= 1) {
        acc += std::exp(t.lw01 + t.log_f(c) + t.log_g(c, u - 1));
      }
    }
  }
  return acc;
}

// Smallest interval of c values carrying at least 1 - tail of Binom(B, rho)
// mass, grown greedily outward from the mode.
inline std::pair<std::int64_t, std::int64_t> blanket_count_interval(
    const FamilyTables& t, double tail) {
  const std::int64_t B = t.trials;
  if (B == 0 || t.rho <= 0.0) return {0, 0};
  if (t.rho >= 1.0) return {B, B};
  std::int64_t mode = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::floor((static_cast<double>(B) + 1.0) * t.rho)),
      0, B);
  std::int64_t lo = mode, hi = mode;
  NeumaierSum mass;
  mass.add(std::exp(t.log_f(mode)));
  double p_lo = lo > 0 ? std::exp(t.log_f(lo - 1)) : -1.0;
  double p_hi = hi < B ? std::exp(t.log_f(hi + 1)) : -1.0;
  while (mass.value() < 1.0 - tail && (lo > 0 || hi < B)) {
    if (p_lo >= p_hi) {
      mass.add(p_lo);
      --lo;
      p_lo = lo > 0 ? std::exp(t.log_f(lo - 1)) : -1.0;
    } else {
      mass.add(p_hi);
      ++hi;
      p_hi = hi < B ? std::exp(t.log_f(hi + 1)) : -1.0;
    }
  }
  return {lo, hi};
}

// Range of a values carrying at least 1 - tail of Binom(c, 1/2) mass,
// via the Hoeffding bound Pr[|A - c/2| >= w] <= 2 exp(-2 w^2 / c).
inline std::pair<std::int64_t, std::int64_t> split_count_interval(
    std::int64_t c, double tail) {
  if (c <= 64) return {0, c};
  double w = std::sqrt(0.5 * static_cast<double>(c) * std::log(2.0 / tail));
  auto lo = static_cast<std::int64_t>(std::floor(static_cast<double>(c) / 2.0 - w));
  auto hi = static_cast<std::int64_t>(std::ceil(static_cast<double>(c) / 2.0 + w));
  return {std::max<std::int64_t>(lo, 0), std::min<std::int64_t>(hi, c)};
}

}  // namespace detail

// Probability of one point of the P (or Q) family. Pure function; the full
// support is {(u, v) : u, v >= 0, u + v <= blanket_trials + 1}.
inline double count_pair_pmf(const AmplifyParams& params, const CountPair& point,
                             Family which) {
  validate(params);
  detail::FamilyTables tables(params);
  return detail::pmf_point(tables, point.left, point.right, which, 0,
                           params.blanket_trials);
}

// Truncated Hockey-stick divergence D_{e^eps}(P || Q) (or Q -> P when
// from = Family::Q). The blanket count is restricted to the smallest interval
// holding >= 1 - tau/2 of its mass and the conditional split count to a
// Hoeffding interval missing at most tau/2 in total; the dropped tail tau is
// added back, so the result is an upper bound on the true divergence and lies
// within 2*tau of it.
inline double hockey_stick(const AmplifyParams& params, double epsilon,
                           Family from = Family::P) {
  validate(params);
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("amplify: epsilon must be >= 0");
  }
  detail::FamilyTables tables(params);
  const auto [c_lo, c_hi] = detail::blanket_count_interval(tables, kTailMass / 2);
  const double e_eps = std::exp(epsilon);

  NeumaierSum acc;
  for (std::int64_t t = c_lo; t <= c_hi + 1; ++t) {
    std::int64_t u_lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t u_hi = -1;
    if (t >= c_lo && t <= c_hi) {
      auto [a_lo, a_hi] = detail::split_count_interval(t, kTailMass / 2);
      u_lo = std::min(u_lo, a_lo);
      u_hi = std::max(u_hi, a_hi);
    }
    if (t - 1 >= c_lo && t - 1 <= c_hi) {
      auto [a_lo, a_hi] = detail::split_count_interval(t - 1, kTailMass / 2);
      u_lo = std::min(u_lo, a_lo);
      u_hi = std::max(u_hi, a_hi + 1);
    }
    for (std::int64_t u = u_lo; u <= u_hi; ++u) {
      std::int64_t v = t - u;
      if (v < 0) continue;
      double p = detail::pmf_point(tables, u, v, Family::P, c_lo, c_hi);
      double q = detail::pmf_point(tables, u, v, Family::Q, c_lo, c_hi);
      double hi_side = (from == Family::P) ? p : q;
      double lo_side = (from == Family::P) ? q : p;
      // Guard lo_side == 0: e_eps may be +inf for huge epsilon.
      double term = lo_side > 0.0 ? hi_side - e_eps * lo_side : hi_side;
      if (term > 0.0) acc.add(term);
    }
  }
  return std::min(1.0, acc.value() + kTailMass);
}

// delta' available to a single virtual user once group composition over a
// set of size s is paid for at user-level (level_eps, delta).
inline double delta_threshold(double delta, std::int64_t set_size,
                              double level_eps) {
  return delta / (static_cast<double>(set_size) * std::exp(level_eps));
}

// Does the configuration satisfy the user-level (E_k, delta) guarantee?
// The set of size s is treated as s virtual single-item users: the per-virtual
// budget is E_k / s and the divergence must stay below delta / (s * e^{E_k}).
inline PrivacyCheckResult check_privacy(const PrivacyCheckRequest& req) {
  if (!(req.level_epsilon > 0.0)) {
    throw std::invalid_argument("amplify: level epsilon must be positive");
  }
  if (!(req.delta > 0.0 && req.delta < 1.0)) {
    throw std::invalid_argument("amplify: delta must lie in (0, 1)");
  }
  if (req.set_size < 1) {
    throw std::invalid_argument("amplify: set_size must be >= 1");
  }
  double s = static_cast<double>(req.set_size);
  double achieved = hockey_stick(req.params, req.level_epsilon / s);
  bool holds =
      achieved <= delta_threshold(req.delta, req.set_size, req.level_epsilon);
  return {holds, achieved};
}

// Closed-form amplification heuristic sqrt(beta*(p-1)*q*ln(1/delta)/(p*B*gamma)),
// with (p-1)/p read as 1 at p = +infinity. Only used to seed search ranges;
// never a guarantee.
inline double asymptotic_epsilon(const AmplifyParams& params, double delta) {
  validate(params);
  if (params.blanket_trials < 1) {
    throw std::invalid_argument("amplify: asymptotic_epsilon needs B >= 1");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("amplify: delta must lie in (0, 1)");
  }
  if (params.beta == 0.0) return 0.0;
  double factor = std::isinf(params.p) ? 1.0 : (params.p - 1.0) / params.p;
  return std::sqrt(params.beta * factor * params.q * std::log(1.0 / delta) /
                   (static_cast<double>(params.blanket_trials) * params.gamma));
}

}  // namespace segshuffle
