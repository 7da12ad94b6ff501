/*
 * Copyright 2026 The regmarket Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef REGMARKET_ALLOCATION_POLICIES_HPP_
#define REGMARKET_ALLOCATION_POLICIES_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regmarket/batch_estimator.hpp"
#include "regmarket/error.hpp"
#include "regmarket/rng.hpp"

namespace regmarket {

enum class AllocationPolicy {
  kLooDrop,           // leave-one-out, drop the feature from the grand coalition
  kLooAdd,            // leave-one-out, add the feature to the central model
  kLooVariance,       // variance decomposition of a linear model
  kShapley,
  kZeroShapley,       // negative marginals clamped at zero
  kAbsoluteShapley,   // absolute marginals
  kMonteCarloShapley,
};

inline std::string to_string(AllocationPolicy p) {
  switch (p) {
    case AllocationPolicy::kLooDrop: return "loo-a";
    case AllocationPolicy::kLooAdd: return "loo-b";
    case AllocationPolicy::kLooVariance: return "loo-variance";
    case AllocationPolicy::kShapley: return "shapley";
    case AllocationPolicy::kZeroShapley: return "zero-shapley";
    case AllocationPolicy::kAbsoluteShapley: return "absolute-shapley";
    case AllocationPolicy::kMonteCarloShapley: return "mc-shapley";
  }
  return "unknown";
}

inline AllocationPolicy parse_policy(const std::string& name) {
  for (auto p : {AllocationPolicy::kLooDrop, AllocationPolicy::kLooAdd,
                 AllocationPolicy::kLooVariance, AllocationPolicy::kShapley,
                 AllocationPolicy::kZeroShapley, AllocationPolicy::kAbsoluteShapley,
                 AllocationPolicy::kMonteCarloShapley})
    if (to_string(p) == name) return p;
  fail(ErrorKind::kConfig, "unknown allocation policy '" + name + "'");
}

/// Share of the surplus attributed to each support feature.
struct AllocationVector {
  std::vector<std::string> features;
  Eigen::VectorXd values;         // psi_k
  Eigen::VectorXd contributions;  // psi_k * normalizer (loss units)
  Eigen::VectorXd std_errors;     // Monte-Carlo only
  AllocationPolicy policy = AllocationPolicy::kShapley;
  double normalizer = 0.0;
  bool no_surplus = false;

  double sum() const { return values.sum(); }

  double value(const std::string& feature) const {
    for (std::size_t k = 0; k < features.size(); ++k)
      if (features[k] == feature) return values(static_cast<Eigen::Index>(k));
    fail(ErrorKind::kLookup, "no allocation for '" + feature + "'");
  }
};

namespace detail {

enum class Marginal { kRaw, kClampZero, kAbsolute };

inline double transform(double marginal, Marginal mode) {
  switch (mode) {
    case Marginal::kClampZero: return std::max(marginal, 0.0);
    case Marginal::kAbsolute: return std::abs(marginal);
    case Marginal::kRaw: break;
  }
  return marginal;
}

// |w|!(n-|w|-1)!/n! for |w| = 0..n-1.
inline std::vector<double> shapley_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t s = 0; s < n; ++s) {
    double binom = 1.0;  // C(n-1, s)
    for (std::size_t j = 1; j <= s; ++j)
      binom = binom * static_cast<double>(n - 1 - s + j) / static_cast<double>(j);
    w[s] = 1.0 / (static_cast<double>(n) * binom);
  }
  return w;
}

inline double loss_scale(const CoalitionLossTable& table) {
  double scale = 0.0;
  for (double l : table.losses)
    if (!std::isnan(l)) scale = std::max(scale, std::abs(l));
  return std::max(scale, 1e-300);
}

inline AllocationVector finish(const CoalitionLossTable& table, const Eigen::VectorXd& contrib,
                               AllocationPolicy policy, bool flag_only) {
  AllocationVector out;
  out.policy = policy;
  out.normalizer = table.normalizer();
  std::vector<Eigen::Index> support;
  for (std::size_t k = 0; k < table.size(); ++k)
    if (table.is_support[k]) {
      out.features.push_back(table.players[k]);
      support.push_back(static_cast<Eigen::Index>(k));
    }
  out.contributions = contrib(support);
  if (!(out.normalizer > 0.0)) {
    require(flag_only, ErrorKind::kNoSurplus,
            "no loss improvement to allocate (normalizer " + std::to_string(out.normalizer) + ")");
    out.no_surplus = true;
    out.values = Eigen::VectorXd::Zero(out.contributions.size());
    return out;
  }
  out.values = out.contributions / out.normalizer;
  return out;
}

}  // namespace detail

/// Unnormalized Shapley contributions of every player (central players
/// included in the extended game). Marginals within 1e-12 of the table's
/// loss scale count as zero, so dummy players get exactly 0.
inline Eigen::VectorXd shapley_contributions(const CoalitionLossTable& table,
                                             detail::Marginal mode = detail::Marginal::kRaw) {
  table.require_complete();
  const std::size_t n = table.size();
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (n == 0) return phi;
  const auto weights = detail::shapley_weights(n);
  const double tol = 1e-12 * detail::loss_scale(table);
  const Mask full = table.full_mask();
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(full / 2 + 1));
  for (std::size_t k = 0; k < n; ++k) {
    const Mask bit = Mask{1} << k;
    bool dummy = true;
    terms.clear();
    for (Mask m = 0; m <= full; ++m) {
      if (m & bit) continue;
      const double marginal = table.losses[m] - table.losses[m | bit];
      if (std::abs(marginal) > tol) dummy = false;
      terms.push_back(weights[static_cast<std::size_t>(std::popcount(m))] *
                      detail::transform(marginal, mode));
    }
    // Summing in sorted order makes the result independent of the player's
    // position, so interchangeable players get bitwise-equal values.
    std::sort(terms.begin(), terms.end());
    double total = 0.0;
    for (double t : terms) total += t;
    phi(static_cast<Eigen::Index>(k)) = dummy ? 0.0 : total;
  }
  return phi;
}

inline detail::Marginal marginal_mode(AllocationPolicy policy) {
  switch (policy) {
    case AllocationPolicy::kShapley: return detail::Marginal::kRaw;
    case AllocationPolicy::kZeroShapley: return detail::Marginal::kClampZero;
    case AllocationPolicy::kAbsoluteShapley: return detail::Marginal::kAbsolute;
    default: fail(ErrorKind::kParameter, "'" + to_string(policy) + "' is not a Shapley variant");
  }
}

/// Exact Shapley allocation over the support players. No surplus is an error.
inline AllocationVector shapley_allocation(const CoalitionLossTable& table,
                                           AllocationPolicy variant = AllocationPolicy::kShapley) {
  const auto mode = marginal_mode(variant);
  return detail::finish(table, shapley_contributions(table, mode), variant, false);
}

/// Shapley allocation of one time step's losses. A non-positive surplus is
/// flagged rather than raised; payments derived from it are zero.
inline AllocationVector instant_allocation(const CoalitionLossTable& step_losses,
                                           AllocationPolicy variant = AllocationPolicy::kShapley) {
  const auto mode = marginal_mode(variant);
  return detail::finish(step_losses, shapley_contributions(step_losses, mode), variant, true);
}

/// Unnormalized leave-one-out contributions of the support players: the loss
/// increase from dropping each one from the grand coalition (kLooDrop), or
/// the decrease from adding it alone to the central model (kLooAdd).
inline Eigen::VectorXd loo_contributions(const CoalitionLossTable& table,
                                         AllocationPolicy variant) {
  require(variant == AllocationPolicy::kLooDrop || variant == AllocationPolicy::kLooAdd,
          ErrorKind::kParameter, "'" + to_string(variant) + "' is not a leave-one-out variant");
  const std::size_t n = table.size();
  const Mask full = table.full_mask();
  const Mask central = table.central_mask();
  const double tol = 1e-12 * detail::loss_scale(table);
  Eigen::VectorXd contrib = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    if (!table.is_support[k]) continue;
    const Mask bit = Mask{1} << k;
    const double c = variant == AllocationPolicy::kLooDrop
                         ? table.loss(full & ~bit) - table.loss(full)
                         : table.loss(central) - table.loss(central | bit);
    contrib(static_cast<Eigen::Index>(k)) = std::abs(c) > tol ? c : 0.0;
  }
  return contrib;
}

inline AllocationVector loo_allocation(const CoalitionLossTable& table,
                                       AllocationPolicy variant = AllocationPolicy::kLooDrop) {
  return detail::finish(table, loo_contributions(table, variant), variant, false);
}

/// Contributions of every player under `policy` (exact policies only).
inline Eigen::VectorXd policy_contributions(const CoalitionLossTable& table,
                                            AllocationPolicy policy) {
  switch (policy) {
    case AllocationPolicy::kLooDrop:
    case AllocationPolicy::kLooAdd:
      return loo_contributions(table, policy);
    case AllocationPolicy::kShapley:
    case AllocationPolicy::kZeroShapley:
    case AllocationPolicy::kAbsoluteShapley:
      return shapley_contributions(table, marginal_mode(policy));
    default:
      fail(ErrorKind::kConfig,
           "policy '" + to_string(policy) + "' cannot be evaluated from a single loss table");
  }
}

/// Allocation from precomputed contributions of every player.
inline AllocationVector allocation_from(const CoalitionLossTable& table,
                                        const Eigen::VectorXd& contributions,
                                        AllocationPolicy policy, double normalizer) {
  AllocationVector out;
  out.policy = policy;
  out.normalizer = normalizer;
  std::vector<Eigen::Index> support;
  for (std::size_t k = 0; k < table.size(); ++k)
    if (table.is_support[k]) {
      out.features.push_back(table.players[k]);
      support.push_back(static_cast<Eigen::Index>(k));
    }
  out.contributions = contributions(support);
  out.no_surplus = !(normalizer > 0.0);
  out.values = out.no_surplus ? Eigen::VectorXd::Zero(out.contributions.size())
                              : Eigen::VectorXd(out.contributions / normalizer);
  return out;
}

/// psi_k proportional to beta_k^2 Var[x_k] for a plain linear model.
inline AllocationVector loo_variance_allocation(const std::map<std::string, double>& coefficients,
                                                const std::map<std::string, double>& variances) {
  AllocationVector out;
  out.policy = AllocationPolicy::kLooVariance;
  std::vector<double> parts;
  for (const auto& [name, beta] : coefficients) {
    auto it = variances.find(name);
    require(it != variances.end(), ErrorKind::kLookup, "no variance for '" + name + "'");
    require(it->second >= 0.0, ErrorKind::kParameter, "negative variance for '" + name + "'");
    out.features.push_back(name);
    parts.push_back(beta * beta * it->second);
  }
  out.contributions = Eigen::Map<Eigen::VectorXd>(parts.data(), static_cast<Eigen::Index>(parts.size()));
  out.normalizer = out.contributions.sum();
  require(out.normalizer > 0.0, ErrorKind::kNoSurplus, "all variance contributions are zero");
  out.values = out.contributions / out.normalizer;
  return out;
}

/// Permutation-sampling Shapley estimate over the players of `layout`-like
/// games. `loss` maps a coalition mask to its loss; each sample is an
/// antithetic pair (a permutation and its reverse). When `samples` covers
/// all n! orders they are enumerated instead and the result is exact, unless
/// `enumerate_small` is false.
template <typename LossFn>
AllocationVector shapley_montecarlo(LossFn&& loss, const std::vector<std::string>& players,
                                    const std::vector<bool>& is_support, std::size_t samples,
                                    std::uint64_t seed, bool enumerate_small = true) {
  require(samples >= 1, ErrorKind::kParameter, "need at least one permutation sample");
  require(players.size() == is_support.size(), ErrorKind::kParameter, "player flags mismatch");
  const std::size_t n = players.size();
  const Mask full = n == 0 ? 0 : (Mask{1} << n) - 1;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  std::size_t draws = 0;

  auto walk = [&](const std::vector<std::size_t>& order, Eigen::VectorXd& acc) {
    Mask m = 0;
    double prev = loss(m);
    for (std::size_t k : order) {
      m |= Mask{1} << k;
      const double next = loss(m);
      acc(static_cast<Eigen::Index>(k)) += prev - next;
      prev = next;
    }
  };

  double n_factorial = 1.0;
  for (std::size_t i = 2; i <= n; ++i) n_factorial *= static_cast<double>(i);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const bool exhaustive = enumerate_small && static_cast<double>(samples) >= n_factorial;

  if (exhaustive) {
    do {
      Eigen::VectorXd one = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      walk(order, one);
      sum += one;
      ++draws;
    } while (std::next_permutation(order.begin(), order.end()));
  } else {
    CounterRng rng(seed, "shapley-permutations");
    for (std::size_t s = 0; s < samples; ++s) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
      Eigen::VectorXd pair = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      walk(order, pair);
      std::vector<std::size_t> reversed(order.rbegin(), order.rend());
      walk(reversed, pair);
      pair *= 0.5;
      sum += pair;
      sum_sq += pair.cwiseProduct(pair);
      ++draws;
    }
  }

  const double d = static_cast<double>(draws);
  const Eigen::VectorXd mean = sum / d;
  Eigen::VectorXd se = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (!exhaustive && draws > 1) {
    const Eigen::VectorXd var = ((sum_sq / d) - mean.cwiseProduct(mean)).cwiseMax(0.0) * d / (d - 1.0);
    se = (var / d).cwiseSqrt();
  }

  AllocationVector out;
  out.policy = AllocationPolicy::kMonteCarloShapley;
  out.normalizer = loss(Mask{0}) - loss(full);
  std::vector<Eigen::Index> support;
  for (std::size_t k = 0; k < n; ++k)
    if (is_support[k]) {
      out.features.push_back(players[k]);
      support.push_back(static_cast<Eigen::Index>(k));
    }
  out.contributions = mean(support);
  require(out.normalizer > 0.0, ErrorKind::kNoSurplus, "no loss improvement to allocate");
  out.values = out.contributions / out.normalizer;
  out.std_errors = se(support) / out.normalizer;
  return out;
}

inline AllocationVector shapley_montecarlo(const CoalitionLossTable& table, std::size_t samples,
                                           std::uint64_t seed, bool enumerate_small = true) {
  return shapley_montecarlo([&](Mask m) { return table.loss(m); }, table.players,
                            table.is_support, samples, seed, enumerate_small);
}

/// psi_t = lambda psi_{t-1} + (1 - lambda) psi(l_t), applied element-wise to
/// both the shares and the unnormalized contributions.
inline AllocationVector online_allocation_update(const AllocationVector& previous,
                                                 const AllocationVector& instant, double lambda) {
  require(previous.features == instant.features, ErrorKind::kParameter,
          "allocation feature sets differ");
  require(previous.policy == instant.policy, ErrorKind::kParameter, "allocation policies differ");
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kParameter,
          "forgetting factor must lie in [0,1]");
  AllocationVector out = previous;
  out.values = lambda * previous.values + (1.0 - lambda) * instant.values;
  out.contributions = lambda * previous.contributions + (1.0 - lambda) * instant.contributions;
  out.normalizer = lambda * previous.normalizer + (1.0 - lambda) * instant.normalizer;
  out.no_surplus = !(out.normalizer > 0.0);
  return out;
}

}  // namespace regmarket

#endif  // REGMARKET_ALLOCATION_POLICIES_HPP_
