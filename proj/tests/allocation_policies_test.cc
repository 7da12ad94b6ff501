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

#include "regmarket/allocation_policies.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace regmarket {
namespace {

constexpr double kExactTol = 1e-10;

CoalitionLossTable table_of(std::vector<double> losses, int n) {
  CoalitionLossTable t;
  for (int k = 0; k < n; ++k) {
    t.players.push_back("x" + std::to_string(k + 1));
    t.is_support.push_back(true);
  }
  t.losses = std::move(losses);
  return t;
}

// Random table with loss decreasing in expectation as players join.
CoalitionLossTable random_table(int n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> gains(static_cast<std::size_t>(n));
  for (auto& g : gains) g = u(gen);
  std::vector<double> losses(std::size_t{1} << n);
  for (std::size_t m = 0; m < losses.size(); ++m) {
    double l = 5.0;
    for (int k = 0; k < n; ++k)
      if (m >> k & 1) l -= gains[static_cast<std::size_t>(k)];
    losses[m] = l + 0.3 * (u(gen) - 0.5) * (m != 0 && m != losses.size() - 1);
  }
  return table_of(losses, n);
}

TEST(Shapley, SymmetricPair) {
  const auto psi = shapley_allocation(table_of({1.0, 0.5, 0.5, 0.0}, 2));
  EXPECT_DOUBLE_EQ(psi.values(0), 0.5);
  EXPECT_DOUBLE_EQ(psi.values(1), 0.5);
  EXPECT_DOUBLE_EQ(psi.normalizer, 1.0);
}

TEST(Shapley, MatchesPermutationOracle) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 6;
    const auto table = random_table(n, gen);
    const auto exact = shapley_contributions(table);
    const auto brute = oracle::permutation_shapley(
        [&](unsigned long m) { return table.losses[m]; }, n);
    for (int k = 0; k < n; ++k) EXPECT_NEAR(exact(k), brute[static_cast<std::size_t>(k)], kExactTol);
  }
}

TEST(Shapley, EfficiencyOnCompleteTables) {
  std::mt19937_64 gen(22);
  const auto table = random_table(5, gen);
  EXPECT_NEAR(shapley_allocation(table).sum(), 1.0, 1e-12);
}

TEST(Shapley, DummyIsExactlyZero) {
  // x2 never changes the loss.
  const auto psi = shapley_allocation(table_of({1.0, 0.4, 1.0, 0.4}, 2));
  EXPECT_EQ(psi.values(1), 0.0);
  EXPECT_DOUBLE_EQ(psi.values(0), 1.0);
}

TEST(Shapley, ContributionsAreLinear) {
  std::mt19937_64 gen(23);
  const auto a = random_table(4, gen);
  const auto b = random_table(4, gen);
  auto sum = a;
  for (std::size_t m = 0; m < sum.losses.size(); ++m) sum.losses[m] += b.losses[m];
  const Eigen::VectorXd lhs = shapley_contributions(sum);
  const Eigen::VectorXd rhs = shapley_contributions(a) + shapley_contributions(b);
  EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Shapley, VariantsAreNonNegative) {
  // x2 hurts when added on its own.
  const auto table = table_of({1.0, 0.3, 1.2, 0.2}, 2);
  EXPECT_LT(shapley_allocation(table).values(1), 0.0);
  for (auto v : {AllocationPolicy::kZeroShapley, AllocationPolicy::kAbsoluteShapley}) {
    const auto psi = shapley_allocation(table, v);
    EXPECT_GE(psi.values.minCoeff(), 0.0);
    EXPECT_EQ(psi.policy, v);
  }
}

TEST(Shapley, NoSurplusAndCoverage) {
  try {
    shapley_allocation(table_of({1.0, 1.0, 1.0, 1.0}, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoSurplus);
  }
  try {
    shapley_allocation(table_of({1.0, 0.5, std::nan(""), 0.0}, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCoverage);
  }
}

TEST(LeaveOneOut, SingleFeatureGetsEverything) {
  const auto t = table_of({0.4, 0.1}, 1);
  EXPECT_DOUBLE_EQ(loo_allocation(t, AllocationPolicy::kLooDrop).values(0), 1.0);
  EXPECT_DOUBLE_EQ(loo_allocation(t, AllocationPolicy::kLooAdd).values(0), 1.0);
}

TEST(LeaveOneOut, DuplicatesGetNothingWhenDropped) {
  const auto t = table_of({1.0, 0.3, 0.3, 0.3}, 2);
  const auto drop = loo_allocation(t, AllocationPolicy::kLooDrop);
  EXPECT_EQ(drop.values(0), 0.0);
  EXPECT_EQ(drop.values(1), 0.0);
  const auto add = loo_allocation(t, AllocationPolicy::kLooAdd);
  EXPECT_DOUBLE_EQ(add.values(0), 1.0);
  const auto shap = shapley_allocation(t);
  EXPECT_DOUBLE_EQ(shap.values(0), shap.values(1));
}

TEST(LeaveOneOut, VarianceDecomposition) {
  const auto psi = loo_variance_allocation({{"x2", -0.5}, {"x3", 0.9}, {"x4", -0.2}},
                                           {{"x2", 1.0}, {"x3", 1.0}, {"x4", 1.0}});
  EXPECT_NEAR(psi.value("x2"), 0.25 / 1.10, 1e-15);
  EXPECT_NEAR(psi.value("x3"), 0.81 / 1.10, 1e-15);
  EXPECT_NEAR(psi.value("x4"), 0.04 / 1.10, 1e-15);
  const auto half = loo_variance_allocation({{"a", 2.0}, {"b", -2.0}}, {{"a", 3.0}, {"b", 3.0}});
  EXPECT_DOUBLE_EQ(half.values(0), 0.5);
  const auto zero = loo_variance_allocation({{"a", 0.0}, {"b", 1.0}}, {{"a", 1.0}, {"b", 1.0}});
  EXPECT_EQ(zero.values(0), 0.0);
  EXPECT_THROW(loo_variance_allocation({{"a", 0.0}}, {{"a", 1.0}}), Error);
}

TEST(MonteCarlo, EnumerationIsExact) {
  std::mt19937_64 gen(24);
  const auto table = random_table(4, gen);
  const auto mc = shapley_montecarlo(table, 24, 1);
  const auto exact = shapley_allocation(table);
  EXPECT_LE((mc.values - exact.values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(mc.std_errors.maxCoeff(), 0.0);
}

TEST(MonteCarlo, SymmetricPairIsExactForAnySeed) {
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    const auto mc = shapley_montecarlo(table_of({1.0, 0.5, 0.5, 0.0}, 2), 3, seed, false);
    EXPECT_DOUBLE_EQ(mc.values(0), 0.5);
  }
}

TEST(MonteCarlo, SamplingWithinThreeStandardErrors) {
  std::mt19937_64 gen(25);
  int inside = 0, total = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto table = random_table(5, gen);
    const auto exact = shapley_allocation(table);
    const auto mc = shapley_montecarlo(table, 2000, 100 + trial, false);
    for (Eigen::Index k = 0; k < 5; ++k, ++total)
      inside += std::abs(mc.values(k) - exact.values(k)) <= 3.0 * mc.std_errors(k);
  }
  EXPECT_GE(inside, total - 1);
}

TEST(MonteCarlo, DeterministicGivenSeed) {
  std::mt19937_64 gen(26);
  const auto table = random_table(6, gen);
  EXPECT_EQ(shapley_montecarlo(table, 50, 7, false).values,
            shapley_montecarlo(table, 50, 7, false).values);
}

TEST(Online, RecursionProperties) {
  auto instant = shapley_allocation(table_of({1.0, 0.5, 0.7, 0.0}, 2));
  auto start = instant;
  EXPECT_EQ(online_allocation_update(start, instant, 0.9).values, instant.values);
  start.values << 0.9, 0.1;
  EXPECT_EQ(online_allocation_update(start, instant, 0.0).values, instant.values);
  auto state = start;
  for (int t = 1; t <= 30; ++t) {
    state = online_allocation_update(state, instant, 0.8);
    const Eigen::VectorXd expected =
        instant.values + std::pow(0.8, t) * (start.values - instant.values);
    EXPECT_LE((state.values - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
  auto other = instant;
  other.features = {"x1", "z"};
  EXPECT_THROW(online_allocation_update(instant, other, 0.5), Error);
}

TEST(Instant, FlagsMissingSurplus) {
  const auto flat = instant_allocation(table_of({0.2, 0.2, 0.2, 0.2}, 2));
  EXPECT_TRUE(flat.no_surplus);
  EXPECT_EQ(flat.values.cwiseAbs().sum(), 0.0);
  const auto single = instant_allocation(table_of({0.4, 0.1}, 1));
  EXPECT_DOUBLE_EQ(single.values(0), 1.0);
  std::mt19937_64 gen(27);
  const auto table = random_table(3, gen);
  const auto brute =
      oracle::permutation_shapley([&](unsigned long m) { return table.losses[m]; }, 3);
  const auto inst = instant_allocation(table);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(inst.contributions(k), brute[static_cast<std::size_t>(k)], kExactTol);
}

}  // namespace
}  // namespace regmarket
