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

#include "regmarket/batch_estimator.hpp"

#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace regmarket {
namespace {

struct Toy {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

// y = 0.5 + 1.5 x1 - 0.7 x2 + 0.2 x3 + noise, x ~ N(0,1).
Toy gaussian_toy(int rows, std::uint64_t seed, double noise = 0.3) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  Toy toy{Eigen::MatrixXd(rows, 4), Eigen::VectorXd(rows)};
  for (int i = 0; i < rows; ++i) {
    toy.x(i, 0) = 1.0;
    for (int j = 1; j < 4; ++j) toy.x(i, j) = n01(gen);
    toy.y(i) = 0.5 + 1.5 * toy.x(i, 1) - 0.7 * toy.x(i, 2) + 0.2 * toy.x(i, 3) +
               noise * n01(gen);
  }
  return toy;
}

Dataset toy_dataset(const Toy& toy) {
  std::vector<std::string> ts;
  for (Eigen::Index i = 0; i < toy.y.size(); ++i) ts.push_back(std::to_string(i));
  return Dataset(ts, "y", "c", toy.y, {"x1", "x2", "x3"}, toy.x.rightCols(3),
                 {{"x1", "c"}, {"x2", "s1"}, {"x3", "s2"}});
}

TEST(FitBatch, InterpolatesExactLinearData) {
  auto toy = gaussian_toy(50, 1, 0.0);
  const auto fit = fit_matrix(toy.x, toy.y, LossSpec::quadratic());
  EXPECT_NEAR(fit.loss_star, 0.0, 1e-20);
  EXPECT_NEAR(fit.coefficients(1), 1.5, 1e-12);
}

TEST(FitBatch, NormalEquationOrthogonality) {
  auto toy = gaussian_toy(500, 2);
  const auto fit = fit_matrix(toy.x, toy.y, LossSpec::quadratic());
  const Eigen::VectorXd g = toy.x.transpose() * (toy.y - toy.x * fit.coefficients);
  EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-8 * toy.y.norm());
  const auto qr = oracle::qr_least_squares(toy.x, toy.y);
  EXPECT_LE((qr - fit.coefficients).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FitBatch, LossRoundTrip) {
  auto toy = gaussian_toy(400, 3);
  for (const auto& spec : {LossSpec::quadratic(), LossSpec::smooth_quantile(0.3, 0.1)}) {
    const auto fit = fit_matrix(toy.x, toy.y, spec);
    const double again = insample_loss(spec, toy.y - toy.x * fit.coefficients);
    EXPECT_LE(std::abs(again - fit.loss_star), 1e-12 * fit.loss_star);
  }
}

TEST(FitBatch, SmoothQuantileMatchesDerivativeFreeMinimizer) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n01;
  Eigen::MatrixXd x(300, 2);
  Eigen::VectorXd y(300);
  for (int i = 0; i < 300; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = n01(gen);
    y(i) = 0.2 + 0.8 * x(i, 1) + 0.5 * n01(gen);
  }
  const auto spec = LossSpec::smooth_quantile(0.75, 0.2);
  const auto fit = fit_matrix(x, y, spec);
  auto objective = [&](const Eigen::VectorXd& b) {
    return insample_loss(spec, y - x * b);
  };
  const Eigen::VectorXd nm =
      oracle::nelder_mead(objective, Eigen::Vector2d(0.0, 0.0), 0.5, 2000);
  EXPECT_LE((nm - fit.coefficients).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE(fit.gradient_norm, 1e-8);
}

TEST(FitBatch, SmallAlphaApproachesMedian) {
  Eigen::VectorXd y(7);
  y << 3.0, -1.0, 8.0, 2.0, 0.5, 10.0, 1.0;
  const double alpha = 1e-3;
  const auto fit = fit_matrix(Eigen::MatrixXd::Ones(7, 1), y, LossSpec::smooth_quantile(0.5, alpha));
  EXPECT_NEAR(fit.coefficients(0), 2.0, alpha * std::log(2.0) + 1e-6);
}

TEST(FitBatch, NestedModelsNeverLoseFit) {
  auto toy = gaussian_toy(600, 5);
  for (const auto& spec : {LossSpec::quadratic(), LossSpec::smooth_quantile(0.9, 0.05)}) {
    double previous = INFINITY;
    for (int cols = 1; cols <= 4; ++cols) {
      const double loss = fit_matrix(toy.x.leftCols(cols), toy.y, spec).loss_star;
      EXPECT_LE(loss, previous + 1e-8);
      previous = loss;
    }
  }
}

TEST(FitBatch, RankDeficiencyPolicies) {
  auto toy = gaussian_toy(100, 6);
  Eigen::MatrixXd dup(100, 5);
  dup << toy.x, toy.x.col(1);
  const auto base = fit_matrix(toy.x, toy.y, LossSpec::quadratic());
  const auto fit = fit_matrix(dup, toy.y, LossSpec::quadratic());
  EXPECT_EQ(fit.rank_remedy, "min-norm");
  EXPECT_NEAR(fit.coefficients(1), fit.coefficients(4), 1e-9);
  EXPECT_LE(std::abs(fit.loss_star - base.loss_star), 1e-12 * base.loss_star);

  FitOptions strict;
  strict.rank_policy = RankPolicy::kError;
  try {
    fit_matrix(dup, toy.y, LossSpec::quadratic(), strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSingular);
  }
  FitOptions jitter;
  jitter.rank_policy = RankPolicy::kJitter;
  EXPECT_EQ(fit_matrix(dup, toy.y, LossSpec::quadratic(), jitter).rank_remedy, "jitter");
}

TEST(FitBatch, TooFewRows) {
  auto toy = gaussian_toy(3, 7);
  EXPECT_THROW(fit_matrix(toy.x, toy.y, LossSpec::quadratic()), Error);
}

TEST(Predict, DotProductAndDimensionCheck) {
  EXPECT_DOUBLE_EQ(predict(Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Ones(1)), 0.5);
  Eigen::Vector3d x(4.0, 5.0, 6.0);
  EXPECT_DOUBLE_EQ(predict(Eigen::Vector3d(0, 1, 0), x), 5.0);
  EXPECT_THROW(predict(Eigen::Vector2d(1, 1), x), Error);
}

TEST(FitAllCoalitions, PowerSetInBinaryOrder) {
  const Dataset d = toy_dataset(gaussian_toy(400, 8));
  const auto design = polynomial_expand(d, 1, false);
  const auto layout = make_layout(design, {"x1"});
  ASSERT_EQ(layout.players, (std::vector<std::string>{"x2", "x3"}));
  EXPECT_FALSE(layout.extended);
  const auto fits = fit_all_coalitions(design, d.target(), layout, LossSpec::quadratic());
  ASSERT_EQ(fits.table.losses.size(), 4u);
  EXPECT_EQ(fits.fits[0].term_names, (std::vector<std::string>{"1", "x1"}));
  EXPECT_EQ(fits.fits[2].term_names, (std::vector<std::string>{"1", "x1", "x3"}));
  EXPECT_EQ(fits.table.label(3), "{x2,x3}");
  EXPECT_GT(fits.table.central_loss(), fits.table.full_loss());

  const auto single = make_layout(coalition_design(design, {"x1"}, {{"x2"}}), {"x1"});
  EXPECT_EQ(single.full_mask(), 1u);
  EXPECT_THROW(fit_all_coalitions(design, d.target(), layout, LossSpec::quadratic(), 1), Error);
}

TEST(FitAllCoalitions, CrossTermsExtendTheGame) {
  const Dataset d = toy_dataset(gaussian_toy(200, 9));
  auto design = polynomial_expand(d, 2, true);
  const auto layout = make_layout(design, {"x1"});
  EXPECT_TRUE(layout.extended);
  EXPECT_EQ(layout.players, (std::vector<std::string>{"x1", "x2", "x3"}));
  const auto fits = fit_all_coalitions(design, d.target(), layout, LossSpec::quadratic());
  EXPECT_EQ(fits.fits[0].term_names, (std::vector<std::string>{"1"}));
  EXPECT_EQ(fits.table.central_mask(), 1u);
}

TEST(CoalitionLossTable, ReportsMissingEntries) {
  CoalitionLossTable t;
  t.players = {"a", "b"};
  t.is_support = {true, true};
  t.losses = {1.0, 0.5, std::nan(""), 0.2};
  try {
    t.require_complete();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCoverage);
    EXPECT_NE(std::string(e.what()).find("{b}"), std::string::npos);
  }
}

}  // namespace
}  // namespace regmarket
