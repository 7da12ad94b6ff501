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


#ifndef REGMARKET_SIMULATION_LAB_HPP_
#define REGMARKET_SIMULATION_LAB_HPP_

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "regmarket/error.hpp"
#include "regmarket/market_engine.hpp"
#include "regmarket/rng.hpp"
#include "regmarket/timeseries_data.hpp"

namespace regmarket {

enum class ScenarioCase {
  kBatchLinear,
  kBatchPoly,
  kBatchArxQuantile,
  kOnlineArx,
  kOnlineQuantile,
  kMultiAgentArx,
};

inline std::string to_string(ScenarioCase c) {
  switch (c) {
    case ScenarioCase::kBatchLinear: return "batch-linear";
    case ScenarioCase::kBatchPoly: return "batch-poly";
    case ScenarioCase::kBatchArxQuantile: return "batch-arx-quantile";
    case ScenarioCase::kOnlineArx: return "online-arx";
    case ScenarioCase::kOnlineQuantile: return "online-quantile";
    case ScenarioCase::kMultiAgentArx: return "multi-agent-arx";
  }
  return "unknown";
}

inline const std::vector<ScenarioCase>& all_scenarios() {
  static const std::vector<ScenarioCase> all{
      ScenarioCase::kBatchLinear,     ScenarioCase::kBatchPoly,
      ScenarioCase::kBatchArxQuantile, ScenarioCase::kOnlineArx,
      ScenarioCase::kOnlineQuantile,  ScenarioCase::kMultiAgentArx};
  return all;
}

inline ScenarioCase parse_scenario(const std::string& name) {
  for (auto c : all_scenarios())
    if (to_string(c) == name) return c;
  fail(ErrorKind::kParameter, "unknown scenario case '" + name + "'");
}

struct ScenarioSpec {
  ScenarioCase id = ScenarioCase::kBatchLinear;
  std::size_t rows = 10000;
  std::uint64_t seed = 1;
  double noise_sd = 0.3;
  // Replaces the default constant coefficients (intercept first).
  std::vector<double> beta;

  void validate() const {
    require(rows >= 1, ErrorKind::kParameter, "scenario needs at least one row");
    require(noise_sd > 0.0 && std::isfinite(noise_sd), ErrorKind::kParameter,
            "noise standard deviation must be positive");
  }
};

inline ScenarioSpec default_scenario(ScenarioCase id) {
  ScenarioSpec s;
  s.id = id;
  s.rows = id == ScenarioCase::kMultiAgentArx ? 20000 : 10000;
  return s;
}

/// What generated a dataset, plus closed-form values where they exist.
struct GroundTruth {
  ScenarioCase id = ScenarioCase::kBatchLinear;
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  double noise_sd = 0.0;
  bool stand_in = false;
  std::string model;
  std::vector<std::string> coefficient_names;
  std::vector<double> beta;
  std::map<std::string, std::vector<double>> trajectories;
  std::map<std::string, double> analytic;
  std::map<std::string, AgentId> owners;
  std::vector<std::string> notes;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["schema"] = "regmarket.ground-truth";
    j["version"] = 1;
    j["case"] = to_string(id);
    j["seed"] = seed;
    j["rows"] = rows;
    j["noise_sd"] = noise_sd;
    j["stand_in"] = stand_in;
    j["model"] = model;
    j["coefficient_names"] = coefficient_names;
    j["beta"] = beta;
    j["trajectories"] = trajectories;
    j["analytic"] = analytic;
    j["owners"] = owners;
    j["notes"] = notes;
    return j;
  }
};

struct Scenario {
  Dataset data;
  GroundTruth truth;
};

namespace detail {

inline std::vector<std::string> row_stamps(std::size_t n) {
  std::vector<std::string> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = std::to_string(i);
  return ts;
}

inline Dataset assemble(const std::string& target, const AgentId& target_owner,
                        const Eigen::VectorXd& y, const std::vector<std::string>& names,
                        const std::vector<Eigen::VectorXd>& columns,
                        const std::map<std::string, AgentId>& owners) {
  Eigen::MatrixXd x(y.size(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = columns[j];
  return Dataset(row_stamps(static_cast<std::size_t>(y.size())), target, target_owner, y, names,
                 x, owners);
}

inline Eigen::VectorXd normal_stream(std::uint64_t seed, const std::string& name, std::size_t n,
                                     std::size_t offset = 0) {
  const CounterRng rng(seed, name);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = rng.normal(offset + i);
  return v;
}

inline std::vector<double> coefficients(const ScenarioSpec& spec, std::vector<double> fallback) {
  if (spec.beta.empty()) return fallback;
  require(spec.beta.size() == fallback.size(), ErrorKind::kParameter,
          to_string(spec.id) + " takes " + std::to_string(fallback.size()) + " coefficients");
  return spec.beta;
}

// Exact Shapley values of a value function over n players (gain convention).
template <typename Value>
std::vector<double> shapley_of(Value&& value, std::size_t n) {
  std::vector<double> phi(n, 0.0);
  const auto w = shapley_weights(n);
  for (std::size_t k = 0; k < n; ++k)
    for (Mask m = 0; m < (Mask{1} << n); ++m) {
      if (m >> k & 1) continue;
      phi[k] += w[static_cast<std::size_t>(std::popcount(m))] * (value(m | Mask{1} << k) - value(m));
    }
  return phi;
}

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Standard normal quantile by bisection on erfc.
inline double normal_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Site coordinates (lat, long) of the nine-agent stand-in.
inline const std::array<std::pair<double, double>, 9>& site_coordinates() {
  static const std::array<std::pair<double, double>, 9> sites{{{34.248, -79.75},
                                                               {34.02, -79.537},
                                                               {33.925, -79.958},
                                                               {34.732, -82.122},
                                                               {34.556, -81.889},
                                                               {34.334, -82.133},
                                                               {33.136, -80.857},
                                                               {33.112, -80.665},
                                                               {32.641, -80.504}}};
  return sites;
}

inline double haversine_km(std::pair<double, double> a, std::pair<double, double> b) {
  constexpr double kEarthKm = 6371.0;
  const double rad = std::numbers::pi / 180.0;
  const double dlat = (b.first - a.first) * rad, dlon = (b.second - a.second) * rad;
  const double h = std::pow(std::sin(dlat / 2), 2) +
                   std::cos(a.first * rad) * std::cos(b.first * rad) * std::pow(std::sin(dlon / 2), 2);
  return 2.0 * kEarthKm * std::asin(std::sqrt(h));
}

// ---------------------------------------------------------------------------

inline Scenario batch_linear(const ScenarioSpec& spec) {
  const auto beta = coefficients(spec, {0.1, -0.3, 0.5, -0.9, 0.2});
  const std::size_t t = spec.rows;
  const std::vector<std::string> names{"x1", "x2", "x3", "x4"};
  const std::map<std::string, AgentId> owners{{"x1", "a1"}, {"x2", "a2"}, {"x3", "a3"}, {"x4", "a3"}};
  std::vector<Eigen::VectorXd> x;
  Eigen::VectorXd y = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(t), beta[0]) +
                      spec.noise_sd * normal_stream(spec.seed, "noise", t);
  for (std::size_t j = 0; j < names.size(); ++j) {
    x.push_back(normal_stream(spec.seed, names[j], t));
    y += beta[j + 1] * x.back();
  }
  Scenario s{assemble("y", "a1", y, names, x, owners), {}};
  auto& g = s.truth;
  g.model = "y = b0 + b1 x1 + b2 x2 + b3 x3 + b4 x4 + e; x ~ N(0,1), e ~ N(0, sd^2)";
  g.coefficient_names = {"1", "x1", "x2", "x3", "x4"};
  g.beta = beta;
  const double s2 = spec.noise_sd * spec.noise_sd;
  double support = 0.0;
  for (std::size_t k = 2; k <= 4; ++k) support += beta[k] * beta[k];
  g.analytic["central_loss"] = s2 + support;
  g.analytic["full_loss"] = s2;
  for (std::size_t k = 2; k <= 4; ++k)
    g.analytic["share_" + names[k - 1]] = beta[k] * beta[k] / support;
  g.owners = owners;
  return s;
}

inline Scenario batch_poly(const ScenarioSpec& spec) {
  // 1, x1, x2, x3, x1^2, x2^2, x3^2, x1 x2, x1 x3, x2 x3
  const auto beta = coefficients(spec, {0.2, -0.4, 0.6, 0.3, 0.0, 0.1, 0.0, 0.0, -0.4, 0.0});
  const std::size_t t = spec.rows;
  const std::vector<std::string> names{"x1", "x2", "x3"};
  const std::map<std::string, AgentId> owners{{"x1", "a1"}, {"x2", "a2"}, {"x3", "a3"}};
  std::vector<Eigen::VectorXd> x;
  for (const auto& n : names) x.push_back(normal_stream(spec.seed, n, t));
  const auto &x1 = x[0].array(), &x2 = x[1].array(), &x3 = x[2].array();
  const Eigen::VectorXd y =
      (beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x3 + beta[4] * x1.square() +
       beta[5] * x2.square() + beta[6] * x3.square() + beta[7] * x1 * x2 + beta[8] * x1 * x3 +
       beta[9] * x2 * x3)
          .matrix() +
      spec.noise_sd * normal_stream(spec.seed, "noise", t);
  Scenario s{assemble("y", "a1", y, names, x, owners), {}};
  auto& g = s.truth;
  g.model = "y = quadratic polynomial in x1, x2, x3 with interactions + e; x ~ N(0,1)";
  g.coefficient_names = {"1", "x1", "x2", "x3", "x1^2", "x2^2", "x3^2", "x1*x2", "x1*x3", "x2*x3"};
  g.beta = beta;
  // Explained variance of the best model using a subset of x1..x3 (bit k
  // for x_{k+1}); the monomials are orthogonal under N(0,1) inputs.
  auto explained = [&](Mask m) {
    auto in = [&](int k) { return (m >> k & 1) != 0; };
    double v = 0.0;
    for (int k = 0; k < 3; ++k)
      if (in(k)) v += beta[1 + k] * beta[1 + k] + 2.0 * beta[4 + k] * beta[4 + k];
    const std::array<std::array<int, 3>, 3> pairs{{{0, 1, 7}, {0, 2, 8}, {1, 2, 9}}};
    for (const auto& p : pairs)
      if (in(p[0]) && in(p[1])) v += beta[p[2]] * beta[p[2]];
    return v;
  };
  const double s2 = spec.noise_sd * spec.noise_sd;
  const double total = explained(7);
  const auto phi = shapley_of(explained, 3);
  g.analytic["base_loss"] = s2 + total;
  g.analytic["central_loss"] = s2 + total - explained(1);
  g.analytic["full_loss"] = s2;
  g.analytic["share_x2"] = phi[1] / total;
  g.analytic["share_x3"] = phi[2] / total;
  g.analytic["share_x1"] = phi[0] / total;
  g.owners = owners;
  g.notes.push_back("terms with nonzero coefficients: 1, x1, x2, x3, x2^2, x1*x3");
  return s;
}

// Shared generator for the ARX cases: y_t depends on y_{t-1} and x_{k,t-1}.
template <typename Coef>
Eigen::VectorXd simulate_arx(const ScenarioSpec& spec, std::size_t burn,
                             const std::vector<Eigen::VectorXd>& x, Coef&& beta_at, double y0) {
  const std::size_t t = spec.rows;
  const Eigen::VectorXd e = normal_stream(spec.seed, "noise", burn + t);
  Eigen::VectorXd y(static_cast<Eigen::Index>(burn + t));
  double prev = y0;
  for (std::size_t i = 0; i < burn + t; ++i) {
    const double s = i < burn ? 0.0 : static_cast<double>(i - burn) / static_cast<double>(t);
    const std::array<double, 5> b = beta_at(s);
    double v = b[0] + b[1] * prev + spec.noise_sd * e(static_cast<Eigen::Index>(i));
    if (i > 0)
      for (std::size_t k = 0; k < 3; ++k) v += b[k + 2] * x[k](static_cast<Eigen::Index>(i - 1));
    y(static_cast<Eigen::Index>(i)) = v;
    prev = v;
  }
  return y.tail(static_cast<Eigen::Index>(t));
}

inline Scenario batch_arx_quantile(const ScenarioSpec& spec) {
  const auto beta = coefficients(spec, {0.1, 0.92, -0.3, 0.1, -0.2});
  const std::size_t burn = 500, t = spec.rows;
  const std::vector<std::string> names{"x2", "x3", "x4"};
  const std::map<std::string, AgentId> owners{{"x2", "a2"}, {"x3", "a3"}, {"x4", "a3"}};
  std::vector<Eigen::VectorXd> x;
  for (const auto& n : names) x.push_back(normal_stream(spec.seed, n, burn + t));
  const Eigen::VectorXd y = simulate_arx(
      spec, burn, x, [&](double) { return std::array<double, 5>{beta[0], beta[1], beta[2], beta[3], beta[4]}; },
      beta[0] / (1.0 - beta[1]));
  std::vector<Eigen::VectorXd> tail;
  for (const auto& c : x) tail.push_back(c.tail(static_cast<Eigen::Index>(t)));
  Scenario s{assemble("y", "a1", y, names, tail, owners), {}};
  auto& g = s.truth;
  g.model = "y_t = b0 + b1 y_{t-1} + b2 x2_{t-1} + b3 x3_{t-1} + b4 x4_{t-1} + e_t; x ~ N(0,1)";
  g.coefficient_names = {"1", "y_lag1", "x2_lag1", "x3_lag1", "x4_lag1"};
  g.beta = beta;
  g.notes.push_back("500 burn-in rows discarded; support coefficients (-0.3, 0.1, -0.2)");
  // Gaussian residuals: the optimal pinball loss at level tau is sd * pdf(z_tau).
  const double s2 = spec.noise_sd * spec.noise_sd;
  for (double tau : {0.1, 0.75}) {
    const double c = normal_pdf(normal_quantile(tau));
    auto loss = [&](Mask m) {
      double v = s2;
      for (int k = 0; k < 3; ++k)
        if (!(m >> k & 1)) v += beta[2 + k] * beta[2 + k];
      return c * std::sqrt(v);
    };
    char key[64];
    std::snprintf(key, sizeof key, "tau%.2f_", tau);
    g.analytic[std::string(key) + "central_loss"] = loss(0);
    g.analytic[std::string(key) + "full_loss"] = loss(7);
    const auto phi = shapley_of([&](Mask m) { return loss(0) - loss(m); }, 3);
    for (int k = 0; k < 3; ++k)
      g.analytic[std::string(key) + "share_" + names[static_cast<std::size_t>(k)]] =
          phi[static_cast<std::size_t>(k)] / (loss(0) - loss(7));
  }
  g.owners = owners;
  return s;
}

inline std::array<double, 5> online_arx_beta(double s) {
  const double two_pi = 2.0 * std::numbers::pi;
  return {0.1, 0.8 + 0.1 * std::sin(two_pi * s), -0.1 - 0.5 * s, 0.3 + 0.2 * std::sin(2.0 * two_pi * s),
          0.3 * (1.0 - s)};
}

inline Scenario online_arx(const ScenarioSpec& spec) {
  require(spec.beta.empty(), ErrorKind::kParameter, "online-arx uses fixed coefficient trajectories");
  const std::size_t burn = 500, t = spec.rows;
  const std::vector<std::string> names{"x2", "x3", "x4"};
  const std::map<std::string, AgentId> owners{{"x2", "a2"}, {"x3", "a3"}, {"x4", "a3"}};
  std::vector<Eigen::VectorXd> x;
  for (const auto& n : names) x.push_back(normal_stream(spec.seed, n, burn + t));
  const Eigen::VectorXd y = simulate_arx(spec, burn, x, online_arx_beta, 0.5);
  std::vector<Eigen::VectorXd> tail;
  for (const auto& c : x) tail.push_back(c.tail(static_cast<Eigen::Index>(t)));
  Scenario s{assemble("y", "a1", y, names, tail, owners), {}};
  auto& g = s.truth;
  g.stand_in = true;
  g.model = "y_t = b0 + b1(s) y_{t-1} + b2(s) x2_{t-1} + b3(s) x3_{t-1} + b4(s) x4_{t-1} + e_t, s = t/T";
  g.coefficient_names = {"1", "y_lag1", "x2_lag1", "x3_lag1", "x4_lag1"};
  for (std::size_t k = 0; k < 5; ++k) g.trajectories[g.coefficient_names[k]].reserve(t);
  for (std::size_t i = 0; i < t; ++i) {
    const auto b = online_arx_beta(static_cast<double>(i) / static_cast<double>(t));
    for (std::size_t k = 0; k < 5; ++k) g.trajectories[g.coefficient_names[k]].push_back(b[k]);
  }
  g.notes.push_back(
      "stand-in trajectories: b1 = 0.8 + 0.1 sin(2 pi s), b2 = -0.1 - 0.5 s, "
      "b3 = 0.3 + 0.2 sin(4 pi s), b4 = 0.3 (1 - s)");
  g.owners = owners;
  return s;
}

inline std::array<double, 5> online_quantile_beta(double s) {
  const double w = std::sin(2.0 * std::numbers::pi * s);
  return {0.1, 0.4 + 0.2 * w, 0.5 + 0.1 * w, 0.5 - 0.1 * w, 1.0 + 0.5 * s};
}

inline Scenario online_quantile(const ScenarioSpec& spec) {
  require(spec.beta.empty(), ErrorKind::kParameter,
          "online-quantile uses fixed coefficient trajectories");
  const std::size_t t = spec.rows;
  const std::vector<std::string> names{"x1", "x2", "x3", "x4"};
  const std::map<std::string, AgentId> owners{{"x1", "a1"}, {"x2", "a2"}, {"x3", "a3"}, {"x4", "a3"}};
  std::vector<Eigen::VectorXd> x;
  for (std::size_t j = 0; j < 3; ++j) x.push_back(normal_stream(spec.seed, names[j], t));
  {
    const CounterRng rng(spec.seed, "x4");
    Eigen::VectorXd u(static_cast<Eigen::Index>(t));
    for (std::size_t i = 0; i < t; ++i) u(static_cast<Eigen::Index>(i)) = 0.5 + rng.uniform(i);
    x.push_back(u);
  }
  const Eigen::VectorXd e = normal_stream(spec.seed, "noise", t);
  Eigen::VectorXd y(static_cast<Eigen::Index>(t));
  GroundTruth g;
  g.coefficient_names = {"1", "x1", "x2", "x3", "x4*e"};
  for (std::size_t i = 0; i < t; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto b = online_quantile_beta(static_cast<double>(i) / static_cast<double>(t));
    y(r) = b[0] + b[1] * x[0](r) + b[2] * x[1](r) + b[3] * x[2](r) + b[4] * x[3](r) * spec.noise_sd * e(r);
    for (std::size_t k = 0; k < 5; ++k) g.trajectories[g.coefficient_names[k]].push_back(b[k]);
  }
  Scenario s{assemble("y", "a1", y, names, x, owners), std::move(g)};
  auto& truth = s.truth;
  truth.stand_in = true;
  truth.model = "y = b0 + b1(s) x1 + b2(s) x2 + b3(s) x3 + b4(s) x4 e; x1..x3 ~ N(0,1), x4 ~ U[0.5,1.5]";
  truth.notes.push_back(
      "stand-in trajectories: b1 = 0.4 + 0.2 w, b2 = 0.5 + 0.1 w, b3 = 0.5 - 0.1 w with "
      "w = sin(2 pi s), b4 = 1 + 0.5 s");
  truth.notes.push_back("x4 only scales the noise, so it is worthless at the median");
  truth.owners = owners;
  return s;
}

inline Scenario multi_agent_arx(const ScenarioSpec& spec) {
  require(spec.beta.empty(), ErrorKind::kParameter, "multi-agent-arx has no coefficient override");
  constexpr std::size_t kAgents = 9;
  const std::size_t burn = 500, t = spec.rows;
  const auto& sites = site_coordinates();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(kAgents, kAgents);
  for (std::size_t i = 0; i < kAgents; ++i) {
    for (std::size_t j = 0; j < kAgents; ++j)
      if (i != j)
        w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            std::exp(-haversine_km(sites[i], sites[j]) / 50.0);
    w.row(static_cast<Eigen::Index>(i)) /= w.row(static_cast<Eigen::Index>(i)).sum();
  }
  const Eigen::MatrixXd a = 0.6 * Eigen::MatrixXd::Identity(kAgents, kAgents) + 0.35 * w;
  std::vector<CounterRng> shocks;
  std::vector<std::string> names;
  std::map<std::string, AgentId> owners;
  for (std::size_t i = 0; i < kAgents; ++i) {
    names.push_back("y" + std::to_string(i + 1));
    owners[names.back()] = "a" + std::to_string(i + 1);
    shocks.emplace_back(spec.seed, names.back());
  }
  Eigen::VectorXd z = Eigen::VectorXd::Zero(kAgents);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(kAgents));
  Eigen::VectorXd eta(kAgents);
  for (std::size_t step = 0; step < burn + t; ++step) {
    for (std::size_t i = 0; i < kAgents; ++i)
      eta(static_cast<Eigen::Index>(i)) = spec.noise_sd * shocks[i].normal(step);
    z = a * z + eta;
    if (step >= burn)
      out.row(static_cast<Eigen::Index>(step - burn)) =
          (1.0 / (1.0 + (-z.array()).exp())).transpose();
  }
  std::vector<Eigen::VectorXd> features;
  for (std::size_t i = 1; i < kAgents; ++i) features.push_back(out.col(static_cast<Eigen::Index>(i)));
  std::vector<std::string> feature_names(names.begin() + 1, names.end());
  std::map<std::string, AgentId> feature_owners = owners;
  feature_owners.erase("y1");
  Scenario s{assemble("y1", "a1", out.col(0), feature_names, features, feature_owners), {}};
  auto& g = s.truth;
  g.stand_in = true;
  g.model = "z_t = A z_{t-1} + eta_t, y_i = logistic(z_i); A = 0.6 I + 0.35 W, W row-normalized exp(-d/50 km)";
  g.coefficient_names = names;
  for (std::size_t i = 0; i < kAgents; ++i) {
    std::vector<double> row(kAgents);
    for (std::size_t j = 0; j < kAgents; ++j) row[j] = a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    g.trajectories["A_row_" + names[i]] = row;
  }
  g.notes.push_back("structural stand-in for nine spatially correlated wind farms; values in (0,1)");
  g.notes.push_back("500 burn-in steps discarded; every series can be made the target with with_target");
  g.owners = owners;
  return s;
}

}  // namespace detail

/// Generates the dataset of a scenario and its ground truth. Reproducible
/// from (case, rows, seed, noise): every series draws from its own named stream.
inline Scenario generate(const ScenarioSpec& spec) {
  spec.validate();
  Scenario s;
  switch (spec.id) {
    case ScenarioCase::kBatchLinear: s = detail::batch_linear(spec); break;
    case ScenarioCase::kBatchPoly: s = detail::batch_poly(spec); break;
    case ScenarioCase::kBatchArxQuantile: s = detail::batch_arx_quantile(spec); break;
    case ScenarioCase::kOnlineArx: s = detail::online_arx(spec); break;
    case ScenarioCase::kOnlineQuantile: s = detail::online_quantile(spec); break;
    case ScenarioCase::kMultiAgentArx: s = detail::multi_agent_arx(spec); break;
  }
  s.truth.id = spec.id;
  s.truth.seed = spec.seed;
  s.truth.rows = spec.rows;
  s.truth.noise_sd = spec.noise_sd;
  return s;
}

// ---------------------------------------------------------------------------
// Scenario runs.

struct ScenarioOverrides {
  std::optional<std::size_t> rows;
  std::optional<std::uint64_t> seed;
  // Quantile levels for the quantile cases (defaults per case).
  std::vector<double> taus;
  std::optional<AllocationPolicy> policy;
  // Nine-agent case: central agents to run (default all) and whether to add
  // the online quantile market for them.
  std::vector<std::string> central_agents;
  bool multi_agent_online = false;
};

struct ScenarioRun {
  Scenario scenario;
  std::vector<MarketReport> reports;
  nlohmann::json comparison = nlohmann::json::array();
  bool small_sample = false;
};

/// Market tasks matching a scenario's configuration.
inline std::vector<TaskSpec> scenario_tasks(ScenarioCase id, const std::vector<double>& taus = {}) {
  std::vector<TaskSpec> tasks;
  TaskSpec base;
  base.central_agent = "a1";
  const std::map<std::string, std::vector<int>> arx_lags{
      {"y", {1}}, {"x2", {1}}, {"x3", {1}}, {"x4", {1}}};
  switch (id) {
    case ScenarioCase::kBatchLinear:
      base.name = "batch-linear";
      tasks.push_back(base);
      break;
    case ScenarioCase::kBatchPoly:
      base.name = "batch-poly";
      base.model.degree = 2;
      base.model.interactions = true;
      base.model.terms = {"x1", "x2", "x3", "x2^2", "x1*x3"};
      tasks.push_back(base);
      break;
    case ScenarioCase::kBatchArxQuantile:
      for (double tau : taus.empty() ? std::vector<double>{0.1, 0.75} : taus) {
        TaskSpec t = base;
        char name[64];
        std::snprintf(name, sizeof name, "batch-arx-quantile-tau%g", tau);
        t.name = name;
        t.model.lags = arx_lags;
        t.loss = LossSpec::smooth_quantile(tau, 0.01);
        t.phi_insample = 1.0;
        tasks.push_back(t);
      }
      break;
    case ScenarioCase::kOnlineArx:
      base.name = "online-arx";
      base.model.lags = arx_lags;
      base.lambda = 0.998;
      tasks.push_back(base);
      break;
    case ScenarioCase::kOnlineQuantile:
      for (double tau : taus.empty() ? std::vector<double>{0.9} : taus) {
        TaskSpec t = base;
        char name[64];
        std::snprintf(name, sizeof name, "online-quantile-tau%g", tau);
        t.name = name;
        t.loss = LossSpec::smooth_quantile(tau, 0.2);
        t.lambda = 0.999;
        t.phi_insample = 1.0;
        tasks.push_back(t);
      }
      break;
    case ScenarioCase::kMultiAgentArx:
      for (int i = 1; i <= 9; ++i) {
        TaskSpec t = base;
        const std::string self = "y" + std::to_string(i);
        t.name = "multi-agent-a" + std::to_string(i);
        t.central_agent = "a" + std::to_string(i);
        for (int j = 1; j <= 9; ++j) {
          const std::string other = "y" + std::to_string(j);
          t.model.lags[other] = other == self ? std::vector<int>{1, 2} : std::vector<int>{1};
        }
        t.percent_points = true;
        t.phi_insample = 0.5;
        t.phi_oos = 1.5;
        t.train_rows = 10000;
        tasks.push_back(t);
      }
      break;
  }
  return tasks;
}

namespace detail {

inline void compare(ScenarioRun& run, const std::string& quantity, double expected, double observed) {
  run.comparison.push_back(
      {{"quantity", quantity}, {"expected", expected}, {"observed", observed},
       {"relative_error", expected != 0.0 ? (observed - expected) / std::abs(expected) : observed}});
}

}  // namespace detail

/// Generates a scenario and runs its market mechanism(s) with the case's
/// configuration, comparing against the ground truth where it is analytic.
inline ScenarioRun run_scenario(ScenarioCase id, const ScenarioOverrides& o = {}) {
  ScenarioSpec spec = default_scenario(id);
  if (o.rows) spec.rows = *o.rows;
  if (o.seed) spec.seed = *o.seed;
  ScenarioRun run;
  run.scenario = generate(spec);
  run.small_sample = spec.rows < 1000;
  auto tasks = scenario_tasks(id, o.taus);
  for (auto& t : tasks)
    if (o.policy) t.policy = *o.policy;
  const auto& truth = run.scenario.truth.analytic;
  const Dataset& data = run.scenario.data;

  switch (id) {
    case ScenarioCase::kBatchLinear:
    case ScenarioCase::kBatchPoly: {
      run.reports.push_back(clear_batch_market(data, tasks[0]));
      const auto& r = run.reports.back();
      detail::compare(run, "central_loss", truth.at("central_loss"), r.central_loss);
      detail::compare(run, "full_loss", truth.at("full_loss"), r.full_loss);
      for (const auto& f : {"x2", "x3", "x4"})
        if (truth.count(std::string("share_") + f))
          detail::compare(run, std::string("share_") + f, truth.at(std::string("share_") + f),
                          r.allocation.value(f));
      break;
    }
    case ScenarioCase::kBatchArxQuantile:
      for (const auto& t : tasks) {
        run.reports.push_back(clear_batch_market(data, t));
        const auto& r = run.reports.back();
        char key[64];
        std::snprintf(key, sizeof key, "tau%.2f_", t.loss.tau);
        if (!truth.count(std::string(key) + "central_loss")) continue;
        detail::compare(run, std::string(key) + "central_loss", truth.at(std::string(key) + "central_loss"),
                        r.central_loss);
        detail::compare(run, std::string(key) + "full_loss", truth.at(std::string(key) + "full_loss"),
                        r.full_loss);
        for (const auto& f : {"x2", "x3", "x4"})
          detail::compare(run, std::string(key) + "share_" + f,
                          truth.at(std::string(key) + "share_" + f), r.allocation.value(f));
      }
      break;
    case ScenarioCase::kOnlineArx:
    case ScenarioCase::kOnlineQuantile:
      for (const auto& t : tasks) run.reports.push_back(run_online_market(data, t));
      break;
    case ScenarioCase::kMultiAgentArx: {
      const std::size_t train = std::min<std::size_t>(spec.rows / 2, 10000);
      for (auto t : tasks) {
        if (!o.central_agents.empty() &&
            std::find(o.central_agents.begin(), o.central_agents.end(), t.central_agent) ==
                o.central_agents.end())
          continue;
        const std::string self = "y" + t.central_agent.substr(1);
        const Dataset own = with_target(data, self);
        t.train_rows = train;
        run.reports.push_back(clear_batch_market(slice_rows(own, 0, train), t));
        run.reports.push_back(run_oos_market(own, t, ModelSource::kBatch));
        if (o.multi_agent_online) {
          TaskSpec q = t;
          q.name += "-quantile";
          q.loss = LossSpec::smooth_quantile(0.55, 0.2);
          q.lambda = 0.995;
          q.phi_insample = 0.2;
          q.phi_oos = 0.8;
          q.screening = Screening::kBurnInShapley;
          q.burn_in = 500;
          q.train_rows = 500;
          run.reports.push_back(run_online_market(own, q));
          run.reports.push_back(run_oos_market(own, q, ModelSource::kOnline));
        }
      }
      break;
    }
  }
  if (run.small_sample)
    for (auto& r : run.reports)
      r.notes.push_back("small sample (T < 1000): compare against ground truth with wide tolerances");
  return run;
}

}  // namespace regmarket

#endif  // REGMARKET_SIMULATION_LAB_HPP_
