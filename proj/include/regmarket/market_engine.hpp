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


#ifndef REGMARKET_MARKET_ENGINE_HPP_
#define REGMARKET_MARKET_ENGINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "regmarket/allocation_policies.hpp"
#include "regmarket/batch_estimator.hpp"
#include "regmarket/error.hpp"
#include "regmarket/loss_functions.hpp"
#include "regmarket/online_estimator.hpp"
#include "regmarket/timeseries_data.hpp"

namespace regmarket {

enum class Mechanism { kBatch, kOnline, kOos };
enum class Screening { kNone, kCvLoss, kBurnInShapley };
enum class ModelSource { kBatch, kOnline };

inline std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kBatch: return "batch";
    case Mechanism::kOnline: return "online";
    case Mechanism::kOos: return "oos";
  }
  return "unknown";
}

inline std::string to_string(Screening s) {
  switch (s) {
    case Screening::kNone: return "none";
    case Screening::kCvLoss: return "cv-loss";
    case Screening::kBurnInShapley: return "burn-in-shapley";
  }
  return "unknown";
}

inline std::string to_string(ModelSource s) {
  return s == ModelSource::kBatch ? "batch" : "online";
}

inline Mechanism parse_mechanism(const std::string& name) {
  for (auto m : {Mechanism::kBatch, Mechanism::kOnline, Mechanism::kOos})
    if (to_string(m) == name) return m;
  fail(ErrorKind::kConfig, "unknown market mechanism '" + name + "'");
}

inline Screening parse_screening(const std::string& name) {
  for (auto s : {Screening::kNone, Screening::kCvLoss, Screening::kBurnInShapley})
    if (to_string(s) == name) return s;
  fail(ErrorKind::kConfig, "unknown screening method '" + name + "'");
}

inline ModelSource parse_model_source(const std::string& name) {
  for (auto s : {ModelSource::kBatch, ModelSource::kOnline})
    if (to_string(s) == name) return s;
  fail(ErrorKind::kConfig, "unknown model source '" + name + "'");
}

/// How the regression design is built from the raw series.
struct DesignRecipe {
  // Series (target included) to lag, with the lags to add. Lagged series lose
  // their contemporaneous column unless `keep_contemporaneous` is set.
  std::map<std::string, std::vector<int>> lags;
  bool keep_contemporaneous = false;
  int degree = 1;
  bool interactions = false;
  // Optional whitelist of term names (intercept always kept).
  std::vector<std::string> terms;
  // Series left out of the model entirely.
  std::vector<std::string> drop_series;
};

/// A regression task posted by one central agent.
struct TaskSpec {
  std::string name = "task";
  AgentId central_agent;
  DesignRecipe model;
  LossSpec loss;
  // Willingness to pay per unit loss improvement per data point.
  double phi_insample = 0.1;
  double phi_oos = 0.1;
  // Express losses in percent points of nominal capacity (normalizer x 100).
  bool percent_points = false;
  AllocationPolicy policy = AllocationPolicy::kShapley;
  AllocationPolicy oos_policy = AllocationPolicy::kZeroShapley;
  std::size_t exact_cap = 15;
  std::size_t mc_samples = 2000;
  std::uint64_t mc_seed = 1;
  // Online estimation.
  double lambda = 0.998;
  InitPolicy init = InitPolicy::kWarmStart;
  std::size_t warmup = 100;
  // Batch sliding window: leading rows already paid for in an earlier run.
  std::size_t billed_rows = 0;
  // Out-of-sample market.
  int horizon = 1;
  std::size_t train_rows = 0;
  std::size_t window = 500;
  // Screening.
  Screening screening = Screening::kNone;
  std::size_t burn_in = 500;
  std::size_t cv_folds = 5;
  // Reporting and failure handling.
  std::size_t trajectory_stride = 100;
  std::string checkpoint_path;

  void validate() const {
    require(!central_agent.empty(), ErrorKind::kConfig, "task '" + name + "' has no central agent");
    loss.validate();
    require(phi_insample >= 0.0 && std::isfinite(phi_insample), ErrorKind::kParameter,
            "willingness to pay must be >= 0");
    require(phi_oos >= 0.0 && std::isfinite(phi_oos), ErrorKind::kParameter,
            "out-of-sample willingness to pay must be >= 0");
    require(horizon >= 0, ErrorKind::kParameter, "horizon must be >= 0");
    require(lambda > 0.0 && lambda <= 1.0, ErrorKind::kParameter,
            "forgetting factor must lie in (0,1]");
    require(model.degree >= 1, ErrorKind::kParameter, "polynomial degree must be >= 1");
    require(mc_samples >= 1, ErrorKind::kParameter, "Monte-Carlo samples must be >= 1");
    require(cv_folds >= 2, ErrorKind::kParameter, "cross-validation needs at least 2 folds");
    require(window >= 1 && trajectory_stride >= 1, ErrorKind::kParameter,
            "window and trajectory stride must be >= 1");
  }
};

/// One payment from the central agent to a support agent for one feature.
struct LedgerEntry {
  std::size_t step = 0;  // row index in the model dataset (0 for batch)
  std::string time;      // timestamp, or "batch"
  AgentId payer;
  AgentId payee;
  std::string feature;
  double amount = 0.0;
  Mechanism market = Mechanism::kBatch;
};

struct TrajectoryPoint {
  std::size_t step = 0;
  double normalizer = 0.0;
  double central_loss = 0.0;
  double full_loss = 0.0;
  std::vector<double> shares;              // allocation per support feature
  std::vector<double> full_coefficients;   // grand-coalition model, design order
};

struct WindowMetric {
  std::size_t begin = 0;  // first step of the window (model-dataset row)
  std::size_t end = 0;    // one past the last step
  double loss_without = 0.0;  // mean central-only loss
  double loss_with = 0.0;     // mean grand-coalition loss
};

struct AuditCheck {
  std::string name;
  bool applicable = true;
  bool passed = true;
  std::string detail;
};

struct AuditResult {
  std::vector<AuditCheck> checks;
  double shortfall = 0.0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const AuditCheck& c) { return !c.applicable || c.passed; });
  }
  const AuditCheck& check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return c;
    fail(ErrorKind::kLookup, "no audit check '" + name + "'");
  }
};

struct MarketReport {
  std::string task;
  Mechanism mechanism = Mechanism::kBatch;
  AgentId central_agent;
  std::string target;
  LossSpec loss;
  double phi = 0.0;
  double scale = 1.0;  // 100 in percent-point mode
  AllocationPolicy policy = AllocationPolicy::kShapley;

  // Game.
  std::vector<std::string> players;
  std::vector<bool> is_support;
  bool extended = false;
  std::map<std::string, AgentId> feature_owner;  // support features
  std::vector<std::string> screened_out;
  std::vector<std::pair<std::string, std::string>> duplicate_features;
  std::vector<std::string> dummy_features;

  // Losses (batch: in-sample optima; online: final EWMA; oos: mean per-step).
  CoalitionLossTable table;
  double central_loss = 0.0;
  double full_loss = 0.0;
  double normalizer = 0.0;
  std::vector<std::string> full_terms;
  std::vector<double> full_coefficients;

  // Allocations. `allocation` drives the payments.
  std::map<std::string, AllocationVector> allocations;
  AllocationVector allocation;
  std::vector<double> payout;  // share of the surplus paid per support feature

  // Payments.
  std::size_t rows = 0;
  std::size_t billed_steps = 0;
  std::size_t no_surplus_steps = 0;
  bool no_surplus = false;
  double central_payment = 0.0;    // what the central agent pays
  double benchmark_payment = 0.0;  // phi * scale * sum of surplus
  double shortfall = 0.0;          // benchmark - central payment
  std::vector<std::size_t> charge_steps;
  std::vector<double> central_charges;
  std::vector<LedgerEntry> ledger;
  std::map<std::string, double> feature_totals;
  std::map<AgentId, double> agent_totals;

  std::vector<TrajectoryPoint> trajectory;
  std::vector<WindowMetric> windows;
  double window_improved_fraction = 0.0;

  std::vector<std::string> notes;
  AuditResult audit;
};

// ---------------------------------------------------------------------------
// Model preparation.

struct PreparedModel {
  Dataset data;
  AugmentedDesign design;
  Eigen::VectorXd y;
  std::set<std::string> central;
  std::map<std::string, AgentId> series_owner;
  GameLayout layout;
};

/// Lags, column selection and expansion for a task; `exclude` drops support
/// series (screening results).
inline PreparedModel prepare_model(const Dataset& raw, const TaskSpec& task,
                                   const std::set<std::string>& exclude = {}) {
  require(raw.target_owner() == task.central_agent, ErrorKind::kConfig,
          "target '" + raw.target_name() + "' is owned by '" + raw.target_owner() +
              "', not by central agent '" + task.central_agent + "'");
  const Dataset lagged = make_lags(raw, task.model.lags);
  std::set<std::string> dropped(task.model.drop_series.begin(), task.model.drop_series.end());
  dropped.insert(exclude.begin(), exclude.end());
  for (const auto& s : dropped)
    require(s != raw.target_name(), ErrorKind::kConfig, "cannot drop the target series");
  std::vector<std::string> keep;
  for (const auto& column : lagged.feature_names()) {
    const auto& source = lagged.source_of(column);
    if (dropped.count(source)) continue;
    const bool contemporaneous = !lagged.lag_origin(column).has_value();
    if (contemporaneous && !task.model.keep_contemporaneous && task.model.lags.count(column))
      continue;
    keep.push_back(column);
  }
  PreparedModel m{select_features(lagged, keep), {}, {}, {}, {}, {}};
  m.y = m.data.target();
  m.design = polynomial_expand(m.data, task.model.degree, task.model.interactions);
  if (!task.model.terms.empty()) m.design = filter_terms(m.design, task.model.terms);
  for (const auto& term : m.design.terms)
    for (const auto& [column, power] : term.factors)
      m.series_owner[m.data.source_of(column)] = m.data.owner(column);
  for (const auto& [series, owner] : m.series_owner)
    if (owner == task.central_agent) m.central.insert(series);
  m.layout = make_layout(m.design, m.central);
  return m;
}

/// Every feature term of a forecasting design must only use information
/// available `horizon` steps before the target time.
inline void check_horizon(const PreparedModel& model, int horizon) {
  if (horizon == 0) return;
  for (const auto& term : model.design.terms)
    for (const auto& [column, power] : term.factors) {
      const auto origin = model.data.lag_origin(column);
      require(origin && origin->delta >= horizon, ErrorKind::kConfig,
              "term '" + term.name + "' uses '" + column + "', which is not available " +
                  std::to_string(horizon) + " step(s) ahead");
    }
}

namespace detail {

inline double total(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

// Design columns per support player, sorted by value, when the player only
// enters through its own terms.
inline std::map<std::string, std::vector<Eigen::VectorXd>> own_columns(const PreparedModel& m) {
  std::map<std::string, std::vector<Eigen::VectorXd>> out;
  std::set<std::string> mixed;
  for (std::size_t j = 0; j < m.design.terms.size(); ++j) {
    const auto& support = m.design.terms[j].support;
    if (support.size() == 1) {
      out[*support.begin()].push_back(m.design.values.col(static_cast<Eigen::Index>(j)));
    } else {
      mixed.insert(support.begin(), support.end());
    }
  }
  for (const auto& s : mixed) out.erase(s);
  for (auto& [name, cols] : out)
    std::sort(cols.begin(), cols.end(), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                          b.data() + b.size());
    });
  return out;
}

inline bool identical(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data());
}

inline bool constant(const Eigen::VectorXd& a) {
  return a.size() == 0 || (a.array() == a(0)).all();
}

// Support players that duplicate one another, and dummies whose every column
// is constant or a copy of a central column.
inline void flag_structure(const PreparedModel& m, MarketReport& report) {
  const auto own = own_columns(m);
  std::vector<Eigen::VectorXd> central_cols;
  for (std::size_t j = 0; j < m.design.terms.size(); ++j) {
    const auto& support = m.design.terms[j].support;
    bool inside = std::all_of(support.begin(), support.end(),
                              [&](const std::string& s) { return m.central.count(s) > 0; });
    if (inside && !support.empty())
      central_cols.push_back(m.design.values.col(static_cast<Eigen::Index>(j)));
  }
  std::vector<std::string> support;
  for (std::size_t k = 0; k < m.layout.players.size(); ++k)
    if (m.layout.is_support[k] && own.count(m.layout.players[k]))
      support.push_back(m.layout.players[k]);
  for (std::size_t a = 0; a < support.size(); ++a) {
    const auto& ca = own.at(support[a]);
    bool dummy = true;
    for (const auto& col : ca) {
      bool copy = constant(col) || std::any_of(central_cols.begin(), central_cols.end(),
                                               [&](const auto& c) { return identical(c, col); });
      dummy = dummy && copy;
    }
    if (dummy && !m.layout.extended) report.dummy_features.push_back(support[a]);
    for (std::size_t b = a + 1; b < support.size(); ++b) {
      const auto& cb = own.at(support[b]);
      bool same = ca.size() == cb.size();
      for (std::size_t i = 0; same && i < ca.size(); ++i) same = identical(ca[i], cb[i]);
      if (same) report.duplicate_features.emplace_back(support[a], support[b]);
    }
  }
}

inline void describe_game(const PreparedModel& m, const TaskSpec& task, Mechanism mechanism,
                          MarketReport& r) {
  r.task = task.name;
  r.mechanism = mechanism;
  r.central_agent = task.central_agent;
  r.target = m.data.target_name();
  r.loss = task.loss;
  r.scale = task.percent_points ? 100.0 : 1.0;
  r.players = m.layout.players;
  r.is_support = m.layout.is_support;
  r.extended = m.layout.extended;
  for (std::size_t k = 0; k < m.layout.players.size(); ++k)
    if (m.layout.is_support[k]) {
      r.feature_owner[m.layout.players[k]] = m.series_owner.at(m.layout.players[k]);
      r.feature_totals[m.layout.players[k]] = 0.0;
    }
  r.full_terms = m.design.term_names();
  r.rows = m.data.rows();
  flag_structure(m, r);
  if (r.feature_owner.empty()) r.notes.push_back("no support features: nothing to buy");
  if (r.extended)
    r.notes.push_back(
        "cross terms couple central and support series: central series are players and "
        "payments fall short of the full-surplus benchmark");
}

// Payments of one billing step: surplus share per support feature.
inline Eigen::VectorXd payout_shares(const AllocationVector& a, bool extended) {
  const Eigen::VectorXd clipped = a.values.cwiseMax(0.0);
  const double positive = clipped.sum();
  const double target = extended ? a.values.sum() : 1.0;
  if (!(positive > 0.0) || !(target > 0.0)) return Eigen::VectorXd::Zero(a.values.size());
  return clipped * (target / positive);
}

// Appends one step's payments and returns the central charge.
inline double bill_step(MarketReport& r, const AllocationVector& a, double surplus_value,
                        std::size_t step, const std::string& time) {
  const Eigen::VectorXd shares = payout_shares(a, r.extended);
  double paid = 0.0;
  for (std::size_t k = 0; k < a.features.size(); ++k) {
    const double amount = surplus_value * shares(static_cast<Eigen::Index>(k));
    if (!(amount > 0.0)) continue;
    r.ledger.push_back(LedgerEntry{step, time, r.central_agent, r.feature_owner.at(a.features[k]),
                                   a.features[k], amount, r.mechanism});
    paid += amount;
  }
  const double charge = r.extended ? paid : (shares.sum() > 0.0 ? surplus_value : 0.0);
  r.charge_steps.push_back(step);
  r.central_charges.push_back(charge);
  return charge;
}

inline void finalize(MarketReport& r) {
  for (auto& [f, v] : r.feature_totals) v = 0.0;
  for (const auto& e : r.ledger) r.feature_totals[e.feature] += e.amount;
  r.agent_totals.clear();
  for (const auto& [f, v] : r.feature_totals) r.agent_totals[r.feature_owner.at(f)] += v;
  r.central_payment = total(r.central_charges);
  r.shortfall = r.benchmark_payment - r.central_payment;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline OnlineOptions online_options(const TaskSpec& task) {
  OnlineOptions o;
  o.lambda = task.lambda;
  o.policy = task.init;
  o.min_rows = task.warmup;
  return o;
}

inline std::size_t session_warmup(const TaskSpec& task) {
  return task.init == InitPolicy::kWarmStart ? task.warmup : 0;
}

// Grand-coalition coefficients of a session, in design order.
inline std::vector<double> design_order(const std::vector<Eigen::Index>& columns,
                                        const Eigen::VectorXd& coefficients, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < columns.size(); ++i)
    out[static_cast<std::size_t>(columns[i])] = coefficients(static_cast<Eigen::Index>(i));
  return out;
}

inline void require_exact_policy(AllocationPolicy p, const std::string& where) {
  require(p != AllocationPolicy::kMonteCarloShapley && p != AllocationPolicy::kLooVariance,
          ErrorKind::kConfig,
          "policy '" + to_string(p) + "' is not available in the " + where + " market");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Screening.

/// Support series worth buying. cv-loss keeps series whose add-one
/// cross-validated loss reduction over the central model is positive
/// (contiguous folds). burn-in-shapley runs an online session over the
/// burn-in window and drops series with a negative Shapley contribution.
inline std::set<std::string> screen_features(const Dataset& data, const TaskSpec& task,
                                             Screening method) {
  const PreparedModel m = prepare_model(data, task);
  std::set<std::string> support;
  for (std::size_t k = 0; k < m.layout.players.size(); ++k)
    if (m.layout.is_support[k]) support.insert(m.layout.players[k]);
  if (method == Screening::kNone || support.empty()) return support;

  std::set<std::string> keep;
  if (method == Screening::kCvLoss) {
    const std::size_t t = m.design.rows();
    const std::size_t k = task.cv_folds;
    require(t >= 2 * k, ErrorKind::kInsufficientData,
            "cross-validation needs at least " + std::to_string(2 * k) + " rows");
    const auto rank = canonical_rank(m.design);
    auto cv_loss = [&](const std::set<std::string>& allowed) {
      const auto cols = canonical_columns(m.design, allowed, rank);
      const Eigen::MatrixXd x = m.design.values(Eigen::all, cols);
      double sum = 0.0;
      for (std::size_t f = 0; f < k; ++f) {
        const std::size_t b = f * t / k, e = (f + 1) * t / k;
        std::vector<Eigen::Index> train, test;
        for (std::size_t r = 0; r < t; ++r)
          (r >= b && r < e ? test : train).push_back(static_cast<Eigen::Index>(r));
        const FitResult fit = fit_matrix(x(train, Eigen::all), m.y(train), task.loss);
        const Eigen::VectorXd eps = m.y(test) - x(test, Eigen::all) * fit.coefficients;
        for (Eigen::Index i = 0; i < eps.size(); ++i) sum += loss_value(task.loss, eps(i));
      }
      return sum / static_cast<double>(t);
    };
    const double base = cv_loss(m.central);
    for (const auto& s : support) {
      auto allowed = m.central;
      allowed.insert(s);
      if (base - cv_loss(allowed) > 0.0) keep.insert(s);
    }
    return keep;
  }

  require(task.burn_in <= m.data.rows(), ErrorKind::kParameter,
          "burn-in of " + std::to_string(task.burn_in) + " rows exceeds the " +
              std::to_string(m.data.rows()) + "-row dataset");
  const auto w = detail::session_warmup(task);
  require(w < task.burn_in, ErrorKind::kParameter, "burn-in must be longer than the warm-up");
  const auto b = static_cast<Eigen::Index>(task.burn_in);
  AugmentedDesign head{m.design.terms, m.design.values.topRows(b)};
  OnlineSession session(head, m.y.head(b), m.layout, task.loss, detail::online_options(task), w);
  for (Eigen::Index r = static_cast<Eigen::Index>(w); r < b; ++r)
    session.session_step(head.values.row(r).transpose(), m.y(r));
  require(session.active(), ErrorKind::kInsufficientData,
          "online models did not initialize within the burn-in window");
  const Eigen::VectorXd contrib = shapley_contributions(session.ewma_table());
  for (std::size_t k = 0; k < m.layout.players.size(); ++k)
    if (m.layout.is_support[k] && !(contrib(static_cast<Eigen::Index>(k)) < 0.0))
      keep.insert(m.layout.players[k]);
  return keep;
}

namespace detail {

inline PreparedModel screened_model(const Dataset& data, const TaskSpec& task,
                                    const Dataset& screening_data, MarketReport& r) {
  std::set<std::string> excluded;
  if (task.screening != Screening::kNone) {
    const auto all = prepare_model(screening_data, task);
    const auto keep = screen_features(screening_data, task, task.screening);
    for (std::size_t k = 0; k < all.layout.players.size(); ++k)
      if (all.layout.is_support[k] && !keep.count(all.layout.players[k]))
        excluded.insert(all.layout.players[k]);
    r.screened_out.assign(excluded.begin(), excluded.end());
  }
  return prepare_model(data, task, excluded);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Markets.

inline AuditResult audit_ledger(const MarketReport& report);

/// Batch market: fits every coalition on the whole window and pays for the
/// in-sample loss improvement on the rows not billed before.
inline MarketReport clear_batch_market(const Dataset& data, const TaskSpec& task) {
  task.validate();
  MarketReport r;
  const PreparedModel m = detail::screened_model(data, task, data, r);
  detail::describe_game(m, task, Mechanism::kBatch, r);
  r.phi = task.phi_insample;
  r.policy = task.policy;
  const std::size_t t = m.data.rows();
  require(task.billed_rows <= t, ErrorKind::kParameter,
          "billed rows exceed the " + std::to_string(t) + "-row window");
  const double tb = static_cast<double>(t - task.billed_rows);

  const std::size_t n = m.layout.players.size();
  const bool sampled = task.policy == AllocationPolicy::kMonteCarloShapley || n > task.exact_cap;
  if (!sampled) {
    const CoalitionFits fits = fit_all_coalitions(m.design, m.y, m.layout, task.loss, task.exact_cap);
    r.table = fits.table;
    const auto& full = fits.fits.back();
    r.full_coefficients = detail::design_order(fits.columns.back(), full.coefficients, m.design.cols());
    const double nz = r.table.normalizer();
    for (auto p : {AllocationPolicy::kShapley, AllocationPolicy::kZeroShapley,
                   AllocationPolicy::kAbsoluteShapley, AllocationPolicy::kLooDrop,
                   AllocationPolicy::kLooAdd})
      r.allocations[to_string(p)] =
          allocation_from(r.table, policy_contributions(r.table, p), p, nz);
    if (task.policy == AllocationPolicy::kLooVariance) {
      std::map<std::string, double> beta, var;
      for (std::size_t k = 0; k < n; ++k) {
        if (!m.layout.is_support[k]) continue;
        const auto& player = m.layout.players[k];
        std::vector<std::size_t> own;
        for (std::size_t j = 0; j < m.design.terms.size(); ++j)
          if (m.design.terms[j].support.count(player)) own.push_back(j);
        require(own.size() == 1 && m.design.terms[own[0]].kind != TermKind::kMonomial,
                ErrorKind::kConfig,
                "loo-variance needs exactly one linear term per support feature");
        const Eigen::VectorXd col = m.design.values.col(static_cast<Eigen::Index>(own[0]));
        beta[player] = r.full_coefficients[own[0]];
        var[player] = (col.array() - col.mean()).square().mean();
      }
      r.allocations["loo-variance"] = loo_variance_allocation(beta, var);
      r.allocations["loo-variance"].normalizer = nz;
    }
  } else {
    r.policy = AllocationPolicy::kMonteCarloShapley;
    CoalitionOracle oracle(m.design, m.y, m.layout, task.loss);
    r.table = m.layout.blank_table();
    for (Mask mask : {Mask{0}, r.table.central_mask(), r.table.full_mask()})
      r.table.losses[mask] = oracle(mask);
    const auto cols = canonical_columns(m.design, m.layout.allowed(r.table.full_mask()),
                                        canonical_rank(m.design));
    const FitResult full = fit_matrix(m.design.values(Eigen::all, cols), m.y, task.loss);
    r.full_coefficients = detail::design_order(cols, full.coefficients, m.design.cols());
    if (r.table.normalizer() > 0.0)
      r.allocations[to_string(r.policy)] = shapley_montecarlo(
          oracle, m.layout.players, m.layout.is_support, task.mc_samples, task.mc_seed);
    r.notes.push_back("Monte-Carlo Shapley over " + std::to_string(task.mc_samples) +
                      " antithetic permutation pairs (" + std::to_string(oracle.fits()) +
                      " coalition fits)");
  }

  r.central_loss = r.table.loss(r.table.central_mask());
  r.full_loss = r.table.full_loss();
  r.normalizer = r.table.normalizer();
  r.no_surplus = !(r.normalizer > 0.0);
  const std::string chosen = to_string(r.policy);
  r.allocation = r.allocations.count(chosen)
                     ? r.allocations.at(chosen)
                     : allocation_from(r.table, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
                                       r.policy, r.normalizer);
  r.payout = detail::to_std(detail::payout_shares(r.allocation, r.extended));
  r.benchmark_payment = tb * r.phi * r.scale * std::max(0.0, r.central_loss - r.full_loss);
  if (!r.no_surplus && !r.feature_owner.empty()) {
    detail::bill_step(r, r.allocation, tb * r.phi * r.scale * r.normalizer, 0, "batch");
    r.billed_steps = 1;
  } else {
    r.no_surplus_steps = r.no_surplus ? 1 : 0;
    if (r.no_surplus) r.notes.push_back("no surplus: all payments are zero");
  }
  detail::finalize(r);
  r.audit = audit_ledger(r);
  return r;
}

/// Online market: every coalition model is updated recursively and each step
/// pays for the current EWMA loss improvement.
inline MarketReport run_online_market(const Dataset& data, const TaskSpec& task) {
  task.validate();
  detail::require_exact_policy(task.policy, "online");
  MarketReport r;
  const PreparedModel m = detail::screened_model(data, task, data, r);
  detail::describe_game(m, task, Mechanism::kOnline, r);
  r.phi = task.phi_insample;
  r.policy = task.policy;
  const std::size_t t = m.data.rows();
  const std::size_t w = detail::session_warmup(task);
  require(w < t, ErrorKind::kInsufficientData, "warm-up covers the whole dataset");
  const std::size_t bill_from =
      std::max(w, task.screening == Screening::kBurnInShapley ? task.burn_in : std::size_t{0});

  const auto options = detail::online_options(task);
  OnlineSession session(m.design, m.y, m.layout, task.loss, options, w);
  const Mask full = m.layout.full_mask();
  const std::size_t ncols = m.design.cols();
  Eigen::VectorXd s;
  bool started = false;
  double surplus_sum = 0.0;
  std::size_t since_trajectory = 0;

  auto record = [&](std::size_t step, const AllocationVector& a, const CoalitionLossTable& table) {
    TrajectoryPoint p;
    p.step = step;
    p.normalizer = a.normalizer;
    p.central_loss = table.loss(table.central_mask());
    p.full_loss = table.full_loss();
    p.shares = detail::to_std(a.values);
    p.full_coefficients = detail::design_order(session.columns()[full],
                                               session.states()[full].coefficients, ncols);
    r.trajectory.push_back(std::move(p));
  };

  AllocationVector current;
  for (std::size_t row = w; row < t; ++row) {
    const auto ri = static_cast<Eigen::Index>(row);
    std::vector<StepResult> step;
    try {
      step = session.session_step(m.design.values.row(ri).transpose(), m.y(ri));
    } catch (const Error& e) {
      std::string where;
      if (!task.checkpoint_path.empty()) {
        std::ofstream out(task.checkpoint_path);
        out << session.checkpoint().dump();
        where = "; checkpoint written to " + task.checkpoint_path;
      }
      throw Error(e.kind(), "online market stopped at row " + std::to_string(row) + ": " +
                                e.detail() + where);
    }
    if (!session.active() || row < bill_from) continue;
    const CoalitionLossTable ewma = session.ewma_table();
    if (!started) {
      s = policy_contributions(ewma, task.policy);
      started = true;
    } else {
      s = task.lambda * s +
          (1.0 - task.lambda) * policy_contributions(session.instant_table(step), task.policy);
    }
    const double nz = ewma.normalizer();
    current = allocation_from(ewma, s, task.policy, nz);
    ++r.billed_steps;
    r.benchmark_payment += r.phi * r.scale * std::max(0.0, ewma.central_loss() - ewma.full_loss());
    if (nz > 0.0 && !r.feature_owner.empty()) {
      detail::bill_step(r, current, r.phi * r.scale * nz, row, m.data.timestamps()[row]);
      surplus_sum += nz;
    } else {
      ++r.no_surplus_steps;
    }
    if (since_trajectory++ % task.trajectory_stride == 0 || row + 1 == t)
      record(row, current, ewma);
  }
  require(started, ErrorKind::kInsufficientData,
          "online models never initialized; no steps were billed");
  if (r.trajectory.empty() || r.trajectory.back().step + 1 != t) record(t - 1, current, session.ewma_table());

  r.table = session.ewma_table();
  r.central_loss = r.table.loss(r.table.central_mask());
  r.full_loss = r.table.full_loss();
  r.normalizer = r.table.normalizer();
  r.no_surplus = r.ledger.empty();
  r.allocation = current;
  r.allocations[to_string(task.policy)] = current;
  r.full_coefficients = detail::design_order(session.columns()[full],
                                             session.states()[full].coefficients, ncols);
  r.payout = detail::to_std(detail::payout_shares(current, r.extended));
  if (r.no_surplus_steps)
    r.notes.push_back(std::to_string(r.no_surplus_steps) + " step(s) without surplus paid nothing");
  detail::finalize(r);
  r.audit = audit_ledger(r);
  return r;
}

/// Out-of-sample market: models trained on the first `train_rows` rows issue
/// forecasts for the rest; each step pays for the realized loss improvement.
inline MarketReport run_oos_market(const Dataset& data, const TaskSpec& task, ModelSource source) {
  task.validate();
  detail::require_exact_policy(task.oos_policy, "out-of-sample");
  require(task.train_rows > 0, ErrorKind::kCoverage,
          "no trained coalition models: set train_rows to the training window length");
  MarketReport r;
  // Lags shorten the model dataset; the split refers to raw rows.
  const std::size_t max_lag = [&] {
    int d = 0;
    for (const auto& [series, lags] : task.model.lags)
      for (int l : lags) d = std::max(d, l);
    return static_cast<std::size_t>(d);
  }();
  require(task.train_rows > max_lag && task.train_rows < data.rows(), ErrorKind::kInsufficientData,
          "training window must leave evaluation rows and cover the lags");
  const Dataset train_raw = slice_rows(data, 0, task.train_rows);
  // Burn-in screening only reads its leading window; cv-loss must not see
  // evaluation rows.
  const PreparedModel m = detail::screened_model(
      data, task, task.screening == Screening::kCvLoss ? train_raw : data, r);
  detail::describe_game(m, task, Mechanism::kOos, r);
  check_horizon(m, task.horizon);
  r.phi = task.phi_oos;
  r.policy = task.oos_policy;
  const std::size_t t = m.data.rows();
  const std::size_t train = task.train_rows - max_lag;
  const Mask full = m.layout.full_mask();
  const std::size_t nmask = static_cast<std::size_t>(full) + 1;
  const std::size_t ncols = m.design.cols();
  require(m.layout.players.size() <= task.exact_cap, ErrorKind::kConfig,
          "out-of-sample market needs every coalition model; too many players for the cap");

  // Per-step losses of every coalition, row-major by step.
  std::vector<double> losses;
  const std::size_t eval = t - train;
  losses.reserve(eval * nmask);
  if (source == ModelSource::kBatch) {
    const auto ti = static_cast<Eigen::Index>(train);
    const AugmentedDesign head{m.design.terms, m.design.values.topRows(ti)};
    const CoalitionFits fits =
        fit_all_coalitions(head, m.y.head(ti), m.layout, task.loss, task.exact_cap);
    const auto rank = canonical_rank(head);
    std::vector<std::vector<Eigen::Index>> canon(nmask);
    std::vector<Eigen::VectorXd> beta(nmask);
    for (std::size_t k = 0; k < nmask; ++k) {
      canon[k] = canonical_columns(m.design, m.layout.allowed(k), rank);
      const auto& cols = fits.columns[k];  // design order
      beta[k].resize(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t i = 0; i < canon[k].size(); ++i) {
        const auto pos = std::lower_bound(cols.begin(), cols.end(), canon[k][i]) - cols.begin();
        beta[k](static_cast<Eigen::Index>(i)) = fits.fits[k].coefficients(pos);
      }
    }
    r.full_coefficients = detail::design_order(fits.columns[full], fits.fits[full].coefficients, ncols);
    r.notes.push_back("coalition models fitted in batch on " + std::to_string(train) + " rows");
    for (std::size_t row = train; row < t; ++row) {
      const Eigen::VectorXd x = m.design.values.row(static_cast<Eigen::Index>(row)).transpose();
      for (std::size_t k = 0; k < nmask; ++k) {
        const double eps = m.y(static_cast<Eigen::Index>(row)) - beta[k].dot(x(canon[k]));
        losses.push_back(loss_value(task.loss, eps));
      }
    }
  } else {
    require(task.horizon == 1, ErrorKind::kConfig,
            "online model source supports horizon 1 only");
    const std::size_t w = detail::session_warmup(task);
    require(w < train, ErrorKind::kInsufficientData, "warm-up exceeds the training window");
    OnlineSession session(m.design, m.y, m.layout, task.loss, detail::online_options(task), w);
    for (std::size_t row = w; row < t; ++row) {
      const auto ri = static_cast<Eigen::Index>(row);
      if (row == train)
        require(session.active(), ErrorKind::kCoverage,
                "online coalition models were not initialized by the end of training");
      const auto step = session.session_step(m.design.values.row(ri).transpose(), m.y(ri));
      if (row >= train)
        for (const auto& s : step) losses.push_back(s.loss);
    }
    r.full_coefficients = detail::design_order(session.columns()[full],
                                               session.states()[full].coefficients, ncols);
    r.notes.push_back("coalition models updated online; losses use one-step prior residuals");
  }

  // Billing.
  CoalitionLossTable mean = m.layout.blank_table();
  std::vector<double> sums(nmask, 0.0);
  std::vector<double> shares_num;
  Eigen::VectorXd paid = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r.feature_owner.size()));
  const Mask central = mean.central_mask();
  WindowMetric win;
  std::size_t in_window = 0;
  std::size_t improved = 0;
  for (std::size_t i = 0; i < eval; ++i) {
    const std::size_t row = train + i;
    CoalitionLossTable step = m.layout.blank_table();
    std::copy(losses.begin() + static_cast<std::ptrdiff_t>(i * nmask),
              losses.begin() + static_cast<std::ptrdiff_t>((i + 1) * nmask), step.losses.begin());
    for (std::size_t k = 0; k < nmask; ++k) sums[k] += step.losses[k];
    const double nz = step.normalizer();
    ++r.billed_steps;
    r.benchmark_payment += r.phi * r.scale * std::max(0.0, step.losses[central] - step.losses[full]);
    if (nz > 0.0 && !r.feature_owner.empty()) {
      const auto a = allocation_from(step, policy_contributions(step, task.oos_policy),
                                     task.oos_policy, nz);
      detail::bill_step(r, a, r.phi * r.scale * nz, row, m.data.timestamps()[row]);
    } else {
      ++r.no_surplus_steps;
    }
    if (in_window == 0) {
      win = WindowMetric{};
      win.begin = row;
    }
    win.loss_without += step.losses[central];
    win.loss_with += step.losses[full];
    if (++in_window == task.window || i + 1 == eval) {
      win.end = row + 1;
      win.loss_without /= static_cast<double>(in_window);
      win.loss_with /= static_cast<double>(in_window);
      if (win.loss_with <= win.loss_without) ++improved;
      r.windows.push_back(win);
      in_window = 0;
    }
  }
  r.window_improved_fraction =
      r.windows.empty() ? 0.0 : static_cast<double>(improved) / static_cast<double>(r.windows.size());
  for (std::size_t k = 0; k < nmask; ++k) mean.losses[k] = sums[k] / static_cast<double>(eval);
  r.table = mean;
  r.central_loss = mean.loss(central);
  r.full_loss = mean.full_loss();
  r.normalizer = mean.normalizer();
  detail::finalize(r);
  r.no_surplus = r.ledger.empty();

  // Reported allocation: each feature's share of the amount actually paid.
  AllocationVector a;
  a.policy = task.oos_policy;
  a.normalizer = r.normalizer;
  for (const auto& [f, owner] : r.feature_owner) a.features.push_back(f);
  const auto nf = static_cast<Eigen::Index>(a.features.size());
  a.values = Eigen::VectorXd::Zero(nf);
  a.contributions = Eigen::VectorXd::Zero(nf);
  const double benchmark = r.phi * r.scale;
  for (Eigen::Index k = 0; k < nf; ++k) {
    const double v = r.feature_totals.at(a.features[static_cast<std::size_t>(k)]);
    if (r.central_payment > 0.0) a.values(k) = v / r.central_payment;
    if (benchmark > 0.0) a.contributions(k) = v / benchmark / static_cast<double>(eval);
  }
  a.no_surplus = r.no_surplus;
  r.allocation = a;
  r.allocations["payment-weighted"] = a;
  r.allocations[to_string(AllocationPolicy::kShapley)] = allocation_from(
      mean, policy_contributions(mean, AllocationPolicy::kShapley), AllocationPolicy::kShapley,
      r.normalizer);
  r.payout = detail::to_std(a.values);
  if (r.no_surplus_steps)
    r.notes.push_back(std::to_string(r.no_surplus_steps) +
                      " evaluation step(s) without surplus paid nothing");
  r.audit = audit_ledger(r);
  return r;
}

// ---------------------------------------------------------------------------
// Audit.

/// Checks the market properties on a finished report. Never throws for a
/// failed property; each check reports pass/fail.
inline AuditResult audit_ledger(const MarketReport& r) {
  AuditResult out;
  out.shortfall = r.shortfall;
  auto add = [&](std::string name, bool applicable, bool passed, std::string detail) {
    out.checks.push_back(AuditCheck{std::move(name), applicable, passed, std::move(detail)});
  };

  // Budget balance per billing step.
  {
    std::map<std::size_t, double> paid;
    for (const auto& e : r.ledger) paid[e.step] += e.amount;
    double worst = 0.0;
    bool ok = r.charge_steps.size() == r.central_charges.size();
    for (std::size_t i = 0; ok && i < r.charge_steps.size(); ++i) {
      const double charge = r.central_charges[i];
      const auto it = paid.find(r.charge_steps[i]);
      const double got = it == paid.end() ? 0.0 : it->second;
      const double gap = std::abs(charge - got);
      const double rel = charge > 0.0 ? gap / charge : gap;
      worst = std::max(worst, rel);
      if (!(rel <= 1e-9)) ok = false;
    }
    char buf[160];
    if (r.extended) {
      std::snprintf(buf, sizeof buf,
                    "interaction model: shortfall %.12g vs full-surplus benchmark %.12g",
                    r.shortfall, r.benchmark_payment);
      add("budget_balance", false, ok, buf);
    } else {
      std::snprintf(buf, sizeof buf, "max relative step imbalance %.3g", worst);
      add("budget_balance", true, ok, buf);
    }
  }

  // Individual rationality.
  {
    std::size_t bad = 0;
    for (const auto& e : r.ledger)
      if (!(e.amount >= 0.0) || !std::isfinite(e.amount)) ++bad;
    for (double c : r.central_charges)
      if (!(c >= 0.0) || !std::isfinite(c)) ++bad;
    add("individual_rationality", true, bad == 0,
        bad == 0 ? "all amounts non-negative" : std::to_string(bad) + " negative or invalid amount(s)");
  }

  // Every entry is a debit of the central agent to the feature's owner.
  {
    std::size_t bad = 0;
    for (const auto& e : r.ledger) {
      const auto it = r.feature_owner.find(e.feature);
      if (e.payer != r.central_agent || it == r.feature_owner.end() || it->second != e.payee) ++bad;
    }
    add("matching_debits", true, bad == 0,
        bad == 0 ? "every credit is debited to the central agent"
                 : std::to_string(bad) + " entr(ies) with wrong payer or payee");
  }

  // Reported totals are exactly the sums of the per-step entries.
  {
    std::map<std::string, double> features;
    for (const auto& [f, owner] : r.feature_owner) features[f] = 0.0;
    for (const auto& e : r.ledger) features[e.feature] += e.amount;
    double central = 0.0;
    for (double c : r.central_charges) central += c;
    const bool ok = features == r.feature_totals && central == r.central_payment;
    add("totals", true, ok, ok ? "totals equal the sum of ledger entries" : "totals disagree with ledger");
  }

  // Per-agent additivity.
  {
    std::map<AgentId, double> agents;
    for (const auto& [f, v] : r.feature_totals) {
      const auto it = r.feature_owner.find(f);
      if (it != r.feature_owner.end()) agents[it->second] += v;
    }
    const bool ok = agents == r.agent_totals;
    add("agent_additivity", true, ok,
        ok ? "agent revenues equal the sum of their features" : "agent totals disagree");
  }

  // Symmetry on flagged duplicate features.
  {
    const bool exact = r.policy != AllocationPolicy::kMonteCarloShapley &&
                       r.policy != AllocationPolicy::kLooVariance;
    bool ok = true;
    std::string detail = r.duplicate_features.empty() ? "no duplicate features" : "";
    for (const auto& [a, b] : r.duplicate_features) {
      const double va = r.feature_totals.at(a), vb = r.feature_totals.at(b);
      if (va != vb) ok = false;
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s%s=%.12g %s=%.12g", detail.empty() ? "" : "; ",
                    a.c_str(), va, b.c_str(), vb);
      detail += buf;
    }
    add("symmetry", exact && !r.duplicate_features.empty(), ok, detail);
  }

  // Zero element on flagged dummy features.
  {
    bool ok = true;
    std::string detail = r.dummy_features.empty() ? "no dummy features" : "";
    for (const auto& f : r.dummy_features) {
      const double v = r.feature_totals.at(f);
      if (v != 0.0) ok = false;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s%s=%.12g", detail.empty() ? "" : "; ", f.c_str(), v);
      detail += buf;
    }
    add("zero_element", !r.dummy_features.empty(), ok, detail);
  }
  return out;
}

}  // namespace regmarket

#endif  // REGMARKET_MARKET_ENGINE_HPP_
