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

#ifndef REGMARKET_ONLINE_ESTIMATOR_HPP_
#define REGMARKET_ONLINE_ESTIMATOR_HPP_

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "regmarket/batch_estimator.hpp"
#include "regmarket/error.hpp"
#include "regmarket/loss_functions.hpp"

namespace regmarket {

enum class InitPolicy { kWarmStart, kZeroStart };

inline std::string to_string(InitPolicy p) {
  return p == InitPolicy::kWarmStart ? "warm-start" : "zero-start";
}

struct OnlineOptions {
  double lambda = 0.998;
  InitPolicy policy = InitPolicy::kWarmStart;
  // Warm start: rows of the warm-up slice required (also at least n).
  // Zero start: rows buffered before activation (also at least 2n).
  std::size_t min_rows = 100;
  std::size_t symmetrize_every = 1000;
};

/// Recursive Newton-Raphson estimator for one coalition model.
struct OnlineState {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd memory;
  EwmaLoss ewma;
  std::size_t step_count = 0;
  bool active = false;
  // Rows seen before activation under zero start.
  std::vector<Eigen::VectorXd> pending_x;
  std::vector<double> pending_y;
  std::size_t activation_rows = 0;
};

struct StepResult {
  double residual = 0.0;  // prior residual, pre-update coefficients
  double loss = 0.0;
  bool active = false;    // false while a zero-start state is still buffering
};

namespace detail {

// Memory the recursion would hold after streaming (x, eps) with factor lambda.
inline Eigen::MatrixXd weighted_memory(const Eigen::MatrixXd& x, const Eigen::VectorXd& eps,
                                       const LossSpec& spec, double lambda) {
  const auto t = x.rows();
  Eigen::VectorXd w(t);
  double decay = 1.0;
  for (Eigen::Index r = t - 1; r >= 0; --r) {
    w(r) = decay * loss_h2(spec, eps(r));
    decay *= lambda;
  }
  return x.transpose() * w.asDiagonal() * x;
}

inline void activate(OnlineState& state, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const LossSpec& spec, double lambda) {
  const FitResult fit = fit_matrix(x, y, spec);
  const Eigen::VectorXd eps = y - x * fit.coefficients;
  state.coefficients = fit.coefficients;
  state.memory = weighted_memory(x, eps, spec, lambda);
  state.ewma = EwmaLoss{fit.loss_star, lambda};
  state.active = true;
  state.pending_x.clear();
  state.pending_y.clear();
}

inline bool full_rank(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd gram = x.transpose() * x;
  return gram.rows() == 0 || gram_condition(gram) <= 1e12;
}

}  // namespace detail

/// Warm start fits the slice in batch, seeds the memory with the
/// lambda-weighted h2 Gram matrix of the slice and the loss estimate with the
/// slice's in-sample loss. Zero start holds coefficients at 0 and buffers
/// rows until enough full-rank history exists.
inline OnlineState init_state(const Eigen::MatrixXd& warmup_x, const Eigen::VectorXd& warmup_y,
                              const LossSpec& spec, const OnlineOptions& options) {
  spec.validate();
  const auto n = static_cast<std::size_t>(warmup_x.cols());
  OnlineState state;
  state.coefficients = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  state.memory = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  state.ewma = EwmaLoss{0.0, options.lambda};
  if (options.policy == InitPolicy::kZeroStart) {
    state.activation_rows = std::max(options.min_rows, 2 * n);
    for (Eigen::Index r = 0; r < warmup_x.rows(); ++r) {
      state.pending_x.push_back(warmup_x.row(r).transpose());
      state.pending_y.push_back(warmup_y(r));
    }
    return state;
  }
  const auto rows = static_cast<std::size_t>(warmup_x.rows());
  require(rows >= n && rows >= options.min_rows, ErrorKind::kParameter,
          "warm-up slice has " + std::to_string(rows) + " rows, need at least " +
              std::to_string(std::max(n, options.min_rows)));
  detail::activate(state, warmup_x, warmup_y, spec, options.lambda);
  return state;
}

/// One recursive step, in place:
///   eps = y - beta'x;  M = lambda M + h2(eps) x x';  beta += M^{-1} x h1(eps).
inline StepResult online_step(OnlineState& state, const Eigen::VectorXd& x, double y,
                              const LossSpec& spec, const OnlineOptions& options) {
  require(x.size() == state.coefficients.size(), ErrorKind::kParameter,
          "row length does not match the model");
  require(x.allFinite() && std::isfinite(y), ErrorKind::kNumeric, "non-finite row");
  StepResult out;
  out.residual = y - state.coefficients.dot(x);
  out.loss = loss_value(spec, out.residual);

  if (!state.active) {
    state.pending_x.push_back(x);
    state.pending_y.push_back(y);
    ++state.step_count;
    if (state.pending_x.size() >= state.activation_rows) {
      Eigen::MatrixXd bx(static_cast<Eigen::Index>(state.pending_x.size()), x.size());
      Eigen::VectorXd by(bx.rows());
      for (Eigen::Index r = 0; r < bx.rows(); ++r) {
        bx.row(r) = state.pending_x[static_cast<std::size_t>(r)].transpose();
        by(r) = state.pending_y[static_cast<std::size_t>(r)];
      }
      if (detail::full_rank(bx)) detail::activate(state, bx, by, spec, options.lambda);
    }
    return out;
  }

  const double h1 = loss_h1(spec, out.residual);
  const double h2 = loss_h2(spec, out.residual);
  state.memory *= options.lambda;
  state.memory.noalias() += h2 * x * x.transpose();
  ++state.step_count;
  if (options.symmetrize_every && state.step_count % options.symmetrize_every == 0)
    state.memory = 0.5 * (state.memory + state.memory.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(state.memory);
  require(llt.info() == Eigen::Success, ErrorKind::kSingular,
          "memory matrix not positive definite at step " + std::to_string(state.step_count));
  state.coefficients += llt.solve(x * h1);
  state.ewma = ewma_update(state.ewma, out.loss);
  out.active = true;
  return out;
}

/// One online state per coalition of a game, advanced in lockstep.
/// Drops columns identical to an earlier one. A recursion has no rank
/// fallback, and an exact copy adds nothing to the model.
inline std::vector<Eigen::Index> distinct_columns(const AugmentedDesign& design,
                                                  const std::vector<Eigen::Index>& cols) {
  std::vector<Eigen::Index> kept;
  for (auto c : cols) {
    bool copy = false;
    for (auto k : kept)
      if (design.values.col(c) == design.values.col(k)) {
        copy = true;
        break;
      }
    if (!copy) kept.push_back(c);
  }
  return kept;
}

class OnlineSession {
 public:
  OnlineSession() = default;

  /// `warmup_rows` leading rows of the design initialize every coalition.
  OnlineSession(const AugmentedDesign& design, const Eigen::VectorXd& y, GameLayout layout,
                LossSpec spec, OnlineOptions options, std::size_t warmup_rows)
      : layout_(std::move(layout)), spec_(spec), options_(options) {
    require(warmup_rows <= design.rows(), ErrorKind::kParameter,
            "warm-up longer than the dataset");
    const Mask full = layout_.full_mask();
    const auto w = static_cast<Eigen::Index>(warmup_rows);
    const auto rank = canonical_rank(design);
    for (Mask m = 0; m <= full; ++m) {
      auto cols = distinct_columns(design, canonical_columns(design, layout_.allowed(m), rank));
      std::vector<std::string> names;
      for (auto c : cols) names.push_back(design.terms[static_cast<std::size_t>(c)].name);
      states_.push_back(init_state(design.values.topRows(w)(Eigen::all, cols), y.head(w), spec_,
                                   options_));
      columns_.push_back(std::move(cols));
      terms_.push_back(std::move(names));
    }
  }

  /// Advances every coalition on its own columns of `row`.
  std::vector<StepResult> session_step(const Eigen::VectorXd& row, double y) {
    std::vector<StepResult> out;
    out.reserve(states_.size());
    for (std::size_t m = 0; m < states_.size(); ++m) {
      try {
        out.push_back(online_step(states_[m], row(columns_[m]), y, spec_, options_));
      } catch (const Error& e) {
        throw Error(e.kind(), "coalition " + layout_blank().label(m) + ": " + e.detail());
      }
    }
    return out;
  }

  bool active() const {
    for (const auto& s : states_)
      if (!s.active) return false;
    return true;
  }

  CoalitionLossTable ewma_table() const {
    auto t = layout_blank();
    for (std::size_t m = 0; m < states_.size(); ++m) t.losses[m] = states_[m].ewma.value;
    return t;
  }

  CoalitionLossTable instant_table(const std::vector<StepResult>& step) const {
    auto t = layout_blank();
    for (std::size_t m = 0; m < step.size(); ++m) t.losses[m] = step[m].loss;
    return t;
  }

  const GameLayout& layout() const { return layout_; }
  const std::vector<OnlineState>& states() const { return states_; }
  const std::vector<std::vector<Eigen::Index>>& columns() const { return columns_; }
  const LossSpec& spec() const { return spec_; }
  const OnlineOptions& options() const { return options_; }

  nlohmann::json checkpoint() const;
  static OnlineSession restore(const nlohmann::json& snapshot);

 private:
  CoalitionLossTable layout_blank() const { return layout_.blank_table(); }

  GameLayout layout_;
  LossSpec spec_;
  OnlineOptions options_;
  std::vector<OnlineState> states_;
  std::vector<std::vector<Eigen::Index>> columns_;
  std::vector<std::vector<std::string>> terms_;
};

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Eigen::VectorXd(m.row(r))));
  return rows;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = vector_from_json(j.at(static_cast<std::size_t>(r)));
    require(row.size() == cols, ErrorKind::kSchema, "checkpoint matrix is not square");
    m.row(r) = row.transpose();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json OnlineSession::checkpoint() const {
  nlohmann::json j;
  j["schema"] = "regmarket.online-checkpoint";
  j["version"] = kCheckpointVersion;
  j["lambda"] = options_.lambda;
  j["policy"] = to_string(options_.policy);
  j["min_rows"] = options_.min_rows;
  j["symmetrize_every"] = options_.symmetrize_every;
  j["loss"] = {{"family", to_string(spec_.family)},
               {"tau", spec_.tau},
               {"alpha", spec_.alpha},
               {"derivative_variant", spec_.form == DerivativeForm::kAnalytic ? "analytic" : "verbatim"}};
  j["players"] = layout_.players;
  j["is_support"] = layout_.is_support;
  j["central"] = layout_.central;
  j["extended"] = layout_.extended;
  nlohmann::json states = nlohmann::json::array();
  for (std::size_t m = 0; m < states_.size(); ++m) {
    const auto& s = states_[m];
    nlohmann::json pending = nlohmann::json::array();
    for (std::size_t r = 0; r < s.pending_x.size(); ++r)
      pending.push_back({{"x", detail::to_json(s.pending_x[r])}, {"y", s.pending_y[r]}});
    states.push_back({{"mask", m},
                      {"terms", terms_[m]},
                      {"columns", columns_[m]},
                      {"coefficients", detail::to_json(s.coefficients)},
                      {"memory", detail::to_json(s.memory)},
                      {"ewma_loss", s.ewma.value},
                      {"step_count", s.step_count},
                      {"active", s.active},
                      {"activation_rows", s.activation_rows},
                      {"pending", pending}});
  }
  j["states"] = states;
  return j;
}

inline OnlineSession OnlineSession::restore(const nlohmann::json& j) {
  try {
    require(j.at("schema") == "regmarket.online-checkpoint", ErrorKind::kSchema,
            "not an online checkpoint");
    require(j.at("version").get<int>() == kCheckpointVersion, ErrorKind::kSchema,
            "unsupported checkpoint version");
    OnlineSession s;
    s.options_.lambda = j.at("lambda").get<double>();
    s.options_.policy = j.at("policy") == "warm-start" ? InitPolicy::kWarmStart : InitPolicy::kZeroStart;
    s.options_.min_rows = j.at("min_rows").get<std::size_t>();
    s.options_.symmetrize_every = j.at("symmetrize_every").get<std::size_t>();
    const auto& loss = j.at("loss");
    s.spec_.family = loss.at("family") == "quadratic" ? LossFamily::kQuadratic
                                                      : LossFamily::kSmoothQuantile;
    s.spec_.tau = loss.at("tau").get<double>();
    s.spec_.alpha = loss.at("alpha").get<double>();
    s.spec_.form = loss.at("derivative_variant") == "analytic" ? DerivativeForm::kAnalytic
                                                               : DerivativeForm::kVerbatim;
    s.layout_.players = j.at("players").get<std::vector<std::string>>();
    s.layout_.is_support = j.at("is_support").get<std::vector<bool>>();
    s.layout_.central = j.at("central").get<std::set<std::string>>();
    s.layout_.extended = j.at("extended").get<bool>();
    for (const auto& st : j.at("states")) {
      OnlineState state;
      state.coefficients = detail::vector_from_json(st.at("coefficients"));
      state.memory = detail::matrix_from_json(st.at("memory"), state.coefficients.size());
      state.ewma = EwmaLoss{st.at("ewma_loss").get<double>(), s.options_.lambda};
      state.step_count = st.at("step_count").get<std::size_t>();
      state.active = st.at("active").get<bool>();
      state.activation_rows = st.at("activation_rows").get<std::size_t>();
      for (const auto& p : st.at("pending")) {
        state.pending_x.push_back(detail::vector_from_json(p.at("x")));
        state.pending_y.push_back(p.at("y").get<double>());
      }
      s.states_.push_back(std::move(state));
      s.columns_.push_back(st.at("columns").get<std::vector<Eigen::Index>>());
      s.terms_.push_back(st.at("terms").get<std::vector<std::string>>());
    }
    require(s.states_.size() == static_cast<std::size_t>(s.layout_.full_mask()) + 1,
            ErrorKind::kSchema, "checkpoint does not cover every coalition");
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace regmarket

#endif  // REGMARKET_ONLINE_ESTIMATOR_HPP_
