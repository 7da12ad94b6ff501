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

#ifndef REGMARKET_BATCH_ESTIMATOR_HPP_
#define REGMARKET_BATCH_ESTIMATOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regmarket/error.hpp"
#include "regmarket/loss_functions.hpp"
#include "regmarket/timeseries_data.hpp"

namespace regmarket {

// What to do when the Gram matrix is (numerically) singular.
enum class RankPolicy {
  kMinNorm,  // minimum-norm least squares via complete orthogonal decomposition
  kJitter,   // add 1e-10 * trace / n to the diagonal
  kError,    // raise a singularity error
};

struct FitOptions {
  RankPolicy rank_policy = RankPolicy::kMinNorm;
  double condition_limit = 1e12;
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
  int max_halvings = 50;
};

struct FitResult {
  Eigen::VectorXd coefficients;
  double loss_star = 0.0;
  std::vector<std::string> term_names;
  int iterations = 0;
  double gradient_norm = 0.0;
  // Empty when the Gram matrix was well conditioned, else "min-norm" or "jitter".
  std::string rank_remedy;
};

inline double predict(const Eigen::VectorXd& coefficients, const Eigen::VectorXd& x_row) {
  require(coefficients.size() == x_row.size(), ErrorKind::kParameter,
          "coefficient length " + std::to_string(coefficients.size()) +
              " does not match row length " + std::to_string(x_row.size()));
  return coefficients.dot(x_row);
}

namespace detail {

inline double gram_condition(const Eigen::MatrixXd& gram) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (hi <= 0.0) return std::numeric_limits<double>::infinity();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// Solves the (weighted) normal equations gram * beta = rhs, falling back to
// the configured rank remedy when the matrix is badly conditioned.
inline Eigen::VectorXd solve_normal(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                    const FitOptions& options, std::string& remedy) {
  const auto n = gram.rows();
  if (n == 0) return Eigen::VectorXd();
  if (gram_condition(gram) <= options.condition_limit) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
  }
  switch (options.rank_policy) {
    case RankPolicy::kError:
      fail(ErrorKind::kSingular, "design is rank deficient (Gram condition above " +
                                     std::to_string(options.condition_limit) + ")");
    case RankPolicy::kJitter: {
      remedy = "jitter";
      Eigen::MatrixXd g = gram;
      g.diagonal().array() += 1e-10 * gram.trace() / static_cast<double>(n);
      Eigen::LLT<Eigen::MatrixXd> llt(g);
      require(llt.info() == Eigen::Success, ErrorKind::kSingular,
              "jittered Gram matrix is still not positive definite");
      return llt.solve(rhs);
    }
    case RankPolicy::kMinNorm:
      break;
  }
  remedy = "min-norm";
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
  cod.setThreshold(1.0 / options.condition_limit);
  return cod.solve(rhs);
}

inline Eigen::VectorXd residuals(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& beta) {
  if (x.cols() == 0) return y;
  return y - x * beta;
}

}  // namespace detail

/// Minimizes the in-sample loss over the design columns. Quadratic loss is
/// solved in closed form; smooth quantile by damped Newton started at the
/// least-squares solution. The minimizer is defined by the loss itself, so
/// analytic derivatives are used whatever derivative form the LossSpec carries.
inline FitResult fit_matrix(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            const LossSpec& spec, const FitOptions& options = {}) {
  spec.validate();
  require(x.rows() == y.size(), ErrorKind::kParameter, "design and target lengths differ");
  require(x.rows() >= x.cols() && x.rows() > 0, ErrorKind::kInsufficientData,
          "need at least as many rows as terms (" + std::to_string(x.rows()) + " < " +
              std::to_string(x.cols()) + ")");
  require(x.allFinite() && y.allFinite(), ErrorKind::kNumeric, "non-finite design or target");

  FitResult fit;
  const Eigen::MatrixXd gram = x.transpose() * x;
  fit.coefficients = detail::solve_normal(gram, x.transpose() * y, options, fit.rank_remedy);
  const double t = static_cast<double>(x.rows());

  if (spec.family == LossFamily::kSmoothQuantile && x.cols() > 0) {
    LossSpec analytic = spec;
    analytic.form = DerivativeForm::kAnalytic;
    Eigen::VectorXd beta = fit.coefficients;
    Eigen::VectorXd eps = detail::residuals(x, y, beta);
    double loss = insample_loss(analytic, eps);
    Eigen::VectorXd h1(x.rows()), h2(x.rows());
    bool converged = false;
    for (int it = 0; it < options.max_iterations; ++it) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        h1(r) = loss_h1(analytic, eps(r));
        h2(r) = loss_h2(analytic, eps(r));
      }
      // Gradient of the mean loss is -X^T h1 / T.
      const Eigen::VectorXd descent = x.transpose() * h1 / t;
      fit.gradient_norm = descent.cwiseAbs().maxCoeff();
      fit.iterations = it;
      if (fit.gradient_norm <= options.gradient_tolerance) {
        converged = true;
        break;
      }
      const Eigen::MatrixXd hessian = x.transpose() * h2.asDiagonal() * x / t;
      std::string ignored;
      FitOptions newton_options = options;
      newton_options.rank_policy = RankPolicy::kMinNorm;
      Eigen::VectorXd step = detail::solve_normal(hessian, descent, newton_options, ignored);
      const Eigen::VectorXd* directions[] = {&step, &descent};
      if (!step.allFinite() || step.dot(descent) <= 0.0) step = descent;

      // Newton direction first; when curvature is nearly flat its step can
      // be absurdly long, so fall back to the plain descent direction.
      bool accepted = false;
      for (const Eigen::VectorXd* direction : directions) {
        double scale = 1.0;
        for (int h = 0; h <= options.max_halvings && !accepted; ++h, scale *= 0.5) {
          const Eigen::VectorXd candidate = beta + scale * *direction;
          const Eigen::VectorXd cand_eps = detail::residuals(x, y, candidate);
          const double cand_loss = insample_loss(analytic, cand_eps);
          if (cand_loss <= loss) {
            beta = candidate;
            eps = cand_eps;
            loss = cand_loss;
            accepted = true;
          }
        }
        if (accepted) break;
      }
      if (!accepted) break;  // no representable decrease left
    }
    if (!converged) {
      for (Eigen::Index r = 0; r < x.rows(); ++r) h1(r) = loss_h1(analytic, eps(r));
      fit.gradient_norm = (x.transpose() * h1 / t).cwiseAbs().maxCoeff();
      // Loss is flat to machine precision along the Newton direction; accept
      // when the gradient is within a few ulps of the tolerance scale.
      require(fit.gradient_norm <= 1e3 * options.gradient_tolerance, ErrorKind::kConvergence,
              "Newton iterations stopped with gradient max-norm " +
                  std::to_string(fit.gradient_norm));
    }
    fit.coefficients = beta;
  }

  fit.loss_star = insample_loss(spec, detail::residuals(x, y, fit.coefficients));
  return fit;
}

inline FitResult fit_batch(const AugmentedDesign& design, const Eigen::VectorXd& y,
                           const LossSpec& spec, const FitOptions& options = {}) {
  FitResult fit = fit_matrix(design.values, y, spec, options);
  fit.term_names = design.term_names();
  return fit;
}

// ---------------------------------------------------------------------------
// Coalition games.

using Mask = std::uint64_t;

/// Loss of every coalition of players, indexed by bitmask over `players`.
/// Players are either support features, or (when `extended`) central and
/// support features together, in which case mask 0 is the intercept-only
/// model. Missing entries are NaN.
struct CoalitionLossTable {
  std::vector<std::string> players;
  std::vector<bool> is_support;
  bool extended = false;
  std::vector<double> losses;

  std::size_t size() const { return players.size(); }
  Mask full_mask() const { return players.empty() ? 0 : (Mask{1} << players.size()) - 1; }

  Mask central_mask() const {
    Mask m = 0;
    for (std::size_t k = 0; k < players.size(); ++k)
      if (!is_support[k]) m |= Mask{1} << k;
    return m;
  }
  Mask support_mask() const { return full_mask() & ~central_mask(); }

  bool has(Mask mask) const {
    return mask < losses.size() && !std::isnan(losses[mask]);
  }

  double loss(Mask mask) const {
    require(has(mask), ErrorKind::kCoverage,
            "loss table is missing coalition " + label(mask));
    return losses[mask];
  }

  double central_loss() const { return loss(central_mask()); }
  double full_loss() const { return loss(full_mask()); }
  double base_loss() const { return loss(0); }
  // Surplus that allocations are normalized by.
  double normalizer() const { return base_loss() - full_loss(); }

  std::size_t index_of(const std::string& player) const {
    for (std::size_t k = 0; k < players.size(); ++k)
      if (players[k] == player) return k;
    fail(ErrorKind::kLookup, "unknown player '" + player + "'");
  }

  std::string label(Mask mask) const {
    std::string out = "{";
    for (std::size_t k = 0; k < players.size(); ++k) {
      if (!(mask >> k & 1)) continue;
      if (out.size() > 1) out += ',';
      out += players[k];
    }
    return out + "}";
  }

  std::vector<Mask> missing() const {
    std::vector<Mask> out;
    for (Mask m = 0; m <= full_mask(); ++m)
      if (!has(m)) out.push_back(m);
    return out;
  }

  void require_complete() const {
    const auto gaps = missing();
    if (gaps.empty()) return;
    std::string list;
    for (std::size_t i = 0; i < gaps.size() && i < 8; ++i)
      list += (i ? " " : "") + label(gaps[i]);
    if (gaps.size() > 8) list += " ...";
    fail(ErrorKind::kCoverage, std::to_string(gaps.size()) +
                                   " coalition(s) missing from loss table: " + list);
  }

  static CoalitionLossTable empty_like(const CoalitionLossTable& other) {
    CoalitionLossTable t;
    t.players = other.players;
    t.is_support = other.is_support;
    t.extended = other.extended;
    t.losses.assign(other.losses.size(), std::numeric_limits<double>::quiet_NaN());
    return t;
  }
};

/// Player layout of a coalition game over a design: support series are
/// always players; central series join them when the game is extended.
struct GameLayout {
  std::vector<std::string> players;
  std::vector<bool> is_support;
  std::set<std::string> central;
  bool extended = false;

  Mask full_mask() const { return players.empty() ? 0 : (Mask{1} << players.size()) - 1; }

  // Series allowed in the model for coalition `mask`.
  std::set<std::string> allowed(Mask mask) const {
    std::set<std::string> out;
    if (!extended) out = central;
    for (std::size_t k = 0; k < players.size(); ++k)
      if (mask >> k & 1) out.insert(players[k]);
    return out;
  }

  CoalitionLossTable blank_table() const {
    CoalitionLossTable t;
    t.players = players;
    t.is_support = is_support;
    t.extended = extended;
    t.losses.assign(static_cast<std::size_t>(full_mask()) + 1,
                    std::numeric_limits<double>::quiet_NaN());
    return t;
  }
};

/// True when some term depends on both a central and a support series.
inline bool has_cross_terms(const AugmentedDesign& design, const std::set<std::string>& central) {
  for (const auto& term : design.terms) {
    bool c = false, s = false;
    for (const auto& series : term.support) (central.count(series) ? c : s) = true;
    if (c && s) return true;
  }
  return false;
}

/// Players sorted by name (support players after central ones in the
/// extended game). `force_extended` is mainly for tests.
inline GameLayout make_layout(const AugmentedDesign& design, const std::set<std::string>& central,
                              bool force_extended = false) {
  GameLayout layout;
  layout.central = central;
  layout.extended = force_extended || has_cross_terms(design, central);
  std::set<std::string> support;
  for (const auto& series : design.support_features())
    if (!central.count(series)) support.insert(series);
  if (layout.extended) {
    for (const auto& c : central) {
      layout.players.push_back(c);
      layout.is_support.push_back(false);
    }
  }
  for (const auto& s : support) {
    layout.players.push_back(s);
    layout.is_support.push_back(true);
  }
  return layout;
}

/// Rank of every design column when columns are sorted by their values.
/// Coalition models list their columns in this order, so two coalitions that
/// differ only by swapping identical columns see bitwise-identical matrices.
inline std::vector<std::size_t> canonical_rank(const AugmentedDesign& design) {
  const auto n = static_cast<Eigen::Index>(design.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j;
  const auto& v = design.values;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      if (v(r, a) != v(r, b)) return v(r, a) < v(r, b);
    return false;
  });
  std::vector<std::size_t> rank(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < order.size(); ++i) rank[static_cast<std::size_t>(order[i])] = i;
  return rank;
}

inline std::vector<Eigen::Index> canonical_columns(const AugmentedDesign& design,
                                                   const std::set<std::string>& allowed,
                                                   const std::vector<std::size_t>& rank) {
  auto cols = coalition_columns(design, allowed);
  std::sort(cols.begin(), cols.end(), [&](Eigen::Index a, Eigen::Index b) {
    return rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)];
  });
  return cols;
}

struct CoalitionFits {
  GameLayout layout;
  CoalitionLossTable table;
  // Indexed by mask: design columns and fitted coefficients.
  std::vector<std::vector<Eigen::Index>> columns;
  std::vector<FitResult> fits;
};

/// Fits every coalition of the game in binary-counter order. More than `cap`
/// players is an error; use Monte-Carlo allocation instead.
inline CoalitionFits fit_all_coalitions(const AugmentedDesign& design, const Eigen::VectorXd& y,
                                        const GameLayout& layout, const LossSpec& spec,
                                        std::size_t cap = 15, const FitOptions& options = {}) {
  require(layout.players.size() <= cap, ErrorKind::kParameter,
          std::to_string(layout.players.size()) + " players exceed the exact-enumeration cap of " +
              std::to_string(cap) + "; use Monte-Carlo Shapley");
  CoalitionFits out;
  out.layout = layout;
  out.table = layout.blank_table();
  const Mask full = layout.full_mask();
  const auto rank = canonical_rank(design);
  out.columns.resize(static_cast<std::size_t>(full) + 1);
  out.fits.resize(static_cast<std::size_t>(full) + 1);
  for (Mask m = 0; m <= full; ++m) {
    const auto canon = canonical_columns(design, layout.allowed(m), rank);
    FitResult fit = fit_matrix(design.values(Eigen::all, canon), y, spec, options);
    // Report coefficients in design order.
    auto cols = canon;
    std::sort(cols.begin(), cols.end());
    Eigen::VectorXd beta(fit.coefficients.size());
    for (std::size_t i = 0; i < canon.size(); ++i) {
      const auto pos = std::lower_bound(cols.begin(), cols.end(), canon[i]) - cols.begin();
      beta(pos) = fit.coefficients(static_cast<Eigen::Index>(i));
    }
    fit.coefficients = beta;
    for (auto c : cols) fit.term_names.push_back(design.terms[static_cast<std::size_t>(c)].name);
    out.table.losses[m] = fit.loss_star;
    out.columns[m] = std::move(cols);
    out.fits[m] = std::move(fit);
  }
  return out;
}

/// Memoized per-coalition fitting for samplers that only touch some coalitions.
class CoalitionOracle {
 public:
  CoalitionOracle(const AugmentedDesign& design, const Eigen::VectorXd& y, GameLayout layout,
                  LossSpec spec, FitOptions options = {})
      : design_(design),
        y_(y),
        layout_(std::move(layout)),
        spec_(spec),
        options_(options),
        rank_(canonical_rank(design)) {}

  double operator()(Mask mask) {
    auto it = cache_.find(mask);
    if (it != cache_.end()) return it->second;
    auto cols = canonical_columns(design_, layout_.allowed(mask), rank_);
    const double loss = fit_matrix(design_.values(Eigen::all, cols), y_, spec_, options_).loss_star;
    cache_.emplace(mask, loss);
    return loss;
  }

  const GameLayout& layout() const { return layout_; }
  std::size_t fits() const { return cache_.size(); }

 private:
  const AugmentedDesign& design_;
  const Eigen::VectorXd& y_;
  GameLayout layout_;
  LossSpec spec_;
  FitOptions options_;
  std::vector<std::size_t> rank_;
  std::map<Mask, double> cache_;
};

}  // namespace regmarket

#endif  // REGMARKET_BATCH_ESTIMATOR_HPP_
