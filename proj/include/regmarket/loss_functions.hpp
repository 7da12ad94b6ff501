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

#ifndef REGMARKET_LOSS_FUNCTIONS_HPP_
#define REGMARKET_LOSS_FUNCTIONS_HPP_

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "regmarket/error.hpp"

namespace regmarket {

enum class LossFamily { kQuadratic, kSmoothQuantile };

// kVerbatim is an alternative closed form for the smooth quantile
// derivatives that circulates in the literature. It is not the derivative of
// the loss below and is only kept so the discrepancy can be measured.
enum class DerivativeForm { kAnalytic, kVerbatim };

struct LossSpec {
  LossFamily family = LossFamily::kQuadratic;
  double tau = 0.5;
  double alpha = 0.2;
  DerivativeForm form = DerivativeForm::kAnalytic;

  static LossSpec quadratic() { return {}; }
  static LossSpec smooth_quantile(double tau, double alpha,
                                  DerivativeForm form = DerivativeForm::kAnalytic) {
    return {LossFamily::kSmoothQuantile, tau, alpha, form};
  }

  void validate() const {
    if (family != LossFamily::kSmoothQuantile) return;
    require(tau > 0.0 && tau < 1.0, ErrorKind::kParameter,
            "quantile level must lie in (0,1), got " + std::to_string(tau));
    require(alpha > 0.0 && std::isfinite(alpha), ErrorKind::kParameter,
            "smoothing must be positive, got " + std::to_string(alpha));
  }
};

inline std::string to_string(LossFamily f) {
  return f == LossFamily::kQuadratic ? "quadratic" : "smooth-quantile";
}

namespace detail {

inline void check_residual(double eps) {
  require(std::isfinite(eps), ErrorKind::kNumeric, "non-finite residual");
}

// log(1 + e^z) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

// p = 1 / (1 + e^{eps/alpha}) and p(1-p), both accurate in the tails.
struct Logistic {
  double p;
  double p_q;
};

inline Logistic logistic(double eps, double alpha) {
  const double z = eps / alpha;
  const double s = std::exp(-std::abs(z));
  const double p = z >= 0.0 ? s / (1.0 + s) : 1.0 / (1.0 + s);
  return {p, s / ((1.0 + s) * (1.0 + s))};
}

}  // namespace detail

/// Per-sample loss. Quadratic is eps^2; the smooth quantile loss is
/// tau*eps + alpha*log(1 + e^{-eps/alpha}).
inline double loss_value(const LossSpec& spec, double eps) {
  detail::check_residual(eps);
  if (spec.family == LossFamily::kQuadratic) return eps * eps;
  return spec.tau * eps + spec.alpha * detail::softplus(-eps / spec.alpha);
}

/// First derivative of the loss in eps. For the quadratic family this is
/// eps, i.e. half the derivative, paired with h2 = 1 so that Newton steps
/// reduce to recursive least squares.
inline double loss_h1(const LossSpec& spec, double eps) {
  detail::check_residual(eps);
  if (spec.family == LossFamily::kQuadratic) return eps;
  const auto lg = detail::logistic(eps, spec.alpha);
  if (spec.form == DerivativeForm::kVerbatim)
    return spec.tau + spec.alpha * (1.0 - lg.p) - lg.p;
  return spec.tau - lg.p;
}

/// Second derivative in eps (halved for the quadratic family, see loss_h1).
inline double loss_h2(const LossSpec& spec, double eps) {
  detail::check_residual(eps);
  if (spec.family == LossFamily::kQuadratic) return 1.0;
  const auto lg = detail::logistic(eps, spec.alpha);
  if (spec.form == DerivativeForm::kVerbatim) return (1.0 + spec.alpha) * lg.p_q;
  return lg.p_q / spec.alpha;
}

/// Plain (non-smoothed) check loss.
inline double pinball_loss(double tau, double eps) {
  detail::check_residual(eps);
  return eps >= 0.0 ? tau * eps : (tau - 1.0) * eps;
}

/// Mean loss over a residual vector.
inline double insample_loss(const LossSpec& spec, const Eigen::VectorXd& residuals) {
  require(residuals.size() > 0, ErrorKind::kParameter, "no residuals");
  double total = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) total += loss_value(spec, residuals(i));
  return total / static_cast<double>(residuals.size());
}

/// Exponentially weighted loss estimate with forgetting factor lambda and
/// effective window n = 1/(1 - lambda). lambda = 1 freezes the estimate.
struct EwmaLoss {
  double value = 0.0;
  double lambda = 1.0;

  double window() const {
    return lambda < 1.0 ? 1.0 / (1.0 - lambda) : std::numeric_limits<double>::infinity();
  }
};

inline EwmaLoss ewma_update(const EwmaLoss& state, double loss) {
  require(std::isfinite(loss), ErrorKind::kNumeric, "non-finite loss");
  require(state.lambda >= 0.0 && state.lambda <= 1.0, ErrorKind::kParameter,
          "forgetting factor must lie in [0,1]");
  return {state.lambda * state.value + (1.0 - state.lambda) * loss, state.lambda};
}

}  // namespace regmarket

#endif  // REGMARKET_LOSS_FUNCTIONS_HPP_
