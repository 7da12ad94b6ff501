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

// Reference implementations used only by the tests. Each one is written the
// slow, obvious way and shares no code with the library paths it checks.

#ifndef REGMARKET_TESTS_ORACLES_HPP_
#define REGMARKET_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Shapley values by averaging marginals over every player ordering.
inline std::vector<double> permutation_shapley(const std::function<double(unsigned long)>& loss,
                                               int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> total(static_cast<std::size_t>(n), 0.0);
  double count = 0;
  do {
    unsigned long mask = 0;
    for (int k : order) {
      const double before = loss(mask);
      mask |= 1ul << k;
      total[static_cast<std::size_t>(k)] += before - loss(mask);
    }
    count += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& t : total) t /= count;
  return total;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double second_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

// Least squares through Householder QR of the design itself.
inline Eigen::VectorXd qr_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return x.householderQr().solve(y);
}

// Plain Nelder-Mead; good enough for two or three parameters.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd start, double step, int iterations) {
  const auto n = start.size();
  std::vector<Eigen::VectorXd> simplex{start};
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = start;
    p(i) += step;
    simplex.push_back(p);
  }
  std::vector<double> values;
  for (const auto& p : simplex) values.push_back(f(p));
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::size_t> idx(simplex.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<Eigen::VectorXd> s;
    std::vector<double> v;
    for (auto i : idx) {
      s.push_back(simplex[i]);
      v.push_back(values[i]);
    }
    simplex = s;
    values = v;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) centroid += simplex[static_cast<std::size_t>(i)];
    centroid /= static_cast<double>(n);
    auto& worst = simplex.back();
    const Eigen::VectorXd reflected = centroid + (centroid - worst);
    const double fr = f(reflected);
    if (fr < values.front()) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - worst);
      const double fe = f(expanded);
      if (fe < fr) {
        worst = expanded;
        values.back() = fe;
      } else {
        worst = reflected;
        values.back() = fr;
      }
    } else if (fr < values[values.size() - 2]) {
      worst = reflected;
      values.back() = fr;
    } else {
      const Eigen::VectorXd contracted = centroid + 0.5 * (worst - centroid);
      const double fc = f(contracted);
      if (fc < values.back()) {
        worst = contracted;
        values.back() = fc;
      } else {
        for (std::size_t i = 1; i < simplex.size(); ++i) {
          simplex[i] = simplex.front() + 0.5 * (simplex[i] - simplex.front());
          values[i] = f(simplex[i]);
        }
      }
    }
  }
  auto best = std::min_element(values.begin(), values.end()) - values.begin();
  return simplex[static_cast<std::size_t>(best)];
}

}  // namespace oracle

#endif  // REGMARKET_TESTS_ORACLES_HPP_
