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


// Acceptance run: one [PASS]/[FAIL] line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed acceptance bounds.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "regmarket/regmarket.hpp"

namespace regmarket {
namespace {

namespace fs = std::filesystem;

struct Verdict {
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { lines.push_back("     " + what); }
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }
bool rel_within(double v, double target, double rel) { return std::abs(v - target) <= rel * std::abs(target); }

MarketReport& find(std::vector<MarketReport>& reports, const std::string& task, Mechanism m) {
  for (auto& r : reports)
    if (r.task == task && r.mechanism == m) return r;
  fail(ErrorKind::kLookup, "no report " + task);
}

// Reports of every scenario run, reused by the property criteria.
std::vector<MarketReport> g_separable;

// ---------------------------------------------------------------------------

Verdict c1_batch_linear() {
  Verdict v;
  const double share[] = {0.227, 0.736, 0.036};
  const char* names[] = {"x2", "x3", "x4"};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ScenarioOverrides o;
    o.seed = seed;
    auto run = run_scenario(ScenarioCase::kBatchLinear, o);
    const auto& r = run.reports.at(0);
    g_separable.push_back(r);
    v.check(within(r.central_loss, 1.14, 1.24), fmt("seed %llu central-only loss %.4f in [1.14, 1.24]",
                                                    static_cast<unsigned long long>(seed), r.central_loss));
    v.check(within(r.full_loss, 0.083, 0.097),
            fmt("seed %llu full loss %.4f in [0.083, 0.097]", static_cast<unsigned long long>(seed), r.full_loss));
    const auto& loo_a = r.allocations.at("loo-a");
    const auto& loo_b = r.allocations.at("loo-b");
    std::string shares, gaps;
    bool share_ok = true, loo_ok = true;
    for (int k = 0; k < 3; ++k) {
      const double s = r.allocation.value(names[k]);
      share_ok = share_ok && std::abs(100.0 * (s - share[k])) <= 2.0;
      const double gap = 100.0 * std::max(std::abs(loo_a.value(names[k]) - s), std::abs(loo_b.value(names[k]) - s));
      loo_ok = loo_ok && gap <= 0.5;
      shares += fmt(" %s %.2f%%", names[k], 100.0 * s);
      gaps += fmt(" %s %.3fpp", names[k], gap);
    }
    v.check(share_ok, fmt("seed %llu Shapley shares%s within 2.0pp of 22.7/73.6/3.6",
                          static_cast<unsigned long long>(seed), shares.c_str()));
    v.check(loo_ok, fmt("seed %llu max |LOO - Shapley|%s within 0.5pp", static_cast<unsigned long long>(seed),
                        gaps.c_str()));
    v.check(rel_within(r.central_payment, 1104.0, 0.06),
            fmt("seed %llu central payment %.2f within 6%% of 1104", static_cast<unsigned long long>(seed),
                r.central_payment));
  }
  return v;
}

Verdict c2_batch_poly() {
  Verdict v;
  auto run = run_scenario(ScenarioCase::kBatchPoly);
  const auto& r = run.reports.at(0);
  const double psi = r.allocation.sum();
  double paid = 0.0;
  for (const auto& [f, x] : r.feature_totals) paid += x;
  v.check(within(psi, 0.60, 0.70), fmt("support allocation sum %.4f in [0.60, 0.70]", psi));
  v.check(rel_within(paid, 520.42, 0.10), fmt("support payment %.2f within 10%% of 520.42", paid));
  const auto bb = r.audit.check("budget_balance");
  v.check(r.extended && !bb.applicable && rel_within(r.benchmark_payment, 630.0, 0.10) &&
              r.audit.shortfall > 0.0 && std::abs(r.audit.shortfall - (r.benchmark_payment - paid)) <= 1e-9 * paid,
          fmt("audit reports shortfall %.2f against full-surplus benchmark %.2f", r.audit.shortfall,
              r.benchmark_payment));
  return v;
}

Verdict c3_arx_quantile() {
  Verdict v;
  auto run = run_scenario(ScenarioCase::kBatchArxQuantile);
  const std::map<double, std::pair<double, double>> expected{{0.1, {0.086, 0.052}}, {0.75, {0.152, 0.096}}};
  for (const auto& r : run.reports) {
    g_separable.push_back(r);
    const auto& [lc, lf] = expected.at(r.loss.tau);
    v.check(rel_within(r.central_loss, lc, 0.15),
            fmt("tau %.2f central-only loss %.4f within 15%% of %.3f", r.loss.tau, r.central_loss, lc));
    v.check(rel_within(r.full_loss, lf, 0.15),
            fmt("tau %.2f full loss %.4f within 15%% of %.3f", r.loss.tau, r.full_loss, lf));
    const double x2 = r.allocation.value("x2"), x3 = r.allocation.value("x3"), x4 = r.allocation.value("x4");
    v.check(x2 > x4 && x4 > x3,
            fmt("tau %.2f ordering x2 %.1f%% > x4 %.1f%% > x3 %.1f%%", r.loss.tau, 100 * x2, 100 * x4, 100 * x3));
  }
  return v;
}

Verdict c4_online_quantile() {
  Verdict v;
  ScenarioOverrides o;
  o.taus = {0.1, 0.25, 0.5, 0.75, 0.9};
  auto run = run_scenario(ScenarioCase::kOnlineQuantile, o);
  std::map<double, double> share, amount;
  for (const auto& r : run.reports) {
    g_separable.push_back(r);
    double total = 0.0;
    for (const auto& [f, x] : r.feature_totals) total += x;
    amount[r.loss.tau] = r.feature_totals.count("x4") ? r.feature_totals.at("x4") : 0.0;
    share[r.loss.tau] = total > 0.0 ? amount[r.loss.tau] / total : 0.0;
    v.note(fmt("tau %.2f x4 paid %.2f of %.2f (%.2f%%)", r.loss.tau, amount[r.loss.tau], total,
               100 * share[r.loss.tau]));
  }
  v.check(share[0.5] <= 0.02, fmt("tau 0.50 x4 share %.2f%% <= 2%%", 100 * share[0.5]));
  v.check(share[0.1] > share[0.25], fmt("x4 share tau 0.10 (%.2f%%) > tau 0.25 (%.2f%%)", 100 * share[0.1],
                                        100 * share[0.25]));
  v.check(share[0.9] > share[0.75], fmt("x4 share tau 0.90 (%.2f%%) > tau 0.75 (%.2f%%)", 100 * share[0.9],
                                        100 * share[0.75]));
  return v;
}

Verdict c5_rls_equivalence() {
  Verdict v;
  double worst[2] = {0.0, 0.0};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 gen(1000 + seed);
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> scale(0.2, 5.0);
    const Eigen::Index rows = 400 + 97 * static_cast<Eigen::Index>(seed);
    const Eigen::Index cols = 2 + static_cast<Eigen::Index>(seed % 7);
    Eigen::MatrixXd x(rows, cols);
    Eigen::VectorXd beta(cols), y(rows);
    for (Eigen::Index j = 0; j < cols; ++j) beta(j) = n01(gen);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double s = j == 0 ? 0.0 : scale(gen);
      for (Eigen::Index i = 0; i < rows; ++i) x(i, j) = j == 0 ? 1.0 : s * n01(gen);
    }
    for (Eigen::Index i = 0; i < rows; ++i) y(i) = x.row(i).dot(beta) + n01(gen);
    const Eigen::VectorXd ols = oracle::qr_least_squares(x, y);
    int k = 0;
    for (InitPolicy init : {InitPolicy::kWarmStart, InitPolicy::kZeroStart}) {
      OnlineOptions opts;
      opts.lambda = 1.0;
      opts.policy = init;
      opts.min_rows = 100;
      const Eigen::Index warm = init == InitPolicy::kWarmStart ? 100 : 0;
      auto state = init_state(x.topRows(warm), y.head(warm), LossSpec::quadratic(), opts);
      for (Eigen::Index i = warm; i < rows; ++i)
        online_step(state, x.row(i).transpose(), y(i), LossSpec::quadratic(), opts);
      worst[k] = std::max(worst[k], (state.coefficients - ols).cwiseAbs().maxCoeff());
      ++k;
    }
  }
  v.check(worst[0] <= 1e-6, fmt("warm start: max coefficient gap %.3g over 20 datasets (tol 1e-6)", worst[0]));
  v.check(worst[1] <= 1e-6, fmt("zero start: max coefficient gap %.3g over 20 datasets (tol 1e-6)", worst[1]));
  return v;
}

// Independent smooth quantile loss in extended precision.
long double sq_loss(long double tau, long double alpha, long double e) {
  const long double z = -e / alpha;
  const long double soft = std::max(z, 0.0L) + std::log1p(std::exp(-std::fabs(z)));
  return tau * e + alpha * soft;
}

Verdict c6_derivatives() {
  Verdict v;
  // Relative error with a floor: below 1e-6 the check is absolute at 1e-11.
  constexpr double kFloor = 1e-6;
  double worst1 = 0.0, worst2 = 0.0, verb1 = 0.0, verb2 = 0.0, abs1 = 0.0, abs2 = 0.0;
  std::size_t points = 0;
  for (double alpha : {0.05, 0.2, 1.0})
    for (double tau : {0.1, 0.5, 0.9})
      for (int i = -500; i <= 500; ++i) {
        const double e = 0.01 * i;
        auto f = [&](long double x) { return sq_loss(tau, alpha, x); };
        // Five-point stencils; the second derivative needs a wider step
        // to keep round-off small.
        const long double h = 0.005L * alpha, k = 0.02L * alpha;
        const double d1 = static_cast<double>((-f(e + 2 * h) + 8 * f(e + h) - 8 * f(e - h) + f(e - 2 * h)) / (12 * h));
        const double d2 = static_cast<double>(
            (-f(e + 2 * k) + 16 * f(e + k) - 30 * f(e) + 16 * f(e - k) - f(e - 2 * k)) / (12 * k * k));
        const auto spec = LossSpec::smooth_quantile(tau, alpha);
        auto verbatim = spec;
        verbatim.form = DerivativeForm::kVerbatim;
        auto rel = [&](double a, double d) { return std::abs(a - d) / std::max(std::abs(d), kFloor); };
        worst1 = std::max(worst1, rel(loss_h1(spec, e), d1));
        worst2 = std::max(worst2, rel(loss_h2(spec, e), d2));
        verb1 = std::max(verb1, rel(loss_h1(verbatim, e), d1));
        verb2 = std::max(verb2, rel(loss_h2(verbatim, e), d2));
        abs1 = std::max(abs1, std::abs(loss_h1(verbatim, e) - d1));
        abs2 = std::max(abs2, std::abs(loss_h2(verbatim, e) - d2));
        ++points;
      }
  v.check(worst1 <= 1e-5, fmt("analytic h1: max relative error %.3g over %zu grid points (tol 1e-5)", worst1, points));
  v.check(worst2 <= 1e-5, fmt("analytic h2: max relative error %.3g over %zu grid points (tol 1e-5)", worst2, points));
  v.note(fmt("verbatim variant, measured: h1 max deviation %.3g absolute (%.3g relative), "
             "h2 max deviation %.3g absolute (%.3g relative)",
             abs1, verb1, abs2, verb2));
  return v;
}

CoalitionLossTable random_table(int n, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CoalitionLossTable t;
  for (int k = 0; k < n; ++k) {
    t.players.push_back("x" + std::to_string(k + 1));
    t.is_support.push_back(true);
  }
  std::vector<double> gains(static_cast<std::size_t>(n));
  for (auto& g : gains) g = u(gen);
  t.losses.resize(std::size_t{1} << n);
  for (std::size_t m = 0; m < t.losses.size(); ++m) {
    double l = 4.0;
    for (int k = 0; k < n; ++k)
      if (m >> k & 1) l -= gains[static_cast<std::size_t>(k)] * (0.5 + u(gen));
    t.losses[m] = l;
  }
  return t;
}

Verdict c7_shapley() {
  Verdict v;
  std::mt19937_64 gen(77);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 6;
    const auto t = random_table(n, gen);
    const auto exact = shapley_contributions(t);
    const auto brute = oracle::permutation_shapley([&](unsigned long m) { return t.losses[m]; }, n);
    for (int k = 0; k < n; ++k) worst = std::max(worst, std::abs(exact(k) - brute[static_cast<std::size_t>(k)]));
  }
  v.check(worst <= 1e-10, fmt("exact vs permutation enumeration: max gap %.3g on 100 tables (tol 1e-10)", worst));
  double worst_z = 0.0;
  int inside = 0, total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_table(5, gen);
    const auto exact = shapley_allocation(t);
    const auto mc = shapley_montecarlo(t, 2000, 500 + static_cast<std::uint64_t>(trial), false);
    for (int k = 0; k < 5; ++k) {
      const double z = std::abs(mc.values(k) - exact.values(k)) / mc.std_errors(k);
      worst_z = std::max(worst_z, z);
      inside += z <= 3.0;
      ++total;
    }
  }
  v.check(inside == total, fmt("Monte-Carlo (2000 permutations, 5 features): %d/%d estimates within 3 SE, "
                               "max %.2f SE",
                               inside, total, worst_z));
  return v;
}

// --- property suite helpers ------------------------------------------------

Dataset with_columns(const Dataset& d, const std::vector<std::tuple<std::string, AgentId, Eigen::VectorXd>>& add,
                     const std::map<std::string, AgentId>& reassign = {}) {
  auto names = d.feature_names();
  auto owners = d.ownership();
  for (const auto& [f, a] : reassign) owners[f] = a;
  Eigen::MatrixXd x(d.features().rows(), d.features().cols() + static_cast<Eigen::Index>(add.size()));
  x.leftCols(d.features().cols()) = d.features();
  Eigen::Index c = d.features().cols();
  for (const auto& [name, owner, col] : add) {
    names.push_back(name);
    owners[name] = owner;
    x.col(c++) = col;
  }
  return Dataset(d.timestamps(), d.target_name(), d.target_owner(), d.target(), names, x, owners);
}

Eigen::VectorXd column(const Dataset& d, const std::string& f) {
  return d.features().col(static_cast<Eigen::Index>(d.feature_index(f)));
}

bool step_balance(const MarketReport& r, double* worst) {
  std::map<std::size_t, double> paid;
  for (const auto& e : r.ledger) paid[e.step] += e.amount;
  bool ok = true;
  for (std::size_t i = 0; i < r.charge_steps.size(); ++i) {
    const double c = r.central_charges[i];
    const double gap = std::abs(paid[r.charge_steps[i]] - c) / std::max(std::abs(c), 1e-300);
    if (c != 0.0) *worst = std::max(*worst, gap);
    ok = ok && (c == 0.0 ? paid[r.charge_steps[i]] == 0.0 : gap <= 1e-9);
  }
  return ok;
}

bool additive(const MarketReport& r) {
  std::map<AgentId, double> sum;
  for (const auto& [f, x] : r.feature_totals) sum[r.feature_owner.at(f)] += x;
  for (const auto& [a, x] : r.agent_totals)
    if (sum[a] != x) return false;
  return true;
}

Verdict c8_properties() {
  Verdict v;
  for (const auto& r : run_scenario(ScenarioCase::kOnlineArx).reports) g_separable.push_back(r);
  // Budget balance, non-negativity and additivity over every separable run.
  double worst = 0.0;
  bool balanced = true, nonneg = true, add = true;
  std::size_t entries = 0, runs = 0;
  for (const auto& r : g_separable) {
    if (r.extended) continue;
    ++runs;
    balanced = balanced && step_balance(r, &worst);
    for (const auto& e : r.ledger) {
      nonneg = nonneg && e.amount >= 0.0;
      ++entries;
    }
    add = add && additive(r);
  }
  v.check(balanced, fmt("budget balance over %zu separable runs: max relative gap %.3g (tol 1e-9)",
                        runs, worst));
  v.check(nonneg, fmt("all %zu ledger payments >= 0", entries));
  v.check(add, "per-agent totals equal the sum of their features' totals exactly");

  const Dataset base = generate({ScenarioCase::kBatchLinear, 10000, 11, 0.3, {}}).data;
  const Dataset arx = generate({ScenarioCase::kOnlineArx, 3000, 11, 0.3, {}}).data;
  TaskSpec batch = scenario_tasks(ScenarioCase::kBatchLinear)[0];
  TaskSpec online = scenario_tasks(ScenarioCase::kOnlineArx)[0];

  // Duplicate column owned by another agent: equal payments.
  {
    const auto dup = with_columns(base, {{"x5", "a4", column(base, "x2")}});
    const auto r = clear_batch_market(dup, batch);
    const auto darx = with_columns(arx, {{"x5", "a4", column(arx, "x2")}});
    TaskSpec t = online;
    t.model.lags["x5"] = {1};
    const auto o = run_online_market(darx, t);
    const bool same = r.feature_totals.at("x2") == r.feature_totals.at("x5") &&
                      o.feature_totals.at("x2") == o.feature_totals.at("x5");
    v.check(same, fmt("duplicate columns paid identically (batch %.6f / %.6f, online %.6f / %.6f)",
                      r.feature_totals.at("x2"), r.feature_totals.at("x5"), o.feature_totals.at("x2"),
                      o.feature_totals.at("x5")));
  }
  // Dummy features: a constant column and a copy of the central agent's own feature.
  {
    const auto dd = with_columns(base, {{"c1", "a4", Eigen::VectorXd::Constant(base.rows(), 2.5)},
                                        {"x1copy", "a5", column(base, "x1")}});
    const auto r = clear_batch_market(dd, batch);
    const double c1 = r.feature_totals.count("c1") ? r.feature_totals.at("c1") : 0.0;
    const double cp = r.feature_totals.count("x1copy") ? r.feature_totals.at("x1copy") : 0.0;
    v.check(c1 == 0.0 && cp == 0.0, fmt("dummy features paid exactly 0 (constant %.3g, central copy %.3g)", c1, cp));
  }
  // Split invariance: a3's two features held by one agent or by two.
  {
    const auto one = clear_batch_market(base, batch);
    const auto two = clear_batch_market(with_columns(base, {}, {{"x4", "a5"}}), batch);
    const bool same = one.feature_totals == two.feature_totals &&
                      one.agent_totals.at("a3") == two.feature_totals.at("x3") + two.feature_totals.at("x4") &&
                      additive(one) && additive(two);
    v.check(same, fmt("feature-set split invariance: a3 %.6f vs a3 + a5 %.6f", one.agent_totals.at("a3"),
                      two.agent_totals.at("a3") + two.agent_totals.at("a5")));
  }
  // Truthfulness: reporting a noisy x2 lowers its payment.
  {
    int lower = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const Dataset d = generate({ScenarioCase::kBatchLinear, 10000, seed, 0.3, {}}).data;
      std::mt19937_64 gen(9000 + seed);
      std::normal_distribution<double> noise(0.0, 0.5);
      Eigen::MatrixXd x = d.features();
      const auto j = static_cast<Eigen::Index>(d.feature_index("x2"));
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += noise(gen);
      const Dataset noisy(d.timestamps(), d.target_name(), d.target_owner(), d.target(), d.feature_names(), x,
                          d.ownership());
      const double honest = clear_batch_market(d, batch).feature_totals.at("x2");
      const double lied = clear_batch_market(noisy, batch).feature_totals.at("x2");
      lower += lied < honest;
    }
    v.check(lower >= 18, fmt("truthfulness: noisy x2 earns less in %d/20 seeds (need 18)", lower));
  }
  return v;
}

Verdict c9_oos() {
  Verdict v;
  ScenarioOverrides o;
  o.central_agents = {"a1"};
  o.multi_agent_online = true;
  auto online = run_scenario(ScenarioCase::kMultiAgentArx, o);
  auto batch = run_scenario(ScenarioCase::kMultiAgentArx);
  std::size_t windows = 0, improved = 0, oos_runs = 0;
  bool totals = true;
  double total_paid = 0.0;
  for (auto* run : {&batch, &online})
    for (const auto& r : run->reports) {
      g_separable.push_back(r);
      if (r.mechanism != Mechanism::kOos) continue;
      ++oos_runs;
      for (const auto& w : r.windows) {
        ++windows;
        improved += w.loss_with <= w.loss_without;
      }
      // Per-step ledger amounts re-summed in order equal the reported totals.
      std::map<std::string, double> sum;
      double charges = 0.0;
      for (const auto& e : r.ledger) sum[e.feature] += e.amount;
      for (double c : r.central_charges) charges += c;
      for (const auto& [f, x] : r.feature_totals) totals = totals && sum[f] == x;
      double paid = 0.0;
      for (const auto& [f, x] : r.feature_totals) paid += x;
      totals = totals && charges == r.central_payment && std::abs(paid - charges) <= 1e-9 * std::max(1.0, charges);
      total_paid += r.central_payment;
    }
  const double frac = windows ? static_cast<double>(improved) / static_cast<double>(windows) : 0.0;
  v.check(windows > 0 && frac >= 0.95, fmt("with-support loss <= without on %zu/%zu windows (%.1f%%, need 95%%) "
                                           "across %zu out-of-sample markets",
                                           improved, windows, 100 * frac, oos_runs));
  v.check(totals, fmt("per-step payments sum exactly to reported totals (%.2f paid in total)", total_paid));
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t* files) {
  std::vector<std::string> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) fa.push_back(fs::relative(e.path(), a).string());
  for (const auto& e : fs::recursive_directory_iterator(b)) fb.push_back(fs::relative(e.path(), b).string());
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (fs::is_regular_file(a / f)) {
      if (slurp(a / f) != slurp(b / f)) return false;
      ++*files;
    }
  return true;
}

Verdict c10_determinism(const fs::path& work) {
  Verdict v;
  fs::remove_all(work);
  std::ostringstream sink;
  // Scenario command, with markets, for every case.
  for (auto id : all_scenarios()) {
    std::size_t files = 0;
    SimulateArgs args;
    args.scenario = to_string(id);
    args.seed = 42;
    args.run = true;
    if (id == ScenarioCase::kMultiAgentArx) {
      args.central_agents = {"a1", "a6"};
      args.multi_agent_online = true;
    }
    int rc = 0;
    for (const char* leg : {"a", "b"}) {
      args.out = (work / ("simulate-" + to_string(id)) / leg).string();
      rc |= cmd_simulate(args, sink, sink);
    }
    const auto root = work / ("simulate-" + to_string(id));
    const bool same = rc == 0 && same_tree(root / "a", root / "b", &files);
    v.check(same && files > 0,
            fmt("simulate --run %s: %zu files byte-identical across runs", to_string(id).c_str(), files));
  }
  // Market command on every sample configuration.
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(REGMARKET_CONFIG_DIR))
    if (e.path().extension() == ".ini" && e.path().stem() != "csv_example") configs.push_back(e.path());
  std::sort(configs.begin(), configs.end());
  for (const auto& c : configs) {
    std::size_t files = 0;
    MarketArgs args;
    args.config = c.string();
    int rc = 0;
    for (const char* leg : {"a", "b"}) {
      args.out = (work / ("market-" + c.stem().string()) / leg).string();
      rc |= cmd_market(args, sink, sink);
    }
    const auto root = work / ("market-" + c.stem().string());
    const bool same = rc == 0 && same_tree(root / "a", root / "b", &files);
    v.check(same && files > 0,
            fmt("market --config %s: %zu files byte-identical across runs", c.filename().c_str(), files));
  }
  return v;
}

}  // namespace
}  // namespace regmarket

int main(int argc, char** argv) {
  using namespace regmarket;
  // acceptance [-v] [work directory]
  bool verbose = false;
  fs::path work = "acceptance_work";
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "-v") verbose = true;
    else work = argv[i];
  }
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  // Run order: the property suite reuses the reports of the scenario runs.
  const std::vector<Criterion> criteria{
      {1, "batch linear reproduction (5 seeds)", c1_batch_linear},
      {2, "batch polynomial with cross interaction", c2_batch_poly},
      {3, "batch ARX quantile", c3_arx_quantile},
      {4, "online quantile zero element and tau ordering", c4_online_quantile},
      {5, "recursive least squares equals batch OLS", c5_rls_equivalence},
      {6, "smooth quantile derivatives vs finite differences", c6_derivatives},
      {7, "Shapley exact and Monte-Carlo oracles", c7_shapley},
      {9, "out-of-sample market consistency", c9_oos},
      {8, "market property suite", c8_properties},
      {10, "determinism", [&] { return c10_determinism(work); }},
  };
  std::map<int, std::pair<const char*, Verdict>> results;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.check(false, std::string("threw: ") + e.what());
    }
    results[c.id] = {c.name, v};
  }
  int failed = 0;
  for (const auto& [id, result] : results) {
    const auto& [name, v] = result;
    failed += !v.pass;
    std::printf("[%s] C%d %s\n", v.pass ? "PASS" : "FAIL", id, name);
    if (verbose || !v.pass)
      for (const auto& l : v.lines) std::printf("       %s\n", l.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
