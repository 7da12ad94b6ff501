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


// regmarket: simulate scenarios, clear markets and print report tables.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "regmarket/cli_reporting.hpp"

int main(int argc, char** argv) {
  using namespace regmarket;

  CLI::App app{"Regression markets: price and pay for features contributed to a forecasting task"};
  app.require_subcommand(1);
  app.footer(std::string("Default output directory: $") + kOutputEnv +
             ", else the current directory.\n"
             "Exit codes: 0 ok, 1 config/parameter/coverage, 2 io/parse, 3 numeric, 4 strict audit.");

  SimulateArgs sim;
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  auto* simulate = app.add_subcommand("simulate", "Generate a built-in scenario dataset and its ground truth");
  simulate->add_option("--case", sim.scenario, "Scenario case")->required();
  auto* seed_opt = simulate->add_option("--seed", seed, "Random seed");
  auto* rows_opt = simulate->add_option("--rows", rows, "Number of rows");
  simulate->add_option("--out", sim.out, "Output directory");
  simulate->add_flag("--run", sim.run, "Also run the scenario's markets and write their reports");
  simulate->add_option("--tau", sim.taus, "Quantile levels for the quantile cases")->delimiter(',');
  simulate->add_option("--central", sim.central_agents, "Central agents (nine-agent case)")->delimiter(',');
  simulate->add_flag("--online", sim.multi_agent_online, "Add the online quantile market (nine-agent case)");
  simulate->add_flag("--strict-audit", sim.strict_audit, "Exit 4 when an audit check fails");

  MarketArgs market;
  std::string mechanism;
  auto* market_cmd = app.add_subcommand("market", "Clear the markets described by a run configuration");
  market_cmd->add_option("mechanism", mechanism, "Run only this mechanism: batch, online or oos")
      ->check(CLI::IsMember({"batch", "online", "oos"}));
  market_cmd->add_option("--config", market.config, "Run configuration file")->required();
  market_cmd->add_option("--out", market.out, "Output directory (overrides the config)");
  market_cmd->add_flag("--strict-audit", market.strict_audit, "Exit 4 when an audit check fails");

  std::string report_path;
  bool per_agent = false, per_feature = false, summary = false;
  auto* report = app.add_subcommand("report", "Print tables from a report.json");
  report->add_option("report", report_path, "Path to report.json")->required();
  auto* g = report->add_option_group("view")->require_option(0, 1);
  g->add_flag("--per-agent", per_agent, "Total revenue per support agent");
  g->add_flag("--per-feature", per_feature, "Allocation and payment per feature");
  g->add_flag("--summary", summary, "Losses and payments per task (default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (simulate->parsed()) {
    if (*seed_opt) sim.seed = seed;
    if (*rows_opt) sim.rows = rows;
    return cmd_simulate(sim, std::cout, std::cerr);
  }
  if (market_cmd->parsed()) {
    if (!mechanism.empty()) market.mechanism = parse_mechanism(mechanism);
    return cmd_market(market, std::cout, std::cerr);
  }
  const ReportView view = per_agent     ? ReportView::kPerAgent
                          : per_feature ? ReportView::kPerFeature
                                        : ReportView::kSummary;
  return cmd_report(report_path, view, std::cout, std::cerr);
}
