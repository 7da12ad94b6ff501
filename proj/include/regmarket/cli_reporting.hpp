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


#ifndef REGMARKET_CLI_REPORTING_HPP_
#define REGMARKET_CLI_REPORTING_HPP_

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "regmarket/error.hpp"
#include "regmarket/market_engine.hpp"
#include "regmarket/report_io.hpp"
#include "regmarket/run_config.hpp"
#include "regmarket/simulation_lab.hpp"

// Command implementations behind the regmarket executable. Each returns the
// process exit status and writes only below its output directory.
//
// Exit codes:
//   0  success
//   1  configuration, parameter, lookup, coverage or data-size error
//   2  IO, parse, CSV schema or timestamp-ordering error
//   3  numeric failure (non-finite values, singular systems, divergence)
//   4  audit failure under --strict-audit

namespace regmarket {

inline constexpr const char* kOutputEnv = "REGMARKET_OUT";

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitIo = 2,
  kExitNumeric = 3,
  kExitAudit = 4,
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo:
    case ErrorKind::kParse:
    case ErrorKind::kSchema:
    case ErrorKind::kOrdering:
      return kExitIo;
    case ErrorKind::kNumeric:
    case ErrorKind::kSingular:
    case ErrorKind::kConvergence:
      return kExitNumeric;
    default:
      return kExitConfig;
  }
}

/// Explicit flag, then the config value, then $REGMARKET_OUT, then ".".
inline std::filesystem::path output_dir(const std::string& flag, const std::string& configured = "") {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  return ".";
}

inline void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), ErrorKind::kIo,
          "cannot create output directory '" + dir.string() + "'");
}

/// report.json, ledger.csv, cumulative_revenues.csv and audit.json, plus the
/// optional tidy CSVs enabled in `flags`. Returns the file names written.
inline std::vector<std::string> write_market_outputs(const std::filesystem::path& dir,
                                                     const std::vector<MarketReport>& reports,
                                                     const OutputConfig& flags = {}) {
  prepare_output_dir(dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text((dir / name).string(), text);
    written.push_back(name);
  };
  emit("report.json", reports_document(reports).dump() + "\n");
  emit("ledger.csv", ledger_csv(reports));
  emit("cumulative_revenues.csv", cumulative_revenues_csv(reports));
  emit("audit.json", audit_document(reports).dump(2) + "\n");
  if (flags.loss_table) emit("loss_table.csv", loss_table_csv(reports));
  if (flags.trajectories) emit("trajectories.csv", trajectories_csv(reports));
  if (flags.windows) emit("windows.csv", windows_csv(reports));
  return written;
}

namespace detail {

template <typename F>
int guarded(std::ostream& err, F body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "regmarket: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "regmarket: io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    err << "regmarket: parse error: " << e.what() << "\n";
    return kExitIo;
  }
}

inline bool all_passed(const std::vector<MarketReport>& reports) {
  for (const auto& r : reports)
    if (!r.audit.passed()) return false;
  return true;
}

}  // namespace detail

struct SimulateArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rows;
  std::string out;
  // Also run the scenario's markets and write their reports.
  bool run = false;
  std::vector<double> taus;
  std::vector<std::string> central_agents;
  bool multi_agent_online = false;
  bool strict_audit = false;
};

/// Writes dataset.csv and truth.json; with `run`, the market outputs and
/// comparison.json as well.
inline int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const ScenarioCase id = parse_scenario(args.scenario);
    ScenarioSpec spec = default_scenario(id);
    if (args.seed) spec.seed = *args.seed;
    if (args.rows) spec.rows = *args.rows;
    spec.validate();
    const auto dir = output_dir(args.out);
    int status = kExitOk;
    if (!args.run) {
      const Scenario s = generate(spec);
      prepare_output_dir(dir);
      write_csv(s.data, (dir / "dataset.csv").string());
      write_json((dir / "truth.json").string(), s.truth.to_json());
      out << "wrote " << (dir / "dataset.csv").string() << " and " << (dir / "truth.json").string() << "\n";
      return status;
    }
    ScenarioOverrides o;
    o.seed = spec.seed;
    o.rows = spec.rows;
    o.taus = args.taus;
    o.central_agents = args.central_agents;
    o.multi_agent_online = args.multi_agent_online;
    const ScenarioRun run = run_scenario(id, o);
    prepare_output_dir(dir);
    write_csv(run.scenario.data, (dir / "dataset.csv").string());
    write_json((dir / "truth.json").string(), run.scenario.truth.to_json());
    write_market_outputs(dir, run.reports);
    write_json((dir / "comparison.json").string(),
               {{"scenario", to_string(id)}, {"seed", spec.seed}, {"rows", spec.rows},
                {"small_sample", run.small_sample}, {"quantities", run.comparison}});
    out << format_reports(run.reports, ReportView::kSummary);
    if (args.strict_audit && !detail::all_passed(run.reports)) status = kExitAudit;
    return status;
  });
}

struct MarketArgs {
  std::string config;
  // Runs only this mechanism for every task when set.
  std::optional<Mechanism> mechanism;
  std::string out;
  bool strict_audit = false;
};

/// Runs every task of a configuration through its market mechanism(s).
inline std::vector<MarketReport> run_markets(const RunConfig& cfg, std::optional<Mechanism> only,
                                             const std::filesystem::path& dir) {
  const Dataset data = resolve_dataset(cfg);
  std::vector<MarketReport> reports;
  for (const auto& entry : resolve_tasks(cfg)) {
    TaskSpec task = entry.spec;
    if (!task.checkpoint_path.empty()) task.checkpoint_path = (dir / task.checkpoint_path).string();
    const Dataset own = entry.target.empty() ? data : with_target(data, entry.target);
    const auto mechanisms = only ? std::vector<Mechanism>{*only} : entry.mechanisms;
    for (Mechanism m : mechanisms) {
      switch (m) {
        case Mechanism::kBatch: reports.push_back(clear_batch_market(own, task)); break;
        case Mechanism::kOnline: reports.push_back(run_online_market(own, task)); break;
        case Mechanism::kOos: reports.push_back(run_oos_market(own, task, entry.source)); break;
      }
    }
  }
  return reports;
}

inline int cmd_market(const MarketArgs& args, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const RunConfig cfg = load_run_config(args.config);
    const auto dir = output_dir(args.out, cfg.output.dir);
    const auto reports = run_markets(cfg, args.mechanism, dir);
    write_market_outputs(dir, reports, cfg.output);
    out << format_reports(reports, ReportView::kSummary);
    const bool strict = args.strict_audit || cfg.output.strict_audit;
    if (!detail::all_passed(reports)) {
      err << "regmarket: audit failed, see " << (dir / "audit.json").string() << "\n";
      if (strict) return static_cast<int>(kExitAudit);
    }
    return static_cast<int>(kExitOk);
  });
}

inline int cmd_report(const std::string& path, ReportView view, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    out << format_reports(read_reports(path), view);
    return static_cast<int>(kExitOk);
  });
}

}  // namespace regmarket

#endif  // REGMARKET_CLI_REPORTING_HPP_
