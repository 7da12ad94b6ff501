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


#ifndef REGMARKET_RUN_CONFIG_HPP_
#define REGMARKET_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "regmarket/error.hpp"
#include "regmarket/market_engine.hpp"
#include "regmarket/simulation_lab.hpp"
#include "regmarket/timeseries_data.hpp"

// Run configuration: a flat, commented key = value document.
//
//   schema = regmarket.run-config
//   version = 1
//
//   [data]            exactly one of `scenario = <case>` or `csv = <path>`
//   [output]          dir, strict_audit, loss_table, trajectories, windows
//   [task]            one section per market task, repeatable
//
// `#` and `;` start comments. Lists are comma separated. Keys of the form
// `owner.<column>`, `capacity.<column>` and `lags.<series>` carry a name.

namespace regmarket {

inline constexpr const char* kConfigSchema = "regmarket.run-config";
inline constexpr int kConfigVersion = 1;

struct DataConfig {
  std::optional<ScenarioSpec> scenario;
  std::string csv_path;  // relative paths resolve against the config file
  CsvSchema schema;
};

struct OutputConfig {
  std::string dir;
  bool strict_audit = false;
  bool loss_table = true;
  bool trajectories = true;
  bool windows = true;
};

struct TaskEntry {
  TaskSpec spec;
  std::vector<Mechanism> mechanisms;
  ModelSource source = ModelSource::kBatch;
  // Column to use as the target (multi-series data); empty keeps the dataset target.
  std::string target;
};

struct RunConfig {
  int version = kConfigVersion;
  DataConfig data;
  OutputConfig output;
  std::vector<TaskEntry> tasks;
  std::filesystem::path base_dir;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct ConfigLine {
  std::size_t line = 0;
  std::string key;
  std::string value;
};

struct ConfigSection {
  std::string name;
  std::size_t line = 0;
  std::vector<ConfigLine> entries;
};

class ValueReader {
 public:
  explicit ValueReader(const ConfigLine& e) : e_(e) {}

  [[noreturn]] void bad(const std::string& what) const {
    fail(ErrorKind::kConfig, "line " + std::to_string(e_.line) + ": " + e_.key + ": " + what);
  }
  const std::string& text() const {
    if (e_.value.empty()) bad("empty value");
    return e_.value;
  }
  double real() const {
    const auto v = parse_double(text());
    if (!v) bad("expected a number, got '" + e_.value + "'");
    return *v;
  }
  std::int64_t integer() const {
    const auto v = parse_integer(text());
    if (!v) bad("expected an integer, got '" + e_.value + "'");
    return *v;
  }
  std::size_t count() const {
    const auto v = integer();
    if (v < 0) bad("must be >= 0");
    return static_cast<std::size_t>(v);
  }
  bool boolean() const {
    const auto& v = text();
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    bad("expected true or false, got '" + v + "'");
  }
  std::vector<std::string> list() const { return split_list(text()); }
  std::vector<int> lags() const {
    std::vector<int> out;
    for (const auto& item : list()) {
      const auto v = parse_integer(item);
      if (!v || *v < 1) bad("lags must be integers >= 1");
      out.push_back(static_cast<int>(*v));
    }
    return out;
  }
  template <typename F>
  auto parsed(F parse) const {
    try {
      return parse(text());
    } catch (const Error& e) {
      bad(e.detail());
    }
  }

 private:
  const ConfigLine& e_;
};

inline std::vector<ConfigSection> split_sections(const std::string& text) {
  std::vector<ConfigSection> sections{{"", 0, {}}};
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    for (std::size_t i = 0; i < line.size(); ++i)
      if ((line[i] == '#' || line[i] == ';') && (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
        line.resize(i);
        break;
      }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      require(line.back() == ']', ErrorKind::kConfig, where + "unterminated section header");
      sections.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::kConfig, where + "expected 'key = value'");
    ConfigLine entry{line_no, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    require(!entry.key.empty(), ErrorKind::kConfig, where + "missing key");
    for (const auto& prior : sections.back().entries)
      require(prior.key != entry.key, ErrorKind::kConfig, where + "duplicate key '" + entry.key + "'");
    sections.back().entries.push_back(entry);
  }
  return sections;
}

// Splits `prefix.name` keys.
inline std::optional<std::string> keyed(const std::string& key, const std::string& prefix) {
  if (key.rfind(prefix + ".", 0) != 0 || key.size() == prefix.size() + 1) return std::nullopt;
  return key.substr(prefix.size() + 1);
}

inline void read_data(const ConfigSection& s, DataConfig& d) {
  std::optional<std::string> scenario;
  ScenarioSpec spec;
  bool seed = false, rows = false, noise = false, beta = false;
  bool csv_keys = false;
  for (const auto& e : s.entries) {
    ValueReader v(e);
    if (e.key == "scenario") {
      scenario = v.text();
      spec = default_scenario(v.parsed(parse_scenario));
    } else if (e.key == "seed") {
      seed = true;
    } else if (e.key == "rows") {
      rows = true;
    } else if (e.key == "noise_sd") {
      noise = true;
    } else if (e.key == "beta") {
      beta = true;
    } else if (e.key == "csv") {
      d.csv_path = v.text();
    } else if (e.key == "timestamp") {
      d.schema.timestamp_column = v.text(), csv_keys = true;
    } else if (e.key == "target") {
      d.schema.target_column = v.text(), csv_keys = true;
    } else if (e.key == "target_owner") {
      d.schema.target_owner = v.text(), csv_keys = true;
    } else if (e.key == "features") {
      d.schema.feature_columns = v.list(), csv_keys = true;
    } else if (auto col = keyed(e.key, "owner")) {
      d.schema.ownership[*col] = v.text(), csv_keys = true;
    } else if (auto col = keyed(e.key, "capacity")) {
      d.schema.capacity[*col] = v.real(), csv_keys = true;
      if (!(d.schema.capacity[*col] > 0.0)) v.bad("capacity must be positive");
    } else {
      v.bad("unknown key in [data]");
    }
  }
  require(scenario.has_value() != !d.csv_path.empty(), ErrorKind::kConfig,
          "[data] needs exactly one dataset source: 'scenario' or 'csv'");
  if (scenario) {
    require(!csv_keys, ErrorKind::kConfig, "[data] CSV schema keys are not valid with a scenario source");
    // Scenario parameters are read after the case so its defaults apply first.
    for (const auto& e : s.entries) {
      ValueReader v(e);
      if (e.key == "seed") spec.seed = static_cast<std::uint64_t>(v.count());
      if (e.key == "rows") spec.rows = v.count();
      if (e.key == "noise_sd") spec.noise_sd = v.real();
      if (e.key == "beta")
        for (const auto& item : v.list()) {
          const auto b = parse_double(item);
          if (!b) v.bad("expected numbers");
          spec.beta.push_back(*b);
        }
    }
    try {
      spec.validate();
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, "[data] " + e.detail());
    }
    d.scenario = spec;
  } else {
    require(!(seed || rows || noise || beta), ErrorKind::kConfig,
            "[data] scenario keys are not valid with a CSV source");
    require(!d.schema.target_column.empty() && !d.schema.target_owner.empty(), ErrorKind::kConfig,
            "[data] CSV source needs 'target' and 'target_owner'");
  }
}

inline void read_output(const ConfigSection& s, OutputConfig& o) {
  for (const auto& e : s.entries) {
    ValueReader v(e);
    if (e.key == "dir") o.dir = v.text();
    else if (e.key == "strict_audit") o.strict_audit = v.boolean();
    else if (e.key == "loss_table") o.loss_table = v.boolean();
    else if (e.key == "trajectories") o.trajectories = v.boolean();
    else if (e.key == "windows") o.windows = v.boolean();
    else v.bad("unknown key in [output]");
  }
}

inline LossFamily parse_family(const std::string& s) {
  if (s == "quadratic") return LossFamily::kQuadratic;
  if (s == "smooth-quantile") return LossFamily::kSmoothQuantile;
  fail(ErrorKind::kConfig, "unknown loss family '" + s + "'");
}

inline DerivativeForm parse_form(const std::string& s) {
  if (s == "analytic") return DerivativeForm::kAnalytic;
  if (s == "verbatim") return DerivativeForm::kVerbatim;
  fail(ErrorKind::kConfig, "unknown derivative variant '" + s + "'");
}

inline InitPolicy parse_init(const std::string& s) {
  if (s == "warm-start") return InitPolicy::kWarmStart;
  if (s == "zero-start") return InitPolicy::kZeroStart;
  fail(ErrorKind::kConfig, "unknown initialization '" + s + "'");
}

// Checkpoints must stay inside the output directory.
inline std::string relative_path(const ValueReader& v) {
  const std::filesystem::path p(v.text());
  if (p.is_absolute()) v.bad("must be relative to the output directory");
  for (const auto& part : p)
    if (part == "..") v.bad("must not leave the output directory");
  return p.generic_string();
}

inline TaskEntry read_task(const ConfigSection& s) {
  TaskEntry t;
  TaskSpec& k = t.spec;
  for (const auto& e : s.entries) {
    ValueReader v(e);
    const auto& key = e.key;
    if (key == "name") k.name = v.text();
    else if (key == "central_agent") k.central_agent = v.text();
    else if (key == "mechanisms" || key == "mechanism")
      for (const auto& m : v.list()) t.mechanisms.push_back(v.parsed([&](const std::string&) { return parse_mechanism(m); }));
    else if (key == "model_source") t.source = v.parsed(parse_model_source);
    else if (key == "target") t.target = v.text();
    else if (key == "loss") k.loss.family = v.parsed(parse_family);
    else if (key == "tau") k.loss.tau = v.real();
    else if (key == "alpha") k.loss.alpha = v.real();
    else if (key == "derivative") k.loss.form = v.parsed(parse_form);
    else if (key == "phi") k.phi_insample = v.real();
    else if (key == "phi_oos") k.phi_oos = v.real();
    else if (key == "percent_points") k.percent_points = v.boolean();
    else if (key == "policy") k.policy = v.parsed(parse_policy);
    else if (key == "oos_policy") k.oos_policy = v.parsed(parse_policy);
    else if (key == "exact_cap") k.exact_cap = v.count();
    else if (key == "mc_samples") k.mc_samples = v.count();
    else if (key == "mc_seed") k.mc_seed = static_cast<std::uint64_t>(v.count());
    else if (key == "lambda") k.lambda = v.real();
    else if (key == "init") k.init = v.parsed(parse_init);
    else if (key == "warmup") k.warmup = v.count();
    else if (key == "billed_rows") k.billed_rows = v.count();
    else if (key == "horizon") k.horizon = static_cast<int>(v.integer());
    else if (key == "train_rows") k.train_rows = v.count();
    else if (key == "window") k.window = v.count();
    else if (key == "screening") k.screening = v.parsed(parse_screening);
    else if (key == "burn_in") k.burn_in = v.count();
    else if (key == "cv_folds") k.cv_folds = v.count();
    else if (key == "trajectory_stride") k.trajectory_stride = v.count();
    else if (key == "checkpoint") k.checkpoint_path = relative_path(v);
    else if (key == "degree") k.model.degree = static_cast<int>(v.integer());
    else if (key == "interactions") k.model.interactions = v.boolean();
    else if (key == "keep_contemporaneous") k.model.keep_contemporaneous = v.boolean();
    else if (key == "terms") k.model.terms = v.list();
    else if (key == "drop") k.model.drop_series = v.list();
    else if (auto series = keyed(key, "lags")) k.model.lags[*series] = v.lags();
    else v.bad("unknown key in [task]");
  }
  const std::string where = "[task] at line " + std::to_string(s.line) + ": ";
  require(!t.mechanisms.empty(), ErrorKind::kConfig, where + "'mechanisms' is required");
  try {
    k.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, where + e.detail());
  }
  return t;
}

}  // namespace detail

/// Parses a run configuration document.
inline RunConfig parse_run_config(const std::string& text) {
  auto sections = detail::split_sections(text);
  RunConfig cfg;
  std::optional<std::string> schema;
  std::optional<int> version;
  for (const auto& e : sections.front().entries) {
    detail::ValueReader v(e);
    if (e.key == "schema") schema = v.text();
    else if (e.key == "version") version = static_cast<int>(v.integer());
    else v.bad("unknown top-level key");
  }
  require(schema == std::string(kConfigSchema), ErrorKind::kConfig,
          std::string("missing or wrong 'schema' (expected ") + kConfigSchema + ")");
  require(version == kConfigVersion, ErrorKind::kConfig,
          "unsupported config version (expected " + std::to_string(kConfigVersion) + ")");
  bool data = false, output = false;
  std::set<std::string> names;
  for (std::size_t i = 1; i < sections.size(); ++i) {
    const auto& s = sections[i];
    const std::string where = "line " + std::to_string(s.line) + ": ";
    if (s.name == "data") {
      require(!data, ErrorKind::kConfig, where + "duplicate [data] section");
      data = true;
      detail::read_data(s, cfg.data);
    } else if (s.name == "output") {
      require(!output, ErrorKind::kConfig, where + "duplicate [output] section");
      output = true;
      detail::read_output(s, cfg.output);
    } else if (s.name == "task") {
      cfg.tasks.push_back(detail::read_task(s));
      require(names.insert(cfg.tasks.back().spec.name).second, ErrorKind::kConfig,
              where + "duplicate task name '" + cfg.tasks.back().spec.name + "'");
    } else {
      fail(ErrorKind::kConfig, where + "unknown section [" + s.name + "]");
    }
  }
  require(data, ErrorKind::kConfig, "missing [data] section");
  require(cfg.data.scenario || !cfg.tasks.empty(), ErrorKind::kConfig,
          "a CSV source needs at least one [task] section");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open config '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg = parse_run_config(text.str());
  cfg.base_dir = std::filesystem::path(path).parent_path();
  return cfg;
}

/// Market tasks of a run: the configured ones, or the scenario's defaults.
inline std::vector<TaskEntry> resolve_tasks(const RunConfig& cfg) {
  if (!cfg.tasks.empty()) return cfg.tasks;
  const ScenarioCase id = cfg.data.scenario->id;
  std::vector<TaskEntry> out;
  for (const auto& spec : scenario_tasks(id)) {
    TaskEntry t;
    t.spec = spec;
    switch (id) {
      case ScenarioCase::kOnlineArx:
      case ScenarioCase::kOnlineQuantile:
        t.mechanisms = {Mechanism::kOnline};
        break;
      case ScenarioCase::kMultiAgentArx:
        t.mechanisms = {Mechanism::kOos};
        t.target = "y" + spec.central_agent.substr(1);
        t.spec.train_rows = std::min<std::size_t>(cfg.data.scenario->rows / 2, spec.train_rows);
        break;
      default:
        t.mechanisms = {Mechanism::kBatch};
    }
    out.push_back(t);
  }
  return out;
}

/// Loads or generates the dataset named by the configuration.
inline Dataset resolve_dataset(const RunConfig& cfg) {
  if (cfg.data.scenario) return generate(*cfg.data.scenario).data;
  std::filesystem::path p(cfg.data.csv_path);
  if (p.is_relative()) p = cfg.base_dir / p;
  return ingest_csv(p.string(), cfg.data.schema);
}

}  // namespace regmarket

#endif  // REGMARKET_RUN_CONFIG_HPP_
