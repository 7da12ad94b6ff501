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

#ifndef REGMARKET_TIMESERIES_DATA_HPP_
#define REGMARKET_TIMESERIES_DATA_HPP_

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "regmarket/error.hpp"

namespace regmarket {

using AgentId = std::string;

// Column produced by lagging `source` by `delta` steps.
struct LagOrigin {
  std::string source;
  int delta = 0;

  friend bool operator==(const LagOrigin&, const LagOrigin&) = default;
};

inline std::string lag_column_name(const std::string& source, int delta) {
  return source + "_lag" + std::to_string(delta);
}

/// Time-indexed target series plus named feature series, each feature owned
/// by exactly one agent. Immutable once constructed; algorithms only use row
/// order, timestamps are carried as metadata.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<std::string> timestamps, std::string target_name,
          AgentId target_owner, Eigen::VectorXd target,
          std::vector<std::string> feature_names, Eigen::MatrixXd features,
          std::map<std::string, AgentId> ownership,
          std::map<std::string, LagOrigin> lag_origins = {})
      : timestamps_(std::move(timestamps)),
        target_name_(std::move(target_name)),
        target_owner_(std::move(target_owner)),
        target_(std::move(target)),
        feature_names_(std::move(feature_names)),
        features_(std::move(features)),
        ownership_(std::move(ownership)),
        lag_origins_(std::move(lag_origins)) {
    validate();
  }

  std::size_t rows() const { return static_cast<std::size_t>(target_.size()); }
  std::size_t num_features() const { return feature_names_.size(); }

  const std::vector<std::string>& timestamps() const { return timestamps_; }
  const std::string& target_name() const { return target_name_; }
  const AgentId& target_owner() const { return target_owner_; }
  const Eigen::VectorXd& target() const { return target_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const std::map<std::string, AgentId>& ownership() const { return ownership_; }
  const std::map<std::string, LagOrigin>& lag_origins() const { return lag_origins_; }

  bool has_feature(const std::string& name) const {
    return std::find(feature_names_.begin(), feature_names_.end(), name) !=
           feature_names_.end();
  }

  std::size_t feature_index(const std::string& name) const {
    auto it = std::find(feature_names_.begin(), feature_names_.end(), name);
    require(it != feature_names_.end(), ErrorKind::kLookup,
            "unknown feature '" + name + "'");
    return static_cast<std::size_t>(it - feature_names_.begin());
  }

  Eigen::VectorXd feature(const std::string& name) const {
    return features_.col(static_cast<Eigen::Index>(feature_index(name)));
  }

  // Target or feature series by name.
  Eigen::VectorXd series(const std::string& name) const {
    if (name == target_name_) return target_;
    return feature(name);
  }

  const AgentId& owner(const std::string& name) const {
    if (name == target_name_) return target_owner_;
    auto it = ownership_.find(name);
    require(it != ownership_.end(), ErrorKind::kLookup,
            "no owner recorded for '" + name + "'");
    return it->second;
  }

  // Raw series a column derives from (itself unless it is a lag column).
  const std::string& source_of(const std::string& column) const {
    auto it = lag_origins_.find(column);
    return it == lag_origins_.end() ? column : it->second.source;
  }

  std::optional<LagOrigin> lag_origin(const std::string& column) const {
    auto it = lag_origins_.find(column);
    if (it == lag_origins_.end()) return std::nullopt;
    return it->second;
  }

 private:
  void validate() const {
    const auto t = target_.size();
    require(t >= 1, ErrorKind::kInsufficientData, "dataset needs at least one row");
    require(static_cast<Eigen::Index>(timestamps_.size()) == t, ErrorKind::kSchema,
            "timestamp count differs from target length");
    require(features_.rows() == t || (features_.size() == 0 && feature_names_.empty()),
            ErrorKind::kSchema, "feature rows differ from target length");
    require(static_cast<std::size_t>(features_.cols()) == feature_names_.size(),
            ErrorKind::kSchema, "feature column count differs from names");
    std::set<std::string> seen;
    for (const auto& name : feature_names_) {
      require(name != target_name_, ErrorKind::kSchema,
              "feature '" + name + "' shadows the target");
      require(seen.insert(name).second, ErrorKind::kSchema,
              "duplicate feature '" + name + "'");
      require(ownership_.count(name) == 1, ErrorKind::kLookup,
              "feature '" + name + "' has no owner");
    }
    require(target_.allFinite(), ErrorKind::kNumeric, "target has non-finite values");
    require(features_.allFinite(), ErrorKind::kNumeric,
            "features have non-finite values");
  }

  std::vector<std::string> timestamps_;
  std::string target_name_;
  AgentId target_owner_;
  Eigen::VectorXd target_;
  std::vector<std::string> feature_names_;
  Eigen::MatrixXd features_;
  std::map<std::string, AgentId> ownership_;
  std::map<std::string, LagOrigin> lag_origins_;
};

// ---------------------------------------------------------------------------
// CSV ingestion.

struct CsvSchema {
  std::string timestamp_column = "ts";
  std::string target_column;
  // Empty means every column other than timestamp and target.
  std::vector<std::string> feature_columns;
  // Column -> nominal capacity; values are divided by it and must land in [0,1].
  std::map<std::string, double> capacity;
  std::map<std::string, AgentId> ownership;
  AgentId target_owner;
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::optional<double> parse_double(const std::string& text) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = text.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::optional<long long> parse_integer(const std::string& text) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    return std::nullopt;
  return value;
}

// Integer indices compare numerically, anything else (ISO-8601) lexically.
inline void check_increasing(const std::vector<std::string>& ts,
                             const std::vector<std::size_t>& lines) {
  bool all_integer = std::all_of(ts.begin(), ts.end(), [](const std::string& s) {
    return parse_integer(s).has_value();
  });
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const bool increasing = all_integer
                                ? *parse_integer(ts[i - 1]) < *parse_integer(ts[i])
                                : ts[i - 1] < ts[i];
    require(increasing, ErrorKind::kOrdering,
            "timestamp '" + ts[i] + "' on line " + std::to_string(lines[i]) +
                " does not follow '" + ts[i - 1] + "'");
  }
}

inline std::string format_number(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", value);
  return buffer;
}

}  // namespace detail

/// Reads a headered numeric CSV. Missing or non-numeric cells are rejected
/// with their line number; nothing is imputed.
inline Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open '" + path + "'");
  require(!schema.target_column.empty(), ErrorKind::kSchema, "schema has no target column");

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    header = detail::split_csv_line(line);
    break;
  }
  require(!header.empty(), ErrorKind::kSchema, "'" + path + "' has no header row");

  auto column_of = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), ErrorKind::kSchema,
            "column '" + name + "' missing from '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ts_col = column_of(schema.timestamp_column);
  const std::size_t y_col = column_of(schema.target_column);
  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty()) {
    for (const auto& h : header)
      if (h != schema.timestamp_column && h != schema.target_column)
        feature_names.push_back(h);
  }
  std::vector<std::size_t> feature_cols;
  for (const auto& f : feature_names) feature_cols.push_back(column_of(f));

  auto scale_of = [&](const std::string& name) {
    auto it = schema.capacity.find(name);
    if (it == schema.capacity.end()) return std::optional<double>{};
    require(it->second > 0.0, ErrorKind::kSchema,
            "capacity for '" + name + "' must be positive");
    return std::optional<double>{it->second};
  };
  const auto y_scale = scale_of(schema.target_column);
  std::vector<std::optional<double>> f_scale;
  for (const auto& f : feature_names) f_scale.push_back(scale_of(f));

  std::vector<std::string> timestamps;
  std::vector<std::size_t> lines;
  std::vector<double> y;
  std::vector<std::vector<double>> x(feature_names.size());

  auto read_cell = [&](const std::vector<std::string>& cells, std::size_t col,
                       const std::string& name, const std::optional<double>& scale) {
    require(col < cells.size(), ErrorKind::kParse,
            "line " + std::to_string(line_no) + ": missing value for '" + name + "'");
    auto value = detail::parse_double(cells[col]);
    require(value.has_value(), ErrorKind::kParse,
            "line " + std::to_string(line_no) + ": non-numeric value '" + cells[col] +
                "' for '" + name + "'");
    double v = *value;
    if (scale) {
      v /= *scale;
      require(v >= 0.0 && v <= 1.0, ErrorKind::kParse,
              "line " + std::to_string(line_no) + ": '" + name +
                  "' outside [0, capacity] after normalization");
    }
    return v;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(ts_col < cells.size() && !cells[ts_col].empty(), ErrorKind::kParse,
            "line " + std::to_string(line_no) + ": missing timestamp");
    timestamps.push_back(cells[ts_col]);
    lines.push_back(line_no);
    y.push_back(read_cell(cells, y_col, schema.target_column, y_scale));
    for (std::size_t j = 0; j < feature_names.size(); ++j)
      x[j].push_back(read_cell(cells, feature_cols[j], feature_names[j], f_scale[j]));
  }
  require(!y.empty(), ErrorKind::kInsufficientData, "'" + path + "' has no data rows");
  detail::check_increasing(timestamps, lines);

  const auto t = static_cast<Eigen::Index>(y.size());
  Eigen::VectorXd target = Eigen::Map<Eigen::VectorXd>(y.data(), t);
  Eigen::MatrixXd features(t, static_cast<Eigen::Index>(feature_names.size()));
  for (std::size_t j = 0; j < feature_names.size(); ++j)
    features.col(static_cast<Eigen::Index>(j)) = Eigen::Map<Eigen::VectorXd>(x[j].data(), t);

  std::map<std::string, AgentId> ownership;
  for (const auto& f : feature_names) {
    auto it = schema.ownership.find(f);
    require(it != schema.ownership.end(), ErrorKind::kLookup,
            "feature '" + f + "' has no owner in the run configuration");
    ownership[f] = it->second;
  }
  return Dataset(std::move(timestamps), schema.target_column, schema.target_owner,
                 std::move(target), std::move(feature_names), std::move(features),
                 std::move(ownership));
}

/// Writes `ts,<target>,<features...>` with 12 significant digits.
inline void write_csv(const Dataset& data, const std::string& path,
                      const std::string& timestamp_column = "ts") {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write '" + path + "'");
  out << timestamp_column << ',' << data.target_name();
  for (const auto& f : data.feature_names()) out << ',' << f;
  out << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    out << data.timestamps()[r] << ',' << detail::format_number(data.target()(i));
    for (Eigen::Index j = 0; j < data.features().cols(); ++j)
      out << ',' << detail::format_number(data.features()(i, j));
    out << '\n';
  }
  require(out.good(), ErrorKind::kIo, "failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Lags and column selection.

/// Appends `<series>_lag<d>` columns and drops the first max(d) rows so no
/// row references unavailable history. Lag columns inherit the source owner.
inline Dataset make_lags(const Dataset& data,
                         const std::map<std::string, std::vector<int>>& lag_spec) {
  int max_lag = 0;
  for (const auto& [name, lags] : lag_spec) {
    require(name == data.target_name() || data.has_feature(name), ErrorKind::kLookup,
            "cannot lag unknown series '" + name + "'");
    for (int d : lags) {
      require(d >= 1, ErrorKind::kParameter,
              "lag for '" + name + "' must be >= 1, got " + std::to_string(d));
      max_lag = std::max(max_lag, d);
    }
  }
  if (max_lag == 0) return data;
  require(data.rows() > static_cast<std::size_t>(max_lag), ErrorKind::kInsufficientData,
          "need more than " + std::to_string(max_lag) + " rows to build lags");

  const auto t_new = static_cast<Eigen::Index>(data.rows()) - max_lag;
  std::vector<std::string> names = data.feature_names();
  auto ownership = data.ownership();
  auto origins = data.lag_origins();
  std::vector<Eigen::VectorXd> extra;
  for (const auto& [name, lags] : lag_spec) {
    std::set<int> unique(lags.begin(), lags.end());
    const Eigen::VectorXd series = data.series(name);
    const std::string& source = data.source_of(name);
    const int base_delta = origins.count(name) ? origins.at(name).delta : 0;
    for (int d : unique) {
      const std::string column = lag_column_name(name, d);
      require(!data.has_feature(column) && column != data.target_name(),
              ErrorKind::kParameter, "column '" + column + "' already exists");
      names.push_back(column);
      ownership[column] = data.owner(name);
      origins[column] = LagOrigin{source, base_delta + d};
      extra.push_back(series.segment(max_lag - d, t_new));
    }
  }

  Eigen::MatrixXd features(t_new, static_cast<Eigen::Index>(names.size()));
  const auto k_old = data.features().cols();
  if (k_old > 0) features.leftCols(k_old) = data.features().bottomRows(t_new);
  for (std::size_t j = 0; j < extra.size(); ++j)
    features.col(k_old + static_cast<Eigen::Index>(j)) = extra[j];

  std::vector<std::string> ts(data.timestamps().begin() + max_lag, data.timestamps().end());
  return Dataset(std::move(ts), data.target_name(), data.target_owner(),
                 data.target().tail(t_new), std::move(names), std::move(features),
                 std::move(ownership), std::move(origins));
}

/// Keeps only the listed feature columns, in the given order.
inline Dataset select_features(const Dataset& data, const std::vector<std::string>& keep) {
  Eigen::MatrixXd features(static_cast<Eigen::Index>(data.rows()),
                           static_cast<Eigen::Index>(keep.size()));
  std::map<std::string, AgentId> ownership;
  std::map<std::string, LagOrigin> origins;
  for (std::size_t j = 0; j < keep.size(); ++j) {
    features.col(static_cast<Eigen::Index>(j)) = data.feature(keep[j]);
    ownership[keep[j]] = data.owner(keep[j]);
    if (auto origin = data.lag_origin(keep[j])) origins[keep[j]] = *origin;
  }
  return Dataset(data.timestamps(), data.target_name(), data.target_owner(), data.target(),
                 keep, std::move(features), std::move(ownership), std::move(origins));
}

/// Swaps the target with feature `series`: the old target becomes a feature
/// owned by its previous owner. Used when every agent takes a turn as buyer.
inline Dataset with_target(const Dataset& data, const std::string& series) {
  if (series == data.target_name()) return data;
  require(data.lag_origins().empty(), ErrorKind::kParameter,
          "retarget before building lags");
  const std::size_t idx = data.feature_index(series);
  std::vector<std::string> names = data.feature_names();
  Eigen::MatrixXd features = data.features();
  names[idx] = data.target_name();
  features.col(static_cast<Eigen::Index>(idx)) = data.target();
  auto ownership = data.ownership();
  const AgentId new_owner = ownership.at(series);
  ownership.erase(series);
  ownership[data.target_name()] = data.target_owner();
  return Dataset(data.timestamps(), series, new_owner, data.feature(series), std::move(names),
                 std::move(features), std::move(ownership));
}

/// Contiguous row range [begin, begin + count).
inline Dataset slice_rows(const Dataset& data, std::size_t begin, std::size_t count) {
  require(begin + count <= data.rows() && count >= 1, ErrorKind::kParameter,
          "row slice out of range");
  const auto b = static_cast<Eigen::Index>(begin);
  const auto n = static_cast<Eigen::Index>(count);
  std::vector<std::string> ts(data.timestamps().begin() + b, data.timestamps().begin() + b + n);
  return Dataset(std::move(ts), data.target_name(), data.target_owner(),
                 data.target().segment(b, n), data.feature_names(),
                 data.features().middleRows(b, n), data.ownership(), data.lag_origins());
}

// ---------------------------------------------------------------------------
// Augmented designs.

enum class TermKind { kIntercept, kRaw, kLag, kMonomial };

struct TermDescriptor {
  TermKind kind = TermKind::kIntercept;
  // (column, power) pairs; empty for the intercept.
  std::vector<std::pair<std::string, int>> factors;
  // Raw series the term depends on (lag columns resolve to their source).
  std::set<std::string> support;
  std::set<AgentId> owners;
  std::optional<LagOrigin> lag;
  std::string name = "1";

  int degree() const {
    int d = 0;
    for (const auto& f : factors) d += f.second;
    return d;
  }
};

inline std::string term_name(const std::vector<std::pair<std::string, int>>& factors) {
  if (factors.empty()) return "1";
  std::string out;
  for (const auto& [column, power] : factors) {
    if (!out.empty()) out += '*';
    out += column;
    if (power > 1) out += '^' + std::to_string(power);
  }
  return out;
}

inline TermDescriptor make_term(const Dataset& data,
                                std::vector<std::pair<std::string, int>> factors) {
  TermDescriptor term;
  term.name = term_name(factors);
  if (factors.empty()) return term;
  for (const auto& [column, power] : factors) {
    require(power >= 1, ErrorKind::kParameter, "monomial powers must be >= 1");
    term.support.insert(data.source_of(column));
    term.owners.insert(data.owner(column));
  }
  if (factors.size() == 1 && factors.front().second == 1) {
    term.lag = data.lag_origin(factors.front().first);
    term.kind = term.lag ? TermKind::kLag : TermKind::kRaw;
  } else {
    term.kind = TermKind::kMonomial;
  }
  term.factors = std::move(factors);
  return term;
}

/// Evaluates a term from the raw columns of `data`.
inline Eigen::VectorXd evaluate_term(const TermDescriptor& term, const Dataset& data) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(data.rows()));
  for (const auto& [column, power] : term.factors) {
    const Eigen::VectorXd x = data.feature(column);
    for (int p = 0; p < power; ++p) v.array() *= x.array();
  }
  return v;
}

/// T x n matrix of term evaluations; term 0 is always the intercept.
struct AugmentedDesign {
  std::vector<TermDescriptor> terms;
  Eigen::MatrixXd values;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return terms.size(); }

  std::vector<std::string> term_names() const {
    std::vector<std::string> names;
    for (const auto& t : terms) names.push_back(t.name);
    return names;
  }

  std::set<std::string> support_features() const {
    std::set<std::string> all;
    for (const auto& t : terms) all.insert(t.support.begin(), t.support.end());
    return all;
  }
};

inline AugmentedDesign build_design(const Dataset& data, std::vector<TermDescriptor> terms) {
  require(!terms.empty() && terms.front().kind == TermKind::kIntercept,
          ErrorKind::kParameter, "design must start with the intercept");
  AugmentedDesign design;
  design.values.resize(static_cast<Eigen::Index>(data.rows()),
                       static_cast<Eigen::Index>(terms.size()));
  for (std::size_t j = 0; j < terms.size(); ++j)
    design.values.col(static_cast<Eigen::Index>(j)) = evaluate_term(terms[j], data);
  design.terms = std::move(terms);
  return design;
}

/// Intercept plus every monomial of total degree <= `degree` over the
/// dataset's feature columns, graded by degree then lexicographic in column
/// order. Without interactions only pure powers are kept.
inline AugmentedDesign polynomial_expand(const Dataset& data, int degree,
                                         bool include_interactions) {
  require(degree >= 1, ErrorKind::kParameter,
          "polynomial degree must be >= 1, got " + std::to_string(degree));
  const auto& cols = data.feature_names();
  const std::size_t k = cols.size();
  std::vector<TermDescriptor> terms{TermDescriptor{}};

  for (int d = 1; d <= degree; ++d) {
    if (k == 0) break;
    // Non-decreasing index sequences of length d.
    std::vector<std::size_t> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      std::vector<std::pair<std::string, int>> factors;
      for (std::size_t i : idx) {
        if (!factors.empty() && factors.back().first == cols[i])
          ++factors.back().second;
        else
          factors.emplace_back(cols[i], 1);
      }
      if (include_interactions || factors.size() == 1)
        terms.push_back(make_term(data, std::move(factors)));
      // Advance.
      int pos = d - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == k - 1) --pos;
      if (pos < 0) break;
      const std::size_t next = idx[static_cast<std::size_t>(pos)] + 1;
      for (int p = pos; p < d; ++p) idx[static_cast<std::size_t>(p)] = next;
    }
  }
  return build_design(data, std::move(terms));
}

/// Restricts a design to the named terms (intercept always kept, order preserved).
inline AugmentedDesign filter_terms(const AugmentedDesign& design,
                                    const std::vector<std::string>& keep) {
  std::set<std::string> wanted(keep.begin(), keep.end());
  for (const auto& name : wanted) {
    bool found = std::any_of(design.terms.begin(), design.terms.end(),
                             [&](const TermDescriptor& t) { return t.name == name; });
    require(found, ErrorKind::kLookup, "term '" + name + "' is not in the design");
  }
  std::vector<Eigen::Index> columns;
  for (std::size_t j = 0; j < design.terms.size(); ++j)
    if (j == 0 || wanted.count(design.terms[j].name)) columns.push_back(static_cast<Eigen::Index>(j));
  AugmentedDesign out;
  for (auto c : columns) out.terms.push_back(design.terms[static_cast<std::size_t>(c)]);
  out.values = design.values(Eigen::all, columns);
  return out;
}

struct Coalition {
  std::set<std::string> members;

  friend bool operator==(const Coalition&, const Coalition&) = default;
  friend auto operator<=>(const Coalition&, const Coalition&) = default;
};

/// Indices of the terms whose support lies inside `allowed`.
inline std::vector<Eigen::Index> coalition_columns(const AugmentedDesign& design,
                                                   const std::set<std::string>& allowed) {
  std::vector<Eigen::Index> columns;
  for (std::size_t j = 0; j < design.terms.size(); ++j) {
    const auto& support = design.terms[j].support;
    if (std::includes(allowed.begin(), allowed.end(), support.begin(), support.end()))
      columns.push_back(static_cast<Eigen::Index>(j));
  }
  return columns;
}

inline AugmentedDesign sub_design(const AugmentedDesign& design,
                                  const std::vector<Eigen::Index>& columns) {
  AugmentedDesign out;
  for (auto c : columns) out.terms.push_back(design.terms[static_cast<std::size_t>(c)]);
  out.values = design.values(Eigen::all, columns);
  return out;
}

/// Sub-design with exactly the terms whose support is within
/// central ∪ coalition. Interaction terms therefore enter only once every
/// feature they touch is present.
inline AugmentedDesign coalition_design(const AugmentedDesign& design,
                                        const std::set<std::string>& central,
                                        const Coalition& coalition) {
  const auto known = design.support_features();
  std::set<std::string> allowed = central;
  for (const auto& m : coalition.members) {
    require(known.count(m) == 1, ErrorKind::kLookup,
            "coalition member '" + m + "' is not a design feature");
    require(central.count(m) == 0, ErrorKind::kParameter,
            "coalition member '" + m + "' belongs to the central agent");
    allowed.insert(m);
  }
  return sub_design(design, coalition_columns(design, allowed));
}

}  // namespace regmarket

#endif  // REGMARKET_TIMESERIES_DATA_HPP_
