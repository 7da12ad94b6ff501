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


#ifndef REGMARKET_REPORT_IO_HPP_
#define REGMARKET_REPORT_IO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "regmarket/allocation_policies.hpp"
#include "regmarket/error.hpp"
#include "regmarket/market_engine.hpp"
#include "regmarket/timeseries_data.hpp"

namespace regmarket {

inline constexpr const char* kReportSchema = "regmarket.market-report";
inline constexpr int kReportVersion = 1;

namespace detail {

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json allocation_json(const AllocationVector& a) {
  nlohmann::json j;
  j["policy"] = to_string(a.policy);
  j["features"] = a.features;
  j["values"] = to_std(a.values);
  j["contributions"] = to_std(a.contributions);
  if (a.std_errors.size()) j["std_errors"] = to_std(a.std_errors);
  j["normalizer"] = a.normalizer;
  j["no_surplus"] = a.no_surplus;
  return j;
}

inline Eigen::VectorXd vector_of(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline AllocationVector allocation_from_json(const nlohmann::json& j) {
  AllocationVector a;
  a.policy = parse_policy(j.at("policy").get<std::string>());
  a.features = j.at("features").get<std::vector<std::string>>();
  a.values = vector_of(j.at("values"));
  a.contributions = vector_of(j.at("contributions"));
  if (j.contains("std_errors")) a.std_errors = vector_of(j.at("std_errors"));
  a.normalizer = j.at("normalizer").get<double>();
  a.no_surplus = j.at("no_surplus").get<bool>();
  return a;
}

inline LossSpec loss_from_json(const nlohmann::json& j) {
  LossSpec spec;
  spec.family = j.at("family") == "quadratic" ? LossFamily::kQuadratic : LossFamily::kSmoothQuantile;
  spec.tau = j.at("tau").get<double>();
  spec.alpha = j.at("alpha").get<double>();
  spec.form = j.at("derivative_variant") == "verbatim" ? DerivativeForm::kVerbatim
                                                        : DerivativeForm::kAnalytic;
  return spec;
}

}  // namespace detail

inline nlohmann::json loss_json(const LossSpec& spec) {
  return {{"family", to_string(spec.family)},
          {"tau", spec.tau},
          {"alpha", spec.alpha},
          {"derivative_variant", spec.form == DerivativeForm::kAnalytic ? "analytic" : "verbatim"}};
}

inline nlohmann::json audit_json(const AuditResult& a) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : a.checks)
    checks.push_back({{"name", c.name}, {"applicable", c.applicable}, {"passed", c.passed},
                      {"detail", c.detail}});
  return {{"passed", a.passed()}, {"shortfall", a.shortfall}, {"checks", checks}};
}

inline AuditResult audit_from_json(const nlohmann::json& j) {
  AuditResult a;
  a.shortfall = j.at("shortfall").get<double>();
  for (const auto& c : j.at("checks"))
    a.checks.push_back(AuditCheck{c.at("name"), c.at("applicable"), c.at("passed"), c.at("detail")});
  return a;
}

/// Full report document for one market run.
inline nlohmann::json report_json(const MarketReport& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j["mechanism"] = to_string(r.mechanism);
  j["central_agent"] = r.central_agent;
  j["target"] = r.target;
  j["loss"] = loss_json(r.loss);
  j["phi"] = r.phi;
  j["scale"] = r.scale;
  j["policy"] = to_string(r.policy);
  j["players"] = r.players;
  j["is_support"] = r.is_support;
  j["extended"] = r.extended;
  j["feature_owner"] = r.feature_owner;
  j["screened_out"] = r.screened_out;
  j["duplicate_features"] = r.duplicate_features;
  j["dummy_features"] = r.dummy_features;
  nlohmann::json losses = nlohmann::json::array();
  for (double l : r.table.losses) losses.push_back(detail::number_or_null(l));
  j["loss_table"] = losses;
  j["central_loss"] = r.central_loss;
  j["full_loss"] = r.full_loss;
  j["normalizer"] = r.normalizer;
  j["full_terms"] = r.full_terms;
  j["full_coefficients"] = r.full_coefficients;
  nlohmann::json allocations = nlohmann::json::object();
  for (const auto& [name, a] : r.allocations) allocations[name] = detail::allocation_json(a);
  j["allocations"] = allocations;
  j["allocation"] = detail::allocation_json(r.allocation);
  j["payout"] = r.payout;
  j["rows"] = r.rows;
  j["billed_steps"] = r.billed_steps;
  j["no_surplus_steps"] = r.no_surplus_steps;
  j["no_surplus"] = r.no_surplus;
  j["central_payment"] = r.central_payment;
  j["benchmark_payment"] = r.benchmark_payment;
  j["shortfall"] = r.shortfall;
  j["charge_steps"] = r.charge_steps;
  j["central_charges"] = r.central_charges;
  nlohmann::json ledger = nlohmann::json::array();
  for (const auto& e : r.ledger) ledger.push_back({e.step, e.time, e.payer, e.payee, e.feature, e.amount});
  j["ledger_columns"] = {"step", "time", "payer", "payee", "feature", "amount"};
  j["ledger"] = ledger;
  j["feature_totals"] = r.feature_totals;
  j["agent_totals"] = r.agent_totals;
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& p : r.trajectory)
    traj.push_back({{"step", p.step}, {"normalizer", p.normalizer}, {"central_loss", p.central_loss},
                    {"full_loss", p.full_loss}, {"shares", p.shares},
                    {"full_coefficients", p.full_coefficients}});
  j["trajectory"] = traj;
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : r.windows)
    windows.push_back({{"begin", w.begin}, {"end", w.end}, {"loss_without", w.loss_without},
                       {"loss_with", w.loss_with}});
  j["windows"] = windows;
  j["window_improved_fraction"] = r.window_improved_fraction;
  j["notes"] = r.notes;
  j["audit"] = audit_json(r.audit);
  return j;
}

inline MarketReport report_from_json(const nlohmann::json& j) {
  MarketReport r;
  try {
    r.task = j.at("task");
    r.mechanism = parse_mechanism(j.at("mechanism"));
    r.central_agent = j.at("central_agent");
    r.target = j.at("target");
    r.loss = detail::loss_from_json(j.at("loss"));
    r.phi = j.at("phi");
    r.scale = j.at("scale");
    r.policy = parse_policy(j.at("policy"));
    r.players = j.at("players").get<std::vector<std::string>>();
    r.is_support = j.at("is_support").get<std::vector<bool>>();
    r.extended = j.at("extended");
    r.feature_owner = j.at("feature_owner").get<std::map<std::string, AgentId>>();
    r.screened_out = j.at("screened_out").get<std::vector<std::string>>();
    r.duplicate_features = j.at("duplicate_features").get<std::vector<std::pair<std::string, std::string>>>();
    r.dummy_features = j.at("dummy_features").get<std::vector<std::string>>();
    r.table.players = r.players;
    r.table.is_support = r.is_support;
    r.table.extended = r.extended;
    for (const auto& l : j.at("loss_table")) r.table.losses.push_back(detail::number_from(l));
    r.central_loss = j.at("central_loss");
    r.full_loss = j.at("full_loss");
    r.normalizer = j.at("normalizer");
    r.full_terms = j.at("full_terms").get<std::vector<std::string>>();
    r.full_coefficients = j.at("full_coefficients").get<std::vector<double>>();
    for (const auto& [name, a] : j.at("allocations").items())
      r.allocations[name] = detail::allocation_from_json(a);
    r.allocation = detail::allocation_from_json(j.at("allocation"));
    r.payout = j.at("payout").get<std::vector<double>>();
    r.rows = j.at("rows");
    r.billed_steps = j.at("billed_steps");
    r.no_surplus_steps = j.at("no_surplus_steps");
    r.no_surplus = j.at("no_surplus");
    r.central_payment = j.at("central_payment");
    r.benchmark_payment = j.at("benchmark_payment");
    r.shortfall = j.at("shortfall");
    r.charge_steps = j.at("charge_steps").get<std::vector<std::size_t>>();
    r.central_charges = j.at("central_charges").get<std::vector<double>>();
    for (const auto& e : j.at("ledger"))
      r.ledger.push_back(LedgerEntry{e.at(0).get<std::size_t>(), e.at(1), e.at(2), e.at(3),
                                     e.at(4), e.at(5).get<double>(), r.mechanism});
    r.feature_totals = j.at("feature_totals").get<std::map<std::string, double>>();
    r.agent_totals = j.at("agent_totals").get<std::map<AgentId, double>>();
    for (const auto& p : j.at("trajectory"))
      r.trajectory.push_back(TrajectoryPoint{p.at("step"), p.at("normalizer"), p.at("central_loss"),
                                             p.at("full_loss"), p.at("shares"),
                                             p.at("full_coefficients")});
    for (const auto& w : j.at("windows"))
      r.windows.push_back(WindowMetric{w.at("begin"), w.at("end"), w.at("loss_without"), w.at("loss_with")});
    r.window_improved_fraction = j.at("window_improved_fraction");
    r.notes = j.at("notes").get<std::vector<std::string>>();
    r.audit = audit_from_json(j.at("audit"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("malformed market report: ") + e.what());
  }
  return r;
}

/// {schema, version, reports: [...]}.
inline nlohmann::json reports_document(const std::vector<MarketReport>& reports) {
  nlohmann::json doc;
  doc["schema"] = kReportSchema;
  doc["version"] = kReportVersion;
  doc["reports"] = nlohmann::json::array();
  for (const auto& r : reports) doc["reports"].push_back(report_json(r));
  return doc;
}

inline std::vector<MarketReport> read_reports(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, "'" + path + "' is not valid JSON: " + e.what());
  }
  require(doc.is_object() && doc.value("schema", "") == kReportSchema, ErrorKind::kParse,
          "'" + path + "' is not a market report document");
  require(doc.value("version", 0) == kReportVersion, ErrorKind::kParse,
          "unsupported report version in '" + path + "'");
  std::vector<MarketReport> out;
  for (const auto& r : doc.at("reports")) out.push_back(report_from_json(r));
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kIo, "cannot write '" + path + "'");
  out << text;
  require(out.good(), ErrorKind::kIo, "failed writing '" + path + "'");
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Tidy CSV outputs.

namespace detail {

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace detail

/// task,market,step,time,payer,payee,feature,amount
inline std::string ledger_csv(const std::vector<MarketReport>& reports) {
  std::ostringstream out;
  out << "task,market,step,time,payer,payee,feature,amount\n";
  for (const auto& r : reports)
    for (const auto& e : r.ledger)
      out << detail::csv_cell(r.task) << ',' << to_string(e.market) << ',' << e.step << ','
          << detail::csv_cell(e.time) << ',' << detail::csv_cell(e.payer) << ','
          << detail::csv_cell(e.payee) << ',' << detail::csv_cell(e.feature) << ','
          << detail::format_number(e.amount) << '\n';
  return out.str();
}

struct LedgerRow {
  std::string task;
  LedgerEntry entry;
};

/// Parses ledger_csv output.
inline std::vector<LedgerRow> parse_ledger_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  require(line == "task,market,step,time,payer,payee,feature,amount", ErrorKind::kSchema,
          "not a ledger CSV");
  std::vector<LedgerRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    require(cells.size() == 8, ErrorKind::kParse, "ledger line " + std::to_string(line_no) + ": expected 8 cells");
    const auto step = detail::parse_integer(cells[2]);
    const auto amount = detail::parse_double(cells[7]);
    require(step && *step >= 0 && amount, ErrorKind::kParse,
            "ledger line " + std::to_string(line_no) + ": bad number");
    rows.push_back(LedgerRow{cells[0], LedgerEntry{static_cast<std::size_t>(*step), cells[3], cells[4],
                                                   cells[5], cells[6], *amount,
                                                   parse_mechanism(cells[1])}});
  }
  return rows;
}

/// Long format: task,step,agent,feature,amount,cumulative (per feature).
inline std::string cumulative_revenues_csv(const std::vector<MarketReport>& reports) {
  std::ostringstream out;
  out << "task,step,agent,feature,amount,cumulative\n";
  for (const auto& r : reports) {
    std::map<std::string, double> running;
    for (const auto& e : r.ledger) {
      running[e.feature] += e.amount;
      out << detail::csv_cell(r.task) << ',' << e.step << ',' << detail::csv_cell(e.payee) << ','
          << detail::csv_cell(e.feature) << ',' << detail::format_number(e.amount) << ','
          << detail::format_number(running[e.feature]) << '\n';
    }
  }
  return out.str();
}

/// task,coalition,mask,loss
inline std::string loss_table_csv(const std::vector<MarketReport>& reports) {
  std::ostringstream out;
  out << "task,coalition,mask,loss\n";
  for (const auto& r : reports)
    for (Mask m = 0; m < r.table.losses.size(); ++m)
      if (r.table.has(m))
        out << detail::csv_cell(r.task) << ',' << detail::csv_cell(r.table.label(m)) << ',' << m
            << ',' << detail::format_number(r.table.losses[m]) << '\n';
  return out.str();
}

/// task,step,series,value with series normalizer, central_loss, full_loss,
/// share:<feature> and coef:<term>.
inline std::string trajectories_csv(const std::vector<MarketReport>& reports) {
  std::ostringstream out;
  out << "task,step,series,value\n";
  for (const auto& r : reports)
    for (const auto& p : r.trajectory) {
      auto row = [&](const std::string& series, double v) {
        out << detail::csv_cell(r.task) << ',' << p.step << ',' << detail::csv_cell(series) << ','
            << detail::format_number(v) << '\n';
      };
      row("normalizer", p.normalizer);
      row("central_loss", p.central_loss);
      row("full_loss", p.full_loss);
      for (std::size_t k = 0; k < p.shares.size() && k < r.allocation.features.size(); ++k)
        row("share:" + r.allocation.features[k], p.shares[k]);
      for (std::size_t k = 0; k < p.full_coefficients.size() && k < r.full_terms.size(); ++k)
        row("coef:" + r.full_terms[k], p.full_coefficients[k]);
    }
  return out.str();
}

/// task,begin,end,loss_without,loss_with
inline std::string windows_csv(const std::vector<MarketReport>& reports) {
  std::ostringstream out;
  out << "task,begin,end,loss_without,loss_with\n";
  for (const auto& r : reports)
    for (const auto& w : r.windows)
      out << detail::csv_cell(r.task) << ',' << w.begin << ',' << w.end << ','
          << detail::format_number(w.loss_without) << ',' << detail::format_number(w.loss_with) << '\n';
  return out.str();
}

inline nlohmann::json audit_document(const std::vector<MarketReport>& reports) {
  nlohmann::json doc;
  doc["schema"] = "regmarket.audit";
  doc["version"] = 1;
  bool all = true;
  doc["reports"] = nlohmann::json::array();
  for (const auto& r : reports) {
    auto a = audit_json(r.audit);
    a["task"] = r.task;
    a["mechanism"] = to_string(r.mechanism);
    all = all && r.audit.passed();
    doc["reports"].push_back(a);
  }
  doc["passed"] = all;
  return doc;
}

// ---------------------------------------------------------------------------
// Text tables.

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string percent(double v) { return fixed(100.0 * v, 2) + "%"; }

// Left-aligned first column, right-aligned others.
inline std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      if (c) line += "  ";
      line += c == 0 ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace detail

enum class ReportView { kSummary, kPerAgent, kPerFeature };

/// Column-aligned tables: percentages for allocations, two decimals for money.
inline std::string format_reports(const std::vector<MarketReport>& reports, ReportView view) {
  std::vector<std::vector<std::string>> rows;
  switch (view) {
    case ReportView::kSummary:
      rows.push_back({"task", "market", "central", "loss_without", "loss_with", "delta_loss",
                      "central_pays", "support_receives", "shortfall", "audit"});
      for (const auto& r : reports) {
        double received = 0.0;
        for (const auto& [f, v] : r.feature_totals) received += v;
        rows.push_back({r.task, to_string(r.mechanism), r.central_agent,
                        detail::format_number(r.central_loss), detail::format_number(r.full_loss),
                        detail::format_number(r.central_loss - r.full_loss),
                        detail::fixed(r.central_payment, 2), detail::fixed(received, 2),
                        detail::fixed(r.shortfall, 2), r.audit.passed() ? "pass" : "FAIL"});
      }
      break;
    case ReportView::kPerAgent: {
      rows.push_back({"task", "market", "agent", "revenue"});
      std::map<AgentId, double> all;
      for (const auto& r : reports)
        for (const auto& [a, v] : r.agent_totals) {
          rows.push_back({r.task, to_string(r.mechanism), a, detail::fixed(v, 2)});
          all[a] += v;
        }
      if (reports.size() > 1)
        for (const auto& [a, v] : all) rows.push_back({"(all)", "", a, detail::fixed(v, 2)});
      break;
    }
    case ReportView::kPerFeature:
      rows.push_back({"task", "market", "feature", "owner", "allocation", "payout", "payment"});
      for (const auto& r : reports)
        for (std::size_t k = 0; k < r.allocation.features.size(); ++k) {
          const auto& f = r.allocation.features[k];
          rows.push_back({r.task, to_string(r.mechanism), f, r.feature_owner.count(f) ? r.feature_owner.at(f) : "",
                          detail::percent(r.allocation.values(static_cast<Eigen::Index>(k))),
                          k < r.payout.size() ? detail::percent(r.payout[k]) : "",
                          detail::fixed(r.feature_totals.count(f) ? r.feature_totals.at(f) : 0.0, 2)});
        }
      break;
  }
  return detail::table(rows);
}

}  // namespace regmarket

#endif  // REGMARKET_REPORT_IO_HPP_
