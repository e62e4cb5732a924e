#pragma once

// File formats. All CSVs are UTF-8, comma-separated, decimal-point floats,
// no locale formatting, '\n' line endings. Doubles are written with 17
// significant digits so a file round-trip reproduces in-process numbers
// exactly.
//
//   dataset CSV:  id,period,treated,outcome,x1,...,xk
//                 period: 0 = before, 1 = after; treated: 0/1
//   matched CSV:  dataset columns + pair_id,group,round
//   balance CSV:  comparison,covariate,delta,balanced
//   results CSV:  scheme,scenario,matched_size,mean_estimate,sd,bias_ratio,
//                 rmse,coverage,completed

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rcsmatch/balance.hpp"
#include "rcsmatch/core.hpp"
#include "rcsmatch/errors.hpp"
#include "rcsmatch/estimators.hpp"
#include "rcsmatch/simulator.hpp"

namespace rcsmatch {

inline std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

inline double parse_double(const std::string& text, const std::string& where) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw CsvError(where + ": expected a number, got '" + text + "'");
  }
  return value;
}

inline std::int64_t parse_int(const std::string& text, const std::string& where) {
  std::int64_t value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw CsvError(where + ": expected an integer, got '" + text + "'");
  }
  return value;
}

inline int parse_binary(const std::string& text, const std::string& where) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw CsvError(where + ": expected 0 or 1, got '" + text + "'");
}

inline std::string location(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

}  // namespace detail

struct LoadedDataset {
  std::vector<Observation> observations;  // in file order
  std::size_t k = 0;
  bool annotated = false;  // file carried pair_id,group,round columns
};

// Strict reader for the dataset schema; also accepts matched CSVs (the three
// annotation columns are validated but not retained).
inline LoadedDataset read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw CsvError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);

  const std::vector<std::string> prefix = {"id", "period", "treated", "outcome"};
  if (header.size() < prefix.size() + 1) {
    throw CsvError(path + ":1: header must be id,period,treated,outcome,x1,...");
  }
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (header[i] != prefix[i]) {
      throw CsvError(path + ":1: expected column '" + prefix[i] + "', got '" +
                     header[i] + "'");
    }
  }
  std::size_t k = 0;
  std::size_t col = prefix.size();
  while (col < header.size() && header[col] == "x" + std::to_string(k + 1)) {
    ++k;
    ++col;
  }
  if (k == 0) throw CsvError(path + ":1: expected covariate column 'x1'");
  bool annotated = false;
  if (col < header.size()) {
    const std::vector<std::string> annotation = {"pair_id", "group", "round"};
    if (header.size() - col != annotation.size()) {
      throw CsvError(path + ":1: unexpected column '" + header[col] + "'");
    }
    for (std::size_t i = 0; i < annotation.size(); ++i) {
      if (header[col + i] != annotation[i]) {
        throw CsvError(path + ":1: unexpected column '" + header[col + i] + "'");
      }
    }
    annotated = true;
  }

  LoadedDataset dataset;
  dataset.k = k;
  dataset.annotated = annotated;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw CsvError(detail::location(path, line_no) + ": expected " +
                     std::to_string(header.size()) + " fields, got " +
                     std::to_string(fields.size()));
    }
    const std::string where = detail::location(path, line_no);
    Observation obs;
    obs.id = detail::parse_int(fields[0], where + ": column 'id'");
    obs.period = detail::parse_binary(fields[1], where + ": column 'period'") == 0
                     ? Period::before
                     : Period::after;
    obs.treated = detail::parse_binary(fields[2], where + ": column 'treated'") == 1;
    obs.outcome = detail::parse_double(fields[3], where + ": column 'outcome'");
    if (!std::isfinite(obs.outcome)) {
      throw CsvError(where + ": column 'outcome': non-finite value");
    }
    obs.covariates.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::string column = "x" + std::to_string(j + 1);
      const double x =
          detail::parse_double(fields[4 + j], where + ": column '" + column + "'");
      if (!std::isfinite(x)) {
        throw CsvError(where + ": column '" + column + "': non-finite value");
      }
      obs.covariates.push_back(x);
    }
    dataset.observations.push_back(std::move(obs));
  }
  return dataset;
}

// --- matched output -----------------------------------------------------------

struct RowAnnotation {
  int pair_id = 0;
  GroupLabel group = GroupLabel::bt;
  int round = 0;
};

// Annotates surviving rows from the final-round cross-sectional pairs:
// before-period rows share the pair_id of their BT:BC pair, after-period rows
// the pair_id of their AT:AC pair. At termination those pairs cover every
// survivor exactly once.
inline std::unordered_map<std::int64_t, RowAnnotation> annotate_pairs(
    const std::vector<ProtocolPair>& pairs, int final_round) {
  std::unordered_map<std::int64_t, RowAnnotation> annotations;
  int next_pair_id = 1;
  for (const ProtocolPair& pair : pairs) {
    if (pair.round != final_round) continue;
    if (pair.kind == PairKind::bt_bc) {
      annotations[pair.first_id] = {next_pair_id, GroupLabel::bt, pair.round};
      annotations[pair.second_id] = {next_pair_id, GroupLabel::bc, pair.round};
      ++next_pair_id;
    } else if (pair.kind == PairKind::at_ac) {
      annotations[pair.first_id] = {next_pair_id, GroupLabel::at, pair.round};
      annotations[pair.second_id] = {next_pair_id, GroupLabel::ac, pair.round};
      ++next_pair_id;
    }
  }
  return annotations;
}

// Surviving input rows, in input order, with pair_id/group/round appended.
inline void write_matched_csv(
    const std::string& path, const LoadedDataset& dataset,
    const std::unordered_map<std::int64_t, RowAnnotation>& annotations) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write " + path);
  out << "id,period,treated,outcome";
  for (std::size_t j = 1; j <= dataset.k; ++j) out << ",x" << j;
  out << ",pair_id,group,round\n";
  for (const Observation& obs : dataset.observations) {
    const auto it = annotations.find(obs.id);
    if (it == annotations.end()) continue;
    out << obs.id << ',' << (obs.period == Period::after ? 1 : 0) << ','
        << (obs.treated ? 1 : 0) << ',' << format_double(obs.outcome);
    for (double x : obs.covariates) out << ',' << format_double(x);
    out << ',' << it->second.pair_id << ',' << group_name(it->second.group) << ','
        << it->second.round << '\n';
  }
}

inline void write_balance_csv(const std::string& path, const BalanceReport& report) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write " + path);
  out << "comparison,covariate,delta,balanced\n";
  for (const BalanceEntry& entry : report.entries) {
    out << comparison_name(entry.comparison) << ",x" << entry.covariate + 1 << ','
        << format_double(entry.delta) << ',' << (entry.balanced ? "true" : "false")
        << '\n';
  }
}

// --- results ---------------------------------------------------------------------

inline void write_results_csv(const std::string& path,
                              const std::vector<PerformanceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write " + path);
  out << "scheme,scenario,matched_size,mean_estimate,sd,bias_ratio,rmse,coverage,completed\n";
  for (const PerformanceRecord& r : records) {
    out << scheme_name(r.scheme) << ',' << r.scenario.name() << ','
        << format_double(r.matched_size) << ',' << format_double(r.mean_estimate)
        << ',' << format_double(r.sd) << ',' << format_double(r.bias_ratio) << ','
        << format_double(r.rmse) << ',' << format_double(r.coverage) << ','
        << (r.completed ? "true" : "false") << '\n';
  }
}

inline std::vector<PerformanceRecord> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw CsvError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected =
      "scheme,scenario,matched_size,mean_estimate,sd,bias_ratio,rmse,coverage,completed";
  if (line != expected) throw CsvError(path + ":1: unexpected results header");

  std::vector<PerformanceRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 9) {
      throw CsvError(detail::location(path, line_no) + ": expected 9 fields");
    }
    const std::string where = detail::location(path, line_no);
    PerformanceRecord r;
    const auto scheme = parse_scheme_tag(fields[0]);
    if (!scheme) throw CsvError(where + ": unknown scheme '" + fields[0] + "'");
    r.scheme = *scheme;
    const auto scenario = parse_scenario(fields[1]);
    if (!scenario) throw CsvError(where + ": unknown scenario '" + fields[1] + "'");
    r.scenario = *scenario;
    r.matched_size = detail::parse_double(fields[2], where + ": column 'matched_size'");
    r.mean_estimate = detail::parse_double(fields[3], where + ": column 'mean_estimate'");
    r.sd = detail::parse_double(fields[4], where + ": column 'sd'");
    r.bias_ratio = detail::parse_double(fields[5], where + ": column 'bias_ratio'");
    r.rmse = detail::parse_double(fields[6], where + ": column 'rmse'");
    r.coverage = detail::parse_double(fields[7], where + ": column 'coverage'");
    if (fields[8] == "true") {
      r.completed = true;
    } else if (fields[8] == "false") {
      r.completed = false;
    } else {
      throw CsvError(where + ": column 'completed': expected true/false");
    }
    records.push_back(r);
  }
  return records;
}

// --- estimates ------------------------------------------------------------------

inline nlohmann::json estimate_to_json(const Estimate& est) {
  return nlohmann::json{{"satt", est.satt},   {"se", est.se},
                        {"ci_low", est.ci_low}, {"ci_high", est.ci_high},
                        {"d0", est.d0},       {"d1", est.d1},
                        {"n_used", est.n_used}};
}

inline void write_estimate_json(const std::string& path, const Estimate& est) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write " + path);
  out << estimate_to_json(est).dump(2) << '\n';
}

}  // namespace rcsmatch
