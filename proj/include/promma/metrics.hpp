// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace promma {

struct Metrics {
  double acc = 0.0;  // percent
  double f1 = 0.0;   // percent, support-weighted over the two classes
  double mae = 0.0;
  std::optional<double> corr;  // empty when either side has zero variance

  bool operator==(const Metrics&) const = default;
};

// Scores at or above zero count as the positive class.
inline bool positive(double score) { return score >= 0.0; }

Metrics compute_metrics(const std::vector<double>& preds, const std::vector<double>& labels);

struct ReportRow {
  std::string dataset;
  std::string method;
  std::string scenario;  // "a,t", ... or "avg"
  Metrics m;

  bool operator==(const ReportRow&) const = default;
};

struct EvalReport {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<ReportRow> rows;

  // Appends one "avg" row per (dataset, method) over its scenario rows, in
  // first-appearance order. CORR averages to empty if any input is empty.
  void add_averages();
  const ReportRow* find(const std::string& dataset, const std::string& method,
                        const std::string& scenario) const;

  bool operator==(const EvalReport&) const = default;
};

inline constexpr const char* kReportHeader = "dataset,method,scenario,acc,f1,mae,corr";

// Metadata lines "# key: value" come first, then the header and one line per
// row with four decimals; a missing CORR is written as NA.
std::string to_csv(const EvalReport& report);
EvalReport parse_csv(const std::string& text);
std::string to_json(const EvalReport& report);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace promma
