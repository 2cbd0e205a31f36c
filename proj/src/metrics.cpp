// Copyright 2026 The promma Authors.
// SPDX-License-Identifier: Apache-2.0

#include "promma/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "promma/errors.hpp"

namespace promma {

namespace {

double f1_for(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw LoadError("report: unterminated quote in '" + line + "'");
  out.push_back(std::move(cur));
  return out;
}

double parse_number(const std::string& s, const char* field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw LoadError(std::string("report: bad ") + field + " value '" + s + "'");
  }
}

}  // namespace

Metrics compute_metrics(const std::vector<double>& preds, const std::vector<double>& labels) {
  if (preds.size() != labels.size()) {
    throw ContractError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw ContractError("metrics: empty input");
  const std::size_t n = preds.size();
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = positive(preds[i]);
    const bool l = positive(labels[i]);
    tp += p && l;
    tn += !p && !l;
    fp += p && !l;
    fn += !p && l;
    abs_err += std::abs(preds[i] - labels[i]);
  }
  Metrics m;
  const double dn = static_cast<double>(n);
  m.acc = 100.0 * static_cast<double>(tp + tn) / dn;
  const double pos_support = static_cast<double>(tp + fn);
  const double neg_support = static_cast<double>(tn + fp);
  m.f1 = 100.0 * (pos_support * f1_for(tp, fp, fn) + neg_support * f1_for(tn, fn, fp)) / dn;
  m.mae = abs_err / dn;

  double mp = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += preds[i];
    ml += labels[i];
  }
  mp /= dn;
  ml /= dn;
  double spp = 0.0, sll = 0.0, spl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = preds[i] - mp;
    const double b = labels[i] - ml;
    spp += a * a;
    sll += b * b;
    spl += a * b;
  }
  if (spp > 0.0 && sll > 0.0) m.corr = std::clamp(spl / std::sqrt(spp * sll), -1.0, 1.0);
  return m;
}

void EvalReport::add_averages() {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    if (r.scenario == "avg") continue;
    auto key = std::make_pair(r.dataset, r.method);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<ReportRow> avgs;
  for (const auto& key : keys) {
    const auto& g = groups[key];
    ReportRow a{key.first, key.second, "avg", {}};
    bool corr_ok = true;
    double corr = 0.0;
    for (const ReportRow* r : g) {
      a.m.acc += r->m.acc;
      a.m.f1 += r->m.f1;
      a.m.mae += r->m.mae;
      if (r->m.corr) {
        corr += *r->m.corr;
      } else {
        corr_ok = false;
      }
    }
    const double k = static_cast<double>(g.size());
    a.m.acc /= k;
    a.m.f1 /= k;
    a.m.mae /= k;
    if (corr_ok) a.m.corr = corr / k;
    avgs.push_back(std::move(a));
  }
  rows.insert(rows.end(), avgs.begin(), avgs.end());
}

const ReportRow* EvalReport::find(const std::string& dataset, const std::string& method,
                                  const std::string& scenario) const {
  for (const auto& r : rows) {
    if (r.dataset == dataset && r.method == method && r.scenario == scenario) return &r;
  }
  return nullptr;
}

std::string to_csv(const EvalReport& report) {
  std::ostringstream out;
  for (const auto& [k, v] : report.metadata) out << "# " << k << ": " << v << "\n";
  out << kReportHeader << "\n";
  for (const auto& r : report.rows) {
    out << r.dataset << ',' << r.method << ',' << quote(r.scenario) << ',' << fixed4(r.m.acc)
        << ',' << fixed4(r.m.f1) << ',' << fixed4(r.m.mae) << ','
        << (r.m.corr ? fixed4(*r.m.corr) : std::string("NA")) << "\n";
  }
  return out.str();
}

EvalReport parse_csv(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header && line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ", 2);
      if (colon == std::string::npos) throw LoadError("report: bad metadata line '" + line + "'");
      report.metadata.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
      continue;
    }
    if (!header) {
      if (line != kReportHeader) throw LoadError("report: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 7) {
      throw LoadError("report: expected 7 fields, got " + std::to_string(f.size()) + " in '" +
                      line + "'");
    }
    ReportRow r{f[0], f[1], f[2], {}};
    r.m.acc = parse_number(f[3], "acc");
    r.m.f1 = parse_number(f[4], "f1");
    r.m.mae = parse_number(f[5], "mae");
    if (f[6] != "NA") r.m.corr = parse_number(f[6], "corr");
    report.rows.push_back(std::move(r));
  }
  if (!header) throw LoadError("report: missing header");
  return report;
}

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["metadata"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.metadata) j["metadata"][k] = v;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["dataset"] = r.dataset;
    row["method"] = r.method;
    row["scenario"] = r.scenario;
    row["acc"] = r.m.acc;
    row["f1"] = r.m.f1;
    row["mae"] = r.m.mae;
    row["corr"] = r.m.corr ? nlohmann::ordered_json(*r.m.corr) : nlohmann::ordered_json(nullptr);
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace promma
