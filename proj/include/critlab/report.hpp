// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

// Result rows, their CSV form and a plain-text table.

#pragma once

#include "critlab/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace critlab {

struct ReportRow {
  std::string language;
  std::string criterion;
  EvalTriplet wer;
  std::optional<double> avg_werr;  // empty for the baseline
  double rtf = 0.0;

  bool operator==(const ReportRow&) const = default;
};

inline constexpr const char* kReportHeader = "language,criterion,clean,noisy,extreme,avg_werr,rtf";

/// Fixed-point text without a negative zero.
inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

inline std::string csv_line(const ReportRow& r) {
  return r.language + "," + r.criterion + "," + fixed(r.wer.clean, 1) + "," + fixed(r.wer.noisy, 1) + "," +
         fixed(r.wer.extreme, 1) + "," + (r.avg_werr ? fixed(*r.avg_werr, 1) : "") + "," + fixed(r.rtf, 2);
}

inline void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << kReportHeader << '\n';
  for (const auto& r : rows) os << csv_line(r) << '\n';
}

inline std::vector<ReportRow> parse_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kReportHeader) throw std::runtime_error("missing report header");
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      cells.push_back(line.substr(start, pos - start));
    cells.push_back(line.substr(start));
    if (cells.size() != 7) throw std::runtime_error("report row needs 7 cells: " + line);
    ReportRow r;
    r.language = cells[0];
    r.criterion = cells[1];
    r.wer = {std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])};
    if (!cells[5].empty()) r.avg_werr = std::stod(cells[5]);
    r.rtf = std::stod(cells[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// One block per language, in first-appearance order.
inline void write_report_table(std::ostream& os, const std::vector<ReportRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ReportRow*>> by_language;
  for (const auto& r : rows) {
    if (!by_language.count(r.language)) order.push_back(r.language);
    by_language[r.language].push_back(&r);
  }
  char buf[160];
  for (const auto& lang : order) {
    os << lang << '\n';
    std::snprintf(buf, sizeof buf, "  %-10s %8s %8s %8s %10s %6s\n", "criterion", "clean", "noisy", "extreme",
                  "avg_werr", "rtf");
    os << buf;
    for (const ReportRow* r : by_language[lang]) {
      const std::string werr = r->avg_werr ? fixed(*r->avg_werr, 1) + "%" : "--";
      std::snprintf(buf, sizeof buf, "  %-10s %8s %8s %8s %10s %6s\n", r->criterion.c_str(),
                    fixed(r->wer.clean, 1).c_str(), fixed(r->wer.noisy, 1).c_str(), fixed(r->wer.extreme, 1).c_str(),
                    werr.c_str(), fixed(r->rtf, 2).c_str());
      os << buf;
    }
  }
}

/// Writes <prefix>.csv and <prefix>.txt.
inline void emit_report(const std::string& prefix, const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("no report rows");
  std::ofstream csv(prefix + ".csv"), txt(prefix + ".txt");
  if (!csv || !txt) throw std::runtime_error("cannot write report to " + prefix);
  write_report_csv(csv, rows);
  write_report_table(txt, rows);
}

}  // namespace critlab
