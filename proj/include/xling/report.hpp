#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xling/manifest.hpp"

namespace xling {

struct ReportRow {
  std::string phase;
  int round = 0;
  std::string dataset;
  std::string metric;
  double value = 0.0;
};

/// One row per (phase, metric) in manifest order.
std::vector<ReportRow> report_rows(const RunManifest& manifest);

/// Columns phase,round,dataset,metric,value; values at full precision.
std::string render_csv(const std::vector<ReportRow>& rows);

/// Aligned table with values scaled by 100.
std::string render_table(const std::vector<ReportRow>& rows);

/// Reads <run_dir>/manifest.json, writes <run_dir>/report.csv and returns the rows.
std::vector<ReportRow> report(const std::filesystem::path& run_dir);

}  // namespace xling
