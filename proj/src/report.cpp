#include "xling/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "xling/error.hpp"

namespace xling {

namespace {

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

std::vector<ReportRow> report_rows(const RunManifest& manifest) {
  std::vector<ReportRow> rows;
  for (const auto& phase : manifest.phases) {
    for (const auto& m : phase.metrics) {
      rows.push_back({phase.name, phase.round, m.dataset, m.metric, m.value});
    }
  }
  return rows;
}

std::string render_csv(const std::vector<ReportRow>& rows) {
  std::string out = "phase,round,dataset,metric,value\n";
  for (const auto& r : rows) {
    out += r.phase + ',' + std::to_string(r.round) + ',' + r.dataset + ',' + r.metric + ',' +
           format_double("%.17g", r.value) + '\n';
  }
  return out;
}

std::string render_table(const std::vector<ReportRow>& rows) {
  std::size_t w_phase = 5, w_dataset = 7, w_metric = 6;
  for (const auto& r : rows) {
    w_phase = std::max(w_phase, r.phase.size());
    w_dataset = std::max(w_dataset, r.dataset.size());
    w_metric = std::max(w_metric, r.metric.size());
  }
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::string out = pad("phase", w_phase) + "  round  " + pad("dataset", w_dataset) + "  " +
                    pad("metric", w_metric) + "   value\n";
  for (const auto& r : rows) {
    out += pad(r.phase, w_phase) + "  " + format_double("%5.0f", r.round) + "  " +
           pad(r.dataset, w_dataset) + "  " + pad(r.metric, w_metric) + "  " +
           format_double("%6.2f", 100.0 * r.value) + '\n';
  }
  return out;
}

std::vector<ReportRow> report(const std::filesystem::path& run_dir) {
  const RunManifest manifest = read_manifest(run_dir / "manifest.json");
  auto rows = report_rows(manifest);
  const auto path = run_dir / "report.csv";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << render_csv(rows);
  return rows;
}

}  // namespace xling
