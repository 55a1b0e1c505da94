#include "f3net/report.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include "f3net/error.hpp"

namespace f3net {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string row_fractions(const std::string& dataset, const MetricsRow& r) {
  std::string line = csv_field(dataset) + "," + csv_field(r.case_id);
  for (double v : {r.dsc, r.accuracy, r.sensitivity, r.specificity, r.precision})
    line += "," + fmt("%.17g", v);
  return line + "\n";
}

std::array<std::string, 5> percent_cells(const MetricsRow& r) {
  return {fmt("%.2f", 100.0 * r.dsc), fmt("%.2f", 100.0 * r.accuracy),
          fmt("%.2f", 100.0 * r.sensitivity), fmt("%.2f", 100.0 * r.specificity),
          fmt("%.2f", 100.0 * r.precision)};
}

}  // namespace

std::string render_case_csv(const std::string& dataset, const EvaluationReport& report) {
  std::string out = std::string(kCaseCsvHeader) + "\n";
  for (const auto& r : report.rows) out += row_fractions(dataset, r);
  MetricsRow mean = report.summary;
  mean.case_id = "mean";
  out += row_fractions(dataset, mean);
  return out;
}

std::string render_summary_csv(std::span<const DatasetSummary> rows) {
  std::string out = std::string(kSummaryCsvHeader) + "\n";
  for (const auto& row : rows) {
    out += csv_field(row.dataset);
    for (const auto& cell : percent_cells(row.mean)) out += "," + cell;
    out += "\n";
  }
  return out;
}

std::string render_markdown(std::span<const DatasetSummary> rows) {
  std::string out =
      "| Dataset | Av. DSC (%) | Accuracy | Sensitivity | Specificity | Precision |\n"
      "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& row : rows) {
    out += "| " + row.dataset;
    for (const auto& cell : percent_cells(row.mean)) out += " | " + cell;
    out += " |\n";
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw LayoutError("cannot write '" + path.string() + "'");
}

}  // namespace f3net
