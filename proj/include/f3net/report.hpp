#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "f3net/inference.hpp"

namespace f3net {

/// Header of the per-case table.
inline constexpr std::string_view kCaseCsvHeader =
    "dataset,case_id,dsc,accuracy,sensitivity,specificity,precision";
/// Header of the dataset summary table; values are percentages.
inline constexpr std::string_view kSummaryCsvHeader =
    "Dataset,Av. DSC (%),Accuracy,Sensitivity,Specificity,Precision";

/// Per-case rows (fractions, %.17g) followed by the unweighted mean row,
/// whose case_id is "mean".
std::string render_case_csv(const std::string& dataset, const EvaluationReport& report);

struct DatasetSummary {
  std::string dataset;
  MetricsRow mean;
};

/// One row per dataset, metrics in percent with two decimals.
std::string render_summary_csv(std::span<const DatasetSummary> rows);

/// Markdown table with the same columns as render_summary_csv.
std::string render_markdown(std::span<const DatasetSummary> rows);

/// Writes text to path, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace f3net
