#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairaudit/audit.hpp"

namespace fairaudit::report {

// "0.88 (0.86, 0.90)"
std::string format_estimate(const IntervalEstimate& e);

enum class TableKind { Auroc, Sensitivity, Specificity, Confounder, Prevalence, Findings };

/// A display table with models as column groups and splits as row pairs;
/// every cell is already formatted.
struct ReportTable {
  TableKind kind = TableKind::Auroc;
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::vector<ReportTable> build_tables(const AuditReport& report);
std::string to_markdown(const ReportTable& table);

std::string render_markdown(const AuditReport& report);
nlohmann::json to_json(const AuditReport& report);

// Long-format machine-readable tables at full precision.
std::string auroc_csv(const AuditReport& report);
std::string sensspec_csv(const AuditReport& report, MetricKind metric);
std::string prevalence_csv(const AuditReport& report);
std::string confounders_csv(const AuditReport& report);
std::string findings_csv(const AuditReport& report);

struct RenderedFile {
  std::string name;
  std::string content;
};

// report.md, report.json and the CSV tables, in a fixed order.
std::vector<RenderedFile> render_all(const AuditReport& report);
void write_report(const AuditReport& report, const std::filesystem::path& dir);

}  // namespace fairaudit::report
