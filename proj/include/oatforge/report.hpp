#ifndef OATFORGE_REPORT_HPP
#define OATFORGE_REPORT_HPP

// Report rendering: every human-readable table has json/csv twins carrying
// the same cells.

#include <string>
#include <variant>
#include <vector>

namespace oatforge {

enum class ReportFormat { table, json, csv };

ReportFormat parse_report_format(const std::string& name);  // throws on unknown

using Cell = std::variant<std::string, long long, double>;

struct Report {
  std::string title;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add_row(std::vector<Cell> row) { rows.push_back(std::move(row)); }
};

std::string cell_text(const Cell& cell);
std::string render(const Report& report, ReportFormat format);

}  // namespace oatforge

#endif  // OATFORGE_REPORT_HPP
