#include "oatforge/report.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace oatforge {

ReportFormat parse_report_format(const std::string& name) {
  if (name == "table") return ReportFormat::table;
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  throw std::runtime_error("unknown report format '" + name +
                           "' (expected table, json, or csv)");
}

std::string cell_text(const Cell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) return *s;
  if (const auto* i = std::get_if<long long>(&cell)) return std::to_string(*i);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", std::get<double>(cell));
  return buf;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string render_table(const Report& r) {
  std::vector<size_t> widths(r.columns.size());
  for (size_t c = 0; c < r.columns.size(); ++c) widths[c] = r.columns[c].size();
  std::vector<std::vector<std::string>> cells;
  for (const auto& row : r.rows) {
    std::vector<std::string> texts;
    for (size_t c = 0; c < row.size(); ++c) {
      texts.push_back(cell_text(row[c]));
      if (c < widths.size()) widths[c] = std::max(widths[c], texts.back().size());
    }
    cells.push_back(std::move(texts));
  }
  std::ostringstream os;
  if (!r.title.empty()) os << r.title << "\n";
  auto pad = [&](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  for (size_t c = 0; c < r.columns.size(); ++c)
    os << (c ? "  " : "") << pad(r.columns[c], widths[c]);
  os << "\n";
  for (size_t c = 0; c < r.columns.size(); ++c)
    os << (c ? "  " : "") << std::string(widths[c], '-');
  os << "\n";
  for (const auto& row : cells) {
    for (size_t c = 0; c < row.size(); ++c) os << (c ? "  " : "") << pad(row[c], widths[c]);
    os << "\n";
  }
  return os.str();
}

std::string render_csv(const Report& r) {
  std::ostringstream os;
  for (size_t c = 0; c < r.columns.size(); ++c)
    os << (c ? "," : "") << csv_escape(r.columns[c]);
  os << "\n";
  for (const auto& row : r.rows) {
    for (size_t c = 0; c < row.size(); ++c)
      os << (c ? "," : "") << csv_escape(cell_text(row[c]));
    os << "\n";
  }
  return os.str();
}

std::string render_json(const Report& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json obj;
    for (size_t c = 0; c < row.size() && c < r.columns.size(); ++c) {
      const Cell& cell = row[c];
      if (const auto* s = std::get_if<std::string>(&cell))
        obj[r.columns[c]] = *s;
      else if (const auto* i = std::get_if<long long>(&cell))
        obj[r.columns[c]] = *i;
      else  // keep the displayed precision so all formats carry the same value
        obj[r.columns[c]] = std::stod(cell_text(cell));
    }
    rows.push_back(obj);
  }
  nlohmann::ordered_json j;
  if (!r.title.empty()) j["title"] = r.title;
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

}  // namespace

std::string render(const Report& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::table: return render_table(report);
    case ReportFormat::csv: return render_csv(report);
    case ReportFormat::json: return render_json(report);
  }
  return "";
}

}  // namespace oatforge
