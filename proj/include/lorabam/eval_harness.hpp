#pragma once

// Rejection-rate evaluation of fitted monitors and report emission
// (markdown table, CSV, JSON, plot-data CSV).

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lorabam/error.hpp"
#include "lorabam/feature_store.hpp"
#include "lorabam/monitor_io.hpp"

namespace lorabam {

enum class DatasetRole { id, near_ood, far_ood };

inline std::string_view to_string(DatasetRole role) {
  switch (role) {
    case DatasetRole::id: return "id";
    case DatasetRole::near_ood: return "near_ood";
    case DatasetRole::far_ood: return "far_ood";
  }
  return "id";
}

inline DatasetRole parse_dataset_role(std::string_view text) {
  if (text == "id") return DatasetRole::id;
  if (text == "near_ood") return DatasetRole::near_ood;
  if (text == "far_ood") return DatasetRole::far_ood;
  throw UsageError("unknown dataset role '" + std::string(text) +
                   "' (expected id, near_ood or far_ood)");
}

struct EvalSet {
  const Dataset* data = nullptr;
  DatasetRole role = DatasetRole::id;
};

struct EvalRow {
  std::string dataset_name;
  DatasetRole role = DatasetRole::id;
  std::size_t n = 0;
  std::size_t rejected = 0;
  double rejection_rate = 0.0;

  bool operator==(const EvalRow&) const = default;
};

struct EvalReport {
  std::string monitor_kind;
  /// Table row label, e.g. "LoRA-BAM (delta=0.2)".
  std::string monitor_label;
  /// Threshold, target TPR, cluster count, seed and similar settings.
  nlohmann::json monitor_config = nlohmann::json::object();
  std::vector<EvalRow> rows;
};

enum class ReportFormat { markdown, csv, json };

inline ReportFormat parse_report_format(std::string_view text) {
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  throw UsageError("unknown report format '" + std::string(text) + "'");
}

/// FNV-1a over the newline-joined ids; used to show that monitors in one run
/// saw the same data.
inline std::string id_fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& fv : data) {
    for (unsigned char c : fv.id) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Counts rejections per dataset. `Monitor` needs dim() and accepts(span).
template <typename Monitor>
EvalReport evaluate(const Monitor& monitor, const std::vector<EvalSet>& sets,
                    std::string kind, std::string label = {},
                    nlohmann::json config = nlohmann::json::object()) {
  EvalReport report;
  report.monitor_kind = std::move(kind);
  report.monitor_label = label.empty() ? report.monitor_kind : std::move(label);
  report.monitor_config = std::move(config);
  for (const auto& set : sets) {
    const Dataset& data = *set.data;
    if (data.empty()) throw DataError("dataset '" + data.name() + "' is empty");
    if (data.dim() != monitor.dim()) {
      throw DataError("dataset '" + data.name() + "' has dimension " +
                      std::to_string(data.dim()) + ", monitor has " +
                      std::to_string(monitor.dim()));
    }
    for (const auto& row : report.rows) {
      if (row.dataset_name == data.name()) {
        throw UsageError("dataset '" + data.name() + "' listed twice");
      }
    }
    EvalRow row{data.name(), set.role, data.size(), 0, 0.0};
    for (const auto& fv : data) {
      if (!monitor.accepts(fv.vector)) ++row.rejected;
    }
    row.rejection_rate =
        static_cast<double>(row.rejected) / static_cast<double>(row.n);
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline EvalReport evaluate(const AnyMonitor& monitor,
                           const std::vector<EvalSet>& sets,
                           std::string label = {},
                           nlohmann::json config = nlohmann::json::object()) {
  return std::visit(
      [&](const auto& m) {
        return evaluate(m, sets, monitor_kind(monitor), label, config);
      },
      monitor);
}

namespace detail {

inline std::string shortest(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

inline std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", rate * 100.0);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

inline void check_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw DataError("empty report");
  for (const auto& r : reports) {
    if (r.rows.empty()) throw DataError("empty report");
  }
}

/// Row indices of `report` in table order: ID, then near OoD, then far OoD,
/// keeping config order inside each group.
inline std::vector<std::size_t> column_order(const EvalReport& report) {
  std::vector<std::size_t> order;
  for (auto role : {DatasetRole::id, DatasetRole::near_ood, DatasetRole::far_ood}) {
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      if (report.rows[i].role == role) order.push_back(i);
    }
  }
  return order;
}

inline std::string_view role_heading(DatasetRole role) {
  switch (role) {
    case DatasetRole::id: return "ID";
    case DatasetRole::near_ood: return "Near OoD";
    case DatasetRole::far_ood: return "Far OoD";
  }
  return "ID";
}

}  // namespace detail

/// Methods as rows, datasets as columns grouped ID / near OoD / far OoD.
inline std::string format_markdown(const std::vector<EvalReport>& reports) {
  detail::check_reports(reports);
  const auto& first = reports.front();
  const auto order = detail::column_order(first);
  for (const auto& r : reports) {
    if (r.rows.size() != first.rows.size()) {
      throw DataError("reports cover different datasets");
    }
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      if (r.rows[i].dataset_name != first.rows[i].dataset_name) {
        throw DataError("reports cover different datasets");
      }
    }
  }
  std::ostringstream out;
  out << "| Method |";
  for (auto i : order) {
    out << ' ' << detail::role_heading(first.rows[i].role) << ": "
        << first.rows[i].dataset_name << " |";
  }
  out << "\n|---|";
  for (std::size_t k = 0; k < order.size(); ++k) out << "---:|";
  out << '\n';
  for (const auto& r : reports) {
    out << "| " << r.monitor_label << " |";
    for (auto i : order) out << ' ' << detail::percent(r.rows[i].rejection_rate) << " |";
    out << '\n';
  }
  out << "\nRejection rates. Lower is better for ID columns, higher is better "
         "for OoD columns.\n";
  return out.str();
}

inline constexpr std::string_view kReportCsvHeader =
    "monitor,kind,dataset,role,n,rejected,rejection_rate";

inline std::string format_csv(const std::vector<EvalReport>& reports) {
  detail::check_reports(reports);
  std::ostringstream out;
  out << kReportCsvHeader << '\n';
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      out << detail::csv_field(r.monitor_label) << ','
          << detail::csv_field(r.monitor_kind) << ','
          << detail::csv_field(row.dataset_name) << ',' << to_string(row.role)
          << ',' << row.n << ',' << row.rejected << ','
          << detail::shortest(row.rejection_rate) << '\n';
    }
  }
  return out.str();
}

/// Inverse of format_csv for the numeric content (configs are not in CSV).
inline std::vector<EvalReport> parse_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) {
    throw DataError("report CSV has an unexpected header");
  }
  std::vector<EvalReport> reports;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw DataError("report CSV row needs 7 fields", line_number);
    if (reports.empty() || reports.back().monitor_label != f[0]) {
      reports.push_back({f[1], f[0], nlohmann::json::object(), {}});
    }
    EvalRow row;
    row.dataset_name = f[2];
    row.role = parse_dataset_role(f[3]);
    try {
      row.n = std::stoull(f[4]);
      row.rejected = std::stoull(f[5]);
    } catch (const std::exception&) {
      throw DataError("bad count in report CSV", line_number);
    }
    auto [ptr, ec] = std::from_chars(f[6].data(), f[6].data() + f[6].size(),
                                     row.rejection_rate);
    if (ec != std::errc{} || ptr != f[6].data() + f[6].size()) {
      throw DataError("bad rejection rate in report CSV", line_number);
    }
    reports.back().rows.push_back(std::move(row));
  }
  return reports;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"dataset_name", row.dataset_name},
                    {"role", std::string(to_string(row.role))},
                    {"n", row.n},
                    {"rejected", row.rejected},
                    {"rejection_rate", row.rejection_rate}});
  }
  return {{"monitor_kind", r.monitor_kind},
          {"monitor_label", r.monitor_label},
          {"monitor_config", r.monitor_config},
          {"rows", std::move(rows)}};
}

inline std::string format_json(const std::vector<EvalReport>& reports) {
  detail::check_reports(reports);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) out.push_back(to_json(r));
  return out.dump(2) + "\n";
}

/// One line per (dataset, monitor) point; dataset_index is the 1-based
/// column position in the markdown table.
inline std::string format_plot_data(const std::vector<EvalReport>& reports) {
  detail::check_reports(reports);
  std::ostringstream out;
  out << "dataset_index,dataset,role,monitor,rejection_rate\n";
  for (const auto& r : reports) {
    const auto order = detail::column_order(r);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& row = r.rows[order[k]];
      out << k + 1 << ',' << detail::csv_field(row.dataset_name) << ','
          << to_string(row.role) << ',' << detail::csv_field(r.monitor_label)
          << ',' << detail::shortest(row.rejection_rate) << '\n';
    }
  }
  return out.str();
}

inline std::string format_report(const std::vector<EvalReport>& reports,
                                 ReportFormat format) {
  switch (format) {
    case ReportFormat::markdown: return format_markdown(reports);
    case ReportFormat::csv: return format_csv(reports);
    case ReportFormat::json: return format_json(reports);
  }
  return format_markdown(reports);
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

inline void emit_report(const std::vector<EvalReport>& reports,
                        ReportFormat format, const std::filesystem::path& path) {
  write_text_file(path, format_report(reports, format));
}

}  // namespace lorabam
