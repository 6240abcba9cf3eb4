#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gduq/core/checkpoint.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/graph/io.hpp"

namespace gduq {

/// Per-seed safety metrics. NaN marks a metric that could not be computed
/// (failed run).
struct MetricsReport {
  static constexpr std::size_t kFields = 7;
  static constexpr std::array<const char*, kFields> kNames{"id_accuracy", "ood_accuracy", "id_ece",     "ood_ece",
                                                          "ood_auroc",   "id_gep_mae",   "ood_gep_mae"};
  // +1: larger is better, -1: smaller is better
  static constexpr std::array<int, kFields> kDirection{+1, +1, -1, -1, +1, -1, -1};

  static constexpr double nan() { return std::numeric_limits<double>::quiet_NaN(); }

  double id_accuracy = nan();
  double ood_accuracy = nan();
  double id_ece = nan();
  double ood_ece = nan();
  double ood_auroc = nan();
  double id_gep_mae = nan();
  double ood_gep_mae = nan();

  std::array<double, kFields> values() const {
    return {id_accuracy, ood_accuracy, id_ece, ood_ece, ood_auroc, id_gep_mae, ood_gep_mae};
  }

  static MetricsReport from_values(const std::array<double, kFields>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }

  bool all_finite() const {
    for (double v : values()) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  /// Every metric lies in [0, 1].
  bool in_range() const {
    for (double v : values()) {
      if (!(v >= 0.0 && v <= 1.0)) return false;
    }
    return true;
  }
};

struct RunRecord {
  std::string config_hash;
  std::string dataset_hash;
  std::string method;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | failed
  MetricsReport metrics;
  std::string checkpoint;     // relative to the report directory
  std::string diagnostic;     // failure reason
  double wall_seconds = 0.0;  // kept out of the CSV so reports stay byte-stable

  bool ok() const noexcept { return status == "ok"; }
};

/// Equality over every serialized field; NaN compares equal to NaN.
inline bool same_report_fields(const RunRecord& a, const RunRecord& b) {
  if (a.config_hash != b.config_hash || a.dataset_hash != b.dataset_hash || a.method != b.method || a.seed != b.seed ||
      a.status != b.status || a.checkpoint != b.checkpoint || a.diagnostic != b.diagnostic) {
    return false;
  }
  const auto x = a.metrics.values(), y = b.metrics.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) && std::isnan(y[i])) continue;
    if (x[i] != y[i]) return false;
  }
  return true;
}

namespace detail {

inline std::string csv_cell(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

inline std::string metric_cell(double v) { return std::isnan(v) ? "nan" : format_double(v); }

inline double parse_metric(const std::string& s, std::size_t line) {
  if (s == "nan") return MetricsReport::nan();
  return parse_number<double>(s, line, "metric");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

inline std::string run_csv_header() {
  std::string h = "config_hash,dataset_hash,method,seed,status";
  for (const char* n : MetricsReport::kNames) h += std::string(",") + n;
  return h + ",checkpoint,diagnostic";
}

inline std::string runs_to_csv(const std::vector<RunRecord>& records) {
  std::string out = run_csv_header() + "\n";
  for (const auto& r : records) {
    out += r.config_hash + "," + r.dataset_hash + "," + detail::csv_cell(r.method) + "," + std::to_string(r.seed) + "," +
           r.status;
    for (double v : r.metrics.values()) out += "," + detail::metric_cell(v);
    out += "," + detail::csv_cell(r.checkpoint) + "," + detail::csv_cell(r.diagnostic) + "\n";
  }
  return out;
}

inline std::vector<RunRecord> runs_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != run_csv_header()) throw SchemaError("run CSV: bad or missing header");
  std::vector<RunRecord> out;
  std::size_t lineno = 1;
  constexpr std::size_t kCells = 5 + MetricsReport::kFields + 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != kCells) throw ParseError(lineno, "run CSV row needs " + std::to_string(kCells) + " cells");
    RunRecord r;
    r.config_hash = cells[0];
    r.dataset_hash = cells[1];
    r.method = cells[2];
    r.seed = detail::parse_number<std::uint64_t>(cells[3], lineno, "seed");
    r.status = cells[4];
    std::array<double, MetricsReport::kFields> v{};
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = detail::parse_metric(cells[5 + i], lineno);
    r.metrics = MetricsReport::from_values(v);
    r.checkpoint = cells[5 + MetricsReport::kFields];
    r.diagnostic = cells[6 + MetricsReport::kFields];
    out.push_back(std::move(r));
  }
  return out;
}

struct MetricSummary {
  double mean = MetricsReport::nan();
  double stddev = MetricsReport::nan();  // sample std, 0 for a single value
  std::size_t n = 0;
};

inline MetricSummary summarize_metric(const std::vector<double>& xs) {
  MetricSummary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() == 1) {
    s.stddev = 0.0;
    return s;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return s;
}

/// Mean and sample std of each metric over successful runs.
inline std::array<MetricSummary, MetricsReport::kFields> aggregate_metrics(const std::vector<RunRecord>& records) {
  std::array<MetricSummary, MetricsReport::kFields> out;
  for (std::size_t f = 0; f < MetricsReport::kFields; ++f) {
    std::vector<double> xs;
    for (const auto& r : records) {
      if (r.ok()) xs.push_back(r.metrics.values()[f]);
    }
    out[f] = summarize_metric(xs);
  }
  return out;
}

inline constexpr int kAggregateSchemaVersion = 1;

inline nlohmann::json aggregate_json(const std::vector<RunRecord>& records) {
  nlohmann::json j;
  j["schema_version"] = kAggregateSchemaVersion;
  j["runs"] = records.size();
  std::size_t ok = 0;
  std::vector<std::string> methods, hashes, dataset_hashes;
  for (const auto& r : records) {
    ok += r.ok() ? 1 : 0;
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(hashes.begin(), hashes.end(), r.config_hash) == hashes.end()) hashes.push_back(r.config_hash);
    if (std::find(dataset_hashes.begin(), dataset_hashes.end(), r.dataset_hash) == dataset_hashes.end()) {
      dataset_hashes.push_back(r.dataset_hash);
    }
  }
  j["succeeded"] = ok;
  j["failed"] = records.size() - ok;
  j["methods"] = methods;
  j["config_hashes"] = hashes;
  j["dataset_hashes"] = dataset_hashes;
  const auto agg = aggregate_metrics(records);
  nlohmann::json metrics = nlohmann::json::object();
  for (std::size_t f = 0; f < MetricsReport::kFields; ++f) {
    nlohmann::json m;
    m["n"] = agg[f].n;
    if (agg[f].n > 0) {
      m["mean"] = agg[f].mean;
      m["std"] = agg[f].stddev;
    } else {
      m["mean"] = nullptr;
      m["std"] = nullptr;
    }
    metrics[MetricsReport::kNames[f]] = m;
  }
  j["metrics"] = metrics;
  return j;
}

inline constexpr const char* kRunsCsvName = "runs.csv";
inline constexpr const char* kAggregateName = "aggregate.json";

/// Writes runs.csv and aggregate.json under `dir`. Both files are rendered
/// and staged before either is renamed into place, so an unwritable
/// directory fails without touching existing reports.
inline void emit_report(const std::vector<RunRecord>& records, const std::filesystem::path& dir) {
  const std::string csv = runs_to_csv(records);
  const std::string json = aggregate_json(records).dump(2) + "\n";
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir.string() + ": " + ec.message());
  const auto csv_path = dir / kRunsCsvName, json_path = dir / kAggregateName;
  const auto csv_tmp = csv_path.string() + ".tmp", json_tmp = json_path.string() + ".tmp";
  auto stage = [](const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    out.close();
    if (!out) throw IoError("write failed for " + path);
  };
  try {
    stage(csv_tmp, csv);
    stage(json_tmp, json);
  } catch (...) {
    std::filesystem::remove(csv_tmp, ec);
    std::filesystem::remove(json_tmp, ec);
    throw;
  }
  std::filesystem::rename(csv_tmp, csv_path, ec);
  if (ec) throw IoError("cannot replace " + csv_path.string() + ": " + ec.message());
  std::filesystem::rename(json_tmp, json_path, ec);
  if (ec) throw IoError("cannot replace " + json_path.string() + ": " + ec.message());
}

inline std::vector<RunRecord> load_runs(const std::filesystem::path& dir) {
  return runs_from_csv(read_file(dir / kRunsCsvName));
}

struct ComparisonRow {
  std::string method;
  std::size_t seeds = 0;
  std::array<MetricSummary, MetricsReport::kFields> metrics;
  std::array<bool, MetricsReport::kFields> best{};
};

struct ComparisonTable {
  std::string dataset_hash;
  std::vector<ComparisonRow> rows;
};

/// One row per method (sorted by name), mean and std of each metric over
/// successful seeds. With two or more rows, every row that attains the best
/// mean of a column (ties included) is flagged.
inline ComparisonTable compare_methods(const std::vector<RunRecord>& records) {
  if (records.empty()) throw ContractError("compare_methods: no run records");
  ComparisonTable table;
  table.dataset_hash = records.front().dataset_hash;
  std::map<std::string, std::vector<RunRecord>> groups;
  for (const auto& r : records) {
    if (r.dataset_hash != table.dataset_hash) {
      throw SchemaError("compare_methods: runs use different datasets (" + table.dataset_hash + " vs " + r.dataset_hash +
                        ")");
    }
    groups[r.method].push_back(r);
  }
  for (const auto& [method, group] : groups) {
    ComparisonRow row;
    row.method = method;
    row.metrics = aggregate_metrics(group);
    row.seeds = row.metrics[0].n;
    table.rows.push_back(row);
  }
  if (table.rows.size() < 2) return table;
  for (std::size_t f = 0; f < MetricsReport::kFields; ++f) {
    const int dir = MetricsReport::kDirection[f];
    double best = MetricsReport::nan();
    for (const auto& row : table.rows) {
      const double v = row.metrics[f].mean;
      if (std::isnan(v)) continue;
      if (std::isnan(best) || dir * v > dir * best) best = v;
    }
    for (auto& row : table.rows) row.best[f] = !std::isnan(best) && row.metrics[f].mean == best;
  }
  return table;
}

inline std::string comparison_csv(const ComparisonTable& t) {
  std::string out = "method,seeds";
  for (const char* n : MetricsReport::kNames) out += std::string(",") + n + "," + n + "_std";
  out += ",best\n";
  for (const auto& row : t.rows) {
    out += detail::csv_cell(row.method) + "," + std::to_string(row.seeds);
    std::string best;
    for (std::size_t f = 0; f < MetricsReport::kFields; ++f) {
      out += "," + detail::metric_cell(row.metrics[f].mean) + "," + detail::metric_cell(row.metrics[f].stddev);
      if (row.best[f]) best += (best.empty() ? "" : ";") + std::string(MetricsReport::kNames[f]);
    }
    out += "," + best + "\n";
  }
  return out;
}

/// Fixed-width text table; best cells carry a trailing '*'.
inline std::string comparison_text(const ComparisonTable& t) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"method", "seeds"};
  for (const char* n : MetricsReport::kNames) header.emplace_back(n);
  cells.push_back(header);
  for (const auto& row : t.rows) {
    std::vector<std::string> line{row.method, std::to_string(row.seeds)};
    for (std::size_t f = 0; f < MetricsReport::kFields; ++f) {
      std::ostringstream s;
      if (std::isnan(row.metrics[f].mean)) {
        s << "n/a";
      } else {
        s << std::fixed << std::setprecision(4) << row.metrics[f].mean << " +/- " << row.metrics[f].stddev;
      }
      if (row.best[f]) s << '*';
      line.push_back(s.str());
    }
    cells.push_back(line);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += line[i];
      if (i + 1 < line.size()) out += std::string(width[i] - line[i].size() + 2, ' ');
    }
    out += "\n";
  }
  return out;
}

}  // namespace gduq
