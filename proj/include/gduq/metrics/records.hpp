#pragma once

#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "gduq/anchor/summary.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/graph/io.hpp"

namespace gduq {

enum class SplitTag { id, ood, val };

inline std::string to_string(SplitTag t) {
  switch (t) {
    case SplitTag::id: return "id";
    case SplitTag::ood: return "ood";
    case SplitTag::val: return "val";
  }
  return "id";
}

inline SplitTag split_tag_from_string(const std::string& s) {
  if (s == "id") return SplitTag::id;
  if (s == "ood") return SplitTag::ood;
  if (s == "val") return SplitTag::val;
  throw SchemaError("unknown split tag '" + s + "'");
}

/// One scored prediction.
struct EvalRecord {
  double confidence = 0.0;
  int predicted = 0;
  int truth = 0;
  SplitTag split = SplitTag::id;

  bool correct() const noexcept { return predicted == truth; }
  bool operator==(const EvalRecord&) const = default;
};

inline std::vector<EvalRecord> make_records(const std::vector<PredictionSummary>& preds, const std::vector<int>& labels,
                                            SplitTag tag) {
  if (preds.size() != labels.size()) throw ShapeError("make_records: prediction and label counts differ");
  std::vector<EvalRecord> out;
  out.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) out.push_back({preds[i].confidence, preds[i].predicted, labels[i], tag});
  return out;
}

inline std::vector<double> confidences(const std::vector<EvalRecord>& records) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.confidence);
  return out;
}

// Record CSV: header "confidence,pred,true,split", one record per line.
inline constexpr const char* kRecordCsvHeader = "confidence,pred,true,split";

inline std::string records_to_csv(const std::vector<EvalRecord>& records) {
  std::string out = std::string(kRecordCsvHeader) + "\n";
  for (const auto& r : records) {
    out += detail::format_double(r.confidence) + "," + std::to_string(r.predicted) + "," + std::to_string(r.truth) + "," +
           to_string(r.split) + "\n";
  }
  return out;
}

inline std::vector<EvalRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRecordCsvHeader) throw SchemaError("record CSV: bad or missing header");
  std::vector<EvalRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError(lineno, "record CSV row needs 4 cells");
    EvalRecord r;
    r.confidence = detail::parse_number<double>(cells[0], lineno, "confidence");
    r.predicted = detail::parse_number<int>(cells[1], lineno, "pred");
    r.truth = detail::parse_number<int>(cells[2], lineno, "true");
    r.split = split_tag_from_string(cells[3]);
    out.push_back(r);
  }
  return out;
}

}  // namespace gduq
