#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "gduq/core/errors.hpp"
#include "gduq/core/parameter.hpp"

namespace gduq {

/// Writes `content` to a sibling temp file and renames it over `path`, so
/// readers see either the old file or the complete new one.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Checkpoint layout (JSON):
//   {"format": "gduq-params", "version": 1,
//    "params": [{"name": str, "shape": [int...], "values": [float...], "trainable": bool}, ...]}
// Records keep ParamSet order. Doubles are written with round-trip precision.

inline nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : params) {
    arr.push_back({{"name", p.name}, {"shape", p.value.shape}, {"values", p.value.values}, {"trainable", p.trainable}});
  }
  return {{"format", "gduq-params"}, {"version", 1}, {"params", arr}};
}

inline ParamSet params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gduq-params") throw SchemaError("not a gduq-params blob");
  if (j.value("version", 0) != 1) throw SchemaError("unsupported gduq-params version");
  ParamSet out;
  for (const auto& rec : j.at("params")) {
    Tensor t(rec.at("shape").get<std::vector<std::size_t>>(), rec.at("values").get<std::vector<double>>());
    out.add(rec.at("name").get<std::string>(), std::move(t), rec.value("trainable", true));
  }
  return out;
}

inline void save_params(const ParamSet& params, const std::filesystem::path& path) {
  write_file_atomic(path, params_to_json(params).dump());
}

inline ParamSet load_params(const std::filesystem::path& path) {
  try {
    return params_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace gduq
