#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gduq/anchor/anchoring.hpp"
#include "gduq/anchor/summary.hpp"
#include "gduq/core/checkpoint.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/graph/io.hpp"
#include "gduq/graph/motif.hpp"
#include "gduq/graph/split.hpp"
#include "gduq/nn/model.hpp"

namespace gduq {

// Config grammar, one entry per line:
//   # comment            (also after a value: key = value  # note)
//   [section]
//   key = value
// Keys are stored as "section.key". Repeated keys are an error.

class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in) {
    ConfigFile cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ParseError(lineno, "unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ParseError(lineno, "empty section name");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ParseError(lineno, "empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (!cfg.values_.emplace(full, trim(line.substr(eq + 1))).second) {
        throw ParseError(lineno, "duplicate key '" + full + "'");
      }
    }
    return cfg;
  }

  static ConfigFile parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static ConfigFile load(const std::filesystem::path& path) { return parse_string(read_file(path)); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config is missing '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? to_number<double>(key, require(key)) : fallback;
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    return has(key) ? to_number<std::size_t>(key, require(key)) : fallback;
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    if (!has(key)) return out;
    std::stringstream ss(require(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  template <typename T>
  static T to_number(const std::string& key, const std::string& text) {
    try {
      return detail::parse_number<T>(text, 0, key.c_str());
    } catch (const ParseError&) {
      throw ConfigError("config value for '" + key + "' is not a valid number: '" + text + "'");
    }
  }

  /// Canonical text: sorted keys, one "key = value" per line, no sections.
  /// Keys under `exclude_prefix` are skipped.
  std::string canonical(const std::string& exclude_prefix = "") const {
    std::string out;
    for (const auto& [k, v] : values_) {
      if (!exclude_prefix.empty() && k.rfind(exclude_prefix, 0) == 0) continue;
      out += k + " = " + v + "\n";
    }
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> values_;
};

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

enum class Method { vanilla, temp, mcd, deep_ens, gduq_input, gduq_mpnn, gduq_readout, gduq_pretrained };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::vanilla: return "vanilla";
    case Method::temp: return "temp";
    case Method::mcd: return "mcd";
    case Method::deep_ens: return "deep_ens";
    case Method::gduq_input: return "gduq_input";
    case Method::gduq_mpnn: return "gduq_mpnn";
    case Method::gduq_readout: return "gduq_readout";
    case Method::gduq_pretrained: return "gduq_pretrained";
  }
  return "vanilla";
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::vanilla, Method::temp, Method::mcd, Method::deep_ens, Method::gduq_input, Method::gduq_mpnn,
                   Method::gduq_readout, Method::gduq_pretrained}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "'");
}

inline bool is_anchored(Method m) {
  return m == Method::gduq_input || m == Method::gduq_mpnn || m == Method::gduq_readout || m == Method::gduq_pretrained;
}

inline AnchorVariant anchor_variant_of(Method m) {
  switch (m) {
    case Method::gduq_input: return AnchorVariant::input;
    case Method::gduq_mpnn: return AnchorVariant::mpnn;
    case Method::gduq_readout: return AnchorVariant::readout;
    case Method::gduq_pretrained: return AnchorVariant::pretrained_readout;
    default: break;
  }
  throw ContractError("method '" + to_string(m) + "' does not anchor");
}

enum class DatasetSource { motif, file };

struct DatasetConfig {
  DatasetSource source = DatasetSource::motif;
  MotifSpec motif;
  std::size_t num_graphs = 1000;
  std::uint64_t generator_seed = 0;
  std::filesystem::path path;        // file source
  std::filesystem::path split_path;  // optional index file for a file source
};

enum class SplitMode { generator, size_quantile, file };

struct SplitConfig {
  SplitMode mode = SplitMode::generator;
  double train_quantile = 0.5;
  double eval_quantile = 0.9;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct MethodConfig {
  Method method = Method::vanilla;
  std::size_t layer = 1;          // r for gduq_mpnn
  std::size_t anchors = 10;       // K
  std::size_t members = 5;        // M
  std::size_t samples = 10;       // S
  std::size_t extra_epochs = 50;  // added to anchored training
  std::size_t head_epochs = 50;   // pretrained head training
  ConfidenceSource confidence = ConfidenceSource::calibrated;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  SplitConfig split;
  GnnConfig model;  // in_dim and num_classes filled from the data
  MethodConfig method;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t epochs = 100;
  double learning_rate = 3e-3;
  std::size_t batch_size = 32;
  std::filesystem::path output_dir;  // relative paths resolve against the output root
  std::string source_text;           // canonical config text, embedded in checkpoints
  std::string hash;

  AnchorConfig anchor_config() const {
    AnchorConfig a;
    a.variant = anchor_variant_of(method.method);
    a.num_anchors = method.anchors;
    a.layer = method.layer;
    return a;
  }

  void validate() const {
    if (seeds.empty()) throw ConfigError("config needs at least one seed");
    if (epochs == 0) throw ConfigError("train.epochs must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (dataset.source == DatasetSource::motif) dataset.motif.validate();
    if (dataset.source == DatasetSource::file && split.mode == SplitMode::generator) {
      throw ConfigError("a file dataset needs split.kind = size_quantile or an index file");
    }
    if (method.method == Method::mcd) {
      if (!(model.dropout_rate > 0.0)) throw ConfigError("method mcd needs model.dropout > 0");
      if (method.samples < 1) throw ConfigError("method.samples must be at least 1");
    }
    if (method.method == Method::deep_ens && method.members < 2) throw ConfigError("method.members must be at least 2");
    if (is_anchored(method.method)) anchor_config().validate(model.num_mp_layers);
    if (method.method == Method::gduq_pretrained && method.head_epochs == 0) {
      throw ConfigError("method.head_epochs must be positive");
    }
  }
};

inline constexpr const char* kOutputRootEnv = "GDUQ_OUTPUT_ROOT";

/// Output root: $GDUQ_OUTPUT_ROOT when set and nonempty, else `fallback`.
inline std::filesystem::path output_root(const std::filesystem::path& fallback = "runs") {
  const char* env = std::getenv(kOutputRootEnv);
  if (env && *env) return env;
  return fallback;
}

inline std::filesystem::path resolve_output(const std::filesystem::path& dir) {
  return dir.is_absolute() ? dir : output_root() / dir;
}

namespace detail {

inline SizeRange parse_range(const ConfigFile& f, const std::string& key, SizeRange fallback) {
  const auto parts = f.get_list(key);
  if (parts.empty()) return fallback;
  if (parts.size() != 2) throw ConfigError("'" + key + "' expects min,max");
  return {ConfigFile::to_number<std::size_t>(key, parts[0]), ConfigFile::to_number<std::size_t>(key, parts[1])};
}

inline void check_known_keys(const ConfigFile& f) {
  static const std::vector<std::string> known{
      "name",
      "dataset.source", "dataset.path", "dataset.split_path", "dataset.num_graphs", "dataset.seed", "dataset.shift",
      "dataset.bases", "dataset.motifs", "dataset.basis_size", "dataset.ood_basis_size", "dataset.held_out_bases",
      "dataset.rho", "dataset.ood_fraction", "dataset.val_fraction", "dataset.test_id_fraction", "dataset.feature_noise",
      "split.kind", "split.train_quantile", "split.eval_quantile", "split.val_fraction", "split.seed",
      "model.backbone", "model.layers", "model.hidden", "model.readout", "model.mlp_depth", "model.gin_epsilon",
      "model.dropout",
      "method.name", "method.layer", "method.anchors", "method.members", "method.samples", "method.extra_epochs",
      "method.head_epochs", "method.confidence",
      "train.seeds", "train.epochs", "train.learning_rate", "train.batch_size",
      "output.dir"};
  for (const auto& [k, v] : f.values()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");
  }
}

}  // namespace detail

inline MotifSpec motif_spec_from(const ConfigFile& f) {
  MotifSpec m;
  if (f.has("dataset.bases")) {
    m.bases.clear();
    for (const auto& b : f.get_list("dataset.bases")) m.bases.push_back(basis_from_string(b));
  }
  if (f.has("dataset.motifs")) {
    m.motifs.clear();
    for (const auto& s : f.get_list("dataset.motifs")) m.motifs.push_back(motif_from_string(s));
  }
  m.shift = split_kind_from_string(f.get("dataset.shift", "none"));
  m.basis_size = detail::parse_range(f, "dataset.basis_size", m.basis_size);
  m.ood_basis_size = detail::parse_range(f, "dataset.ood_basis_size", m.ood_basis_size);
  for (const auto& b : f.get_list("dataset.held_out_bases")) m.held_out_bases.push_back(basis_from_string(b));
  m.rho = f.get_double("dataset.rho", m.rho);
  m.ood_fraction = f.get_double("dataset.ood_fraction", m.ood_fraction);
  m.val_fraction = f.get_double("dataset.val_fraction", m.val_fraction);
  m.test_id_fraction = f.get_double("dataset.test_id_fraction", m.test_id_fraction);
  m.feature_noise = f.get_double("dataset.feature_noise", m.feature_noise);
  return m;
}

inline ExperimentConfig experiment_from(const ConfigFile& f) {
  detail::check_known_keys(f);
  ExperimentConfig c;
  c.name = f.get("name", c.name);

  const std::string source = f.get("dataset.source", "motif");
  if (source == "motif") {
    c.dataset.source = DatasetSource::motif;
  } else if (source == "file") {
    c.dataset.source = DatasetSource::file;
    c.dataset.path = f.require("dataset.path");
    c.dataset.split_path = f.get("dataset.split_path", "");
  } else {
    throw ConfigError("dataset.source must be motif or file");
  }
  c.dataset.motif = motif_spec_from(f);
  c.dataset.num_graphs = f.get_size("dataset.num_graphs", c.dataset.num_graphs);
  c.dataset.generator_seed = f.get_size("dataset.seed", 0);

  const std::string kind = f.get("split.kind", c.dataset.split_path.empty() ? "generator" : "file");
  if (kind == "generator") {
    c.split.mode = SplitMode::generator;
  } else if (kind == "size_quantile") {
    c.split.mode = SplitMode::size_quantile;
  } else if (kind == "file") {
    if (c.dataset.split_path.empty()) throw ConfigError("split.kind = file needs dataset.split_path");
    c.split.mode = SplitMode::file;
  } else {
    throw ConfigError("split.kind must be generator, size_quantile or file");
  }
  c.split.train_quantile = f.get_double("split.train_quantile", c.split.train_quantile);
  c.split.eval_quantile = f.get_double("split.eval_quantile", c.split.eval_quantile);
  c.split.val_fraction = f.get_double("split.val_fraction", c.split.val_fraction);
  c.split.seed = f.get_size("split.seed", 0);

  c.model.backbone = backbone_from_string(f.get("model.backbone", to_string(c.model.backbone)));
  c.model.num_mp_layers = f.get_size("model.layers", c.model.num_mp_layers);
  c.model.hidden_dim = f.get_size("model.hidden", c.model.hidden_dim);
  c.model.readout = readout_from_string(f.get("model.readout", to_string(c.model.readout)));
  c.model.mlp_depth = f.get_size("model.mlp_depth", c.model.mlp_depth);
  c.model.gin_epsilon = f.get_double("model.gin_epsilon", c.model.gin_epsilon);
  c.model.dropout_rate = f.get_double("model.dropout", c.model.dropout_rate);

  c.method.method = method_from_string(f.get("method.name", "vanilla"));
  if (c.method.method == Method::gduq_mpnn && !f.has("method.layer")) {
    throw ConfigError("method gduq_mpnn needs method.layer");
  }
  c.method.layer = f.get_size("method.layer", c.method.layer);
  c.method.anchors = f.get_size("method.anchors", c.method.anchors);
  c.method.members = f.get_size("method.members", c.method.members);
  c.method.samples = f.get_size("method.samples", c.method.samples);
  c.method.extra_epochs = f.get_size("method.extra_epochs", c.method.extra_epochs);
  c.method.head_epochs = f.get_size("method.head_epochs", c.method.head_epochs);
  const std::string conf = f.get("method.confidence", "calibrated");
  if (conf == "calibrated") {
    c.method.confidence = ConfidenceSource::calibrated;
  } else if (conf == "mean") {
    c.method.confidence = ConfidenceSource::mean;
  } else {
    throw ConfigError("method.confidence must be calibrated or mean");
  }

  if (f.has("train.seeds")) {
    c.seeds.clear();
    for (const auto& s : f.get_list("train.seeds")) c.seeds.push_back(ConfigFile::to_number<std::uint64_t>("train.seeds", s));
  }
  c.epochs = f.get_size("train.epochs", c.epochs);
  c.learning_rate = f.get_double("train.learning_rate", c.learning_rate);
  c.batch_size = f.get_size("train.batch_size", c.batch_size);
  c.output_dir = f.get("output.dir", c.name);

  c.source_text = f.canonical();
  c.hash = fnv1a_hex(f.canonical("output."));
  // dims are data-dependent; placeholders let validate() run before loading
  c.model.in_dim = 1;
  c.model.num_classes = 2;
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from(ConfigFile::load(path));
}

}  // namespace gduq
