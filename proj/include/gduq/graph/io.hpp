#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gduq/core/checkpoint.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/graph/graph.hpp"

namespace gduq {

// Plain-text dataset format (whitespace separated, one record per line):
//
//   N_GRAPHS d c
//   then per graph:
//     N m label
//     N lines of d floats        (node features)
//     m lines "src dst"          (edges, 0-based node ids)
//
// With `undirected` set (the default) every edge line is stored in both
// directions and the writer emits each undirected edge once (src <= dst).

struct DatasetFormat {
  bool undirected = true;
};

struct Dataset {
  std::vector<Graph> graphs;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
};

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  /// Next non-blank line split into tokens; false at end of input.
  bool next(std::vector<std::string_view>& tokens) {
    while (std::getline(in_, line_)) {
      ++number_;
      tokens.clear();
      std::string_view sv(line_);
      std::size_t i = 0;
      while (i < sv.size()) {
        while (i < sv.size() && (sv[i] == ' ' || sv[i] == '\t' || sv[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < sv.size() && sv[j] != ' ' && sv[j] != '\t' && sv[j] != '\r') ++j;
        if (j > i) tokens.push_back(sv.substr(i, j - i));
        i = j;
      }
      if (!tokens.empty()) return true;
    }
    return false;
  }

  std::size_t line() const noexcept { return number_; }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t number_ = 0;
};

template <typename T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
  T value{};
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), last, value);
  if (ec != std::errc() || ptr != last) throw ParseError(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
  return value;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset parse_dataset(std::istream& in, DatasetFormat format = {}) {
  Dataset ds;
  detail::LineReader reader(in);
  std::vector<std::string_view> tok;
  if (!reader.next(tok)) return ds;
  if (tok.size() != 3) throw ParseError(reader.line(), "header must be 'N_GRAPHS d c'");
  const auto n_graphs = detail::parse_number<std::size_t>(tok[0], reader.line(), "graph count");
  ds.feature_dim = detail::parse_number<std::size_t>(tok[1], reader.line(), "feature dimension");
  ds.num_classes = detail::parse_number<std::size_t>(tok[2], reader.line(), "class count");
  ds.graphs.reserve(n_graphs);

  const std::size_t d = ds.feature_dim;
  for (std::size_t gi = 0; gi < n_graphs; ++gi) {
    if (!reader.next(tok)) throw ParseError(reader.line(), "unexpected end of file before graph " + std::to_string(gi));
    if (tok.size() != 3) throw ParseError(reader.line(), "graph header must be 'N m label'");
    Graph g;
    g.num_nodes = detail::parse_number<std::size_t>(tok[0], reader.line(), "node count");
    const auto m = detail::parse_number<std::size_t>(tok[1], reader.line(), "edge count");
    g.label = detail::parse_number<int>(tok[2], reader.line(), "label");
    if (g.label < 0 || (ds.num_classes > 0 && static_cast<std::size_t>(g.label) >= ds.num_classes)) {
      throw ParseError(reader.line(), "label " + std::to_string(g.label) + " outside [0, " + std::to_string(ds.num_classes) + ")");
    }
    g.features = Tensor::zeros(g.num_nodes, d);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      if (!reader.next(tok)) throw ParseError(reader.line(), "unexpected end of file in node features");
      if (tok.size() != d) {
        throw SchemaError("line " + std::to_string(reader.line()) + ": expected " + std::to_string(d) +
                          " feature values, found " + std::to_string(tok.size()));
      }
      for (std::size_t k = 0; k < d; ++k) g.features.at(i, k) = detail::parse_number<double>(tok[k], reader.line(), "feature");
    }
    for (std::size_t e = 0; e < m; ++e) {
      if (!reader.next(tok)) throw ParseError(reader.line(), "unexpected end of file in edge list");
      if (tok.size() != 2) throw ParseError(reader.line(), "edge line must be 'src dst'");
      const auto s = detail::parse_number<std::size_t>(tok[0], reader.line(), "edge endpoint");
      const auto t = detail::parse_number<std::size_t>(tok[1], reader.line(), "edge endpoint");
      if (s >= g.num_nodes || t >= g.num_nodes) {
        throw ParseError(reader.line(), "edge endpoint out of range for graph with " + std::to_string(g.num_nodes) + " nodes");
      }
      if (format.undirected) {
        add_undirected_edge(g, s, t);
      } else {
        g.edges.emplace_back(s, t);
      }
    }
    ds.graphs.push_back(std::move(g));
  }
  if (reader.next(tok)) throw ParseError(reader.line(), "trailing content after last graph");
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in, format);
}

inline std::string format_dataset(const std::vector<Graph>& graphs, std::size_t num_classes, DatasetFormat format = {}) {
  std::ostringstream os;
  const std::size_t d = graphs.empty() ? 0 : graphs.front().feature_dim();
  os << graphs.size() << ' ' << d << ' ' << num_classes << '\n';
  for (const Graph& g : graphs) {
    std::vector<Edge> out_edges;
    for (const auto& [s, t] : g.edges) {
      if (!format.undirected || s <= t) out_edges.emplace_back(s, t);
    }
    os << g.num_nodes << ' ' << out_edges.size() << ' ' << g.label << '\n';
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      for (std::size_t k = 0; k < d; ++k) os << (k ? " " : "") << detail::format_double(g.features.at(i, k));
      os << '\n';
    }
    for (const auto& [s, t] : out_edges) os << s << ' ' << t << '\n';
  }
  return os.str();
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<Graph>& graphs, std::size_t num_classes,
                         DatasetFormat format = {}) {
  write_file_atomic(path, format_dataset(graphs, num_classes, format));
}

}  // namespace gduq
