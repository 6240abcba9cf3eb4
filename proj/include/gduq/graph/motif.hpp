#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "gduq/core/errors.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/graph/graph.hpp"
#include "gduq/graph/split.hpp"

namespace gduq {

// Synthetic motif benchmark: every graph is a basis graph with one motif
// attached by a single bridge edge, and the label is the motif identity.
// Bases are triangle- and 4-cycle-free (cycles have length >= 5), so the
// motif is recoverable by counting triangles and 4-cycles.

enum class BasisKind { path, cycle, star, tree };
enum class MotifKind { triangle, square, house };

inline std::string to_string(BasisKind b) {
  switch (b) {
    case BasisKind::path: return "path";
    case BasisKind::cycle: return "cycle";
    case BasisKind::star: return "star";
    case BasisKind::tree: return "tree";
  }
  return "path";
}

inline BasisKind basis_from_string(const std::string& s) {
  if (s == "path") return BasisKind::path;
  if (s == "cycle") return BasisKind::cycle;
  if (s == "star") return BasisKind::star;
  if (s == "tree") return BasisKind::tree;
  throw ConfigError("unknown basis kind '" + s + "'");
}

inline std::string to_string(MotifKind m) {
  switch (m) {
    case MotifKind::triangle: return "triangle";
    case MotifKind::square: return "square";
    case MotifKind::house: return "house";
  }
  return "triangle";
}

inline MotifKind motif_from_string(const std::string& s) {
  if (s == "triangle") return MotifKind::triangle;
  if (s == "square") return MotifKind::square;
  if (s == "house") return MotifKind::house;
  throw ConfigError("unknown motif kind '" + s + "'");
}

struct SizeRange {
  std::size_t min = 4;
  std::size_t max = 12;
};

struct MotifSpec {
  std::vector<BasisKind> bases{BasisKind::path, BasisKind::cycle, BasisKind::star, BasisKind::tree};
  std::vector<MotifKind> motifs{MotifKind::triangle, MotifKind::square, MotifKind::house};
  SplitKind shift = SplitKind::none;
  SizeRange basis_size{4, 12};
  SizeRange ood_basis_size{24, 36};           // size shift only
  std::vector<BasisKind> held_out_bases;      // covariate shift only
  double rho = 0.0;                           // concept shift: P(basis tied to label) in ID data
  double ood_fraction = 0.2;
  double val_fraction = 0.1;                  // of the in-distribution graphs
  double test_id_fraction = 0.2;              // of the in-distribution graphs
  double feature_noise = 0.1;

  void validate() const {
    if (motifs.empty()) throw ConfigError("motif spec has an empty motif set");
    if (bases.empty()) throw ConfigError("motif spec has an empty basis set");
    std::vector<MotifKind> m = motifs;
    std::sort(m.begin(), m.end());
    if (std::adjacent_find(m.begin(), m.end()) != m.end()) throw ConfigError("motif kinds must be distinct");
    if (rho < 0.0 || rho > 1.0) throw ConfigError("rho must lie in [0, 1]");
    if (basis_size.min < 1 || basis_size.min > basis_size.max) throw ConfigError("invalid basis size range");
    if (ood_basis_size.min < 1 || ood_basis_size.min > ood_basis_size.max) throw ConfigError("invalid OOD basis size range");
    if (shift == SplitKind::covariate) {
      if (held_out_bases.empty()) throw ConfigError("covariate shift needs at least one held-out basis");
      for (BasisKind b : held_out_bases) {
        if (std::find(bases.begin(), bases.end(), b) == bases.end()) {
          throw ConfigError("held-out basis '" + to_string(b) + "' is not in the basis set");
        }
      }
      if (held_out_bases.size() >= bases.size()) throw ConfigError("covariate shift must leave at least one training basis");
    }
    if (ood_fraction < 0.0 || ood_fraction >= 1.0) throw ConfigError("ood_fraction must lie in [0, 1)");
    if (val_fraction < 0.0 || test_id_fraction < 0.0 || val_fraction + test_id_fraction >= 1.0) {
      throw ConfigError("val_fraction + test_id_fraction must be below 1");
    }
  }
};

struct MotifDataset {
  std::vector<Graph> graphs;
  DatasetSplit split;
  std::size_t num_classes = 0;
  std::vector<BasisKind> basis_of;  // basis used for each graph
};

namespace detail {

inline void build_basis(Graph& g, BasisKind kind, std::size_t n, RngStream& rng) {
  if (kind == BasisKind::cycle) n = std::max<std::size_t>(n, 5);
  g.num_nodes = n;
  switch (kind) {
    case BasisKind::path:
      for (std::size_t i = 1; i < n; ++i) add_undirected_edge(g, i - 1, i);
      break;
    case BasisKind::cycle:
      for (std::size_t i = 0; i < n; ++i) add_undirected_edge(g, i, (i + 1) % n);
      break;
    case BasisKind::star:
      for (std::size_t i = 1; i < n; ++i) add_undirected_edge(g, 0, i);
      break;
    case BasisKind::tree:
      for (std::size_t i = 1; i < n; ++i) add_undirected_edge(g, rng.uniform_index(i), i);
      break;
  }
}

/// Appends the motif and a bridge edge from a random basis node to it.
inline void attach_motif(Graph& g, MotifKind kind, RngStream& rng) {
  const std::size_t anchor = rng.uniform_index(g.num_nodes);
  const std::size_t o = g.num_nodes;
  switch (kind) {
    case MotifKind::triangle:
      g.num_nodes += 3;
      add_undirected_edge(g, o, o + 1);
      add_undirected_edge(g, o + 1, o + 2);
      add_undirected_edge(g, o + 2, o);
      break;
    case MotifKind::square:
      g.num_nodes += 4;
      for (std::size_t i = 0; i < 4; ++i) add_undirected_edge(g, o + i, o + (i + 1) % 4);
      break;
    case MotifKind::house:
      g.num_nodes += 5;
      for (std::size_t i = 0; i < 4; ++i) add_undirected_edge(g, o + i, o + (i + 1) % 4);
      add_undirected_edge(g, o + 2, o + 4);
      add_undirected_edge(g, o + 3, o + 4);
      break;
  }
  add_undirected_edge(g, anchor, o);
}

/// Node features: one-hot degree (1, 2, 3, 4+) and one N(0, noise^2) channel.
inline void assign_features(Graph& g, double noise, RngStream& rng) {
  const auto deg = in_degrees(g);
  g.features = Tensor::zeros(g.num_nodes, 5);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const std::size_t bucket = std::min<std::size_t>(std::max<std::size_t>(deg[i], 1), 4) - 1;
    g.features.at(i, bucket) = 1.0;
    g.features.at(i, 4) = rng.normal(0.0, noise);
  }
}

}  // namespace detail

inline constexpr std::size_t kMotifFeatureDim = 5;

inline Graph make_motif_graph(BasisKind basis, std::size_t basis_nodes, MotifKind motif, int label, double noise,
                              RngStream& rng) {
  Graph g;
  detail::build_basis(g, basis, basis_nodes, rng);
  detail::attach_motif(g, motif, rng);
  detail::assign_features(g, noise, rng);
  g.label = label;
  return g;
}

/// Generates `n_graphs` graphs and their split. Labels are uniform over the
/// motif list. In-distribution graphs are divided into train / val / test-id;
/// the `ood_fraction` share is drawn from the shifted distribution.
inline MotifDataset generate_motif_dataset(const MotifSpec& spec, std::size_t n_graphs, RngStream& rng) {
  spec.validate();
  if (n_graphs < 50) throw ConfigError("generate_motif_dataset needs at least 50 graphs");

  MotifDataset ds;
  ds.num_classes = spec.motifs.size();
  const auto n_ood = static_cast<std::size_t>(std::llround(spec.ood_fraction * static_cast<double>(n_graphs)));
  const std::size_t n_id = n_graphs - n_ood;

  std::vector<BasisKind> id_bases = spec.bases;
  if (spec.shift == SplitKind::covariate) {
    std::erase_if(id_bases, [&](BasisKind b) {
      return std::find(spec.held_out_bases.begin(), spec.held_out_bases.end(), b) != spec.held_out_bases.end();
    });
  }

  auto pick_size = [&](const SizeRange& r) { return r.min + rng.uniform_index(r.max - r.min + 1); };

  for (std::size_t i = 0; i < n_graphs; ++i) {
    const bool ood = i >= n_id;
    const auto label = static_cast<int>(rng.uniform_index(spec.motifs.size()));
    BasisKind basis;
    std::size_t size;
    if (!ood || spec.shift == SplitKind::none) {
      if (spec.shift == SplitKind::concept_shift && rng.bernoulli(spec.rho)) {
        basis = spec.bases[static_cast<std::size_t>(label) % spec.bases.size()];
      } else {
        basis = id_bases[rng.uniform_index(id_bases.size())];
      }
      size = pick_size(spec.basis_size);
    } else if (spec.shift == SplitKind::covariate) {
      basis = spec.held_out_bases[rng.uniform_index(spec.held_out_bases.size())];
      size = pick_size(spec.basis_size);
    } else if (spec.shift == SplitKind::concept_shift) {
      basis = spec.bases[rng.uniform_index(spec.bases.size())];
      size = pick_size(spec.basis_size);
    } else {  // size
      basis = id_bases[rng.uniform_index(id_bases.size())];
      size = pick_size(spec.ood_basis_size);
    }
    ds.graphs.push_back(make_motif_graph(basis, size, spec.motifs[static_cast<std::size_t>(label)], label,
                                         spec.feature_noise, rng));
    ds.basis_of.push_back(basis);
  }

  std::vector<std::size_t> id_idx(n_id);
  for (std::size_t i = 0; i < n_id; ++i) id_idx[i] = i;
  rng.shuffle(id_idx);
  const auto n_val = static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(n_id)));
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_id_fraction * static_cast<double>(n_id)));
  DatasetSplit& s = ds.split;
  s.val.assign(id_idx.begin(), id_idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test_id.assign(id_idx.begin() + static_cast<std::ptrdiff_t>(n_val),
                   id_idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(id_idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), id_idx.end());
  for (std::size_t i = n_id; i < n_graphs; ++i) s.test_ood.push_back(i);
  for (auto* v : {&s.train, &s.val, &s.test_id}) std::sort(v->begin(), v->end());
  s.descriptor.kind = spec.shift;
  s.descriptor.params = {{"rho", spec.rho}, {"ood_fraction", spec.ood_fraction}};
  return ds;
}

}  // namespace gduq
