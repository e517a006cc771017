#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "graphfl/graph.hpp"

namespace graphfl::io {

/// Counts of edge-list irregularities repaired during ingestion.
struct IngestStats {
  std::size_t duplicate_edges = 0;
  std::size_t self_loops = 0;
};

/// Reads a dataset directory:
///   manifest.json  {"num_nodes", "num_features", "num_classes", "name"}
///   edges.csv      "src,dst" header, one undirected edge per line
///   features.csv   "node,f0,...,f{D-1}" header, one row per node
///   labels.csv     "node,label" header
/// Both orientations of an edge and repeated edges collapse to one edge;
/// self-loops are dropped. Both are counted in `stats`.
graph::GraphDataset load_dataset(const std::filesystem::path& dir, IngestStats* stats = nullptr);

/// Writes the canonical form of `g`: edges listed once with src < dst,
/// reals printed with 17 significant digits.
void write_dataset(const graph::GraphDataset& g, const std::filesystem::path& dir);

/// Dataset read from the LINQS citation format (`<id> <features...> <class>`
/// content file plus `<cited> <citing>` pairs).
struct LinqsDataset {
  graph::GraphDataset graph;
  /// Class names in label-index order (sorted lexicographically).
  std::vector<std::string> class_names;
  /// Original paper ids in node order.
  std::vector<std::string> paper_ids;
  /// Citations whose endpoint is absent from the content file.
  std::size_t dangling_citations = 0;
  IngestStats stats;
};

LinqsDataset load_linqs(const std::filesystem::path& content, const std::filesystem::path& cites,
                        const std::string& name);

/// Restricts a LINQS dataset to its largest connected component.
LinqsDataset restrict_to_largest_component(const LinqsDataset& data);

}  // namespace graphfl::io
