#include "graphfl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "graphfl/rng.hpp"

namespace graphfl::graph {

GraphDataset::GraphDataset(std::string name, std::size_t num_classes, CsrMatrix adjacency,
                           DenseMatrix features, std::vector<ClassId> labels,
                           std::vector<NodeId> node_ids)
    : name_(std::move(name)),
      num_classes_(num_classes),
      adjacency_(std::move(adjacency)),
      features_(std::move(features)),
      labels_(std::move(labels)),
      node_ids_(std::move(node_ids)) {
  const std::size_t n = labels_.size();
  if (adjacency_.rows() != n || adjacency_.cols() != n) {
    throw DataError("adjacency is not " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (features_.rows() != n) {
    throw DataError("feature matrix has " + std::to_string(features_.rows()) + " rows, expected " +
                    std::to_string(n));
  }
  if (node_ids_.size() != n) throw DataError("node_ids length does not match node count");
  for (std::size_t v = 0; v < n; ++v) {
    if (labels_[v] < 0 || static_cast<std::size_t>(labels_[v]) >= num_classes_) {
      throw DataError("label " + std::to_string(labels_[v]) + " of node " + std::to_string(v) +
                      " outside [0, " + std::to_string(num_classes_) + ")");
    }
    const auto cols = adjacency_.row_cols(v);
    const auto vals = adjacency_.row_values(v);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k] == v) throw DataError("self-loop stored at node " + std::to_string(v));
      if (vals[k] != 1.0) throw DataError("adjacency entry is not 1");
      if (adjacency_.at(cols[k], v) != 1.0) throw DataError("adjacency is not symmetric");
    }
  }
}

GraphDataset GraphDataset::from_edges(std::string name, std::size_t num_classes,
                                      std::size_t num_nodes,
                                      const std::vector<std::pair<NodeId, NodeId>>& edges,
                                      DenseMatrix features, std::vector<ClassId> labels) {
  std::vector<Triplet> entries;
  entries.reserve(2 * edges.size());
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) throw DataError("edge endpoint out of range");
    if (u == v) throw DataError("self-loop at node " + std::to_string(u));
    entries.push_back({u, v, 1.0});
    entries.push_back({v, u, 1.0});
  }
  // Collapse duplicates to a single unit entry.
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [](const Triplet& a, const Triplet& b) {
                              return a.row == b.row && a.col == b.col;
                            }),
                entries.end());
  std::vector<NodeId> ids(num_nodes);
  std::iota(ids.begin(), ids.end(), NodeId{0});
  return GraphDataset(std::move(name), num_classes,
                      CsrMatrix::from_triplets(num_nodes, num_nodes, std::move(entries)),
                      std::move(features), std::move(labels), std::move(ids));
}

std::vector<std::pair<NodeId, NodeId>> GraphDataset::edge_list() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(num_edges());
  for (std::size_t u = 0; u < num_nodes(); ++u) {
    for (std::uint32_t v : adjacency_.row_cols(u)) {
      if (u < v) out.emplace_back(static_cast<NodeId>(u), v);
    }
  }
  return out;
}

GraphDataset GraphDataset::with_features(DenseMatrix features) const {
  if (features.rows() != features_.rows() || features.cols() != features_.cols()) {
    throw ShapeError("with_features: shape differs from the original feature matrix");
  }
  GraphDataset out = *this;
  out.features_ = std::move(features);
  return out;
}

PropagationMatrix normalize_adjacency(const GraphDataset& g) {
  const CsrMatrix& a = g.adjacency();
  const std::size_t n = g.num_nodes();
  std::vector<double> degree(n);
  for (std::size_t v = 0; v < n; ++v) degree[v] = 1.0 + static_cast<double>(a.row_cols(v).size());

  std::vector<std::size_t> row_ptr(n + 1, 0);
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;
  col_idx.reserve(a.nnz() + n);
  values.reserve(a.nnz() + n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto cols = a.row_cols(v);
    bool self_done = false;
    // 1 / sqrt(d_v d_u) is symmetric in (v, u) bit for bit.
    auto push = [&](std::uint32_t u) {
      col_idx.push_back(u);
      values.push_back(1.0 / std::sqrt(degree[v] * degree[u]));
    };
    for (std::uint32_t u : cols) {
      if (!self_done && u > v) {
        push(static_cast<std::uint32_t>(v));
        self_done = true;
      }
      push(u);
    }
    if (!self_done) push(static_cast<std::uint32_t>(v));
    row_ptr[v + 1] = values.size();
  }
  return {CsrMatrix(n, n, std::move(row_ptr), std::move(col_idx), std::move(values)),
          std::move(degree)};
}

DenseMatrix row_normalize(const DenseMatrix& x) {
  DenseMatrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double sum = 0.0;
    for (double v : row) sum += v;
    if (sum == 0.0) continue;
    for (double& v : row) v /= sum;
  }
  return out;
}

GraphDataset row_normalize_features(const GraphDataset& g) {
  return g.with_features(row_normalize(g.features()));
}

GraphDataset generate_sbm(const SbmParams& p) {
  if (!(p.p_out >= 0.0 && p.p_out < p.p_in && p.p_in <= 1.0)) {
    throw InvalidArgument("generate_sbm: require 0 <= p_out < p_in <= 1");
  }
  if (p.blocks == 0 || p.nodes_per_block == 0) {
    throw InvalidArgument("generate_sbm: blocks and nodes_per_block must be positive");
  }
  if (p.feature_noise < 0.0) throw InvalidArgument("generate_sbm: feature_noise must be >= 0");
  const std::size_t n = p.blocks * p.nodes_per_block;
  Rng edge_rng = Rng::substream(p.seed, "sbm/edges");
  Rng feature_rng = Rng::substream(p.seed, "sbm/features");

  std::vector<ClassId> labels(n);
  for (std::size_t v = 0; v < n; ++v) labels[v] = static_cast<ClassId>(v / p.nodes_per_block);

  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double prob = labels[u] == labels[v] ? p.p_in : p.p_out;
      if (edge_rng.bernoulli(prob)) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  }

  DenseMatrix features(n, p.blocks);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t c = 0; c < p.blocks; ++c) {
      const double noise = p.feature_noise > 0.0 ? p.feature_noise * feature_rng.normal() : 0.0;
      features(v, c) = (static_cast<std::size_t>(labels[v]) == c ? 1.0 : 0.0) + noise;
    }
  }
  return GraphDataset::from_edges("sbm", p.blocks, n, edges, std::move(features),
                                  std::move(labels));
}

GraphDataset subgraph(const GraphDataset& g, const NodeSet& nodes) {
  NodeSet sorted = nodes;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("subgraph: duplicate node id");
  }
  if (!sorted.empty() && sorted.back() >= g.num_nodes()) {
    throw InvalidArgument("subgraph: node id " + std::to_string(sorted.back()) + " out of range");
  }
  constexpr NodeId kAbsent = ~NodeId{0};
  std::vector<NodeId> local(g.num_nodes(), kAbsent);
  for (std::size_t i = 0; i < sorted.size(); ++i) local[sorted[i]] = static_cast<NodeId>(i);

  const std::size_t m = sorted.size();
  std::vector<std::size_t> row_ptr(m + 1, 0);
  std::vector<std::uint32_t> col_idx;
  DenseMatrix features(m, g.num_features());
  std::vector<ClassId> labels(m);
  std::vector<NodeId> ids(m);
  for (std::size_t i = 0; i < m; ++i) {
    const NodeId v = sorted[i];
    // Parent columns are ascending and the local map is monotone, so the
    // restricted row stays sorted.
    for (std::uint32_t u : g.adjacency().row_cols(v)) {
      if (local[u] != kAbsent) col_idx.push_back(local[u]);
    }
    row_ptr[i + 1] = col_idx.size();
    const auto src = g.features().row(v);
    std::copy(src.begin(), src.end(), features.row(i).begin());
    labels[i] = g.labels()[v];
    ids[i] = g.node_ids()[v];
  }
  std::vector<double> values(col_idx.size(), 1.0);
  return GraphDataset(g.name(), g.num_classes(),
                      CsrMatrix(m, m, std::move(row_ptr), std::move(col_idx), std::move(values)),
                      std::move(features), std::move(labels), std::move(ids));
}

NodeSet largest_component(const GraphDataset& g) {
  const std::size_t n = g.num_nodes();
  std::vector<std::size_t> component(n, SIZE_MAX);
  std::vector<std::size_t> sizes;
  std::vector<NodeId> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (component[s] != SIZE_MAX) continue;
    const std::size_t id = sizes.size();
    sizes.push_back(0);
    component[s] = id;
    stack.push_back(static_cast<NodeId>(s));
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      ++sizes[id];
      for (std::uint32_t u : g.adjacency().row_cols(v)) {
        if (component[u] == SIZE_MAX) {
          component[u] = id;
          stack.push_back(u);
        }
      }
    }
  }
  NodeSet out;
  if (n == 0) return out;
  const std::size_t best =
      static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t v = 0; v < n; ++v) {
    if (component[v] == best) out.push_back(static_cast<NodeId>(v));
  }
  return out;
}

}  // namespace graphfl::graph
