#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphfl/common.hpp"
#include "graphfl/matrix.hpp"

namespace graphfl::graph {

/// Undirected, unweighted, attributed graph with node labels.
///
/// The adjacency is a symmetric 0/1 pattern with no self-loops and no
/// duplicate entries; every undirected edge is stored in both directions.
/// `node_ids` maps local indices to the ids of the graph this one was cut
/// from (identity for a freshly loaded dataset).
class GraphDataset {
 public:
  GraphDataset() = default;

  /// Validates every invariant and throws DataError on violation.
  GraphDataset(std::string name, std::size_t num_classes, CsrMatrix adjacency,
               DenseMatrix features, std::vector<ClassId> labels, std::vector<NodeId> node_ids);

  /// Builds the adjacency from an undirected edge list. Both orientations of
  /// an edge collapse to one edge; self-loops are rejected.
  static GraphDataset from_edges(std::string name, std::size_t num_classes,
                                 std::size_t num_nodes,
                                 const std::vector<std::pair<NodeId, NodeId>>& edges,
                                 DenseMatrix features, std::vector<ClassId> labels);

  const std::string& name() const noexcept { return name_; }
  std::size_t num_nodes() const noexcept { return labels_.size(); }
  std::size_t num_features() const noexcept { return features_.cols(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  /// Undirected edge count.
  std::size_t num_edges() const noexcept { return adjacency_.nnz() / 2; }

  const CsrMatrix& adjacency() const noexcept { return adjacency_; }
  const DenseMatrix& features() const noexcept { return features_; }
  const std::vector<ClassId>& labels() const noexcept { return labels_; }
  const std::vector<NodeId>& node_ids() const noexcept { return node_ids_; }

  /// Edges (u, v) with u < v, in ascending (u, v) order.
  std::vector<std::pair<NodeId, NodeId>> edge_list() const;

  /// Copy with a different feature matrix of the same shape.
  GraphDataset with_features(DenseMatrix features) const;

  friend bool operator==(const GraphDataset&, const GraphDataset&) = default;

 private:
  std::string name_;
  std::size_t num_classes_ = 0;
  CsrMatrix adjacency_;
  DenseMatrix features_;
  std::vector<ClassId> labels_;
  std::vector<NodeId> node_ids_;
};

/// S = D^(-1/2) (A + I) D^(-1/2), D the degree matrix of A + I.
struct PropagationMatrix {
  CsrMatrix matrix;
  /// Diagonal of D (degree including the self-loop).
  std::vector<double> degrees;
};

PropagationMatrix normalize_adjacency(const GraphDataset& g);

/// Divides each row by its sum; rows summing to zero are left unchanged.
DenseMatrix row_normalize(const DenseMatrix& x);
GraphDataset row_normalize_features(const GraphDataset& g);

struct SbmParams {
  std::size_t blocks = 2;
  std::size_t nodes_per_block = 50;
  double p_in = 0.3;
  double p_out = 0.01;
  double feature_noise = 0.1;
  std::uint64_t seed = 0;

  friend bool operator==(const SbmParams&, const SbmParams&) = default;
};

/// Stochastic block model. Node v belongs to block v / nodes_per_block, which
/// is also its label; features are one-hot(block) plus N(0, noise^2) noise.
GraphDataset generate_sbm(const SbmParams& params);

/// Induced subgraph on `nodes` (no duplicates). Local indices follow the
/// ascending order of `nodes`; node_ids composes with the parent's node_ids.
GraphDataset subgraph(const GraphDataset& g, const NodeSet& nodes);

/// Nodes of the largest connected component, ascending. Ties go to the
/// component containing the smallest node index.
NodeSet largest_component(const GraphDataset& g);

}  // namespace graphfl::graph
