#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graphfl/common.hpp"
#include "graphfl/graph.hpp"
#include "json.hpp"

namespace graphfl::partition {

enum class Regime { NonIid, NewDomain, Overlap };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& s);

/// One client's view of the experiment. All node ids are ids of the full
/// dataset graph; labeled sets are sorted by node id.
struct ClientSplit {
  std::size_t id = 0;
  /// Nodes of the client's subgraph (ascending), or nullopt for the full graph.
  std::optional<NodeSet> nodes;
  LabeledNodes support;
  LabeledNodes query;
  /// New-label-domain regime only: labeled nodes for fast adaptation.
  LabeledNodes adaptation;
  /// New-label-domain regime only: this client's test nodes (labels withheld).
  NodeSet test;
  /// New-label-domain regime only: the client's new classes, ascending. The
  /// adapted output column j predicts new_classes[j].
  std::vector<ClassId> new_classes;

  bool full_graph() const noexcept { return !nodes.has_value(); }
  /// support followed by query, sorted by node id.
  LabeledNodes all_labeled() const;

  friend bool operator==(const ClientSplit&, const ClientSplit&) = default;
};

struct ExperimentSplit {
  Regime regime = Regime::NonIid;
  std::uint64_t seed = 0;
  std::vector<ClientSplit> clients;
  /// Evaluation nodes (ascending). Their labels never appear in any client's
  /// support or query set.
  NodeSet test_nodes;
  std::size_t k0 = 0;
  /// Overlap regime only; nullopt when every client holds the full graph.
  std::optional<double> gamma;
  /// Generation parameters, recorded for replay.
  nlohmann::json params = nlohmann::json::object();

  friend bool operator==(const ExperimentSplit&, const ExperimentSplit&) = default;
};

/// Samples `labels_per_class` nodes per class, shuffles the pool and deals it
/// round-robin to the clients; each client's share is split in half into
/// support and query (support takes the odd node). Every client sees the
/// full graph. test_nodes is left empty.
ExperimentSplit partition_labels_noniid(const graph::GraphDataset& g, std::size_t num_clients,
                                        std::size_t labels_per_class, std::uint64_t seed);

/// Uniform sample of n nodes outside `excluded`, returned ascending.
NodeSet sample_test_set(const graph::GraphDataset& g, const NodeSet& excluded, std::size_t n,
                        std::uint64_t seed);

struct NewDomainParams {
  std::size_t num_clients = 50;
  std::size_t k0 = 2;
  std::size_t n_per_class = 10;
  /// Adaptation nodes per new class; nullopt = support size / k0.
  std::optional<std::size_t> n_adapt;
  std::size_t n_test_per_class = 20;
  /// When set, classes are permuted with this seed before the split into the
  /// first K - k0 (training) and last k0 (new) classes.
  std::optional<std::uint64_t> class_permutation_seed;
  std::uint64_t seed = 0;
};

/// Per client: k0 training classes drawn from the first K - k0 classes with
/// n_per_class nodes each (halved into support and query per class), plus k0
/// new classes with n_adapt adaptation and n_test_per_class test nodes each.
ExperimentSplit partition_new_domain(const graph::GraphDataset& g, const NewDomainParams& params);

/// Shuffled node ids cut into num_clients windows of width
/// w = ceil(N / (I - gamma (I - 1))) at stride round((1 - gamma) w); the last
/// window is extended to the final node. Each window is returned ascending.
std::vector<NodeSet> partition_overlap(const graph::GraphDataset& g, std::size_t num_clients,
                                       double gamma, std::uint64_t seed);

/// Non-IID label dealing restricted to client windows: each sampled labeled
/// node goes to the least-loaded client whose window contains it (rotating
/// tie-break, so it reduces to round-robin when every window is the full
/// graph). Clients keep their windows as subgraphs.
ExperimentSplit partition_labels_overlap(const graph::GraphDataset& g,
                                         const std::vector<NodeSet>& windows,
                                         std::size_t labels_per_class, double gamma,
                                         std::uint64_t seed);

/// Nodes of the client's graph that are neither its labeled nodes nor in
/// `excluded` (global ids, ascending).
NodeSet unlabeled_nodes(const ClientSplit& client, std::size_t num_nodes_full,
                        const NodeSet& excluded);

/// Structural invariants (disjoint support/query, no test leakage, label
/// domains in the new-domain regime). Throws InvalidArgument on violation.
void validate_split(const ExperimentSplit& split, const graph::GraphDataset& g);

nlohmann::json to_json(const ExperimentSplit& split);
ExperimentSplit split_from_json(const nlohmann::json& j);
void save_split(const ExperimentSplit& split, const std::filesystem::path& path);
ExperimentSplit load_split(const std::filesystem::path& path);

}  // namespace graphfl::partition
