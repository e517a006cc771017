#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphfl/fed.hpp"
#include "graphfl/graph.hpp"
#include "graphfl/model.hpp"
#include "graphfl/partition.hpp"

namespace graphfl::algo {

enum class SecondOrder { Exact, FiniteDiff, FirstOrder };
enum class BaselineLabels { SupportOnly, All };

std::string to_string(SecondOrder mode);
SecondOrder second_order_from_string(const std::string& s);
std::string to_string(BaselineLabels mode);
BaselineLabels baseline_labels_from_string(const std::string& s);

struct TrainConfig {
  double alpha = 0.05;
  double beta = 0.5;
  std::size_t episodes = 50;
  std::size_t local_steps = 15;
  double rho = 0.2;
  SecondOrder second_order = SecondOrder::FiniteDiff;
  std::size_t adapt_steps = 15;
  /// Learning rate of test-time adaptation; nullopt = alpha.
  std::optional<double> adapt_alpha;
  BaselineLabels baseline_labels = BaselineLabels::All;
  /// Divide the server meta step of the non-IID algorithm by |C_t|.
  bool normalize_meta = true;
  std::uint64_t seed = 0;
  /// Client parallelism cap; 0 = GRAPHFL_THREADS / hardware.
  std::size_t threads = 0;

  double effective_adapt_alpha() const { return adapt_alpha.value_or(alpha); }
  /// Throws ConfigError (with the field name) on invalid values, including
  /// an exact second-order term requested for a model without one.
  void validate(const gnn::ModelSpec& spec) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// One client's training view, in the local node ids of its graph.
struct ClientTask {
  fed::ClientId id = 0;
  std::shared_ptr<const gnn::ModelContext> ctx;
  /// Local -> global node id; empty when the client holds the full graph.
  NodeSet local_to_global;
  /// Labels are output-head indices (see Federation::head_classes).
  LabeledNodes support;
  LabeledNodes query;
  /// Labels index new_classes.
  LabeledNodes adaptation;
  NodeSet test;
  std::vector<ClassId> new_classes;

  NodeId global_id(NodeId local) const {
    return local_to_global.empty() ? local : local_to_global[local];
  }
  /// support and query merged by node id, or support alone.
  LabeledNodes training_labels(BaselineLabels mode) const;
};

/// Everything the training code sees. Test labels are not part of it.
struct Federation {
  gnn::ModelSpec spec;
  partition::Regime regime = partition::Regime::NonIid;
  std::size_t num_features = 0;
  std::size_t num_nodes = 0;
  /// Output column j of the trained model predicts head_classes[j].
  std::vector<ClassId> head_classes;
  std::size_t k0 = 0;
  std::shared_ptr<const gnn::ModelContext> global_ctx;
  std::vector<ClientTask> clients;

  std::size_t num_outputs() const noexcept { return head_classes.size(); }
  /// Union of the clients' training labels in global ids, sorted by node.
  LabeledNodes pooled_training_labels(BaselineLabels mode) const;
};

/// Reads only the adjacency and features of `g`; labels come from the split.
Federation build_federation(const graph::GraphDataset& g, const partition::ExperimentSplit& split,
                            const gnn::ModelSpec& spec);

/// Global model initialization shared by every federated and centralized
/// algorithm for a given seed.
gnn::ParamVector initial_params(const Federation& fed, std::uint64_t seed);
fed::FedState initial_state(const Federation& fed, const TrainConfig& cfg);

// Episodes. Each returns the state after one more episode, with a
// MetricsRecord appended whose losses are means over the participants:
// support loss of the locally adapted model, query loss of that model.

/// Client-side MAML on support/query, first-order meta step on the server,
/// then a FedAvg round of local training from the meta-updated model.
fed::FedState graphfl_noniid_episode(fed::FedState state, const Federation& fed,
                                     const TrainConfig& cfg);

/// T_e client meta-updates with the (I - alpha H) correction, then FedAvg.
fed::FedState graphfl_newdomain_episode(fed::FedState state, const Federation& fed,
                                        const TrainConfig& cfg);

/// FedAvg of local gradient descent on the clients' training labels.
fed::FedState fl_baseline_episode(fed::FedState state, const Federation& fed,
                                  const TrainConfig& cfg);

/// T_e steps on every client's pooled labels over the full graph.
fed::FedState centralized_episode(fed::FedState state, const Federation& fed,
                                  const TrainConfig& cfg);

enum class Algorithm { GraphFlNonIid, GraphFlNewDomain, Fl, FlTl, Il, Cl };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& s);
bool requires_new_domain(Algorithm algorithm) noexcept;

/// Called after every episode with the new record and global parameters.
using EpisodeObserver = std::function<void(fed::MetricsRecord&, const gnn::ParamVector&)>;

/// cfg.episodes episodes of a federated or centralized algorithm (not Il).
/// FlTl trains like Fl; adaptation happens in adapt_and_predict.
fed::FedState run_episodes(Algorithm algorithm, fed::FedState state, const Federation& fed,
                           const TrainConfig& cfg, const EpisodeObserver& observer = {});

/// T*T_e steps of centralized descent from `init`.
gnn::ParamVector centralized_learning(const gnn::ModelContext& ctx, const LabeledNodes& labels,
                                      const gnn::ParamVector& init, const TrainConfig& cfg);

/// Re-initializes the output block to k0 columns and runs `steps` descent
/// steps on the adaptation nodes.
gnn::ParamVector fast_adapt(const gnn::ParamVector& params, const gnn::ModelContext& ctx,
                            const LabeledNodes& adaptation, std::size_t k0, double alpha,
                            std::size_t steps, std::uint64_t seed);

struct ClientPredictions {
  fed::ClientId id = 0;
  /// Global node ids of the client's test nodes.
  NodeSet nodes;
  /// Predicted dataset classes, aligned with nodes.
  std::vector<ClassId> predicted;
};

/// New-domain testing: per client, fast_adapt the global model on the
/// client's adaptation nodes and predict its test nodes.
std::vector<ClientPredictions> adapt_and_predict(const gnn::ParamVector& params,
                                                 const Federation& fed, const TrainConfig& cfg);

/// Per client, a model trained from a fresh seeded init for T*T_e steps on
/// the client's own labels; nullopt for clients without labels.
std::vector<std::optional<gnn::ParamVector>> individual_learning(const Federation& fed,
                                                                 const TrainConfig& cfg);

/// Predicted dataset classes of `nodes` (global ids) under the global model.
std::vector<ClassId> predict_classes(const Federation& fed, const gnn::ParamVector& params,
                                     std::span<const NodeId> nodes);

/// Fraction of nodes whose argmax class equals truth. `head_classes` maps
/// output columns to classes (empty: identity).
double evaluate(const gnn::ModelContext& ctx, const gnn::ParamVector& params,
                std::span<const NodeId> test_nodes, std::span<const ClassId> truth,
                std::span<const ClassId> head_classes = {});

struct SelfTrainResult {
  partition::ExperimentSplit split;
  /// Selected nodes (global ids) with their predicted dataset classes.
  LabeledNodes pseudo_labels;
};

/// Per client: trains a local model on its labels, predicts its unlabeled
/// nodes (never test, adaptation or labeled nodes) and appends the
/// n_pseudo_per_class most confident predictions of each predicted class to
/// its support set.
SelfTrainResult self_train_augment(const partition::ExperimentSplit& split, const Federation& fed,
                                   const TrainConfig& cfg, std::size_t n_pseudo_per_class);

}  // namespace graphfl::algo
