#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graphfl/model.hpp"
#include "graphfl/rng.hpp"
#include "json.hpp"

namespace graphfl::fed {

using ClientId = std::size_t;

/// Per-episode record. Training fills in the participants and losses; the
/// harness adds the evaluation fields.
struct MetricsRecord {
  std::size_t episode = 0;
  std::vector<ClientId> participants;
  /// Mean over participants with a nonempty support (query) set.
  std::optional<double> mean_support_loss;
  std::optional<double> mean_query_loss;
  std::optional<double> global_test_accuracy;
  std::optional<double> pseudo_label_purity;
  /// Wall time of the episode; kept out of the deterministic metrics file.
  double wall_ms = 0.0;
};

struct FedState {
  /// Number of completed episodes.
  std::size_t episode = 0;
  gnn::ParamVector global_params;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> history;

  /// Substream for `purpose` in the current episode.
  Rng episode_rng(std::string_view purpose) const {
    return Rng::substream(seed, purpose, episode);
  }
};

FedState initial_state(gnn::ParamVector params, std::uint64_t seed);

/// round(rho * I) distinct clients (at least one), ascending.
std::vector<ClientId> sample_clients(std::size_t num_clients, double rho, Rng& rng);

/// Unweighted mean, accumulated in the given order.
gnn::ParamVector fedavg(std::span<const gnn::ParamVector> updates);

/// theta - beta * (normalize ? mean(g) : sum(g)).
gnn::ParamVector meta_aggregate(const gnn::ParamVector& theta,
                                std::span<const gnn::ParamVector> gradients, double beta,
                                bool normalize);

// Message vocabulary of one episode. Only an in-process transport exists;
// the records serialize to JSON so a wire transport can carry them.

struct Broadcast {
  std::size_t episode = 0;
  gnn::ParamVector params;
};

enum class PayloadKind { Gradient, Params };

struct ClientUpdate {
  ClientId client_id = 0;
  PayloadKind kind = PayloadKind::Params;
  gnn::ParamVector payload;
  std::optional<double> support_loss;
  std::optional<double> query_loss;
};

struct Aggregate {
  std::size_t episode = 0;
  std::vector<ClientId> participants;
  gnn::ParamVector params;
};

nlohmann::json to_json(const gnn::ParamVector& params);
gnn::ParamVector params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Broadcast& msg);
nlohmann::json to_json(const ClientUpdate& msg);
nlohmann::json to_json(const Aggregate& msg);
Broadcast broadcast_from_json(const nlohmann::json& j);
ClientUpdate client_update_from_json(const nlohmann::json& j);
Aggregate aggregate_from_json(const nlohmann::json& j);

/// Thread cap from GRAPHFL_THREADS (unset or invalid: hardware concurrency).
std::size_t thread_limit();

/// Synchronous in-process transport: delivers a broadcast to each selected
/// client, runs the clients (possibly concurrently) and returns their
/// updates in the order of `clients`.
class InProcessTransport {
 public:
  using ClientFn = std::function<ClientUpdate(const Broadcast&, ClientId)>;

  explicit InProcessTransport(std::size_t max_threads = thread_limit())
      : max_threads_(max_threads == 0 ? 1 : max_threads) {}

  /// The first failing client's exception (in client order) is rethrown.
  std::vector<ClientUpdate> exchange(const Broadcast& broadcast,
                                     const std::vector<ClientId>& clients,
                                     const ClientFn& client_fn) const;

 private:
  std::size_t max_threads_;
};

/// Runs fn(i) for i in [0, n) on up to `max_threads` threads. Results are
/// written by index, so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t max_threads, const std::function<void(std::size_t)>& fn);

}  // namespace graphfl::fed
