#include "graphfl/fed.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace graphfl::fed {

using nlohmann::json;

FedState initial_state(gnn::ParamVector params, std::uint64_t seed) {
  FedState state;
  state.global_params = std::move(params);
  state.seed = seed;
  return state;
}

std::vector<ClientId> sample_clients(std::size_t num_clients, double rho, Rng& rng) {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("sample_clients: rho must lie in (0, 1]");
  if (num_clients == 0) throw InvalidArgument("sample_clients: no clients");
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(rho * static_cast<double>(num_clients))), 1,
      num_clients);
  std::vector<ClientId> all(num_clients);
  for (std::size_t i = 0; i < num_clients; ++i) all[i] = i;
  std::vector<ClientId> picked = rng.sample(std::move(all), k);
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

/// Running mean m_k = m_{k-1} + (x_k - m_{k-1}) / k, in the given order.
/// Exact for identical inputs, unlike sum-then-scale.
gnn::ParamVector ordered_mean(std::span<const gnn::ParamVector> xs, const gnn::ParamShape& shape,
                              const char* who) {
  gnn::ParamVector mean(shape);
  std::vector<double> delta(mean.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!(xs[k].shape() == shape)) throw ShapeError(std::string(who) + ": shapes differ");
    const auto x = xs[k].values();
    auto m = mean.values();
    if (k == 0) {
      std::copy(x.begin(), x.end(), m.begin());
      continue;
    }
    const double inv = 1.0 / static_cast<double>(k + 1);
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += (x[j] - m[j]) * inv;
  }
  return mean;
}

}  // namespace

gnn::ParamVector fedavg(std::span<const gnn::ParamVector> updates) {
  if (updates.empty()) throw InvalidArgument("fedavg: no updates");
  return ordered_mean(updates, updates.front().shape(), "fedavg");
}

gnn::ParamVector meta_aggregate(const gnn::ParamVector& theta,
                                std::span<const gnn::ParamVector> gradients, double beta,
                                bool normalize) {
  if (gradients.empty()) throw InvalidArgument("meta_aggregate: no gradients");
  if (!(beta > 0.0)) throw InvalidArgument("meta_aggregate: beta must be positive");
  gnn::ParamVector out = theta;
  if (normalize) {
    out.axpy(-beta, ordered_mean(gradients, theta.shape(), "meta_aggregate"));
    return out;
  }
  gnn::ParamVector sum(theta.shape());
  for (const auto& g : gradients) {
    if (!(g.shape() == theta.shape())) throw ShapeError("meta_aggregate: gradient shapes differ");
    sum.axpy(1.0, g);
  }
  out.axpy(-beta, sum);
  return out;
}

// ---------------------------------------------------------------------------
// Messages

json to_json(const gnn::ParamVector& params) {
  json blocks = json::array();
  for (const auto& b : params.shape().blocks()) {
    blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  }
  return {{"blocks", std::move(blocks)},
          {"values", std::vector<double>(params.values().begin(), params.values().end())}};
}

gnn::ParamVector params_from_json(const json& j) {
  std::vector<gnn::ParamBlock> blocks;
  for (const auto& b : j.at("blocks")) {
    blocks.push_back({b.at("name").get<std::string>(), b.at("rows").get<std::size_t>(),
                      b.at("cols").get<std::size_t>(), 0});
  }
  return gnn::ParamVector(gnn::ParamShape(std::move(blocks)),
                          j.at("values").get<std::vector<double>>());
}

namespace {

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

json to_json(const Broadcast& msg) {
  return {{"type", "broadcast"}, {"episode", msg.episode}, {"params", to_json(msg.params)}};
}

json to_json(const ClientUpdate& msg) {
  return {{"type", "client_update"},
          {"client_id", msg.client_id},
          {"payload_kind", msg.kind == PayloadKind::Gradient ? "gradient" : "params"},
          {"payload", to_json(msg.payload)},
          {"support_loss", optional_to_json(msg.support_loss)},
          {"query_loss", optional_to_json(msg.query_loss)}};
}

json to_json(const Aggregate& msg) {
  return {{"type", "aggregate"},
          {"episode", msg.episode},
          {"participants", msg.participants},
          {"params", to_json(msg.params)}};
}

Broadcast broadcast_from_json(const json& j) {
  if (j.at("type") != "broadcast") throw DataError("message is not a broadcast");
  return {j.at("episode").get<std::size_t>(), params_from_json(j.at("params"))};
}

ClientUpdate client_update_from_json(const json& j) {
  if (j.at("type") != "client_update") throw DataError("message is not a client update");
  ClientUpdate u;
  u.client_id = j.at("client_id").get<ClientId>();
  const std::string kind = j.at("payload_kind").get<std::string>();
  if (kind != "gradient" && kind != "params") throw DataError("unknown payload kind " + kind);
  u.kind = kind == "gradient" ? PayloadKind::Gradient : PayloadKind::Params;
  u.payload = params_from_json(j.at("payload"));
  u.support_loss = optional_from_json(j, "support_loss");
  u.query_loss = optional_from_json(j, "query_loss");
  return u;
}

Aggregate aggregate_from_json(const json& j) {
  if (j.at("type") != "aggregate") throw DataError("message is not an aggregate");
  return {j.at("episode").get<std::size_t>(), j.at("participants").get<std::vector<ClientId>>(),
          params_from_json(j.at("params"))};
}

// ---------------------------------------------------------------------------
// Transport

std::size_t thread_limit() {
  if (const char* env = std::getenv("GRAPHFL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t max_threads,
                  const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(n, std::max<std::size_t>(1, max_threads));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<ClientUpdate> InProcessTransport::exchange(const Broadcast& broadcast,
                                                       const std::vector<ClientId>& clients,
                                                       const ClientFn& client_fn) const {
  std::vector<ClientUpdate> updates(clients.size());
  parallel_for(clients.size(), max_threads_, [&](std::size_t i) {
    updates[i] = client_fn(broadcast, clients[i]);
    updates[i].client_id = clients[i];
  });
  return updates;
}

}  // namespace graphfl::fed
