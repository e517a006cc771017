#include "graphfl/algorithms.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

namespace graphfl::algo {

using fed::ClientUpdate;
using fed::FedState;
using fed::MetricsRecord;
using gnn::ParamVector;

std::string to_string(SecondOrder mode) {
  switch (mode) {
    case SecondOrder::Exact: return "exact";
    case SecondOrder::FiniteDiff: return "finite_diff";
    case SecondOrder::FirstOrder: return "first_order";
  }
  return "?";
}

SecondOrder second_order_from_string(const std::string& s) {
  if (s == "exact") return SecondOrder::Exact;
  if (s == "finite_diff") return SecondOrder::FiniteDiff;
  if (s == "first_order") return SecondOrder::FirstOrder;
  throw InvalidArgument("unknown second_order mode '" + s + "'");
}

std::string to_string(BaselineLabels mode) {
  return mode == BaselineLabels::All ? "all" : "support_only";
}

BaselineLabels baseline_labels_from_string(const std::string& s) {
  if (s == "all") return BaselineLabels::All;
  if (s == "support_only") return BaselineLabels::SupportOnly;
  throw InvalidArgument("unknown baseline_labels mode '" + s + "'");
}

void TrainConfig::validate(const gnn::ModelSpec& spec) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha", "must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta", "must be positive");
  if (episodes < 1) throw ConfigError("episodes", "must be at least 1");
  if (local_steps < 1) throw ConfigError("local_steps", "must be at least 1");
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho", "must lie in (0, 1]");
  if (adapt_alpha && !(*adapt_alpha > 0.0)) throw ConfigError("adapt_alpha", "must be positive");
  if (second_order == SecondOrder::Exact && spec.kind != gnn::ModelKind::Sgc) {
    throw ConfigError("second_order",
                      "exact Hessian-vector products are only available for the sgc model");
  }
}

LabeledNodes ClientTask::training_labels(BaselineLabels mode) const {
  LabeledNodes out = support;
  if (mode == BaselineLabels::All) {
    out.insert(out.end(), query.begin(), query.end());
    std::sort(out.begin(), out.end(),
              [](const LabeledNode& a, const LabeledNode& b) { return a.node < b.node; });
  }
  return out;
}

LabeledNodes Federation::pooled_training_labels(BaselineLabels mode) const {
  LabeledNodes out;
  for (const auto& c : clients) {
    for (const auto& ln : c.training_labels(mode)) out.push_back({c.global_id(ln.node), ln.label});
  }
  std::sort(out.begin(), out.end(), [](const LabeledNode& a, const LabeledNode& b) {
    return a.node != b.node ? a.node < b.node : a.label < b.label;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Federation

namespace {

NodeId to_local(const NodeSet& local_to_global, NodeId global) {
  if (local_to_global.empty()) return global;
  const auto it = std::lower_bound(local_to_global.begin(), local_to_global.end(), global);
  if (it == local_to_global.end() || *it != global) {
    throw InvalidArgument("node " + std::to_string(global) + " is outside the client graph");
  }
  return static_cast<NodeId>(it - local_to_global.begin());
}

ClassId index_of(const std::vector<ClassId>& classes, ClassId c) {
  const auto it = std::lower_bound(classes.begin(), classes.end(), c);
  if (it == classes.end() || *it != c) {
    throw InvalidArgument("class " + std::to_string(c) + " has no output column");
  }
  return static_cast<ClassId>(it - classes.begin());
}

LabeledNodes localize(const LabeledNodes& nodes, const NodeSet& local_to_global,
                      const std::vector<ClassId>& classes) {
  LabeledNodes out;
  out.reserve(nodes.size());
  for (const auto& ln : nodes) {
    out.push_back({to_local(local_to_global, ln.node), index_of(classes, ln.label)});
  }
  return out;
}

}  // namespace

Federation build_federation(const graph::GraphDataset& g, const partition::ExperimentSplit& split,
                            const gnn::ModelSpec& spec) {
  Federation fed;
  fed.spec = spec;
  fed.regime = split.regime;
  fed.num_features = g.num_features();
  fed.num_nodes = g.num_nodes();
  fed.k0 = split.k0;
  fed.global_ctx = std::make_shared<const gnn::ModelContext>(spec, g);

  if (split.regime == partition::Regime::NewDomain) {
    for (const auto& c : split.clients) {
      for (const auto* set : {&c.support, &c.query}) {
        for (const auto& ln : *set) fed.head_classes.push_back(ln.label);
      }
    }
    std::sort(fed.head_classes.begin(), fed.head_classes.end());
    fed.head_classes.erase(std::unique(fed.head_classes.begin(), fed.head_classes.end()),
                           fed.head_classes.end());
  } else {
    for (std::size_t k = 0; k < g.num_classes(); ++k) {
      fed.head_classes.push_back(static_cast<ClassId>(k));
    }
  }

  for (const auto& c : split.clients) {
    ClientTask task;
    task.id = c.id;
    if (c.full_graph()) {
      task.ctx = fed.global_ctx;
    } else {
      task.local_to_global = *c.nodes;
      task.ctx = std::make_shared<const gnn::ModelContext>(spec, graph::subgraph(g, *c.nodes));
    }
    task.support = localize(c.support, task.local_to_global, fed.head_classes);
    task.query = localize(c.query, task.local_to_global, fed.head_classes);
    task.new_classes = c.new_classes;
    task.adaptation = localize(c.adaptation, task.local_to_global, task.new_classes);
    for (NodeId v : c.test) task.test.push_back(to_local(task.local_to_global, v));
    fed.clients.push_back(std::move(task));
  }
  return fed;
}

ParamVector initial_params(const Federation& fed, std::uint64_t seed) {
  return gnn::init_params(fed.spec, fed.num_features, fed.num_outputs(),
                          derive_seed(seed, "init/global"));
}

FedState initial_state(const Federation& fed, const TrainConfig& cfg) {
  return fed::initial_state(initial_params(fed, cfg.seed), cfg.seed);
}

// ---------------------------------------------------------------------------
// Episodes

namespace {

/// Gradient descent that tolerates the degenerate inputs of the reference
/// reductions: no labels, no steps or a zero learning rate leave params as is.
ParamVector descend(const gnn::ModelContext& ctx, ParamVector params, const LabeledNodes& nodes,
                    double alpha, std::size_t steps) {
  if (nodes.empty() || steps == 0 || alpha == 0.0) return params;
  return gnn::sgd_steps(ctx, std::move(params), nodes, alpha, steps);
}

std::optional<double> loss_if_any(const gnn::ModelContext& ctx, const ParamVector& params,
                                  const LabeledNodes& nodes) {
  if (nodes.empty()) return std::nullopt;
  return gnn::loss(ctx, params, nodes);
}

std::optional<double> mean_of(const std::vector<ClientUpdate>& updates,
                              std::optional<double> ClientUpdate::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& u : updates) {
    if (const auto& v = u.*field) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

/// Runs a client computation, attributing divergence to the client.
template <typename F>
ClientUpdate on_client(fed::ClientId id, F&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    throw e.with_client(static_cast<long>(id));
  }
}

std::vector<ClientUpdate> exchange(const TrainConfig& cfg, const fed::Broadcast& b,
                                   const std::vector<fed::ClientId>& ids,
                                   const fed::InProcessTransport::ClientFn& fn) {
  const fed::InProcessTransport transport(cfg.threads == 0 ? fed::thread_limit() : cfg.threads);
  return transport.exchange(b, ids, fn);
}

std::vector<ParamVector> payloads(std::vector<ClientUpdate>& updates) {
  std::vector<ParamVector> out;
  out.reserve(updates.size());
  for (auto& u : updates) out.push_back(std::move(u.payload));
  return out;
}

FedState finish_episode(FedState state, ParamVector next, std::vector<fed::ClientId> ids,
                        const std::vector<ClientUpdate>& updates) {
  if (!next.all_finite()) {
    throw DivergenceError(state.episode, -1, "non-finite global model after aggregation");
  }
  MetricsRecord rec;
  rec.participants = std::move(ids);
  rec.mean_support_loss = mean_of(updates, &ClientUpdate::support_loss);
  rec.mean_query_loss = mean_of(updates, &ClientUpdate::query_loss);
  state.global_params = std::move(next);
  ++state.episode;
  rec.episode = state.episode;
  state.history.push_back(std::move(rec));
  return state;
}

std::vector<fed::ClientId> sample_for(const FedState& state, const Federation& fed,
                                      const TrainConfig& cfg) {
  Rng rng = state.episode_rng("sample_clients");
  return fed::sample_clients(fed.clients.size(), cfg.rho, rng);
}

}  // namespace

FedState graphfl_noniid_episode(FedState state, const Federation& fed, const TrainConfig& cfg) {
  const auto ids = sample_for(state, fed, cfg);
  const fed::Broadcast start{state.episode, state.global_params};

  // Stage I: inner adaptation on support, meta gradient on query.
  auto stage1 = exchange(cfg, start, ids, [&](const fed::Broadcast& b, fed::ClientId id) {
    return on_client(id, [&] {
      const ClientTask& c = fed.clients.at(id);
      ParamVector adapted = descend(*c.ctx, b.params, c.support, cfg.alpha, cfg.local_steps);
      ClientUpdate u;
      u.kind = fed::PayloadKind::Gradient;
      u.support_loss = loss_if_any(*c.ctx, adapted, c.support);
      if (c.query.empty()) {
        u.payload = ParamVector(b.params.shape());
      } else {
        gnn::LossGrad lg = gnn::loss_and_grad(*c.ctx, adapted, c.query);
        if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
          throw DivergenceError(cfg.local_steps, -1, "non-finite query gradient");
        }
        u.query_loss = lg.loss;
        u.payload = std::move(lg.grad);
      }
      return u;
    });
  });
  const std::vector<ParamVector> grads = payloads(stage1);
  const ParamVector meta =
      fed::meta_aggregate(state.global_params, grads, cfg.beta, cfg.normalize_meta);

  // Stage II: a FedAvg round of support training from the meta model.
  const fed::Broadcast second{state.episode, meta};
  auto stage2 = exchange(cfg, second, ids, [&](const fed::Broadcast& b, fed::ClientId id) {
    return on_client(id, [&] {
      const ClientTask& c = fed.clients.at(id);
      ClientUpdate u;
      u.payload = descend(*c.ctx, b.params, c.support, cfg.alpha, cfg.local_steps);
      return u;
    });
  });
  const std::vector<ParamVector> local = payloads(stage2);
  return finish_episode(std::move(state), fed::fedavg(local), ids, stage1);
}

FedState graphfl_newdomain_episode(FedState state, const Federation& fed, const TrainConfig& cfg) {
  if (cfg.second_order == SecondOrder::Exact && fed.spec.kind != gnn::ModelKind::Sgc) {
    throw ConfigError("second_order", "exact Hessian-vector products need the sgc model");
  }
  const auto ids = sample_for(state, fed, cfg);
  const fed::Broadcast start{state.episode, state.global_params};

  auto updates = exchange(cfg, start, ids, [&](const fed::Broadcast& b, fed::ClientId id) {
    return on_client(id, [&] {
      const ClientTask& c = fed.clients.at(id);
      ParamVector theta = b.params;
      ClientUpdate u;
      if (!c.support.empty() && !c.query.empty()) {
        for (std::size_t step = 0; step < cfg.local_steps; ++step) {
          ParamVector adapted = theta;
          if (cfg.alpha != 0.0) adapted.axpy(-cfg.alpha, gnn::grad(*c.ctx, theta, c.support));
          gnn::LossGrad q = gnn::loss_and_grad(*c.ctx, adapted, c.query);
          ParamVector correction = q.grad;
          if (cfg.second_order != SecondOrder::FirstOrder && cfg.alpha != 0.0) {
            const auto mode = cfg.second_order == SecondOrder::Exact ? gnn::HvpMode::Analytic
                                                                     : gnn::HvpMode::FiniteDiff;
            correction.axpy(-cfg.alpha, gnn::hvp(*c.ctx, theta, c.support, q.grad, mode));
          }
          if (!std::isfinite(q.loss) || !correction.all_finite()) {
            throw DivergenceError(step, -1,
                                  "non-finite meta update at local step " + std::to_string(step));
          }
          theta.axpy(-cfg.beta, correction);
          u.query_loss = q.loss;
        }
      }
      u.support_loss = loss_if_any(*c.ctx, theta, c.support);
      u.payload = std::move(theta);
      return u;
    });
  });
  const std::vector<ParamVector> local = payloads(updates);
  return finish_episode(std::move(state), fed::fedavg(local), ids, updates);
}

FedState fl_baseline_episode(FedState state, const Federation& fed, const TrainConfig& cfg) {
  const auto ids = sample_for(state, fed, cfg);
  const fed::Broadcast start{state.episode, state.global_params};
  auto updates = exchange(cfg, start, ids, [&](const fed::Broadcast& b, fed::ClientId id) {
    return on_client(id, [&] {
      const ClientTask& c = fed.clients.at(id);
      ClientUpdate u;
      u.payload = descend(*c.ctx, b.params, c.training_labels(cfg.baseline_labels), cfg.alpha,
                          cfg.local_steps);
      u.support_loss = loss_if_any(*c.ctx, u.payload, c.support);
      u.query_loss = loss_if_any(*c.ctx, u.payload, c.query);
      return u;
    });
  });
  const std::vector<ParamVector> local = payloads(updates);
  return finish_episode(std::move(state), fed::fedavg(local), ids, updates);
}

FedState centralized_episode(FedState state, const Federation& fed, const TrainConfig& cfg) {
  const LabeledNodes labels = fed.pooled_training_labels(cfg.baseline_labels);
  ClientUpdate u;
  u.payload = descend(*fed.global_ctx, state.global_params, labels, cfg.alpha, cfg.local_steps);
  u.support_loss = loss_if_any(*fed.global_ctx, u.payload, labels);
  ParamVector next = std::move(u.payload);
  return finish_episode(std::move(state), std::move(next), {}, {u});
}

// ---------------------------------------------------------------------------

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::GraphFlNonIid: return "graphfl_noniid";
    case Algorithm::GraphFlNewDomain: return "graphfl_newdomain";
    case Algorithm::Fl: return "fl";
    case Algorithm::FlTl: return "fl_tl";
    case Algorithm::Il: return "il";
    case Algorithm::Cl: return "cl";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  for (Algorithm a : {Algorithm::GraphFlNonIid, Algorithm::GraphFlNewDomain, Algorithm::Fl,
                      Algorithm::FlTl, Algorithm::Il, Algorithm::Cl}) {
    if (s == to_string(a)) return a;
  }
  throw InvalidArgument("unknown algorithm '" + s + "'");
}

bool requires_new_domain(Algorithm algorithm) noexcept {
  return algorithm == Algorithm::GraphFlNewDomain || algorithm == Algorithm::FlTl;
}

FedState run_episodes(Algorithm algorithm, FedState state, const Federation& fed,
                      const TrainConfig& cfg, const EpisodeObserver& observer) {
  FedState (*episode)(FedState, const Federation&, const TrainConfig&) = nullptr;
  switch (algorithm) {
    case Algorithm::GraphFlNonIid: episode = graphfl_noniid_episode; break;
    case Algorithm::GraphFlNewDomain: episode = graphfl_newdomain_episode; break;
    case Algorithm::Fl:
    case Algorithm::FlTl: episode = fl_baseline_episode; break;
    case Algorithm::Cl: episode = centralized_episode; break;
    case Algorithm::Il:
      throw InvalidArgument("individual learning has no federated episodes");
  }
  for (std::size_t t = 0; t < cfg.episodes; ++t) {
    const auto start = std::chrono::steady_clock::now();
    state = episode(std::move(state), fed, cfg);
    auto& rec = state.history.back();
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    if (observer) observer(rec, state.global_params);
  }
  return state;
}

ParamVector centralized_learning(const gnn::ModelContext& ctx, const LabeledNodes& labels,
                                 const ParamVector& init, const TrainConfig& cfg) {
  ParamVector params = init;
  for (std::size_t t = 0; t < cfg.episodes; ++t) {
    params = descend(ctx, std::move(params), labels, cfg.alpha, cfg.local_steps);
  }
  return params;
}

ParamVector fast_adapt(const ParamVector& params, const gnn::ModelContext& ctx,
                       const LabeledNodes& adaptation, std::size_t k0, double alpha,
                       std::size_t steps, std::uint64_t seed) {
  if (adaptation.empty()) throw InvalidArgument("fast_adapt: empty adaptation set");
  ParamVector head = gnn::reinit_output_block(params, k0, seed);
  return descend(ctx, std::move(head), adaptation, alpha, steps);
}

std::vector<ClientPredictions> adapt_and_predict(const ParamVector& params, const Federation& fed,
                                                 const TrainConfig& cfg) {
  std::vector<ClientPredictions> out(fed.clients.size());
  fed::parallel_for(fed.clients.size(), cfg.threads == 0 ? fed::thread_limit() : cfg.threads,
                    [&](std::size_t i) {
                      const ClientTask& c = fed.clients[i];
                      ParamVector adapted;
                      try {
                        adapted = fast_adapt(params, *c.ctx, c.adaptation, c.new_classes.size(),
                                             cfg.effective_adapt_alpha(), cfg.adapt_steps,
                                             derive_seed(cfg.seed, "adapt", c.id));
                      } catch (const DivergenceError& e) {
                        throw e.with_client(static_cast<long>(c.id));
                      }
                      ClientPredictions p;
                      p.id = c.id;
                      for (const auto& pred : gnn::predict(*c.ctx, adapted, c.test)) {
                        p.predicted.push_back(c.new_classes.at(static_cast<std::size_t>(pred.label)));
                      }
                      for (NodeId v : c.test) p.nodes.push_back(c.global_id(v));
                      out[i] = std::move(p);
                    });
  return out;
}

std::vector<std::optional<ParamVector>> individual_learning(const Federation& fed,
                                                            const TrainConfig& cfg) {
  std::vector<std::optional<ParamVector>> out(fed.clients.size());
  fed::parallel_for(
      fed.clients.size(), cfg.threads == 0 ? fed::thread_limit() : cfg.threads,
      [&](std::size_t i) {
        const ClientTask& c = fed.clients[i];
        const LabeledNodes labels = c.training_labels(cfg.baseline_labels);
        if (labels.empty()) return;
        const ParamVector init = gnn::init_params(fed.spec, fed.num_features, fed.num_outputs(),
                                                  derive_seed(cfg.seed, "init/individual", c.id));
        try {
          out[i] = centralized_learning(*c.ctx, labels, init, cfg);
        } catch (const DivergenceError& e) {
          throw e.with_client(static_cast<long>(c.id));
        }
      });
  return out;
}

std::vector<ClassId> predict_classes(const Federation& fed, const ParamVector& params,
                                     std::span<const NodeId> nodes) {
  std::vector<ClassId> out;
  out.reserve(nodes.size());
  for (const auto& p : gnn::predict(*fed.global_ctx, params, nodes)) {
    out.push_back(fed.head_classes.at(static_cast<std::size_t>(p.label)));
  }
  return out;
}

double evaluate(const gnn::ModelContext& ctx, const ParamVector& params,
                std::span<const NodeId> test_nodes, std::span<const ClassId> truth,
                std::span<const ClassId> head_classes) {
  if (test_nodes.empty()) throw InvalidArgument("evaluate: empty test set");
  if (truth.size() != test_nodes.size()) throw ShapeError("evaluate: truth size mismatch");
  const auto preds = gnn::predict(ctx, params, test_nodes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const ClassId c = head_classes.empty() ? preds[i].label
                                           : head_classes[static_cast<std::size_t>(preds[i].label)];
    if (c == truth[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_nodes.size());
}

SelfTrainResult self_train_augment(const partition::ExperimentSplit& split, const Federation& fed,
                                   const TrainConfig& cfg, std::size_t n_pseudo_per_class) {
  SelfTrainResult result{split, {}};
  if (n_pseudo_per_class == 0) return result;
  if (split.clients.size() != fed.clients.size()) {
    throw InvalidArgument("self_train_augment: split and federation disagree on clients");
  }

  NodeSet excluded = split.test_nodes;
  for (const auto& c : split.clients) {
    excluded.insert(excluded.end(), c.test.begin(), c.test.end());
    for (const auto& ln : c.adaptation) excluded.push_back(ln.node);
  }
  std::sort(excluded.begin(), excluded.end());
  excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());

  std::vector<LabeledNodes> picked(fed.clients.size());
  fed::parallel_for(
      fed.clients.size(), cfg.threads == 0 ? fed::thread_limit() : cfg.threads,
      [&](std::size_t i) {
        const ClientTask& c = fed.clients[i];
        const LabeledNodes labels = c.training_labels(BaselineLabels::All);
        if (labels.empty()) return;
        const ParamVector init = gnn::init_params(fed.spec, fed.num_features, fed.num_outputs(),
                                                  derive_seed(cfg.seed, "init/self_train", c.id));
        ParamVector local;
        try {
          local = centralized_learning(*c.ctx, labels, init, cfg);
        } catch (const DivergenceError& e) {
          throw e.with_client(static_cast<long>(c.id));
        }
        const NodeSet candidates = partition::unlabeled_nodes(split.clients[i], fed.num_nodes, excluded);
        NodeSet local_ids;
        local_ids.reserve(candidates.size());
        for (NodeId v : candidates) local_ids.push_back(to_local(c.local_to_global, v));
        const auto preds = gnn::predict(*c.ctx, local, local_ids);

        // Per predicted class: highest confidence first, lower node id on ties.
        std::map<ClassId, std::vector<std::size_t>> by_class;
        for (std::size_t j = 0; j < preds.size(); ++j) by_class[preds[j].label].push_back(j);
        for (auto& [cls, members] : by_class) {
          std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            if (preds[a].confidence != preds[b].confidence) {
              return preds[a].confidence > preds[b].confidence;
            }
            return candidates[a] < candidates[b];
          });
          const std::size_t take = std::min(n_pseudo_per_class, members.size());
          for (std::size_t j = 0; j < take; ++j) {
            picked[i].push_back({candidates[members[j]],
                                 fed.head_classes.at(static_cast<std::size_t>(cls))});
          }
        }
        std::sort(picked[i].begin(), picked[i].end(),
                  [](const LabeledNode& a, const LabeledNode& b) { return a.node < b.node; });
      });

  for (std::size_t i = 0; i < picked.size(); ++i) {
    auto& support = result.split.clients[i].support;
    support.insert(support.end(), picked[i].begin(), picked[i].end());
    std::sort(support.begin(), support.end(),
              [](const LabeledNode& a, const LabeledNode& b) { return a.node < b.node; });
    result.pseudo_labels.insert(result.pseudo_labels.end(), picked[i].begin(), picked[i].end());
  }
  result.split.params["self_training"] = {{"n_pseudo_per_class", n_pseudo_per_class}};
  return result;
}

}  // namespace graphfl::algo
