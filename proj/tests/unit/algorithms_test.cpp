#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "graphfl/algorithms.hpp"
#include "test_support.hpp"

using namespace graphfl;
using namespace graphfl::algo;
using gnn::ModelKind;
using gnn::ModelSpec;
using gnn::ParamVector;
using partition::ExperimentSplit;

namespace {

ModelSpec spec_of(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  s.hidden_dim = 8;
  return s;
}

TrainConfig small_cfg(double alpha = 0.2) {
  TrainConfig cfg;
  cfg.alpha = alpha;
  cfg.beta = 0.5;
  cfg.episodes = 3;
  cfg.local_steps = 4;
  cfg.rho = 1.0;
  cfg.adapt_steps = 4;
  cfg.seed = 5;
  cfg.threads = 2;
  return cfg;
}

const graph::GraphDataset& sbm() {
  static const auto g = testing::small_sbm(3, 20, 7, 0.3, 0.03);
  return g;
}

ExperimentSplit noniid(std::size_t clients, std::size_t per_class = 6, std::uint64_t seed = 1) {
  auto s = partition::partition_labels_noniid(sbm(), clients, per_class, seed);
  return s;
}

/// Five classes so that K - K0 >= K0 with K0 = 2.
const graph::GraphDataset& five_class() {
  static const auto g = testing::small_sbm(5, 30, 8, 0.3, 0.02);
  return g;
}

ExperimentSplit new_domain(std::size_t clients = 3) {
  partition::NewDomainParams p;
  p.num_clients = clients;
  p.k0 = 2;
  p.n_per_class = 6;
  p.n_adapt = 3;
  p.n_test_per_class = 5;
  p.seed = 2;
  return partition::partition_new_domain(five_class(), p);
}

}  // namespace

TEST_CASE("train config validation names the field") {
  TrainConfig cfg;
  const auto gcn = spec_of(ModelKind::Gcn2);
  CHECK_NOTHROW(cfg.validate(gcn));
  cfg.rho = 0.0;
  try {
    cfg.validate(gcn);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("rho") != std::string::npos);
  }
  cfg = {};
  cfg.second_order = SecondOrder::Exact;
  CHECK_THROWS_AS(cfg.validate(gcn), ConfigError);
  CHECK_NOTHROW(cfg.validate(spec_of(ModelKind::Sgc)));
  CHECK(algorithm_from_string(to_string(Algorithm::FlTl)) == Algorithm::FlTl);
  CHECK_THROWS(algorithm_from_string("fedprox"));
}

TEST_CASE("build_federation: shared context for full-graph clients, subgraphs otherwise") {
  const auto fed = build_federation(sbm(), noniid(4), spec_of(ModelKind::Sgc));
  CHECK(fed.clients.size() == 4);
  CHECK(fed.head_classes == std::vector<ClassId>{0, 1, 2});
  for (const auto& c : fed.clients) CHECK(c.ctx == fed.global_ctx);
  CHECK(fed.pooled_training_labels(BaselineLabels::All).size() == 18);

  const auto windows = partition::partition_overlap(sbm(), 3, 0.2, 4);
  const auto ov = partition::partition_labels_overlap(sbm(), windows, 4, 0.2, 4);
  const auto fo = build_federation(sbm(), ov, spec_of(ModelKind::Sgc));
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& c = fo.clients[i];
    CHECK(c.ctx != fo.global_ctx);
    CHECK(c.ctx->num_nodes() == windows[i].size());
    for (const auto& ln : c.support) {
      CHECK(sbm().labels()[c.global_id(ln.node)] == ln.label);
    }
  }
}

TEST_CASE("FL with one client at rho = 1 is centralized learning, bitwise") {
  for (auto kind : {ModelKind::Gcn2, ModelKind::Sgc}) {
    const auto fed = build_federation(sbm(), noniid(1), spec_of(kind));
    const auto cfg = small_cfg(0.3);
    auto state = initial_state(fed, cfg);
    const ParamVector init = state.global_params;
    state = run_episodes(Algorithm::Fl, std::move(state), fed, cfg);
    const auto labels = fed.pooled_training_labels(cfg.baseline_labels);
    CHECK(state.global_params == centralized_learning(*fed.global_ctx, labels, init, cfg));
    CHECK(state.episode == 3);
    CHECK(state.history.size() == 3);
    CHECK(state.history.back().episode == 3);

    auto cl = run_episodes(Algorithm::Cl, initial_state(fed, cfg), fed, cfg);
    CHECK(cl.global_params == state.global_params);
  }
}

TEST_CASE("identical clients: FL equals a single client's local training") {
  auto split = noniid(1);
  auto c = split.clients[0];
  split.clients.clear();
  for (std::size_t i = 0; i < 4; ++i) {
    c.id = i;
    split.clients.push_back(c);
  }
  const auto fed = build_federation(sbm(), split, spec_of(ModelKind::Sgc));
  auto cfg = small_cfg();
  cfg.episodes = 1;
  const auto state = initial_state(fed, cfg);
  const auto next = fl_baseline_episode(state, fed, cfg);
  const auto want = gnn::sgd_steps(*fed.global_ctx, state.global_params,
                                   fed.clients[0].training_labels(cfg.baseline_labels), cfg.alpha,
                                   cfg.local_steps);
  CHECK(next.global_params == want);

  // Identical supports give identical meta gradients: server step is theta - beta * g.
  cfg.alpha = 0.0;
  const auto meta = graphfl_noniid_episode(state, fed, cfg);
  auto expect = state.global_params;
  expect.axpy(-cfg.beta, gnn::grad(*fed.global_ctx, state.global_params, fed.clients[0].query));
  CHECK(meta.global_params == expect);
}

TEST_CASE("non-IID GraphFL with alpha = 0 is a meta step on query gradients at theta") {
  const auto fed = build_federation(sbm(), noniid(5), spec_of(ModelKind::Gcn2));
  auto cfg = small_cfg(0.0);
  cfg.rho = 0.6;
  const auto state = initial_state(fed, cfg);
  const auto next = graphfl_noniid_episode(state, fed, cfg);
  const auto& ids = next.history.back().participants;
  CHECK(ids.size() == 3);
  std::vector<ParamVector> grads;
  for (auto id : ids) grads.push_back(gnn::grad(*fed.global_ctx, state.global_params, fed.clients[id].query));
  CHECK(next.global_params == fed::meta_aggregate(state.global_params, grads, cfg.beta, true));
}

TEST_CASE("non-IID GraphFL with one client: Stage II is local training from the meta model") {
  const auto fed = build_federation(sbm(), noniid(1), spec_of(ModelKind::Sgc));
  const auto cfg = small_cfg();
  const auto state = initial_state(fed, cfg);
  const auto next = graphfl_noniid_episode(state, fed, cfg);
  const auto& c = fed.clients[0];
  const auto adapted = gnn::sgd_steps(*c.ctx, state.global_params, c.support, cfg.alpha, cfg.local_steps);
  auto meta = state.global_params;
  meta.axpy(-cfg.beta, gnn::grad(*c.ctx, adapted, c.query));
  CHECK(next.global_params == gnn::sgd_steps(*c.ctx, meta, c.support, cfg.alpha, cfg.local_steps));
}

TEST_CASE("new-domain GraphFL with alpha = 0 is plain query descent") {
  const auto fed = build_federation(five_class(), new_domain(1), spec_of(ModelKind::Gcn2));
  auto cfg = small_cfg(0.0);
  cfg.beta = 0.2;
  const auto state = initial_state(fed, cfg);
  const auto next = graphfl_newdomain_episode(state, fed, cfg);
  const auto& c = fed.clients[0];
  CHECK(next.global_params == gnn::sgd_steps(*c.ctx, state.global_params, c.query, cfg.beta, cfg.local_steps));
}

TEST_CASE("new-domain GraphFL: exact minus first-order is beta * alpha * H g") {
  const auto fed = build_federation(five_class(), new_domain(1), spec_of(ModelKind::Sgc));
  auto cfg = small_cfg(0.3);
  cfg.local_steps = 1;
  const auto state = initial_state(fed, cfg);
  cfg.second_order = SecondOrder::Exact;
  const auto exact = graphfl_newdomain_episode(state, fed, cfg).global_params;
  cfg.second_order = SecondOrder::FirstOrder;
  const auto first = graphfl_newdomain_episode(state, fed, cfg).global_params;
  cfg.second_order = SecondOrder::FiniteDiff;
  const auto fd = graphfl_newdomain_episode(state, fed, cfg).global_params;

  const auto& c = fed.clients[0];
  auto adapted = state.global_params;
  adapted.axpy(-cfg.alpha, gnn::grad(*c.ctx, state.global_params, c.support));
  const auto gq = gnn::grad(*c.ctx, adapted, c.query);
  const auto hg = gnn::hvp(*c.ctx, state.global_params, c.support, gq, gnn::HvpMode::Analytic);
  auto diff = exact;
  diff.axpy(-1.0, first);
  auto want = hg;
  want.scale(cfg.beta * cfg.alpha);
  CHECK(testing::max_rel_error(diff.values(), want.values(), 1e-10) <= 1e-6);
  CHECK(hg.max_abs() > 0.0);

  auto fd_diff = fd;
  fd_diff.axpy(-1.0, exact);
  CHECK(testing::norm_rel_error(fd.values(), exact.values()) <= 1e-3);
}

TEST_CASE("new-domain GraphFL: exact and finite-difference runs agree over several episodes") {
  const auto fed = build_federation(five_class(), new_domain(3), spec_of(ModelKind::Sgc));
  auto cfg = small_cfg(0.2);
  cfg.beta = 0.2;
  cfg.second_order = SecondOrder::Exact;
  const auto exact = run_episodes(Algorithm::GraphFlNewDomain, initial_state(fed, cfg), fed, cfg);
  cfg.second_order = SecondOrder::FiniteDiff;
  const auto fd = run_episodes(Algorithm::GraphFlNewDomain, initial_state(fed, cfg), fed, cfg);
  CHECK(testing::norm_rel_error(exact.global_params.values(), fd.global_params.values()) <= 1e-3);

  const auto gcn = build_federation(five_class(), new_domain(1), spec_of(ModelKind::Gcn2));
  cfg.second_order = SecondOrder::Exact;
  CHECK_THROWS_AS(graphfl_newdomain_episode(initial_state(gcn, cfg), gcn, cfg), ConfigError);
}

TEST_CASE("new domain: head covers the training classes, adaptation maps back to new classes") {
  const auto fed = build_federation(five_class(), new_domain(3), spec_of(ModelKind::Gcn2));
  CHECK(fed.num_outputs() >= 2);
  for (ClassId c : fed.head_classes) CHECK(c <= 2);
  const auto cfg = small_cfg();
  const auto state = run_episodes(Algorithm::FlTl, initial_state(fed, cfg), fed, cfg);
  const auto preds = adapt_and_predict(state.global_params, fed, cfg);
  REQUIRE(preds.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(preds[i].nodes.size() == 10);
    for (ClassId y : preds[i].predicted) {
      CHECK(std::binary_search(fed.clients[i].new_classes.begin(), fed.clients[i].new_classes.end(), y));
    }
  }
  CHECK(adapt_and_predict(state.global_params, fed, cfg)[1].predicted == preds[1].predicted);
}

TEST_CASE("fast_adapt: zero steps re-initializes only the head; same seed, same result") {
  const auto fed = build_federation(five_class(), new_domain(1), spec_of(ModelKind::Gcn2));
  const auto params = initial_params(fed, 3);
  const auto& c = fed.clients[0];
  const auto z = fast_adapt(params, *c.ctx, c.adaptation, 2, 0.1, 0, 9);
  CHECK(z.shape().block(1).cols == 2);
  CHECK(std::equal(params.block(0).begin(), params.block(0).end(), z.block(0).begin()));
  CHECK(z == gnn::reinit_output_block(params, 2, 9));
  CHECK(fast_adapt(params, *c.ctx, c.adaptation, 2, 0.1, 5, 9) ==
        fast_adapt(params, *c.ctx, c.adaptation, 2, 0.1, 5, 9));
  CHECK_THROWS_AS(fast_adapt(params, *c.ctx, {}, 2, 0.1, 5, 9), InvalidArgument);
}

TEST_CASE("individual learning: one client equals centralized learning from the IL init") {
  const auto fed = build_federation(sbm(), noniid(1), spec_of(ModelKind::Sgc));
  const auto cfg = small_cfg();
  const auto il = individual_learning(fed, cfg);
  REQUIRE(il[0].has_value());
  const auto init = gnn::init_params(fed.spec, fed.num_features, fed.num_outputs(),
                                     derive_seed(cfg.seed, "init/individual", 0));
  CHECK(*il[0] == centralized_learning(*fed.global_ctx, fed.clients[0].training_labels(cfg.baseline_labels),
                                       init, cfg));

  // A client with no labels gets no model.
  auto split = noniid(30, 2);
  const auto many = individual_learning(build_federation(sbm(), split, spec_of(ModelKind::Sgc)), cfg);
  CHECK(std::count_if(many.begin(), many.end(), [](const auto& p) { return !p.has_value(); }) == 24);
}

TEST_CASE("individual learning: a single-class client predicts that class") {
  auto split = noniid(1);
  auto& c = split.clients[0];
  LabeledNodes only;
  for (const auto& ln : c.all_labeled()) {
    if (ln.label == 1) only.push_back(ln);
  }
  c.support = only;
  c.query.clear();
  const auto fed = build_federation(sbm(), split, spec_of(ModelKind::Sgc));
  auto cfg = small_cfg(0.5);
  cfg.episodes = 50;
  const auto model = *individual_learning(fed, cfg)[0];
  NodeSet all(sbm().num_nodes());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<NodeId>(v);
  const auto preds = predict_classes(fed, model, all);
  // Weight decay and nodes whose features barely overlap the labeled ones
  // leave a few stragglers.
  CHECK(std::count(preds.begin(), preds.end(), ClassId{1}) >= 54);
  std::vector<ClassId> truth;
  for (NodeId v : all) truth.push_back(sbm().labels()[v]);
  CHECK(std::abs(evaluate(*fed.global_ctx, model, all, truth) - 20.0 / 60.0) <= 0.05);
}

TEST_CASE("evaluate agrees with a direct recount") {
  const auto fed = build_federation(sbm(), noniid(2), spec_of(ModelKind::Gcn2));
  const auto params = initial_params(fed, 4);
  const NodeSet nodes{0, 5, 11, 23, 40, 59};
  std::vector<ClassId> truth;
  for (NodeId v : nodes) truth.push_back(sbm().labels()[v]);
  const auto preds = gnn::predict(*fed.global_ctx, params, nodes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) hits += preds[i].label == truth[i];
  const double acc = evaluate(*fed.global_ctx, params, nodes, truth);
  CHECK(acc == static_cast<double>(hits) / 6.0);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK_THROWS_AS(evaluate(*fed.global_ctx, params, {}, {}), InvalidArgument);
  CHECK_THROWS_AS(evaluate(*fed.global_ctx, params, nodes, std::vector<ClassId>{0}), ShapeError);
}

TEST_CASE("self-training: n = 0 is the identity; selections avoid held-out nodes") {
  auto split = noniid(3);
  NodeSet used;
  for (const auto& c : split.clients) {
    for (const auto& ln : c.all_labeled()) used.push_back(ln.node);
  }
  std::sort(used.begin(), used.end());
  split.test_nodes = partition::sample_test_set(sbm(), used, 20, 3);

  const auto fed = build_federation(sbm(), split, spec_of(ModelKind::Sgc));
  const auto cfg = small_cfg();
  CHECK(self_train_augment(split, fed, cfg, 0).split == split);

  const auto r = self_train_augment(split, fed, cfg, 2);
  CHECK_NOTHROW(partition::validate_split(r.split, sbm()));
  std::set<NodeId> test(split.test_nodes.begin(), split.test_nodes.end());
  for (std::size_t i = 0; i < split.clients.size(); ++i) {
    const auto& before = split.clients[i];
    const auto& after = r.split.clients[i];
    CHECK(after.query == before.query);
    CHECK(after.support.size() > before.support.size());
    CHECK(after.support.size() <= before.support.size() + 2 * 3);
    CHECK(std::is_sorted(after.support.begin(), after.support.end(),
                         [](const auto& a, const auto& b) { return a.node < b.node; }));
    std::set<NodeId> own;
    for (const auto& ln : before.all_labeled()) own.insert(ln.node);
    std::map<ClassId, int> per_class;
    for (const auto& ln : after.support) {
      if (std::find(before.support.begin(), before.support.end(), ln) != before.support.end()) continue;
      CHECK(test.count(ln.node) == 0);
      CHECK(own.count(ln.node) == 0);
      ++per_class[ln.label];
    }
    for (const auto& [cls, n] : per_class) CHECK(n <= 2);
  }
  CHECK(self_train_augment(split, fed, cfg, 2).pseudo_labels == r.pseudo_labels);
}

TEST_CASE("run_episodes: observer sees every record; deterministic across thread counts") {
  const auto fed = build_federation(sbm(), noniid(6), spec_of(ModelKind::Gcn2));
  auto cfg = small_cfg(0.3);
  cfg.rho = 0.5;
  std::size_t calls = 0;
  auto a = run_episodes(Algorithm::GraphFlNonIid, initial_state(fed, cfg), fed, cfg,
                        [&](fed::MetricsRecord& rec, const ParamVector&) {
                          ++calls;
                          CHECK(rec.participants.size() == 3);
                        });
  CHECK(calls == 3);
  cfg.threads = 1;
  auto b = run_episodes(Algorithm::GraphFlNonIid, initial_state(fed, cfg), fed, cfg);
  CHECK(a.global_params == b.global_params);
  for (std::size_t t = 0; t < 3; ++t) CHECK(a.history[t].participants == b.history[t].participants);
  CHECK_THROWS(run_episodes(Algorithm::Il, initial_state(fed, cfg), fed, cfg));
}

TEST_CASE("divergence is attributed to the client") {
  const auto fed = build_federation(sbm(), noniid(2), spec_of(ModelKind::Gcn2));
  auto cfg = small_cfg(1e200);
  auto state = initial_state(fed, cfg);
  try {
    for (int i = 0; i < 3; ++i) state = fl_baseline_episode(std::move(state), fed, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.client_id() >= 0);
  }
}
