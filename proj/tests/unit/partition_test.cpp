#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "graphfl/partition.hpp"
#include "test_support.hpp"

using namespace graphfl;
using namespace graphfl::partition;

namespace {

/// Seven classes of 40 nodes, roughly Cora's class count.
const graph::GraphDataset& seven_class() {
  static const auto g = testing::small_sbm(7, 40, 3, 0.2, 0.01);
  return g;
}

std::set<NodeId> labeled_nodes(const ExperimentSplit& s) {
  std::set<NodeId> out;
  for (const auto& c : s.clients) {
    for (const auto& ln : c.all_labeled()) out.insert(ln.node);
  }
  return out;
}

}  // namespace

TEST_CASE("noniid: 50 clients, 20 per class, 7 classes gives 2 or 3 labels each") {
  const auto s = partition_labels_noniid(seven_class(), 50, 20, 1);
  REQUIRE(s.clients.size() == 50);
  std::size_t total = 0;
  for (const auto& c : s.clients) {
    const std::size_t n = c.support.size() + c.query.size();
    CHECK((n == 2 || n == 3));
    CHECK(c.support.size() == (n + 1) / 2);
    CHECK(c.full_graph());
    total += n;
  }
  CHECK(total == 140);
  CHECK(labeled_nodes(s).size() == 140);

  std::vector<std::size_t> per_class(7, 0);
  for (const auto& c : s.clients) {
    for (const auto& ln : c.all_labeled()) {
      CHECK(ln.label == seven_class().labels()[ln.node]);
      ++per_class[static_cast<std::size_t>(ln.label)];
    }
  }
  for (auto n : per_class) CHECK(n == 20);
}

TEST_CASE("noniid: round-robin counts differ by at most one") {
  for (std::size_t clients : {3u, 7u, 13u, 50u}) {
    const auto s = partition_labels_noniid(seven_class(), clients, 11, clients);
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& c : s.clients) {
      lo = std::min(lo, c.support.size() + c.query.size());
      hi = std::max(hi, c.support.size() + c.query.size());
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("noniid: a single client holds every label; same seed, same split") {
  const auto one = partition_labels_noniid(seven_class(), 1, 5, 2);
  CHECK(one.clients[0].all_labeled().size() == 35);
  CHECK(partition_labels_noniid(seven_class(), 10, 5, 9) ==
        partition_labels_noniid(seven_class(), 10, 5, 9));
  CHECK(to_json(partition_labels_noniid(seven_class(), 10, 5, 9)).dump() ==
        to_json(partition_labels_noniid(seven_class(), 10, 5, 9)).dump());
  CHECK_THROWS_AS(partition_labels_noniid(seven_class(), 10, 41, 0), InvalidArgument);
}

TEST_CASE("sample_test_set: disjoint from training, exact complement at full size") {
  auto s = partition_labels_noniid(seven_class(), 50, 20, 4);
  const auto used = labeled_nodes(s);
  const NodeSet excluded(used.begin(), used.end());
  const auto test = sample_test_set(seven_class(), excluded, 100, 4);
  CHECK(test.size() == 100);
  CHECK(std::is_sorted(test.begin(), test.end()));
  for (NodeId v : test) CHECK(used.count(v) == 0);
  CHECK(sample_test_set(seven_class(), excluded, 100, 4) == test);

  const auto rest = sample_test_set(seven_class(), excluded, 280 - 140, 5);
  CHECK(rest.size() == 140);
  for (NodeId v : rest) CHECK(used.count(v) == 0);
  CHECK_THROWS_AS(sample_test_set(seven_class(), excluded, 141, 5), InvalidArgument);

  s.test_nodes = test;
  CHECK_NOTHROW(validate_split(s, seven_class()));
  s.test_nodes.push_back(s.clients[0].support[0].node);
  std::sort(s.test_nodes.begin(), s.test_nodes.end());
  CHECK_THROWS_AS(validate_split(s, seven_class()), InvalidArgument);
}

TEST_CASE("new domain: train labels from the first K - K0 classes, test from the last K0") {
  NewDomainParams p;
  p.num_clients = 20;
  p.k0 = 2;
  p.n_per_class = 10;
  p.n_adapt = 3;
  p.seed = 6;
  const auto s = partition_new_domain(seven_class(), p);
  CHECK_NOTHROW(validate_split(s, seven_class()));
  std::set<ClassId> train_labels, test_labels;
  for (const auto& c : s.clients) {
    CHECK(c.support.size() == 10);
    CHECK(c.query.size() == 10);
    CHECK(c.adaptation.size() == 6);
    CHECK(c.test.size() == 40);
    CHECK(c.new_classes.size() == 2);
    for (const auto& ln : c.all_labeled()) {
      CHECK(ln.label <= 4);
      train_labels.insert(ln.label);
    }
    for (const auto& ln : c.adaptation) CHECK(ln.label >= 5);
    for (NodeId v : c.test) {
      const ClassId y = seven_class().labels()[v];
      test_labels.insert(y);
      CHECK(std::binary_search(c.new_classes.begin(), c.new_classes.end(), y));
    }
  }
  for (ClassId y : test_labels) CHECK(train_labels.count(y) == 0);

  p.n_adapt.reset();
  const auto d = partition_new_domain(seven_class(), p);
  CHECK(d.clients[0].adaptation.size() == d.clients[0].support.size());

  p.k0 = 4;
  CHECK_THROWS_AS(partition_new_domain(seven_class(), p), InvalidArgument);
}

TEST_CASE("new domain: class permutation moves the new classes") {
  NewDomainParams p;
  p.num_clients = 5;
  p.class_permutation_seed = 3;
  const auto s = partition_new_domain(seven_class(), p);
  CHECK_NOTHROW(validate_split(s, seven_class()));
  std::set<ClassId> fresh;
  for (const auto& c : s.clients) fresh.insert(c.new_classes.begin(), c.new_classes.end());
  CHECK(fresh != std::set<ClassId>{5, 6});
}

TEST_CASE("overlap: the 10-node, 2-client, half-overlap example") {
  const auto g = testing::small_sbm(2, 5, 1);
  const auto w = partition_overlap(g, 2, 0.5, 0);
  CHECK(w[0].size() == 7);
  CHECK(w[1].size() == 6);
  NodeSet shared;
  std::set_intersection(w[0].begin(), w[0].end(), w[1].begin(), w[1].end(),
                        std::back_inserter(shared));
  CHECK(shared.size() == 3);
}

TEST_CASE("overlap: coverage and consecutive overlap fraction") {
  const auto& g = seven_class();
  for (double gamma : {0.0, 0.25, 0.5, 0.8}) {
    for (std::size_t clients : {2u, 5u, 10u}) {
      const auto windows = partition_overlap(g, clients, gamma, 11);
      std::set<NodeId> all;
      for (const auto& w : windows) all.insert(w.begin(), w.end());
      CHECK(all.size() == g.num_nodes());
      const double width = static_cast<double>(windows[0].size());
      for (std::size_t i = 0; i + 1 < windows.size(); ++i) {
        NodeSet shared;
        std::set_intersection(windows[i].begin(), windows[i].end(), windows[i + 1].begin(),
                              windows[i + 1].end(), std::back_inserter(shared));
        CHECK(std::abs(static_cast<double>(shared.size()) - gamma * width) <= 1.0);
      }
    }
  }
  const auto disjoint = partition_overlap(g, 4, 0.0, 2);
  std::size_t total = 0;
  for (const auto& w : disjoint) total += w.size();
  CHECK(total == g.num_nodes());
  CHECK_THROWS_AS(partition_overlap(g, 4, 1.0, 2), InvalidArgument);
}

TEST_CASE("overlap labels stay inside each client's window") {
  const auto& g = seven_class();
  const auto windows = partition_overlap(g, 5, 0.3, 8);
  const auto s = partition_labels_overlap(g, windows, 10, 0.3, 8);
  CHECK_NOTHROW(validate_split(s, g));
  std::size_t total = 0;
  for (const auto& c : s.clients) {
    REQUIRE(c.nodes.has_value());
    for (const auto& ln : c.all_labeled()) {
      CHECK(std::binary_search(c.nodes->begin(), c.nodes->end(), ln.node));
    }
    total += c.all_labeled().size();
  }
  CHECK(total == 70);
}

TEST_CASE("full windows reduce overlap dealing to round-robin") {
  const auto& g = seven_class();
  NodeSet all(g.num_nodes());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<NodeId>(v);
  const std::vector<NodeSet> windows(6, all);
  const auto a = partition_labels_overlap(g, windows, 10, 1.0, 4);
  const auto b = partition_labels_noniid(g, 6, 10, 4);
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(a.clients[c].support == b.clients[c].support);
    CHECK(a.clients[c].query == b.clients[c].query);
  }
}

TEST_CASE("unlabeled_nodes excludes labels and the excluded set") {
  ClientSplit c;
  c.support = {{1, 0}};
  c.query = {{3, 0}};
  CHECK(unlabeled_nodes(c, 6, {0, 5}) == NodeSet{2, 4});
  c.nodes = NodeSet{1, 2, 3};
  CHECK(unlabeled_nodes(c, 6, {}) == NodeSet{2});
}

TEST_CASE("split JSON round trip") {
  NewDomainParams p;
  p.num_clients = 4;
  p.seed = 2;
  const auto nd = partition_new_domain(seven_class(), p);
  CHECK(split_from_json(to_json(nd)) == nd);

  const auto windows = partition_overlap(seven_class(), 3, 0.5, 1);
  const auto ov = partition_labels_overlap(seven_class(), windows, 4, 0.5, 1);
  CHECK(split_from_json(to_json(ov)) == ov);

  const auto path = std::filesystem::temp_directory_path() / "graphfl_split.json";
  save_split(ov, path);
  CHECK(load_split(path) == ov);
  CHECK(regime_from_string(to_string(Regime::Overlap)) == Regime::Overlap);
}
