#include <cmath>
#include <set>

#include "doctest.h"
#include "graphfl/graph.hpp"
#include "test_support.hpp"

using namespace graphfl;
using graph::GraphDataset;

namespace {

GraphDataset path_graph(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1});
  return GraphDataset::from_edges("path", 1, n, edges, DenseMatrix(n, 1, 1.0),
                                  std::vector<ClassId>(n, 0));
}

}  // namespace

TEST_CASE("graph: both orientations of an edge collapse to one") {
  const auto g = GraphDataset::from_edges("g", 1, 2, {{0, 1}, {1, 0}, {0, 1}}, DenseMatrix(2, 1),
                                          {0, 0});
  CHECK(g.num_edges() == 1);
  CHECK(g.edge_list() == std::vector<std::pair<NodeId, NodeId>>{{0, 1}});
}

TEST_CASE("graph: self-loops and out-of-range endpoints are rejected") {
  CHECK_THROWS_AS(GraphDataset::from_edges("g", 1, 2, {{1, 1}}, DenseMatrix(2, 1), {0, 0}), DataError);
  CHECK_THROWS_AS(GraphDataset::from_edges("g", 1, 2, {{0, 2}}, DenseMatrix(2, 1), {0, 0}), DataError);
  CHECK_THROWS_AS(GraphDataset::from_edges("g", 2, 2, {}, DenseMatrix(2, 1), {0, 2}), DataError);
  CHECK_THROWS_AS(GraphDataset::from_edges("g", 2, 2, {}, DenseMatrix(3, 1), {0, 1}), DataError);
}

TEST_CASE("graph: an edgeless graph is valid") {
  const auto g = GraphDataset::from_edges("g", 1, 3, {}, DenseMatrix(3, 2), {0, 0, 0});
  CHECK(g.num_edges() == 0);
  CHECK(g.adjacency().nnz() == 0);
}

TEST_CASE("normalize_adjacency: isolated node gets a unit self-loop") {
  const auto g = GraphDataset::from_edges("g", 1, 3, {{0, 1}}, DenseMatrix(3, 1), {0, 0, 0});
  const auto s = graph::normalize_adjacency(g);
  CHECK(s.matrix.row_cols(2).size() == 1);
  CHECK(s.matrix.at(2, 2) == 1.0);
}

TEST_CASE("normalize_adjacency: single edge gives 0.5 everywhere") {
  const auto s = graph::normalize_adjacency(path_graph(2)).matrix;
  CHECK(s.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.at(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.at(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalize_adjacency: 3-node path matches a dense reference") {
  const auto g = path_graph(3);
  const auto s = graph::normalize_adjacency(g).matrix.to_dense();
  // A + I and its degrees, computed directly.
  const double a[3][3] = {{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
  double d[3];
  for (int i = 0; i < 3; ++i) d[i] = a[i][0] + a[i][1] + a[i][2];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(s(i, j) == doctest::Approx(a[i][j] / std::sqrt(d[i] * d[j])).epsilon(1e-15));
    }
  }
}

TEST_CASE("normalize_adjacency: symmetric, entries in (0, 1], D^1/2 S D^-1/2 row-stochastic") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = testing::small_sbm(3, 12, seed, 0.3, 0.05);
    const auto p = graph::normalize_adjacency(g);
    const auto& s = p.matrix;
    for (std::size_t v = 0; v < s.rows(); ++v) {
      REQUIRE(s.at(v, v) > 0.0);
      double row = 0.0;
      const auto cols = s.row_cols(v);
      const auto vals = s.row_values(v);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        CHECK(vals[k] > 0.0);
        CHECK(vals[k] <= 1.0);
        CHECK(s.at(cols[k], v) == vals[k]);
        row += vals[k] * std::sqrt(p.degrees[cols[k]] / p.degrees[v]);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("row_normalize: examples and the row-sum property") {
  DenseMatrix x(2, 3, std::vector<double>{2, 2, 0, 0, 0, 0});
  const auto y = graph::row_normalize(x);
  CHECK(y(0, 0) == 0.5);
  CHECK(y(0, 1) == 0.5);
  CHECK(y(0, 2) == 0.0);
  for (int c = 0; c < 3; ++c) CHECK(y(1, c) == 0.0);

  Rng rng(8);
  DenseMatrix r(5, 4);
  for (auto& v : r.data()) v = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0, 3);
  const auto z = graph::row_normalize(r);
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0;
    for (double v : z.row(i)) sum += v;
    CHECK((sum == 0.0 || std::abs(sum - 1.0) <= 1e-12));
  }
}

TEST_CASE("generate_sbm: deterministic extremes give disjoint triangles") {
  graph::SbmParams p;
  p.blocks = 2;
  p.nodes_per_block = 3;
  p.p_in = 1.0;
  p.p_out = 0.0;
  const auto g = graph::generate_sbm(p);
  CHECK(g.num_edges() == 6);
  for (auto [u, v] : g.edge_list()) CHECK(g.labels()[u] == g.labels()[v]);
  CHECK(g.labels() == std::vector<ClassId>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("generate_sbm: same seed, same graph; different seed, different graph") {
  const auto a = testing::small_sbm(3, 20, 5);
  const auto b = testing::small_sbm(3, 20, 5);
  const auto c = testing::small_sbm(3, 20, 6);
  CHECK(a == b);
  CHECK(a.edge_list() != c.edge_list());
}

TEST_CASE("generate_sbm: edge count within 3 sigma of the binomial mean") {
  graph::SbmParams p;
  p.blocks = 1;
  p.nodes_per_block = 100;
  p.p_in = 0.5;
  p.p_out = 0.0;
  p.seed = 3;
  const auto g = graph::generate_sbm(p);
  const double pairs = 100.0 * 99.0 / 2.0;
  const double sd = std::sqrt(pairs * 0.25);
  CHECK(std::abs(static_cast<double>(g.num_edges()) - 0.5 * pairs) <= 3.0 * sd);
}

TEST_CASE("generate_sbm: invalid probabilities are rejected") {
  graph::SbmParams p;
  p.p_in = 0.1;
  p.p_out = 0.2;
  CHECK_THROWS_AS(graph::generate_sbm(p), InvalidArgument);
  p.p_in = 1.5;
  p.p_out = 0.1;
  CHECK_THROWS_AS(graph::generate_sbm(p), InvalidArgument);
}

TEST_CASE("subgraph: all nodes, one node, two of a triangle") {
  const auto g = testing::small_sbm(2, 10, 1);
  NodeSet all(g.num_nodes());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<NodeId>(v);
  const auto copy = graph::subgraph(g, all);
  CHECK(copy.num_edges() == g.num_edges());
  CHECK(copy.node_ids() == g.node_ids());

  const auto one = graph::subgraph(g, {4});
  CHECK(one.num_nodes() == 1);
  CHECK(one.num_edges() == 0);
  CHECK(one.node_ids() == std::vector<NodeId>{4});
  CHECK(one.labels()[0] == g.labels()[4]);

  const auto tri = GraphDataset::from_edges("t", 1, 3, {{0, 1}, {1, 2}, {0, 2}}, DenseMatrix(3, 1),
                                            {0, 0, 0});
  CHECK(graph::subgraph(tri, {0, 2}).num_edges() == 1);
}

TEST_CASE("subgraph: node ids compose and invalid sets are rejected") {
  const auto g = path_graph(6);
  const auto a = graph::subgraph(g, {1, 2, 3, 5});
  const auto b = graph::subgraph(a, {1, 3});
  CHECK(b.node_ids() == std::vector<NodeId>{2, 5});
  CHECK(a.num_edges() == 2);
  CHECK_THROWS_AS(graph::subgraph(g, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(graph::subgraph(g, {9}), InvalidArgument);
}

TEST_CASE("largest_component picks the biggest piece") {
  const auto g = GraphDataset::from_edges("g", 1, 7, {{0, 1}, {2, 3}, {3, 4}, {4, 2}, {5, 6}},
                                          DenseMatrix(7, 1), std::vector<ClassId>(7, 0));
  CHECK(graph::largest_component(g) == NodeSet{2, 3, 4});
}
