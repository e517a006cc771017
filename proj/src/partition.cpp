#include "graphfl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "graphfl/rng.hpp"

namespace graphfl::partition {

using nlohmann::json;

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::NonIid: return "noniid";
    case Regime::NewDomain: return "new_domain";
    case Regime::Overlap: return "overlap";
  }
  return "noniid";
}

Regime regime_from_string(const std::string& s) {
  if (s == "noniid" || s == "non_iid") return Regime::NonIid;
  if (s == "new_domain" || s == "newdomain") return Regime::NewDomain;
  if (s == "overlap") return Regime::Overlap;
  throw InvalidArgument("unknown regime '" + s + "' (expected noniid, new_domain or overlap)");
}

LabeledNodes ClientSplit::all_labeled() const {
  LabeledNodes out = support;
  out.insert(out.end(), query.begin(), query.end());
  std::sort(out.begin(), out.end(),
            [](const LabeledNode& a, const LabeledNode& b) { return a.node < b.node; });
  return out;
}

namespace {

void sort_by_node(LabeledNodes& nodes) {
  std::sort(nodes.begin(), nodes.end(),
            [](const LabeledNode& a, const LabeledNode& b) { return a.node < b.node; });
}

std::vector<NodeSet> nodes_by_class(const graph::GraphDataset& g) {
  std::vector<NodeSet> out(g.num_classes());
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    out[static_cast<std::size_t>(g.labels()[v])].push_back(static_cast<NodeId>(v));
  }
  return out;
}

/// Samples the class-stratified label pool, shuffled.
LabeledNodes sample_label_pool(const graph::GraphDataset& g, std::size_t labels_per_class,
                               std::uint64_t seed) {
  const auto by_class = nodes_by_class(g);
  LabeledNodes pool;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < labels_per_class) {
      throw InvalidArgument("class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " nodes, fewer than the " +
                            std::to_string(labels_per_class) + " labels requested");
    }
    Rng rng = Rng::substream(seed, "partition/labels", c);
    for (NodeId v : rng.sample(by_class[c], labels_per_class)) {
      pool.push_back({v, static_cast<ClassId>(c)});
    }
  }
  Rng deal = Rng::substream(seed, "partition/deal");
  deal.shuffle(pool);
  return pool;
}

/// Halves a dealt sequence into support (first ceil(n/2)) and query.
void halve_into(const LabeledNodes& dealt, ClientSplit& client) {
  const std::size_t n_support = (dealt.size() + 1) / 2;
  client.support.assign(dealt.begin(), dealt.begin() + static_cast<std::ptrdiff_t>(n_support));
  client.query.assign(dealt.begin() + static_cast<std::ptrdiff_t>(n_support), dealt.end());
  sort_by_node(client.support);
  sort_by_node(client.query);
}

/// Deals the label pool; `windows` empty means every client holds the full graph.
std::vector<LabeledNodes> deal_labels(const LabeledNodes& pool, std::size_t num_clients,
                                      const std::vector<NodeSet>& windows) {
  std::vector<LabeledNodes> dealt(num_clients);
  std::size_t cursor = 0;
  for (const LabeledNode& ln : pool) {
    std::size_t chosen = num_clients;
    for (std::size_t off = 0; off < num_clients; ++off) {
      const std::size_t c = (cursor + off) % num_clients;
      if (!windows.empty() &&
          !std::binary_search(windows[c].begin(), windows[c].end(), ln.node)) {
        continue;
      }
      if (chosen == num_clients || dealt[c].size() < dealt[chosen].size()) chosen = c;
    }
    if (chosen == num_clients) continue;  // node not held by any client
    dealt[chosen].push_back(ln);
    cursor = (chosen + 1) % num_clients;
  }
  return dealt;
}

}  // namespace

ExperimentSplit partition_labels_noniid(const graph::GraphDataset& g, std::size_t num_clients,
                                        std::size_t labels_per_class, std::uint64_t seed) {
  if (num_clients == 0) throw InvalidArgument("partition_labels_noniid: need at least one client");
  const LabeledNodes pool = sample_label_pool(g, labels_per_class, seed);
  const auto dealt = deal_labels(pool, num_clients, {});
  ExperimentSplit split;
  split.regime = Regime::NonIid;
  split.seed = seed;
  split.params = {{"num_clients", num_clients}, {"labels_per_class", labels_per_class}};
  for (std::size_t c = 0; c < num_clients; ++c) {
    ClientSplit client;
    client.id = c;
    halve_into(dealt[c], client);
    split.clients.push_back(std::move(client));
  }
  return split;
}

NodeSet sample_test_set(const graph::GraphDataset& g, const NodeSet& excluded, std::size_t n,
                        std::uint64_t seed) {
  std::vector<bool> skip(g.num_nodes(), false);
  for (NodeId v : excluded) {
    if (v < skip.size()) skip[v] = true;
  }
  NodeSet candidates;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    if (!skip[v]) candidates.push_back(static_cast<NodeId>(v));
  }
  if (n > candidates.size()) {
    throw InvalidArgument("sample_test_set: " + std::to_string(n) + " test nodes requested but only " +
                          std::to_string(candidates.size()) + " are available");
  }
  Rng rng = Rng::substream(seed, "partition/test");
  NodeSet out = rng.sample(std::move(candidates), n);
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentSplit partition_new_domain(const graph::GraphDataset& g, const NewDomainParams& p) {
  const std::size_t k = g.num_classes();
  if (p.k0 == 0 || p.k0 >= k) {
    throw InvalidArgument("partition_new_domain: K0 must satisfy 0 < K0 < K (K = " +
                          std::to_string(k) + ")");
  }
  if (k - p.k0 < p.k0) {
    throw InvalidArgument("partition_new_domain: fewer than K0 training classes to choose from");
  }
  if (p.num_clients == 0) throw InvalidArgument("partition_new_domain: need at least one client");

  std::vector<ClassId> order(k);
  std::iota(order.begin(), order.end(), ClassId{0});
  if (p.class_permutation_seed) {
    Rng perm = Rng::substream(*p.class_permutation_seed, "partition/class_permutation");
    perm.shuffle(order);
  }
  const std::vector<ClassId> old_classes(order.begin(), order.end() - static_cast<std::ptrdiff_t>(p.k0));
  const std::vector<ClassId> new_classes(order.end() - static_cast<std::ptrdiff_t>(p.k0), order.end());

  const std::size_t support_per_class = (p.n_per_class + 1) / 2;
  const std::size_t n_adapt = p.n_adapt.value_or(support_per_class);
  const auto by_class = nodes_by_class(g);
  auto check_population = [&](ClassId c, std::size_t need) {
    if (by_class[static_cast<std::size_t>(c)].size() < need) {
      throw InvalidArgument("partition_new_domain: class " + std::to_string(c) + " has " +
                            std::to_string(by_class[static_cast<std::size_t>(c)].size()) +
                            " nodes, " + std::to_string(need) + " needed");
    }
  };
  for (ClassId c : old_classes) check_population(c, p.n_per_class);
  for (ClassId c : new_classes) check_population(c, n_adapt + p.n_test_per_class);

  ExperimentSplit split;
  split.regime = Regime::NewDomain;
  split.seed = p.seed;
  split.k0 = p.k0;
  split.params = {{"num_clients", p.num_clients},
                  {"k0", p.k0},
                  {"n_per_class", p.n_per_class},
                  {"n_adapt", n_adapt},
                  {"n_test_per_class", p.n_test_per_class}};
  if (p.class_permutation_seed) split.params["class_permutation_seed"] = *p.class_permutation_seed;

  std::set<NodeId> all_test;
  for (std::size_t id = 0; id < p.num_clients; ++id) {
    Rng rng = Rng::substream(p.seed, "partition/new_domain", id);
    ClientSplit client;
    client.id = id;

    std::vector<ClassId> train = rng.sample(old_classes, p.k0);
    std::sort(train.begin(), train.end());
    for (ClassId c : train) {
      const NodeSet picked = rng.sample(by_class[static_cast<std::size_t>(c)], p.n_per_class);
      for (std::size_t i = 0; i < picked.size(); ++i) {
        (i < support_per_class ? client.support : client.query).push_back({picked[i], c});
      }
    }

    std::vector<ClassId> fresh = rng.sample(new_classes, p.k0);
    std::sort(fresh.begin(), fresh.end());
    for (ClassId c : fresh) {
      const NodeSet picked =
          rng.sample(by_class[static_cast<std::size_t>(c)], n_adapt + p.n_test_per_class);
      for (std::size_t i = 0; i < picked.size(); ++i) {
        if (i < n_adapt) {
          client.adaptation.push_back({picked[i], c});
        } else {
          client.test.push_back(picked[i]);
        }
      }
    }
    client.new_classes = fresh;
    sort_by_node(client.support);
    sort_by_node(client.query);
    sort_by_node(client.adaptation);
    std::sort(client.test.begin(), client.test.end());
    all_test.insert(client.test.begin(), client.test.end());
    split.clients.push_back(std::move(client));
  }
  split.test_nodes.assign(all_test.begin(), all_test.end());
  return split;
}

std::vector<NodeSet> partition_overlap(const graph::GraphDataset& g, std::size_t num_clients,
                                       double gamma, std::uint64_t seed) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw InvalidArgument("partition_overlap: gamma must lie in [0, 1)");
  }
  if (num_clients == 0) throw InvalidArgument("partition_overlap: need at least one client");
  const std::size_t n = g.num_nodes();
  const double denom = static_cast<double>(num_clients) - gamma * static_cast<double>(num_clients - 1);
  const auto width =
      std::min(n, static_cast<std::size_t>(std::ceil(static_cast<double>(n) / denom)));
  const auto stride = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround((1.0 - gamma) * static_cast<double>(width))));
  if (width < 1) throw InvalidArgument("partition_overlap: window smaller than one node");

  NodeSet order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  Rng rng = Rng::substream(seed, "partition/overlap");
  rng.shuffle(order);

  std::vector<NodeSet> windows(num_clients);
  for (std::size_t i = 0; i < num_clients; ++i) {
    const std::size_t start = i * stride;
    const std::size_t end = i + 1 == num_clients ? n : std::min(n, start + width);
    if (start >= end) {
      throw InvalidArgument("partition_overlap: client " + std::to_string(i) +
                            " would receive an empty window");
    }
    windows[i].assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                      order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(windows[i].begin(), windows[i].end());
  }
  return windows;
}

ExperimentSplit partition_labels_overlap(const graph::GraphDataset& g,
                                         const std::vector<NodeSet>& windows,
                                         std::size_t labels_per_class, double gamma,
                                         std::uint64_t seed) {
  if (windows.empty()) throw InvalidArgument("partition_labels_overlap: no client windows");
  const LabeledNodes pool = sample_label_pool(g, labels_per_class, seed);
  const auto dealt = deal_labels(pool, windows.size(), windows);
  ExperimentSplit split;
  split.regime = Regime::Overlap;
  split.seed = seed;
  split.gamma = gamma;
  split.params = {{"num_clients", windows.size()},
                  {"labels_per_class", labels_per_class},
                  {"gamma", gamma}};
  for (std::size_t c = 0; c < windows.size(); ++c) {
    ClientSplit client;
    client.id = c;
    client.nodes = windows[c];
    halve_into(dealt[c], client);
    split.clients.push_back(std::move(client));
  }
  return split;
}

NodeSet unlabeled_nodes(const ClientSplit& client, std::size_t num_nodes_full,
                        const NodeSet& excluded) {
  std::vector<bool> skip(num_nodes_full, false);
  for (NodeId v : excluded) {
    if (v < num_nodes_full) skip[v] = true;
  }
  for (const auto& ln : client.support) skip[ln.node] = true;
  for (const auto& ln : client.query) skip[ln.node] = true;
  NodeSet out;
  if (client.nodes) {
    for (NodeId v : *client.nodes) {
      if (!skip[v]) out.push_back(v);
    }
  } else {
    for (std::size_t v = 0; v < num_nodes_full; ++v) {
      if (!skip[v]) out.push_back(static_cast<NodeId>(v));
    }
  }
  return out;
}

void validate_split(const ExperimentSplit& split, const graph::GraphDataset& g) {
  const std::size_t n = g.num_nodes();
  const std::set<NodeId> test(split.test_nodes.begin(), split.test_nodes.end());
  const std::size_t k = g.num_classes();
  for (const ClientSplit& c : split.clients) {
    const std::string who = "client " + std::to_string(c.id) + ": ";
    std::set<NodeId> support;
    for (const auto& ln : c.support) support.insert(ln.node);
    for (const auto& group : {&c.support, &c.query, &c.adaptation}) {
      for (const auto& ln : *group) {
        if (ln.node >= n) throw InvalidArgument(who + "labeled node outside the graph");
        if (ln.label < 0 || static_cast<std::size_t>(ln.label) >= k) {
          throw InvalidArgument(who + "label outside [0, K)");
        }
        if (c.nodes && !std::binary_search(c.nodes->begin(), c.nodes->end(), ln.node)) {
          throw InvalidArgument(who + "labeled node outside the client graph");
        }
      }
    }
    for (const auto& ln : c.query) {
      if (support.count(ln.node)) throw InvalidArgument(who + "support and query overlap");
    }
    for (const auto& group : {&c.support, &c.query}) {
      for (const auto& ln : *group) {
        if (test.count(ln.node)) throw InvalidArgument(who + "test node used for training");
      }
    }
    if (split.regime == Regime::NewDomain) {
      const ClassId first_new = static_cast<ClassId>(k - split.k0);
      if (!split.params.contains("class_permutation_seed")) {
        for (const auto& group : {&c.support, &c.query}) {
          for (const auto& ln : *group) {
            if (ln.label >= first_new) throw InvalidArgument(who + "training label in new domain");
          }
        }
        for (const auto& ln : c.adaptation) {
          if (ln.label < first_new) throw InvalidArgument(who + "adaptation label in old domain");
        }
        for (ClassId cls : c.new_classes) {
          if (cls < first_new) throw InvalidArgument(who + "new class from the old domain");
        }
      }
      std::set<ClassId> train_classes;
      for (const auto& ln : c.support) train_classes.insert(ln.label);
      for (const auto& ln : c.query) train_classes.insert(ln.label);
      for (ClassId cls : c.new_classes) {
        if (train_classes.count(cls)) throw InvalidArgument(who + "label domains intersect");
      }
      for (const auto& ln : c.adaptation) {
        if (!std::binary_search(c.new_classes.begin(), c.new_classes.end(), ln.label)) {
          throw InvalidArgument(who + "adaptation label not among the client's new classes");
        }
        if (std::binary_search(c.test.begin(), c.test.end(), ln.node)) {
          throw InvalidArgument(who + "adaptation node reused as a test node");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// splits.json

namespace {

json labeled_to_json(const LabeledNodes& nodes) {
  json arr = json::array();
  for (const auto& ln : nodes) arr.push_back({ln.node, ln.label});
  return arr;
}

LabeledNodes labeled_from_json(const json& arr) {
  LabeledNodes out;
  for (const auto& item : arr) out.push_back({item.at(0).get<NodeId>(), item.at(1).get<ClassId>()});
  return out;
}

}  // namespace

json to_json(const ExperimentSplit& split) {
  json j;
  j["regime"] = to_string(split.regime);
  j["seed"] = split.seed;
  j["k0"] = split.k0;
  j["gamma"] = split.gamma ? json(*split.gamma) : json("full");
  j["params"] = split.params;
  j["test_nodes"] = split.test_nodes;
  json clients = json::array();
  for (const ClientSplit& c : split.clients) {
    json cj;
    cj["id"] = c.id;
    cj["nodes"] = c.nodes ? json(*c.nodes) : json("full");
    cj["support"] = labeled_to_json(c.support);
    cj["query"] = labeled_to_json(c.query);
    cj["adaptation"] = labeled_to_json(c.adaptation);
    cj["test"] = c.test;
    cj["new_classes"] = c.new_classes;
    clients.push_back(std::move(cj));
  }
  j["clients"] = std::move(clients);
  return j;
}

ExperimentSplit split_from_json(const json& j) {
  try {
    ExperimentSplit split;
    split.regime = regime_from_string(j.at("regime").get<std::string>());
    split.seed = j.at("seed").get<std::uint64_t>();
    split.k0 = j.value("k0", std::size_t{0});
    const json& gamma = j.value("gamma", json("full"));
    if (gamma.is_number()) split.gamma = gamma.get<double>();
    split.params = j.value("params", json::object());
    split.test_nodes = j.at("test_nodes").get<NodeSet>();
    for (const json& cj : j.at("clients")) {
      ClientSplit c;
      c.id = cj.at("id").get<std::size_t>();
      if (cj.at("nodes").is_array()) c.nodes = cj.at("nodes").get<NodeSet>();
      c.support = labeled_from_json(cj.at("support"));
      c.query = labeled_from_json(cj.at("query"));
      c.adaptation = labeled_from_json(cj.value("adaptation", json::array()));
      c.test = cj.value("test", NodeSet{});
      c.new_classes = cj.value("new_classes", std::vector<ClassId>{});
      split.clients.push_back(std::move(c));
    }
    return split;
  } catch (const json::exception& e) {
    throw DataError(std::string("splits: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("splits: ") + e.what());
  }
}

void save_split(const ExperimentSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_json(split).dump() << '\n';
}

ExperimentSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string(), 0, "cannot open file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
  return split_from_json(j);
}

}  // namespace graphfl::partition
