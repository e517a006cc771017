#include "graphfl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace graphfl::config {

using nlohmann::json;

namespace {

/// Reads one JSON object, tracking the dotted path for error messages and
/// rejecting keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(j_.at(key), field(key));
  }

  template <typename T>
  std::optional<T> get_optional(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return convert<T>(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown field");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<T>();
    } else {
      static_assert(std::is_integral_v<T>);
      if (!v.is_number_integer() && !v.is_number_unsigned()) {
        throw ConfigError(path, "expected an integer");
      }
      if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
        throw ConfigError(path, "must not be negative");
      }
      return v.get<T>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
auto rethrow_as_config(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
}

DatasetConfig parse_dataset(const json& j, const std::filesystem::path& base_dir) {
  ObjectReader r(j, "dataset");
  DatasetConfig d;
  const bool has_path = r.has("path");
  const bool has_synth = r.has("synthetic");
  if (has_path == has_synth) {
    throw ConfigError("dataset", "give exactly one of 'path' and 'synthetic'");
  }
  if (has_path) {
    d.path = std::filesystem::path(ObjectReader::convert<std::string>(r.at("path"), "dataset.path"));
    if (d.path.is_relative() && !base_dir.empty()) d.path = base_dir / d.path;
  } else {
    ObjectReader s(r.at("synthetic"), "dataset.synthetic");
    graph::SbmParams p;
    p.blocks = s.get<std::size_t>("blocks", p.blocks);
    p.nodes_per_block = s.get<std::size_t>("nodes_per_block", p.nodes_per_block);
    p.p_in = s.get<double>("p_in", p.p_in);
    p.p_out = s.get<double>("p_out", p.p_out);
    p.feature_noise = s.get<double>("feature_noise", p.feature_noise);
    p.seed = s.get<std::uint64_t>("seed", p.seed);
    s.finish();
    d.synthetic = p;
  }
  d.normalize_features = r.get<bool>("normalize_features", !has_synth);
  r.finish();
  return d;
}

gnn::ModelSpec parse_model(const json& j) {
  ObjectReader r(j, "model");
  gnn::ModelSpec m;
  if (r.has("kind")) {
    m.kind = rethrow_as_config("model.kind", [&] {
      return gnn::model_kind_from_string(ObjectReader::convert<std::string>(r.at("kind"), "model.kind"));
    });
  }
  m.hidden_dim = r.get<std::size_t>("hidden_dim", m.hidden_dim);
  m.propagation_steps = r.get<std::size_t>("propagation_steps", m.propagation_steps);
  m.weight_decay = r.get<double>("weight_decay", m.weight_decay);
  r.finish();
  rethrow_as_config("model", [&] {
    m.validate();
    return 0;
  });
  return m;
}

PartitionConfig parse_partition(const json& j) {
  ObjectReader r(j, "partition");
  PartitionConfig p;
  p.num_clients = r.get<std::size_t>("num_clients", p.num_clients);
  p.labels_per_class = r.get<std::size_t>("labels_per_class", p.labels_per_class);
  p.test_size = r.get<std::size_t>("test_size", p.test_size);
  if (r.has("gamma")) {
    const json& g = r.at("gamma");
    if (g.is_string()) {
      if (g.get<std::string>() != "full") throw ConfigError("partition.gamma", "expected a number or \"full\"");
    } else {
      const double v = ObjectReader::convert<double>(g, "partition.gamma");
      // 1 means complete overlap, i.e. every client holds the full graph.
      if (v < 1.0) p.gamma = v;
      if (v < 0.0 || v > 1.0) throw ConfigError("partition.gamma", "must lie in [0, 1]");
    }
  }
  p.k0 = r.get<std::size_t>("k0", p.k0);
  p.n_per_class = r.get<std::size_t>("n_per_class", p.n_per_class);
  p.n_adapt = r.get_optional<std::size_t>("n_adapt");
  p.n_test_per_class = r.get<std::size_t>("n_test_per_class", p.n_test_per_class);
  p.class_permutation_seed = r.get_optional<std::uint64_t>("class_permutation_seed");
  r.finish();
  return p;
}

algo::TrainConfig parse_train(const json& j, const gnn::ModelSpec& model, double* beta_newdomain) {
  ObjectReader r(j, "train");
  algo::TrainConfig t;
  t.alpha = r.get<double>("alpha", model.kind == gnn::ModelKind::Sgc ? 0.2 : 0.05);
  t.beta = r.get<double>("beta", 0.5);
  *beta_newdomain = r.get<double>("beta_newdomain", t.alpha);
  t.episodes = r.get<std::size_t>("episodes", t.episodes);
  t.local_steps = r.get<std::size_t>("local_steps", t.local_steps);
  t.rho = r.get<double>("rho", t.rho);
  if (r.has("second_order")) {
    t.second_order = rethrow_as_config("train.second_order", [&] {
      return algo::second_order_from_string(
          ObjectReader::convert<std::string>(r.at("second_order"), "train.second_order"));
    });
  }
  t.adapt_steps = r.get<std::size_t>("adapt_steps", t.local_steps);
  t.adapt_alpha = r.get<double>("adapt_alpha", t.alpha);
  if (r.has("baseline_labels")) {
    t.baseline_labels = rethrow_as_config("train.baseline_labels", [&] {
      return algo::baseline_labels_from_string(
          ObjectReader::convert<std::string>(r.at("baseline_labels"), "train.baseline_labels"));
    });
  }
  t.normalize_meta = r.get<bool>("normalize_meta", t.normalize_meta);
  t.threads = r.get<std::size_t>("threads", t.threads);
  r.finish();
  if (!(*beta_newdomain > 0.0)) throw ConfigError("train.beta_newdomain", "must be positive");
  return t;
}

std::vector<algo::Algorithm> parse_algorithms(ObjectReader& r) {
  const bool one = r.has("algorithm");
  const bool many = r.has("algorithms");
  if (one == many) throw ConfigError("algorithms", "give exactly one of 'algorithm' and 'algorithms'");
  const std::string key = one ? "algorithm" : "algorithms";
  const json& v = r.at(key);
  std::vector<json> items;
  if (one) {
    items.push_back(v);
  } else {
    if (!v.is_array() || v.empty()) throw ConfigError(key, "expected a nonempty list");
    items.assign(v.begin(), v.end());
  }
  std::vector<algo::Algorithm> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string path = one ? key : key + "[" + std::to_string(i) + "]";
    const auto a = rethrow_as_config(path, [&] {
      return algo::algorithm_from_string(ObjectReader::convert<std::string>(items[i], path));
    });
    for (auto seen : out) {
      if (seen == a) throw ConfigError(path, "listed twice");
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace

algo::TrainConfig ExperimentConfig::train_for(algo::Algorithm algorithm, std::uint64_t seed) const {
  algo::TrainConfig t = train;
  t.seed = seed;
  if (algorithm == algo::Algorithm::GraphFlNewDomain) t.beta = beta_newdomain;
  return t;
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  ObjectReader r(j, "");
  ExperimentConfig cfg;
  if (!r.has("dataset")) throw ConfigError("dataset", "missing");
  cfg.dataset = parse_dataset(r.at("dataset"), base_dir);
  cfg.model = parse_model(r.has("model") ? r.at("model") : json::object());
  if (r.has("regime")) {
    cfg.regime = rethrow_as_config("regime", [&] {
      return partition::regime_from_string(ObjectReader::convert<std::string>(r.at("regime"), "regime"));
    });
  }
  cfg.partition = parse_partition(r.has("partition") ? r.at("partition") : json::object());
  cfg.train = parse_train(r.has("train") ? r.at("train") : json::object(), cfg.model,
                          &cfg.beta_newdomain);
  cfg.algorithms = parse_algorithms(r);
  if (r.has("self_training")) {
    ObjectReader s(r.at("self_training"), "self_training");
    cfg.self_training.enabled = s.get<bool>("enabled", cfg.self_training.enabled);
    cfg.self_training.n_pseudo_per_class =
        s.get<std::size_t>("n_pseudo_per_class", cfg.self_training.n_pseudo_per_class);
    s.finish();
  }
  if (r.has("seeds")) {
    const json& s = r.at("seeds");
    if (!s.is_array()) throw ConfigError("seeds", "expected a list of integers");
    cfg.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      cfg.seeds.push_back(ObjectReader::convert<std::uint64_t>(s[i], "seeds[" + std::to_string(i) + "]"));
    }
  }
  if (r.has("splits_file")) {
    std::filesystem::path p(ObjectReader::convert<std::string>(r.at("splits_file"), "splits_file"));
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    cfg.splits_file = p;
  }
  if (r.has("output_dir")) {
    cfg.output_dir = ObjectReader::convert<std::string>(r.at("output_dir"), "output_dir");
    if (cfg.output_dir.is_relative() && !base_dir.empty()) cfg.output_dir = base_dir / cfg.output_dir;
  }
  r.finish();
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("seeds", "must not be empty");
  if (cfg.splits_file && cfg.seeds.size() != 1) {
    throw ConfigError("splits_file", "a replayed split needs exactly one seed");
  }
  if (cfg.partition.num_clients == 0) throw ConfigError("partition.num_clients", "must be positive");
  if (cfg.algorithms.empty()) throw ConfigError("algorithms", "must not be empty");
  for (auto a : cfg.algorithms) {
    const bool nd = cfg.regime == partition::Regime::NewDomain;
    if (algo::requires_new_domain(a) != nd) {
      throw ConfigError("algorithms", "algorithm " + algo::to_string(a) + " cannot run in the " +
                                          partition::to_string(cfg.regime) + " regime");
    }
  }
  if (cfg.regime == partition::Regime::NewDomain && cfg.partition.n_per_class < 2) {
    throw ConfigError("partition.n_per_class", "needs at least 2 nodes to form support and query");
  }
  try {
    cfg.train.validate(cfg.model);
  } catch (const ConfigError& e) {
    throw ConfigError("train." + e.path(), e.what() + e.path().size() + 2);
  }
  if (cfg.dataset.synthetic && !(cfg.dataset.synthetic->p_in > cfg.dataset.synthetic->p_out)) {
    throw ConfigError("dataset.synthetic", "p_in must exceed p_out");
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  json dataset;
  if (cfg.dataset.synthetic) {
    const auto& s = *cfg.dataset.synthetic;
    dataset["synthetic"] = {{"blocks", s.blocks},
                            {"nodes_per_block", s.nodes_per_block},
                            {"p_in", s.p_in},
                            {"p_out", s.p_out},
                            {"feature_noise", s.feature_noise},
                            {"seed", s.seed}};
  } else {
    dataset["path"] = cfg.dataset.path.string();
  }
  dataset["normalize_features"] = cfg.dataset.normalize_features;

  const auto& p = cfg.partition;
  json partition = {{"num_clients", p.num_clients},
                    {"labels_per_class", p.labels_per_class},
                    {"test_size", p.test_size},
                    {"gamma", p.gamma ? json(*p.gamma) : json("full")},
                    {"k0", p.k0},
                    {"n_per_class", p.n_per_class},
                    {"n_adapt", p.n_adapt ? json(*p.n_adapt) : json(nullptr)},
                    {"n_test_per_class", p.n_test_per_class},
                    {"class_permutation_seed",
                     p.class_permutation_seed ? json(*p.class_permutation_seed) : json(nullptr)}};

  const auto& t = cfg.train;
  json train = {{"alpha", t.alpha},
                {"beta", t.beta},
                {"beta_newdomain", cfg.beta_newdomain},
                {"episodes", t.episodes},
                {"local_steps", t.local_steps},
                {"rho", t.rho},
                {"second_order", algo::to_string(t.second_order)},
                {"adapt_steps", t.adapt_steps},
                {"adapt_alpha", t.effective_adapt_alpha()},
                {"baseline_labels", algo::to_string(t.baseline_labels)},
                {"normalize_meta", t.normalize_meta},
                {"threads", t.threads}};

  json algorithms = json::array();
  for (auto a : cfg.algorithms) algorithms.push_back(algo::to_string(a));

  json out = {{"dataset", dataset},
              {"model",
               {{"kind", gnn::to_string(cfg.model.kind)},
                {"hidden_dim", cfg.model.hidden_dim},
                {"propagation_steps", cfg.model.propagation_steps},
                {"weight_decay", cfg.model.weight_decay}}},
              {"regime", partition::to_string(cfg.regime)},
              {"partition", partition},
              {"train", train},
              {"algorithms", algorithms},
              {"self_training",
               {{"enabled", cfg.self_training.enabled},
                {"n_pseudo_per_class", cfg.self_training.n_pseudo_per_class}}},
              {"seeds", cfg.seeds},
              {"output_dir", cfg.output_dir.string()}};
  out["splits_file"] = cfg.splits_file ? json(cfg.splits_file->string()) : json(nullptr);
  return out;
}

}  // namespace graphfl::config
