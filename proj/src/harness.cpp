#include "graphfl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "graphfl/dataset_io.hpp"

namespace graphfl::harness {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Output formatting

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "NaN" : (v > 0 ? "Infinity" : "-Infinity");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

namespace {

void dump_into(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += json(key).dump();
        out += ':';
        dump_into(value, out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_into(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      break;
    default:
      out += j.dump();
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string(), 0, "cannot open for writing");
  out << text;
  if (!out) throw DataError(path.string(), 0, "write failed");
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string dump_json(const json& j) {
  std::string out;
  dump_into(j, out);
  return out;
}

json to_json(const fed::MetricsRecord& rec) {
  json j = {{"episode", rec.episode},
            {"participating_client_ids", rec.participants},
            {"mean_support_loss", optional_json(rec.mean_support_loss)},
            {"mean_query_loss", optional_json(rec.mean_query_loss)},
            {"global_test_accuracy", optional_json(rec.global_test_accuracy)}};
  if (rec.pseudo_label_purity) j["pseudo_label_purity"] = *rec.pseudo_label_purity;
  return j;
}

const AlgorithmSummary& RunSummary::summary(algo::Algorithm algorithm) const {
  for (const auto& a : algorithms) {
    if (a.algorithm == algorithm) return a;
  }
  throw InvalidArgument("no results for algorithm " + algo::to_string(algorithm));
}

json to_json(const RunSummary& summary) {
  json algorithms = json::object();
  for (const auto& a : summary.algorithms) {
    algorithms[algo::to_string(a.algorithm)] = {
        {"accuracies", a.accuracies}, {"mean", a.mean}, {"std", a.std}};
  }
  json seeds = json::array();
  json purity = json::array();
  for (const auto& s : summary.seeds) {
    seeds.push_back(s.seed);
    if (s.pseudo_label_purity) purity.push_back(*s.pseudo_label_purity);
  }
  json j = {{"seeds", seeds}, {"algorithms", algorithms}};
  if (summary.mean_purity) {
    j["pseudo_label_purity"] = {{"per_seed", purity}, {"mean", *summary.mean_purity}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Data and splits

graph::GraphDataset load_experiment_dataset(const config::ExperimentConfig& cfg) {
  graph::GraphDataset g = [&] {
    if (cfg.dataset.synthetic) {
      try {
        return graph::generate_sbm(*cfg.dataset.synthetic);
      } catch (const InvalidArgument& e) {
        throw ConfigError("dataset.synthetic", e.what());
      }
    }
    return io::load_dataset(cfg.dataset.path);
  }();
  return cfg.dataset.normalize_features ? graph::row_normalize_features(g) : g;
}

namespace {

NodeSet training_nodes(const partition::ExperimentSplit& split) {
  NodeSet out;
  for (const auto& c : split.clients) {
    for (const auto& ln : c.all_labeled()) out.push_back(ln.node);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

partition::ExperimentSplit make_split(const graph::GraphDataset& g,
                                      const config::ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.splits_file) {
    partition::ExperimentSplit split = partition::load_split(*cfg.splits_file);
    try {
      partition::validate_split(split, g);
    } catch (const InvalidArgument& e) {
      throw DataError(cfg.splits_file->string(), 0, e.what());
    }
    return split;
  }
  const auto& p = cfg.partition;
  try {
    partition::ExperimentSplit split;
    switch (cfg.regime) {
      case partition::Regime::NewDomain: {
        partition::NewDomainParams nd;
        nd.num_clients = p.num_clients;
        nd.k0 = p.k0;
        nd.n_per_class = p.n_per_class;
        nd.n_adapt = p.n_adapt;
        nd.n_test_per_class = p.n_test_per_class;
        nd.class_permutation_seed = p.class_permutation_seed;
        nd.seed = seed;
        split = partition::partition_new_domain(g, nd);
        break;
      }
      case partition::Regime::NonIid:
        split = partition::partition_labels_noniid(g, p.num_clients, p.labels_per_class, seed);
        break;
      case partition::Regime::Overlap:
        if (p.gamma) {
          const auto windows = partition::partition_overlap(g, p.num_clients, *p.gamma, seed);
          split = partition::partition_labels_overlap(g, windows, p.labels_per_class, *p.gamma, seed);
        } else {
          split = partition::partition_labels_noniid(g, p.num_clients, p.labels_per_class, seed);
          split.regime = partition::Regime::Overlap;
          split.params["gamma"] = "full";
        }
        break;
    }
    if (cfg.regime != partition::Regime::NewDomain) {
      split.test_nodes = partition::sample_test_set(g, training_nodes(split), p.test_size, seed);
      split.params["test_size"] = p.test_size;
    }
    partition::validate_split(split, g);
    return split;
  } catch (const InvalidArgument& e) {
    throw ConfigError("partition", e.what());
  }
}

// ---------------------------------------------------------------------------
// Running

namespace {

std::vector<double> new_domain_accuracy(const graph::GraphDataset& g, const gnn::ParamVector& params,
                                        const algo::Federation& fed, const algo::TrainConfig& tc) {
  std::vector<double> out;
  for (const auto& p : algo::adapt_and_predict(params, fed, tc)) {
    if (p.nodes.empty()) continue;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p.nodes.size(); ++i) {
      if (g.labels()[p.nodes[i]] == p.predicted[i]) ++correct;
    }
    out.push_back(static_cast<double>(correct) / static_cast<double>(p.nodes.size()));
  }
  return out;
}

AlgorithmRun run_algorithm(algo::Algorithm algorithm, const graph::GraphDataset& g,
                           const partition::ExperimentSplit& split, const algo::Federation& fed,
                           const config::ExperimentConfig& cfg, std::uint64_t seed,
                           std::optional<double> purity) {
  const auto start = std::chrono::steady_clock::now();
  const algo::TrainConfig tc = cfg.train_for(algorithm, seed);
  AlgorithmRun run;
  run.algorithm = algorithm;
  run.seed = seed;

  std::vector<ClassId> truth;
  truth.reserve(split.test_nodes.size());
  for (NodeId v : split.test_nodes) truth.push_back(g.labels()[v]);
  const auto global_accuracy = [&](const gnn::ParamVector& params) {
    return algo::evaluate(*fed.global_ctx, params, split.test_nodes, truth, fed.head_classes);
  };

  if (algorithm == algo::Algorithm::Il) {
    const auto models = algo::individual_learning(fed, tc);
    fed::MetricsRecord rec;
    rec.episode = tc.episodes;
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (!models[i]) continue;
      rec.participants.push_back(fed.clients[i].id);
      run.per_client_accuracy.push_back(global_accuracy(*models[i]));
    }
    if (run.per_client_accuracy.empty()) {
      throw ConfigError("partition.labels_per_class", "no client received any labels");
    }
    run.accuracy = mean_of(run.per_client_accuracy);
    rec.global_test_accuracy = run.accuracy;
    rec.pseudo_label_purity = purity;
    run.history.push_back(std::move(rec));
  } else {
    const bool new_domain = split.regime == partition::Regime::NewDomain;
    std::vector<double> last_per_client;
    auto state = algo::run_episodes(
        algorithm, algo::initial_state(fed, tc), fed, tc,
        [&](fed::MetricsRecord& rec, const gnn::ParamVector& params) {
          if (new_domain) {
            last_per_client = new_domain_accuracy(g, params, fed, tc);
            rec.global_test_accuracy = mean_of(last_per_client);
          } else {
            rec.global_test_accuracy = global_accuracy(params);
          }
          rec.pseudo_label_purity = purity;
        });
    run.accuracy = state.history.back().global_test_accuracy.value();
    run.per_client_accuracy = std::move(last_per_client);
    run.history = std::move(state.history);
    run.final_params = std::move(state.global_params);
  }
  run.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return run;
}

void write_algorithm_run(const AlgorithmRun& run, const SeedRun& seed_run, const fs::path& dir) {
  fs::create_directories(dir);
  std::string metrics, timings;
  for (const auto& rec : run.history) {
    metrics += dump_json(to_json(rec)) + "\n";
    timings += dump_json({{"episode", rec.episode}, {"wall_ms", rec.wall_ms}}) + "\n";
  }
  write_text(dir / "metrics.jsonl", metrics);
  write_text(dir / "timings.jsonl", timings);
  if (run.final_params) gnn::save_params((dir / "final.ckpt").string(), *run.final_params);
  json result = {{"algorithm", algo::to_string(run.algorithm)},
                 {"seed", run.seed},
                 {"accuracy", run.accuracy},
                 {"per_client_accuracy", run.per_client_accuracy},
                 {"wall_ms", run.wall_ms}};
  if (seed_run.pseudo_label_purity) {
    result["pseudo_label_purity"] = *seed_run.pseudo_label_purity;
    result["num_pseudo_labels"] = seed_run.num_pseudo_labels;
  }
  write_text(dir / "result.json", dump_json(result) + "\n");
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

}  // namespace

RunSummary run(const config::ExperimentConfig& cfg, const fs::path& out_dir) {
  config::validate(cfg);
  const graph::GraphDataset g = load_experiment_dataset(cfg);
  const bool write = !out_dir.empty();
  if (write) {
    fs::create_directories(out_dir);
    write_text(out_dir / "config.resolved.json", dump_json(config::to_json(cfg)) + "\n");
  }

  RunSummary summary;
  for (std::uint64_t seed : cfg.seeds) {
    SeedRun seed_run;
    seed_run.seed = seed;
    seed_run.split = make_split(g, cfg, seed);
    const fs::path seed_dir = out_dir / seed_dir_name(seed);
    if (write) {
      fs::create_directories(seed_dir);
      partition::save_split(seed_run.split, seed_dir / "splits.json");
    }

    algo::Federation fed = algo::build_federation(g, seed_run.split, cfg.model);
    if (cfg.self_training.enabled) {
      algo::TrainConfig tc = cfg.train;
      tc.seed = seed;
      auto st = algo::self_train_augment(seed_run.split, fed, tc,
                                         cfg.self_training.n_pseudo_per_class);
      seed_run.num_pseudo_labels = st.pseudo_labels.size();
      if (!st.pseudo_labels.empty()) {
        std::size_t correct = 0;
        for (const auto& ln : st.pseudo_labels) {
          if (g.labels()[ln.node] == ln.label) ++correct;
        }
        seed_run.pseudo_label_purity =
            static_cast<double>(correct) / static_cast<double>(st.pseudo_labels.size());
      }
      fed = algo::build_federation(g, st.split, cfg.model);
      if (write) partition::save_split(st.split, seed_dir / "splits_augmented.json");
    }

    for (auto algorithm : cfg.algorithms) {
      AlgorithmRun r = run_algorithm(algorithm, g, seed_run.split, fed, cfg, seed,
                                     seed_run.pseudo_label_purity);
      if (write) write_algorithm_run(r, seed_run, seed_dir / algo::to_string(algorithm));
      seed_run.runs.push_back(std::move(r));
    }
    summary.seeds.push_back(std::move(seed_run));
  }

  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    AlgorithmSummary s;
    s.algorithm = cfg.algorithms[a];
    for (const auto& seed_run : summary.seeds) s.accuracies.push_back(seed_run.runs[a].accuracy);
    s.mean = mean_of(s.accuracies);
    s.std = sample_std(s.accuracies);
    summary.algorithms.push_back(std::move(s));
  }
  std::vector<double> purities;
  for (const auto& seed_run : summary.seeds) {
    if (seed_run.pseudo_label_purity) purities.push_back(*seed_run.pseudo_label_purity);
  }
  if (!purities.empty()) summary.mean_purity = mean_of(purities);

  if (write) write_text(out_dir / "summary.json", dump_json(to_json(summary)) + "\n");
  return summary;
}

RunSummary run(const fs::path& config_path, const std::optional<fs::path>& out_dir) {
  const config::ExperimentConfig cfg = config::load_config(config_path);
  return run(cfg, out_dir.value_or(cfg.output_dir));
}

// ---------------------------------------------------------------------------
// Sweeps

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::LabelsPerClass: return "labels_per_class";
    case SweepAxis::Rho: return "rho";
    case SweepAxis::Gamma: return "gamma";
    case SweepAxis::NPseudo: return "n_pseudo";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  for (auto a : {SweepAxis::LabelsPerClass, SweepAxis::Rho, SweepAxis::Gamma, SweepAxis::NPseudo}) {
    if (s == to_string(a)) return a;
  }
  throw ConfigError("axis", "unknown sweep axis '" + s + "'");
}

namespace {

double parse_real(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(path, "expected a number, got '" + s + "'");
  }
}

std::size_t parse_count(const std::string& s, const std::string& path) {
  const double v = parse_real(s, path);
  if (v < 0 || v != std::floor(v)) throw ConfigError(path, "expected a count, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

config::ExperimentConfig with_axis(const config::ExperimentConfig& cfg, SweepAxis axis,
                                   const std::string& value) {
  config::ExperimentConfig out = cfg;
  switch (axis) {
    case SweepAxis::LabelsPerClass:
      if (cfg.regime == partition::Regime::NewDomain) {
        out.partition.n_per_class = parse_count(value, "partition.n_per_class");
      } else {
        out.partition.labels_per_class = parse_count(value, "partition.labels_per_class");
      }
      break;
    case SweepAxis::Rho:
      out.train.rho = parse_real(value, "train.rho");
      break;
    case SweepAxis::Gamma:
      if (cfg.regime != partition::Regime::Overlap) {
        throw ConfigError("axis", "the gamma axis needs the overlap regime");
      }
      if (value == "full") {
        out.partition.gamma.reset();
      } else {
        const double g = parse_real(value, "partition.gamma");
        if (g < 0.0 || g > 1.0) throw ConfigError("partition.gamma", "must lie in [0, 1]");
        out.partition.gamma = g < 1.0 ? std::optional<double>(g) : std::nullopt;
      }
      break;
    case SweepAxis::NPseudo:
      out.self_training.enabled = true;
      out.self_training.n_pseudo_per_class = parse_count(value, "self_training.n_pseudo_per_class");
      break;
  }
  config::validate(out);
  return out;
}

std::vector<SweepPoint> sweep(const config::ExperimentConfig& cfg, SweepAxis axis,
                              const std::vector<std::string>& values, const fs::path& out_dir) {
  if (values.empty()) throw ConfigError("values", "no sweep values given");
  std::vector<config::ExperimentConfig> points;
  for (const auto& v : values) points.push_back(with_axis(cfg, axis, v));

  std::vector<SweepPoint> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const fs::path dir = out_dir.empty() ? fs::path() : out_dir / (to_string(axis) + "=" + values[i]);
    out.push_back({values[i], run(points[i], dir)});
  }

  if (!out_dir.empty()) {
    std::string csv = to_string(axis);
    for (auto a : cfg.algorithms) csv += "," + algo::to_string(a) + "_mean," + algo::to_string(a) + "_std";
    if (axis == SweepAxis::NPseudo) csv += ",pseudo_label_purity";
    csv += "\n";
    for (const auto& p : out) {
      csv += p.value;
      for (const auto& s : p.summary.algorithms) {
        csv += "," + format_double(s.mean) + "," + format_double(s.std);
      }
      if (axis == SweepAxis::NPseudo) {
        csv += "," + (p.summary.mean_purity ? format_double(*p.summary.mean_purity) : std::string());
      }
      csv += "\n";
    }
    fs::create_directories(out_dir);
    write_text(out_dir / "sweep.csv", csv);
  }
  return out;
}

}  // namespace graphfl::harness
