// Command-line front end: experiment runs, sweeps and dataset tooling.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "graphfl/config.hpp"
#include "graphfl/dataset_io.hpp"
#include "graphfl/harness.hpp"

namespace {

using namespace graphfl;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

void print_summary(const harness::RunSummary& summary) {
  for (const auto& a : summary.algorithms) {
    std::printf("%-18s mean %.4f  std %.4f  (%zu seeds)\n", algo::to_string(a.algorithm).c_str(),
                a.mean, a.std, a.accuracies.size());
  }
  if (summary.mean_purity) std::printf("pseudo-label purity %.4f\n", *summary.mean_purity);
}

std::vector<std::string> split_values(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated semi-supervised node classification simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "Output directory (default: the config's output_dir)");

  std::string axis, values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a config over several values of one axis");
  sweep_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  sweep_cmd->add_option("--axis", axis, "labels_per_class | rho | gamma | n_pseudo")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated axis values")->required();
  sweep_cmd->add_option("--out", out_dir, "Output directory (default: the config's output_dir)");

  std::uint64_t seed = 0;
  std::string out_file;
  auto* splits_cmd = app.add_subcommand("gen-splits", "Write the split a config produces for a seed");
  splits_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  splits_cmd->add_option("--seed", seed, "Split seed");
  splits_cmd->add_option("--out", out_file, "Output splits.json")->required();

  graph::SbmParams sbm;
  auto* synth_cmd = app.add_subcommand("gen-synth", "Generate a stochastic block model dataset");
  synth_cmd->add_option("--blocks", sbm.blocks, "Number of blocks (= classes)");
  synth_cmd->add_option("--nodes-per-block", sbm.nodes_per_block, "Nodes per block");
  synth_cmd->add_option("--p-in", sbm.p_in, "Edge probability within a block");
  synth_cmd->add_option("--p-out", sbm.p_out, "Edge probability across blocks");
  synth_cmd->add_option("--feature-noise", sbm.feature_noise, "Std of the feature noise");
  synth_cmd->add_option("--seed", sbm.seed, "Generator seed");
  synth_cmd->add_option("--out", out_dir, "Output dataset directory")->required();

  std::string format = "csv", content, cites, input, name = "dataset";
  bool largest_component = false;
  auto* convert_cmd = app.add_subcommand("convert", "Convert a dataset to the canonical CSV layout");
  convert_cmd->add_option("--format", format, "linqs | csv")
      ->check(CLI::IsMember({"linqs", "csv"}));
  convert_cmd->add_option("--content", content, "LINQS .content file");
  convert_cmd->add_option("--cites", cites, "LINQS .cites file");
  convert_cmd->add_option("--in", input, "Input dataset directory (csv format)");
  convert_cmd->add_option("--name", name, "Dataset name (linqs format)");
  convert_cmd->add_flag("--largest-component", largest_component,
                        "Keep only the largest connected component");
  convert_cmd->add_option("--out", out_dir, "Output dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run_cmd->parsed()) {
      const auto summary = harness::run(
          config_path, out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir));
      print_summary(summary);
    } else if (sweep_cmd->parsed()) {
      const auto cfg = config::load_config(config_path);
      const auto points = harness::sweep(cfg, harness::sweep_axis_from_string(axis),
                                         split_values(values),
                                         out_dir.empty() ? cfg.output_dir : fs::path(out_dir));
      for (const auto& p : points) {
        std::printf("%s=%s\n", axis.c_str(), p.value.c_str());
        print_summary(p.summary);
      }
    } else if (splits_cmd->parsed()) {
      const auto cfg = config::load_config(config_path);
      const auto g = harness::load_experiment_dataset(cfg);
      partition::save_split(harness::make_split(g, cfg, seed), out_file);
    } else if (synth_cmd->parsed()) {
      graph::GraphDataset g = [&] {
        try {
          return graph::generate_sbm(sbm);
        } catch (const InvalidArgument& e) {
          throw ConfigError("gen-synth", e.what());
        }
      }();
      io::write_dataset(g, out_dir);
    } else if (convert_cmd->parsed()) {
      if (format == "linqs") {
        if (content.empty() || cites.empty()) {
          throw ConfigError("convert", "--content and --cites are required for --format linqs");
        }
        io::LinqsDataset data = io::load_linqs(content, cites, name);
        if (largest_component) data = io::restrict_to_largest_component(data);
        io::write_dataset(data.graph, out_dir);
        std::printf("%s: %zu nodes, %zu edges, %zu features, %zu classes\n", name.c_str(),
                    data.graph.num_nodes(), data.graph.num_edges(), data.graph.num_features(),
                    data.graph.num_classes());
      } else {
        if (input.empty()) throw ConfigError("convert", "--in is required for --format csv");
        io::IngestStats stats;
        graph::GraphDataset g = io::load_dataset(input, &stats);
        if (largest_component) g = graph::subgraph(g, graph::largest_component(g));
        io::write_dataset(g, out_dir);
        std::printf("%zu nodes, %zu edges (%zu duplicate edges, %zu self-loops dropped)\n",
                    g.num_nodes(), g.num_edges(), stats.duplicate_edges, stats.self_loops);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
