#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graphfl/algorithms.hpp"
#include "graphfl/config.hpp"
#include "json.hpp"

namespace graphfl::harness {

/// Dataset of an experiment, feature preprocessing applied.
graph::GraphDataset load_experiment_dataset(const config::ExperimentConfig& cfg);

/// Split of one seed per the configured regime (or the replayed file).
partition::ExperimentSplit make_split(const graph::GraphDataset& g,
                                      const config::ExperimentConfig& cfg, std::uint64_t seed);

struct AlgorithmRun {
  algo::Algorithm algorithm = algo::Algorithm::Fl;
  std::uint64_t seed = 0;
  /// Final test accuracy (mean over clients for Il and the new-domain regime).
  double accuracy = 0.0;
  std::vector<double> per_client_accuracy;
  std::vector<fed::MetricsRecord> history;
  std::optional<gnn::ParamVector> final_params;
  double wall_ms = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  partition::ExperimentSplit split;
  /// Self-training only.
  std::optional<double> pseudo_label_purity;
  std::size_t num_pseudo_labels = 0;
  std::vector<AlgorithmRun> runs;
};

struct AlgorithmSummary {
  algo::Algorithm algorithm = algo::Algorithm::Fl;
  std::vector<double> accuracies;
  double mean = 0.0;
  /// Sample standard deviation (0 for a single seed).
  double std = 0.0;
};

struct RunSummary {
  std::vector<SeedRun> seeds;
  std::vector<AlgorithmSummary> algorithms;
  std::optional<double> mean_purity;

  const AlgorithmSummary& summary(algo::Algorithm algorithm) const;
};

/// Per seed: split, optional self-training, every configured algorithm,
/// evaluation. Writes the output tree under `out_dir` unless it is empty.
RunSummary run(const config::ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Loads the config and runs it into `out_dir` (config output_dir if empty).
RunSummary run(const std::filesystem::path& config_path,
               const std::optional<std::filesystem::path>& out_dir = std::nullopt);

enum class SweepAxis { LabelsPerClass, Rho, Gamma, NPseudo };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& s);

/// `cfg` with the axis set to `value` ("full" is accepted for gamma).
config::ExperimentConfig with_axis(const config::ExperimentConfig& cfg, SweepAxis axis,
                                   const std::string& value);

struct SweepPoint {
  std::string value;
  RunSummary summary;
};

/// One run per value, each under out_dir/<axis>=<value>/, plus
/// out_dir/sweep.csv with one row per value.
std::vector<SweepPoint> sweep(const config::ExperimentConfig& cfg, SweepAxis axis,
                              const std::vector<std::string>& values,
                              const std::filesystem::path& out_dir);

/// %.17g, with ".0" appended to integral values.
std::string format_double(double v);
/// Compact JSON with every float written by format_double.
std::string dump_json(const nlohmann::json& j);

nlohmann::json to_json(const fed::MetricsRecord& rec);
nlohmann::json to_json(const RunSummary& summary);

}  // namespace graphfl::harness
