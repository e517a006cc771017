#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graphfl/algorithms.hpp"
#include "graphfl/graph.hpp"
#include "graphfl/model.hpp"
#include "graphfl/partition.hpp"
#include "json.hpp"

namespace graphfl::config {

struct DatasetConfig {
  /// Directory in the canonical CSV layout; empty when synthetic is set.
  std::filesystem::path path;
  std::optional<graph::SbmParams> synthetic;
  bool normalize_features = true;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct PartitionConfig {
  std::size_t num_clients = 50;
  std::size_t labels_per_class = 20;
  std::size_t test_size = 1000;
  /// Overlap regime; nullopt = "full" (every client holds the whole graph).
  std::optional<double> gamma;
  std::size_t k0 = 2;
  std::size_t n_per_class = 10;
  std::optional<std::size_t> n_adapt;
  std::size_t n_test_per_class = 20;
  std::optional<std::uint64_t> class_permutation_seed;

  friend bool operator==(const PartitionConfig&, const PartitionConfig&) = default;
};

struct SelfTrainingConfig {
  bool enabled = false;
  std::size_t n_pseudo_per_class = 5;

  friend bool operator==(const SelfTrainingConfig&, const SelfTrainingConfig&) = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  gnn::ModelSpec model;
  partition::Regime regime = partition::Regime::NonIid;
  PartitionConfig partition;
  /// Shared training settings; train.beta is the server meta step of the
  /// non-IID algorithm.
  algo::TrainConfig train;
  /// Client meta step of the new-domain algorithm.
  double beta_newdomain = 0.05;
  std::vector<algo::Algorithm> algorithms;
  SelfTrainingConfig self_training;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// Replays a saved split instead of generating one (single seed only).
  std::optional<std::filesystem::path> splits_file;
  std::filesystem::path output_dir = "out";

  /// Training settings for one algorithm and seed.
  algo::TrainConfig train_for(algo::Algorithm algorithm, std::uint64_t seed) const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses and validates; missing fields take their defaults. Relative
/// paths are resolved against `base_dir`. Errors are ConfigError with the
/// dotted field path.
ExperimentConfig parse_config(const nlohmann::json& j,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully materialized form: every default is written out.
nlohmann::json to_json(const ExperimentConfig& cfg);

void validate(const ExperimentConfig& cfg);

}  // namespace graphfl::config
