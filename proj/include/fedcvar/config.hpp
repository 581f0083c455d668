#pragma once

// Experiment configuration: a JSON document with nested sections
// (dataset, partition, ram, model, train, risk, seeds, eval, output).
// Every key is checked against the schema; unknown keys are rejected.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcvar/data.hpp"
#include "fedcvar/fed.hpp"
#include "fedcvar/numerics.hpp"
#include "fedcvar/ram.hpp"

namespace fedcvar::exp {

enum class DatasetKind { Synthetic2D, Mnist, FashionMnist };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::Synthetic2D;
  std::size_t num_classes = 3;

  // Synthetic2D
  std::size_t per_class = 100;
  std::size_t test_per_class = 300;
  double spread = 0.4;
  double radius = 3.0;
  std::array<double, 2> center{0.0, 0.0};
  std::uint64_t seed = 11;
  std::uint64_t test_seed = 12;

  // Mnist / FashionMnist
  std::string dir;  // relative paths resolve against the data root
  std::string train_images = "train-images-idx3-ubyte";
  std::string train_labels = "train-labels-idx1-ubyte";
  std::string test_images = "t10k-images-idx3-ubyte";
  std::string test_labels = "t10k-labels-idx1-ubyte";
  std::size_t train_limit = 0;  // 0 keeps every sample
  std::size_t test_limit = 0;
};

enum class RamKind { Explicit, Geometric, TailThree };

struct RamConfig {
  RamKind kind = RamKind::Explicit;
  std::vector<double> weights;  // Explicit
  double param = 0.5;           // Geometric / TailThree
};

struct EvalConfig {
  std::size_t every = 25;           // evaluation cadence in rounds
  std::size_t summary_points = 1;   // trailing evaluation points averaged into run summaries
  std::size_t smoothing_window = 50;  // plot-time trailing moving average
  bool charts = true;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::string description;
  DatasetConfig dataset;
  PartitionSpec partition;
  RamConfig ram;
  ModelKind model = ModelKind::LogReg;
  std::vector<std::size_t> hidden;
  fed::TrainConfig train;  // arch is filled in by resolve_arch
  EvalConfig eval;
  std::string output_dir;   // empty: runs/<name>
  std::filesystem::path source_dir;  // directory of the config file, for data-root lookup

  /// Keys (dotted paths) that were absent and took their default value.
  std::vector<std::string> defaulted;
};

/// Parses and validates. Throws ConfigError naming the offending key.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fully resolved configuration (every key, defaults included).
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Model descriptor implied by the dataset and model sections.
ModelArch resolve_arch(const ExperimentConfig& cfg);

/// Raw RAM weights built from the recipe (not normalized).
std::vector<double> resolve_ram_weights(const ExperimentConfig& cfg);

/// Replaces every seed in the config (training streams, partition, synthetic
/// data) with streams derived from one base seed.
void apply_seed(ExperimentConfig& cfg, std::uint64_t base);

/// Env var consulted for the dataset directory.
inline constexpr const char* kDataDirEnv = "FEDCVAR_DATA_DIR";

/// Where dataset.dir is looked up: $FEDCVAR_DATA_DIR if set, else
/// <config dir>/../data.
std::filesystem::path data_root(const ExperimentConfig& cfg);

const char* to_string(DatasetKind kind);
const char* to_string(RamKind kind);

}  // namespace fedcvar::exp
