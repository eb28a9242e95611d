#pragma once

#include "dvdgan/data/synthetic.hpp"
#include "dvdgan/evaluation.hpp"
#include "dvdgan/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dvdgan {

inline constexpr const char* kVersion = "0.1.0";

struct DataConfig {
  std::string dataset_path;  // empty: synthesize from `synthetic` in memory
  data::SyntheticDatasetConfig synthetic;
  int64_t stride = 2;
};

struct EvalConfig {
  int64_t every = 1000;  // G steps between in-training evaluations; 0 disables
  int64_t num_samples = 2048;
  int64_t batch = 64;
  int64_t splits = 10;
  uint64_t seed = 1234;
  std::vector<double> stddevs{0.0, 0.25, 0.5, 0.75, 1.0};
  std::string extractor_path;  // empty: <out>/extractor.bin, trained on demand
  std::string cache_dir;       // empty: <out>/cache
  eval::ClassifierConfig classifier;
};

struct ExperimentConfig {
  std::string name = "desk";
  std::string out_dir = "runs/desk";
  uint64_t seed = 0;
  int64_t checkpoint_every = 500;
  DataConfig data;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;
  FPConfig fp;
  EvalConfig eval;

  /// Checks every section and their cross-constraints; throws ConfigError
  /// naming the offending field.
  void validate() const;

  TrainerSpec trainer_spec() const;
  /// Preprocessing implied by the model: resolution R, T (or C + T_gen) frames.
  data::PreprocessConfig preprocess() const;

  /// Hash of everything that shapes the trained parameters. Output locations,
  /// step budgets and evaluation settings are excluded so runs can be extended
  /// and re-evaluated from their checkpoints.
  uint64_t model_hash() const;
  /// Hash of the whole configuration.
  uint64_t hash() const;
};

nlohmann::json to_json(const ExperimentConfig& config);

/// Overlays `j` on `base`. Unknown keys and wrongly typed values raise
/// ConfigError with the dotted field path. A top-level "preset" key selects
/// the base when `base` is not given explicitly.
ExperimentConfig from_json(const nlohmann::json& j, const ExperimentConfig& base);

std::vector<std::string> preset_names();
/// "desk", "smoke" or "paper-appendix-b".
ExperimentConfig preset(const std::string& name);

/// Reads a JSON config file. The base is `preset_name` if non-empty, else the
/// file's "preset" key, else "desk".
ExperimentConfig load_config(const std::filesystem::path& file, const std::string& preset_name);

}  // namespace dvdgan
