#pragma once

#include "dvdgan/config.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dvdgan {

/// The configured dataset: read from data.dataset_path, or synthesized.
/// A missing path raises IoError naming the field.
std::shared_ptr<const data::Dataset> load_dataset(const ExperimentConfig& config);

/// Loads the extractor named by eval.extractor_path (default
/// <out>/extractor.bin); trains and saves one first when `train_if_missing`.
std::shared_ptr<const eval::FeatureExtractor> obtain_extractor(
    const ExperimentConfig& config, const data::Dataset& dataset, bool train_if_missing,
    const std::function<void(const std::string&)>& log = {});

struct CurvePoint {
  int64_t step = 0;
  double fid = 0;
  double is = 0;
};

struct RunOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
  std::optional<int64_t> stop_after;            // stop once this step is reached
  std::shared_ptr<const eval::FeatureExtractor> extractor;  // enables periodic eval
  std::function<void(const std::string&)> log;
};

struct RunResult {
  int64_t final_step = 0;
  std::vector<CurvePoint> curve;
  uint64_t sampling_hash = 0;
  std::filesystem::path checkpoint;
};

/// Trains `config` under config.out_dir: metrics.csv (one row per G step),
/// config.json, checkpoints/step_XXXXXXXX.bin and checkpoints/latest.bin.
/// Evaluates the EMA generator every eval.every steps and at the end when an
/// extractor is supplied.
RunResult run_training(const ExperimentConfig& config, const RunOptions& options = {});

/// Rebuilds the trainer recorded in a checkpoint (config embedded in it).
struct LoadedRun {
  ExperimentConfig config;
  std::unique_ptr<Trainer> trainer;
};
LoadedRun load_run(const std::filesystem::path& checkpoint);

/// Provenance line stamped into artifacts.
std::string provenance(const ExperimentConfig& config);

}  // namespace dvdgan
