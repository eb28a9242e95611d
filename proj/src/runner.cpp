#include "dvdgan/runner.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

namespace dvdgan {

std::string provenance(const ExperimentConfig& config) {
  return std::string("dvdgan ") + kVersion + " config=" + hex64(config.hash()) +
         " model=" + hex64(config.model_hash());
}

std::shared_ptr<const data::Dataset> load_dataset(const ExperimentConfig& config) {
  if (config.data.dataset_path.empty()) {
    return std::make_shared<const data::Dataset>(
        data::generate_synthetic_dataset(config.data.synthetic));
  }
  const std::filesystem::path dir = config.data.dataset_path;
  if (!std::filesystem::exists(dir / "index.tsv")) {
    throw IoError("data.dataset_path: no dataset at '" + dir.string() +
                  "' (expected an index.tsv; create one with `dvdgan dataset synth`)");
  }
  auto dataset = std::make_shared<const data::Dataset>(data::read_dataset(dir));
  for (const auto& v : *dataset) {
    if (v.label < 0 || v.label >= config.generator.num_classes) {
      throw ConfigError("data.dataset_path: label " + std::to_string(v.label) +
                        " outside generator.num_classes");
    }
  }
  return dataset;
}

namespace {

std::filesystem::path extractor_file(const ExperimentConfig& config) {
  return config.eval.extractor_path.empty()
             ? std::filesystem::path(config.out_dir) / "extractor.bin"
             : std::filesystem::path(config.eval.extractor_path);
}

std::filesystem::path cache_dir(const ExperimentConfig& config) {
  return config.eval.cache_dir.empty() ? std::filesystem::path(config.out_dir) / "cache"
                                       : std::filesystem::path(config.eval.cache_dir);
}

void say(const RunOptions& options, const std::string& msg) {
  if (options.log) options.log(msg);
}

}  // namespace

std::shared_ptr<const eval::FeatureExtractor> obtain_extractor(
    const ExperimentConfig& config, const data::Dataset& dataset, bool train_if_missing,
    const std::function<void(const std::string&)>& log) {
  const auto file = extractor_file(config);
  const auto pre = config.preprocess();
  if (std::filesystem::exists(file)) {
    auto ex = std::make_shared<const eval::FeatureExtractor>(eval::FeatureExtractor::load(file));
    if (ex->info().resolution != pre.resolution || ex->info().clip_length != pre.num_frames) {
      throw ConfigError("eval.extractor_path: extractor expects " +
                        std::to_string(ex->info().clip_length) + "x" +
                        std::to_string(ex->info().resolution) + "px clips, config produces " +
                        std::to_string(pre.num_frames) + "x" + std::to_string(pre.resolution));
    }
    return ex;
  }
  if (!train_if_missing) {
    throw ConfigError("no feature extractor at '" + file.string() +
                      "'; pass --train-extractor to train one on the dataset, or set "
                      "eval.extractor_path");
  }
  if (log) log("training feature extractor -> " + file.string());
  auto ex = eval::train_feature_extractor(
      dataset, pre, config.generator.num_classes, config.eval.classifier,
      [&](int64_t epoch, double acc) {
        if (log) {
          char buf[96];
          std::snprintf(buf, sizeof(buf), "  extractor epoch %lld held-out accuracy %.3f",
                        static_cast<long long>(epoch), acc);
          log(buf);
        }
      });
  ex.save(file);
  return std::make_shared<const eval::FeatureExtractor>(std::move(ex));
}

RunResult run_training(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const std::filesystem::path out = config.out_dir;
  std::filesystem::create_directories(out / "checkpoints");
  {
    auto j = to_json(config);
    j["provenance"] = provenance(config);
    std::ofstream f(out / "config.json", std::ios::trunc);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("cannot write " + (out / "config.json").string());
  }

  const auto dataset = load_dataset(config);
  data::Batcher batcher(dataset, config.preprocess(), derive_seed(config.seed, 100));
  Trainer trainer(config.trainer_spec(), config.seed, config.model_hash());
  trainer.config_json = to_json(config);
  if (options.resume) {
    trainer.load(*options.resume, &batcher);
    say(options, "resumed from " + options.resume->string() + " at step " +
                     std::to_string(trainer.step()));
  }
  MetricsLog metrics(out / "metrics.csv", trainer.step());

  std::optional<eval::EvalStats> reference;
  std::unique_ptr<data::Batcher> eval_conditioning;
  if (options.extractor) {
    reference = eval::reference_stats(*dataset, config.preprocess(), *options.extractor,
                                      cache_dir(config), config.eval.seed);
    if (config.fp.enabled) {
      eval_conditioning = std::make_unique<data::Batcher>(dataset, config.preprocess(),
                                                          derive_seed(config.eval.seed, 5));
    }
  }

  RunResult result;
  const auto t0 = std::chrono::steady_clock::now();
  auto save = [&]() {
    char name[64];
    std::snprintf(name, sizeof(name), "step_%08lld.bin", static_cast<long long>(trainer.step()));
    result.checkpoint = out / "checkpoints" / name;
    trainer.save(result.checkpoint, &batcher);
    trainer.save(out / "checkpoints" / "latest.bin", &batcher);
  };

  const auto total = config.train.total_steps;
  while (trainer.step() < total && (!options.stop_after || trainer.step() < *options.stop_after)) {
    const auto stats = trainer.train_step(batcher);
    const auto step = trainer.step();
    std::optional<double> fid, is;
    if (options.extractor && config.eval.every > 0 &&
        (step % config.eval.every == 0 || step == total)) {
      if (eval_conditioning) {
        eval_conditioning->load_state(data::Batcher(dataset, config.preprocess(),
                                                    derive_seed(config.eval.seed, 5))
                                          .save_state());
      }
      const auto r = eval::evaluate_model(eval::ema_sampler(trainer, 1.0, eval_conditioning.get()),
                                          *options.extractor, *reference,
                                          config.eval.num_samples, config.eval.seed,
                                          config.eval.batch, config.eval.splits);
      fid = r.fid;
      is = r.is_mean;
      result.curve.push_back({step, r.fid, r.is_mean});
      char buf[128];
      std::snprintf(buf, sizeof(buf), "step %lld  FID %.4f  IS %.4f", static_cast<long long>(step),
                    r.fid, r.is_mean);
      say(options, buf);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.write(step, stats, fid, is, wall);
    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) save();
  }
  save();
  result.final_step = trainer.step();
  result.sampling_hash = trainer.sampling_hash();
  return result;
}

LoadedRun load_run(const std::filesystem::path& checkpoint) {
  const auto archive = read_archive(checkpoint);
  if (!archive.meta.contains("config")) {
    throw CheckpointError(checkpoint.string() + " does not embed its configuration");
  }
  LoadedRun run;
  run.config = from_json(archive.meta.at("config"), preset("desk"));
  run.config.validate();
  run.trainer = std::make_unique<Trainer>(run.config.trainer_spec(), run.config.seed,
                                          run.config.model_hash());
  run.trainer->config_json = archive.meta.at("config");
  run.trainer->from_archive(archive, nullptr);
  return run;
}

}  // namespace dvdgan
