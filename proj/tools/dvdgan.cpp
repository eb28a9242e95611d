// dvdgan: train, sample, predict, evaluate and ablate desk-scale DVD-GAN models.
//
// Exit codes: 0 ok, 1 usage or config error, 2 training diverged, 3 I/O error.

#include "dvdgan/ablation.hpp"
#include "dvdgan/image.hpp"
#include "dvdgan/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace dvdgan;
namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::string preset;
  std::optional<uint64_t> seed;
  std::string out;
  std::string resume;
  std::vector<std::string> overrides;
};

void info(const std::string& msg) { std::cerr << msg << "\n"; }

/// --set a.b.c=value, with value parsed as JSON (bare words become strings).
void apply_override(nlohmann::json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + spec + "'");
  }
  const auto key = spec.substr(0, eq);
  const auto text = spec.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

ExperimentConfig resolve_config(const Globals& g) {
  ExperimentConfig c;
  if (!g.config.empty()) {
    c = load_config(g.config, g.preset);
  } else {
    c = preset(g.preset.empty() ? "desk" : g.preset);
  }
  if (!g.overrides.empty()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& o : g.overrides) apply_override(j, o);
    c = from_json(j, c);
  }
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out_dir = g.out;
  c.validate();
  return c;
}

fs::path out_dir(const Globals& g, const std::string& fallback) {
  return g.out.empty() ? fs::path(fallback) : fs::path(g.out);
}

void write_json(const fs::path& file, const nlohmann::json& j) {
  std::ofstream f(file, std::ios::trunc);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("cannot write " + file.string());
}

/// Saves videos [N, T, R, R, 3] as a tensor file, a row montage and one
/// raster-scan montage per video.
void emit_videos(const fs::path& dir, const std::string& stem, const torch::Tensor& videos,
                 const nlohmann::json& meta, int64_t raster_columns) {
  fs::create_directories(dir);
  auto u8 = data::to_uint8(videos);
  write_tensor_file(dir / (stem + ".tensor"), u8, meta);
  image::write_png(dir / (stem + "_montage.png"), image::video_rows_montage(u8));
  for (int64_t i = 0; i < u8.size(0); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%03lld.png", stem.c_str(), static_cast<long long>(i));
    image::write_png(dir / name, image::raster_montage(u8[i], raster_columns));
  }
  write_json(dir / (stem + ".json"), meta);
}

// --------------------------------------------------------------------------

int cmd_dataset_synth(const Globals& g) {
  auto c = resolve_config(g);
  const auto dir = out_dir(g, "data/synthetic");
  const auto videos = data::generate_synthetic_dataset(c.data.synthetic);
  data::write_dataset(dir, videos);
  info("wrote " + std::to_string(videos.size()) + " videos to " + dir.string() +
       " (hash " + hex64(data::dataset_hash(videos)) + ")");
  return 0;
}

int cmd_dataset_clip(const Globals& g, int64_t index, int64_t frames, const std::string& file) {
  auto c = resolve_config(g);
  const auto dataset = load_dataset(c);
  if (index < 0 || index >= static_cast<int64_t>(dataset->size())) {
    throw InvalidInput("--index out of range [0, " + std::to_string(dataset->size()) + ")");
  }
  auto pre = c.preprocess();
  pre.num_frames = frames > 0 ? frames : pre.num_frames;
  auto gen = make_generator(c.seed);
  auto clip = data::preprocess((*dataset)[static_cast<size_t>(index)], pre, gen);
  write_tensor_file(file, data::to_uint8(clip.frames), {{"label", clip.label}, {"index", index}});
  info("wrote clip " + std::to_string(index) + " (" + c10::str(clip.frames.sizes()) + ") to " +
       file);
  return 0;
}

int cmd_train(const Globals& g, std::optional<int64_t> steps, std::optional<int64_t> stop_after,
              bool train_extractor) {
  auto c = resolve_config(g);
  RunOptions opts;
  opts.log = info;
  opts.stop_after = stop_after;
  if (!g.resume.empty()) {
    fs::path r = g.resume;
    if (g.resume == "auto") r = fs::path(c.out_dir) / "checkpoints" / "latest.bin";
    opts.resume = r;
    if (g.config.empty() && g.preset.empty() && g.overrides.empty()) {
      // no config given: continue with the one embedded in the checkpoint
      auto out = c.out_dir;
      c = load_run(r).config;
      c.out_dir = g.out.empty() ? c.out_dir : out;
    }
  }
  if (steps) c.train.total_steps = *steps;
  if (train_extractor || !c.eval.extractor_path.empty()) {
    if (c.eval.every > 0) {
      const auto dataset = load_dataset(c);
      opts.extractor = obtain_extractor(c, *dataset, train_extractor, info);
    }
  }
  info(provenance(c));
  const auto r = run_training(c, opts);
  info("finished at step " + std::to_string(r.final_step) + "; checkpoint " +
       r.checkpoint.string());
  return 0;
}

LoadedRun load_checkpoint_arg(const Globals& g, const std::string& checkpoint) {
  const auto path = checkpoint.empty() ? g.resume : checkpoint;
  if (path.empty()) throw ConfigError("--checkpoint is required");
  return load_run(path);
}

int cmd_sample(const Globals& g, const std::string& checkpoint, int64_t label, int64_t count,
               double stddev) {
  auto run = load_checkpoint_arg(g, checkpoint);
  auto& t = *run.trainer;
  const auto& gc = run.config.generator;
  if (run.config.fp.enabled) throw ConfigError("use `predict` for frame-prediction checkpoints");
  if (label < 0 || label >= gc.num_classes) {
    throw InvalidInput("--class " + std::to_string(label) + " out of range [0, " +
                       std::to_string(gc.num_classes) + ")");
  }
  if (count < 1) throw InvalidInput("--count must be >= 1");
  auto gen = make_generator(g.seed.value_or(0));
  auto z = sample_latents(count, gc.latent_dim, stddev, gen);
  auto videos = t.sample(z, torch::full({count}, label, torch::kInt64));
  nlohmann::json meta = {{"provenance", provenance(run.config)},
                         {"class", label},
                         {"stddev", stddev},
                         {"step", t.step()},
                         {"shape", videos.sizes().vec()}};
  const auto dir = out_dir(g, "samples");
  emit_videos(dir, "samples", videos, meta, std::min<int64_t>(gc.clip_length, 8));
  info("wrote " + std::to_string(count) + " samples to " + dir.string());
  return 0;
}

int cmd_interpolate(const Globals& g, const std::string& checkpoint, const std::string& mode,
                    int64_t steps, int64_t y1, int64_t y2) {
  auto run = load_checkpoint_arg(g, checkpoint);
  auto& t = *run.trainer;
  const auto& gc = run.config.generator;
  for (auto y : {y1, y2}) {
    if (y < 0 || y >= gc.num_classes) throw InvalidInput("class id out of range");
  }
  auto gen = make_generator(g.seed.value_or(0));
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> videos;
  if (mode == "latent") {
    auto z1 = sample_latents(1, gc.latent_dim, 1.0, gen);
    auto z2 = sample_latents(1, gc.latent_dim, 1.0, gen);
    videos = interpolate_latent(t.ema, z1, z2, y1, steps);
  } else if (mode == "class") {
    auto z = sample_latents(1, gc.latent_dim, 1.0, gen);
    videos = interpolate_class(t.ema, z, y1, y2, steps);
  } else {
    throw InvalidInput("--mode must be 'latent' or 'class'");
  }
  auto stacked = torch::stack(videos, 0);  // [steps, T, R, R, 3]
  const auto dir = out_dir(g, "interpolation");
  nlohmann::json meta = {{"provenance", provenance(run.config)}, {"mode", mode},
                         {"steps", steps}, {"class", y1}, {"class2", y2}};
  fs::create_directories(dir);
  auto u8 = data::to_uint8(stacked);
  write_tensor_file(dir / "interpolation.tensor", u8, meta);
  // one column per interpolation step, time running down
  image::write_png(dir / "interpolation.png",
                   image::video_rows_montage(u8.permute({1, 0, 2, 3, 4}).contiguous()));
  write_json(dir / "interpolation.json", meta);
  info("wrote " + std::to_string(steps) + "-step " + mode + " interpolation to " + dir.string());
  return 0;
}

int cmd_predict(const Globals& g, const std::string& checkpoint, const std::string& frames_file,
                int64_t count, double stddev) {
  auto run = load_checkpoint_arg(g, checkpoint);
  auto& t = *run.trainer;
  if (!run.config.fp.enabled) throw ConfigError("checkpoint is not a frame-prediction model");
  const auto c = run.config.fp.conditioning_frames;
  auto frames = read_tensor_file(frames_file);
  if (frames.dim() != 4 || frames.size(0) < c) {
    throw InvalidInput("--frames must hold at least " + std::to_string(c) +
                       " frames [T, H, W, 3]");
  }
  if (frames.scalar_type() == torch::kUInt8) frames = frames.to(torch::kFloat32) / 127.5 - 1.0;
  auto cond = frames.slice(0, 0, c).unsqueeze(0).expand({count, c, frames.size(1),
                                                          frames.size(2), 3}).contiguous();
  auto gen = make_generator(g.seed.value_or(0));
  auto z = sample_latents(count, run.config.generator.latent_dim, stddev, gen);
  auto videos = t.sample(z, torch::zeros({count}, torch::kInt64), cond);
  nlohmann::json meta = {{"provenance", provenance(run.config)},
                         {"conditioning_frames", c},
                         {"stddev", stddev},
                         {"shape", videos.sizes().vec()}};
  const auto dir = out_dir(g, "prediction");
  emit_videos(dir, "continuation", videos, meta, videos.size(1));
  info("wrote " + std::to_string(count) + " continuations to " + dir.string());
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, std::vector<double> stddevs,
             bool train_extractor, bool real, std::optional<int64_t> num_samples) {
  ExperimentConfig c;
  std::unique_ptr<Trainer> trainer;
  if (real) {
    c = resolve_config(g);
  } else {
    auto run = load_checkpoint_arg(g, checkpoint);
    c = run.config;
    trainer = std::move(run.trainer);
    if (!g.out.empty()) c.out_dir = g.out;
  }
  if (num_samples) c.eval.num_samples = *num_samples;
  if (stddevs.empty()) stddevs = c.eval.stddevs;
  const auto dataset = load_dataset(c);
  const auto extractor = obtain_extractor(c, *dataset, train_extractor, info);
  const fs::path cache = c.eval.cache_dir.empty() ? fs::path(c.out_dir) / "cache"
                                                  : fs::path(c.eval.cache_dir);
  const auto reference =
      eval::reference_stats(*dataset, c.preprocess(), *extractor, cache, c.eval.seed);

  std::unique_ptr<data::Batcher> conditioning;
  std::function<eval::VideoSampler(double)> make_sampler;
  if (real) {
    // the real-vs-real floor. Synthetic data gets a disjoint held-out set drawn
    // with another seed; an on-disk dataset can only be re-cropped.
    data::Dataset held;
    if (c.data.dataset_path.empty()) {
      auto s = c.data.synthetic;
      s.seed = derive_seed(s.seed, 0x4e1d);
      held = data::generate_synthetic_dataset(s);
    } else {
      held = *dataset;
    }
    const auto clips = eval::preprocess_all(held, c.preprocess(), derive_seed(c.eval.seed, 9));
    make_sampler = [clips](double) { return eval::clip_sampler(clips.videos); };
  } else {
    make_sampler = [&](double s) {
      if (c.fp.enabled) {
        conditioning = std::make_unique<data::Batcher>(dataset, c.preprocess(),
                                                       derive_seed(c.eval.seed, 5));
      }
      return eval::ema_sampler(*trainer, s, conditioning.get());
    };
  }
  const auto points = eval::truncation_sweep(make_sampler, *extractor, reference, stddevs,
                                             c.eval.num_samples, c.eval.seed, c.eval.batch,
                                             c.eval.splits);
  const fs::path dir = c.out_dir;
  const auto prov = provenance(c) + " extractor=" + hex64(extractor->hash()) +
                    (real ? " source=real" : " step=" + std::to_string(trainer->step()));
  eval::write_truncation_csv(dir / "truncation.csv", points, prov);
  image::write_png(dir / "truncation.png", eval::truncation_plot(points));
  for (const auto& p : points) {
    if (p.stddev == 1.0) {
      std::printf("no truncation: FID %.4f  IS %.4f +- %.4f\n", p.result.fid, p.result.is_mean,
                  p.result.is_std);
    }
  }
  const auto& best = points[eval::best_is_index(points)];
  std::printf("best IS at stddev %.2f: FID %.4f  IS %.4f +- %.4f\n", best.stddev,
              best.result.fid, best.result.is_mean, best.result.is_std);
  info("wrote " + (dir / "truncation.csv").string());
  return 0;
}

int cmd_ablate(const Globals& g, ablation::AblationSpec spec, bool train_extractor) {
  auto base = resolve_config(g);
  const fs::path dir = g.out.empty() ? fs::path("runs/ablation-" + spec.axis) : fs::path(g.out);
  const auto dataset = load_dataset(base);
  auto ex_config = base;
  ex_config.out_dir = dir.string();
  const auto extractor = obtain_extractor(ex_config, *dataset, train_extractor, info);
  if (base.eval.cache_dir.empty()) base.eval.cache_dir = (dir / "cache").string();
  info(provenance(base) + " extractor=" + hex64(extractor->hash()));
  const auto report = ablation::run_ablation(
      spec, base, dir, [&](const ExperimentConfig& c) {
        info("run " + c.name);
        RunOptions opts;
        opts.extractor = extractor;
        opts.log = info;
        return run_training(c, opts).curve;
      });
  for (const auto& r : report.runs) {
    if (r.failed) info("run " + r.value + "/seed" + std::to_string(r.seed) + " failed: " + r.error);
  }
  if (spec.values.size() >= 2) {
    const auto [is_frac, fid_frac] = ablation::trend_fraction(report, spec.values.back(),
                                                              spec.values.front());
    std::printf("%s=%s vs %s=%s: IS >= at %.0f%% of checkpoints, FID <= at %.0f%%\n",
                spec.axis.c_str(), spec.values.back().c_str(), spec.axis.c_str(),
                spec.values.front().c_str(), 100 * is_frac, 100 * fid_frac);
  }
  info("report bundle in " + dir.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale dual video discriminator GAN"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON experiment config");
  app.add_option("--preset", g.preset, "base preset: desk, smoke, paper-appendix-b");
  app.add_option("--seed", g.seed, "experiment / sampling seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--resume", g.resume, "checkpoint to resume from ('auto' = <out>/latest)");
  app.add_option("--set", g.overrides, "config override key.path=value (repeatable)");

  auto* dataset = app.add_subcommand("dataset", "dataset utilities");
  dataset->require_subcommand(1);
  auto* synth = dataset->add_subcommand("synth", "write the synthetic moving-shapes dataset");
  auto* clip = dataset->add_subcommand("clip", "export one preprocessed clip as a tensor file");
  int64_t clip_index = 0, clip_frames = 0;
  std::string clip_file = "clip.tensor";
  clip->add_option("--index", clip_index, "video index");
  clip->add_option("--frames", clip_frames, "frames to keep (default: model clip length)");
  clip->add_option("--file", clip_file, "output tensor file");

  auto* train = app.add_subcommand("train", "train a model");
  std::optional<int64_t> steps, stop_after;
  bool train_extractor = false;
  train->add_option("--steps", steps, "override train.total_steps");
  train->add_option("--stop-after", stop_after, "stop (with a checkpoint) at this step");
  train->add_flag("--train-extractor", train_extractor,
                  "train the evaluation classifier if missing (enables periodic FID/IS)");

  std::string checkpoint;
  double stddev = 1.0;
  auto* sample = app.add_subcommand("sample", "sample videos from a checkpoint");
  int64_t label = 0, count = 4;
  sample->add_option("--checkpoint", checkpoint, "checkpoint file");
  sample->add_option("--class", label, "class id");
  sample->add_option("--count", count, "number of videos");
  sample->add_option("--stddev", stddev, "latent standard deviation (truncation)");

  auto* interp = app.add_subcommand("interpolate", "latent or class interpolation");
  std::string mode = "latent";
  int64_t interp_steps = 8, class2 = 0;
  interp->add_option("--checkpoint", checkpoint, "checkpoint file");
  interp->add_option("--mode", mode, "latent or class");
  interp->add_option("--steps", interp_steps, "interpolation steps (>= 2)");
  interp->add_option("--class", label, "class id (start class for mode=class)");
  interp->add_option("--class2", class2, "end class for mode=class");

  auto* predict = app.add_subcommand("predict", "continue a conditioning clip");
  std::string frames_file;
  predict->add_option("--checkpoint", checkpoint, "frame-prediction checkpoint");
  predict->add_option("--frames", frames_file, "conditioning clip tensor file")->required();
  predict->add_option("--count", count, "continuations to draw");
  predict->add_option("--stddev", stddev, "latent standard deviation");

  auto* evaluate = app.add_subcommand("eval", "FID / IS truncation curve");
  std::vector<double> stddevs;
  bool real = false;
  std::optional<int64_t> num_samples;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file");
  evaluate->add_option("--stddevs", stddevs, "truncation sweep")->delimiter(',');
  evaluate->add_flag("--train-extractor", train_extractor, "train the classifier if missing");
  evaluate->add_flag("--real", real, "score held-out real data instead of a model");
  evaluate->add_option("--num-samples", num_samples, "samples per sweep point");

  auto* ablate = app.add_subcommand("ablate", "multi-seed k / phi ablation");
  ablation::AblationSpec spec;
  ablate->add_option("--axis", spec.axis, "k or phi");
  ablate->add_option("--values", spec.values, "values along the axis")->delimiter(',')->required();
  ablate->add_option("--seeds", spec.seeds, "seeds")->delimiter(',');
  ablate->add_option("--steps", spec.steps, "G steps per run");
  ablate->add_option("--eval-every", spec.eval_every, "steps between evaluations");
  ablate->add_option("--parallelism", spec.parallelism, "concurrent runs");
  ablate->add_flag("--train-extractor", train_extractor, "train the classifier if missing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_dataset_synth(g);
    if (clip->parsed()) return cmd_dataset_clip(g, clip_index, clip_frames, clip_file);
    if (train->parsed()) return cmd_train(g, steps, stop_after, train_extractor);
    if (sample->parsed()) return cmd_sample(g, checkpoint, label, count, stddev);
    if (interp->parsed()) {
      return cmd_interpolate(g, checkpoint, mode, interp_steps, label,
                             mode == "class" ? class2 : label);
    }
    if (predict->parsed()) return cmd_predict(g, checkpoint, frames_file, count, stddev);
    if (evaluate->parsed()) {
      return cmd_eval(g, checkpoint, stddevs, train_extractor, real, num_samples);
    }
    if (ablate->parsed()) return cmd_ablate(g, spec, train_extractor);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const eval::ExtractorGateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
