#include "dvdgan/config.hpp"

#include <fstream>
#include <set>

namespace dvdgan {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (data.stride < 1) throw ConfigError("data.stride must be >= 1");
  trainer_spec().validate();
  if (data.dataset_path.empty()) {
    try {
      data.synthetic.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(std::string("data.synthetic: ") + e.what());
    }
    if (data.synthetic.num_classes != generator.num_classes) {
      throw ConfigError("data.synthetic.num_classes (" +
                        std::to_string(data.synthetic.num_classes) +
                        ") must equal generator.num_classes (" +
                        std::to_string(generator.num_classes) + ")");
    }
    const auto span = (preprocess().num_frames - 1) * data.stride + 1;
    if (data.synthetic.clip_length < span) {
      throw ConfigError("data.synthetic.clip_length must be >= " + std::to_string(span) +
                        " for " + std::to_string(preprocess().num_frames) +
                        " frames at stride " + std::to_string(data.stride));
    }
  }
  if (eval.every < 0) throw ConfigError("eval.every must be >= 0");
  if (eval.num_samples < 2) throw ConfigError("eval.num_samples must be >= 2");
  if (eval.batch < 1) throw ConfigError("eval.batch must be >= 1");
  if (eval.splits < 1 || eval.splits > eval.num_samples) {
    throw ConfigError("eval.splits must lie in [1, eval.num_samples]");
  }
  for (double s : eval.stddevs) {
    if (s < 0 || s > 1) throw ConfigError("eval.stddevs entries must lie in [0, 1]");
  }
  const auto& c = eval.classifier;
  if (c.width < 1 || c.epochs < 1 || c.batch_size < 1 || c.lr <= 0) {
    throw ConfigError("eval.classifier width/epochs/batch_size/lr must be positive");
  }
  if (c.holdout_fraction <= 0 || c.holdout_fraction >= 1) {
    throw ConfigError("eval.classifier.holdout_fraction must lie in (0, 1)");
  }
}

TrainerSpec ExperimentConfig::trainer_spec() const {
  return {generator, discriminator, train, fp};
}

data::PreprocessConfig ExperimentConfig::preprocess() const {
  return {generator.resolution, trainer_spec().real_clip_length(), data.stride};
}

// ---------------------------------------------------------------------------

namespace {

json gen_json(const GeneratorConfig& g) {
  return {{"resolution", g.resolution}, {"clip_length", g.clip_length},
          {"ch", g.ch},                 {"layer_constants", g.layer_constants},
          {"num_classes", g.num_classes}, {"latent_dim", g.latent_dim},
          {"embed_dim", g.embed_dim}};
}

json disc_json(const DiscriminatorConfig& d) {
  return {{"resolution", d.resolution}, {"ch", d.ch},
          {"layer_constants", d.layer_constants}, {"num_classes", d.num_classes},
          {"k", d.k}, {"phi", to_string(d.phi)}, {"num_3d_blocks", d.num_3d_blocks}};
}

json train_json(const TrainConfig& t) {
  return {{"batch_size", t.batch_size},       {"lr_g", t.lr_g},
          {"lr_d", t.lr_d},                   {"beta1", t.beta1},
          {"beta2", t.beta2},                 {"adam_eps", t.adam_eps},
          {"d_steps_per_g", t.d_steps_per_g}, {"ema_decay", t.ema_decay},
          {"ema_start_step", t.ema_start_step}, {"total_steps", t.total_steps},
          {"ema_running_stats", t.ema_running_stats}};
}

json synth_json(const data::SyntheticDatasetConfig& s) {
  return {{"num_classes", s.num_classes}, {"resolution", s.resolution},
          {"clip_length", s.clip_length}, {"shapes_per_video", s.shapes_per_video},
          {"min_speed", s.min_speed},     {"max_speed", s.max_speed},
          {"dataset_size", s.dataset_size}, {"seed", s.seed}};
}

json classifier_json(const eval::ClassifierConfig& c) {
  return {{"width", c.width}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
          {"lr", c.lr}, {"holdout_fraction", c.holdout_fraction},
          {"min_accuracy", c.min_accuracy}, {"seed", c.seed}};
}

/// Typed, path-aware reader that remembers which keys it consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      const auto& v = j_.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0) {
            throw ConfigError("");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(field(key) + ": expected " + expected<T>());
    }
  }

  void phi(const std::string& key, Phi& out) {
    std::string name = to_string(out);
    get(key, name);
    try {
      out = parse_phi(name);
    } catch (const ConfigError& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Reader section(const std::string& key) {
    seen_.insert(key);
    return Reader(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + field(item.key()) + "'");
    }
  }

  void skip(const std::string& key) { seen_.insert(key); }

 private:
  template <typename T>
  static std::string expected() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_unsigned_v<T>) return "a non-negative integer";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list of numbers";
  }

  std::string where() const { return path_.empty() ? "config" : path_; }
  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const ExperimentConfig& c) {
  return {{"name", c.name},
          {"out_dir", c.out_dir},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"data",
           {{"dataset_path", c.data.dataset_path},
            {"stride", c.data.stride},
            {"synthetic", synth_json(c.data.synthetic)}}},
          {"generator", gen_json(c.generator)},
          {"discriminator", disc_json(c.discriminator)},
          {"train", train_json(c.train)},
          {"fp", {{"enabled", c.fp.enabled}, {"conditioning_frames", c.fp.conditioning_frames}}},
          {"eval",
           {{"every", c.eval.every},
            {"num_samples", c.eval.num_samples},
            {"batch", c.eval.batch},
            {"splits", c.eval.splits},
            {"seed", c.eval.seed},
            {"stddevs", c.eval.stddevs},
            {"extractor_path", c.eval.extractor_path},
            {"cache_dir", c.eval.cache_dir},
            {"classifier", classifier_json(c.eval.classifier)}}}};
}

ExperimentConfig from_json(const json& j, const ExperimentConfig& base) {
  ExperimentConfig c = base;
  Reader r(j, "");
  r.skip("preset");
  r.get("name", c.name);
  r.get("out_dir", c.out_dir);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  if (r.has("data")) {
    auto d = r.section("data");
    d.get("dataset_path", c.data.dataset_path);
    d.get("stride", c.data.stride);
    if (d.has("synthetic")) {
      auto s = d.section("synthetic");
      auto& sc = c.data.synthetic;
      s.get("num_classes", sc.num_classes);
      s.get("resolution", sc.resolution);
      s.get("clip_length", sc.clip_length);
      s.get("shapes_per_video", sc.shapes_per_video);
      s.get("min_speed", sc.min_speed);
      s.get("max_speed", sc.max_speed);
      s.get("dataset_size", sc.dataset_size);
      s.get("seed", sc.seed);
      s.finish();
    }
    d.finish();
  }
  if (r.has("generator")) {
    auto g = r.section("generator");
    auto& gc = c.generator;
    g.get("resolution", gc.resolution);
    g.get("clip_length", gc.clip_length);
    g.get("ch", gc.ch);
    g.get("layer_constants", gc.layer_constants);
    g.get("num_classes", gc.num_classes);
    g.get("latent_dim", gc.latent_dim);
    g.get("embed_dim", gc.embed_dim);
    g.finish();
  }
  if (r.has("discriminator")) {
    auto d = r.section("discriminator");
    auto& dc = c.discriminator;
    d.get("resolution", dc.resolution);
    d.get("ch", dc.ch);
    d.get("layer_constants", dc.layer_constants);
    d.get("num_classes", dc.num_classes);
    d.get("k", dc.k);
    d.phi("phi", dc.phi);
    d.get("num_3d_blocks", dc.num_3d_blocks);
    d.finish();
  }
  if (r.has("train")) {
    auto t = r.section("train");
    auto& tc = c.train;
    t.get("batch_size", tc.batch_size);
    t.get("lr_g", tc.lr_g);
    t.get("lr_d", tc.lr_d);
    t.get("beta1", tc.beta1);
    t.get("beta2", tc.beta2);
    t.get("adam_eps", tc.adam_eps);
    t.get("d_steps_per_g", tc.d_steps_per_g);
    t.get("ema_decay", tc.ema_decay);
    t.get("ema_start_step", tc.ema_start_step);
    t.get("total_steps", tc.total_steps);
    t.get("ema_running_stats", tc.ema_running_stats);
    t.finish();
  }
  if (r.has("fp")) {
    auto f = r.section("fp");
    f.get("enabled", c.fp.enabled);
    f.get("conditioning_frames", c.fp.conditioning_frames);
    f.finish();
  }
  if (r.has("eval")) {
    auto e = r.section("eval");
    auto& ec = c.eval;
    e.get("every", ec.every);
    e.get("num_samples", ec.num_samples);
    e.get("batch", ec.batch);
    e.get("splits", ec.splits);
    e.get("seed", ec.seed);
    e.get("stddevs", ec.stddevs);
    e.get("extractor_path", ec.extractor_path);
    e.get("cache_dir", ec.cache_dir);
    if (e.has("classifier")) {
      auto k = e.section("classifier");
      auto& kc = ec.classifier;
      k.get("width", kc.width);
      k.get("epochs", kc.epochs);
      k.get("batch_size", kc.batch_size);
      k.get("lr", kc.lr);
      k.get("holdout_fraction", kc.holdout_fraction);
      k.get("min_accuracy", kc.min_accuracy);
      k.get("seed", kc.seed);
      k.finish();
    }
    e.finish();
  }
  r.finish();
  return c;
}

uint64_t ExperimentConfig::model_hash() const {
  auto j = to_json(*this);
  j.erase("name");
  j.erase("out_dir");
  j.erase("checkpoint_every");
  j.erase("eval");
  j["train"].erase("total_steps");
  return fnv1a(j.dump());
}

uint64_t ExperimentConfig::hash() const { return fnv1a(to_json(*this).dump()); }

// ---------------------------------------------------------------------------

std::vector<std::string> preset_names() { return {"desk", "smoke", "paper-appendix-b"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "desk") {
    c.name = "desk";
    c.out_dir = "runs/desk";
    c.discriminator.k = 4;
    return c;
  }
  if (name == "smoke") {
    c.name = "smoke";
    c.out_dir = "runs/smoke";
    c.checkpoint_every = 25;
    c.data.synthetic.resolution = 16;
    c.data.synthetic.clip_length = 10;  // room for C + T_gen = 5 frames at stride 2
    c.data.synthetic.dataset_size = 128;
    c.data.synthetic.min_speed = 0.75;
    c.data.synthetic.max_speed = 1.0;
    c.generator.resolution = 16;
    c.generator.clip_length = 4;
    c.generator.ch = 4;
    c.generator.layer_constants = {4, 2, 1};
    c.generator.latent_dim = 16;
    c.generator.embed_dim = 16;
    c.discriminator.resolution = 16;
    c.discriminator.ch = 4;
    c.discriminator.layer_constants = {2, 4, 8};
    c.discriminator.k = 2;
    c.discriminator.num_3d_blocks = 1;
    c.train.batch_size = 4;
    c.train.ema_start_step = 10;
    c.train.total_steps = 50;
    c.fp.conditioning_frames = 1;
    c.eval.every = 0;
    c.eval.num_samples = 64;
    c.eval.batch = 32;
    c.eval.splits = 4;
    c.eval.classifier.width = 8;
    c.eval.classifier.epochs = 60;
    c.eval.classifier.lr = 3e-3;
    return c;
  }
  if (name == "paper-appendix-b") {
    // 64x64 Kinetics-600 settings; needs the real dataset on disk
    c.name = "paper-appendix-b";
    c.out_dir = "runs/paper-appendix-b";
    c.data.dataset_path = "data/kinetics600";
    c.data.stride = 2;
    c.generator.resolution = 64;
    c.generator.clip_length = 12;
    c.generator.ch = 128;
    c.generator.layer_constants = {8, 8, 8, 4, 2};
    c.generator.num_classes = 600;
    c.discriminator.resolution = 64;
    c.discriminator.ch = 128;
    c.discriminator.layer_constants = {2, 4, 8, 16, 16};
    c.discriminator.num_classes = 600;
    c.discriminator.k = 8;
    c.train.batch_size = 512;
    c.train.ema_start_step = 20000;
    c.train.total_steps = 100000;
    c.data.synthetic.num_classes = 600;
    c.fp.conditioning_frames = 5;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk, smoke or paper-appendix-b)");
}

ExperimentConfig load_config(const std::filesystem::path& file, const std::string& preset_name) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  std::string base = preset_name;
  if (base.empty()) {
    base = "desk";
    if (j.is_object() && j.contains("preset")) {
      if (!j["preset"].is_string()) throw ConfigError("preset: expected a string");
      base = j["preset"].get<std::string>();
    }
  }
  return from_json(j, preset(base));
}

}  // namespace dvdgan
