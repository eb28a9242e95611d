#include "dvdgan/training.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dvdgan {

torch::Tensor d_loss_hinge(const torch::Tensor& real_scores, const torch::Tensor& fake_scores) {
  return torch::relu(1.0 - real_scores).mean() + torch::relu(1.0 + fake_scores).mean();
}

torch::Tensor g_loss_hinge(const torch::Tensor& fake_scores) { return -fake_scores.mean(); }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (lr_g < 0 || lr_d < 0) throw ConfigError("train learning rates must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw ConfigError("train.beta1 / train.beta2 must lie in [0, 1)");
  }
  if (adam_eps <= 0) throw ConfigError("train.adam_eps must be > 0");
  if (d_steps_per_g < 1) throw ConfigError("train.d_steps_per_g must be >= 1");
  if (ema_decay < 0 || ema_decay > 1) throw ConfigError("train.ema_decay must lie in [0, 1]");
  if (ema_start_step < 0) throw ConfigError("train.ema_start_step must be >= 0");
  if (total_steps < 0) throw ConfigError("train.total_steps must be >= 0");
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(torch::zeros_like(p));
    v_.push_back(torch::zeros_like(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    p.mutable_grad().reset();
  }
}

void Adam::step() {
  torch::NoGradGuard no_grad;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& g = params_[i].grad();
    if (!g.defined()) continue;
    m_[i].mul_(beta1_).add_(g, 1.0 - beta1_);
    v_[i].mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    auto denom = (v_[i] / c2).sqrt_().add_(eps_);
    params_[i].addcdiv_(m_[i], denom, -lr_ / c1);
  }
}

void Adam::save(Archive& archive, const std::string& prefix) const {
  archive.meta[prefix + "t"] = t_;
  for (size_t i = 0; i < params_.size(); ++i) {
    archive.add(prefix + "m." + std::to_string(i), m_[i]);
    archive.add(prefix + "v." + std::to_string(i), v_[i]);
  }
}

void Adam::load(const Archive& archive, const std::string& prefix) {
  torch::NoGradGuard no_grad;
  t_ = archive.meta.at(prefix + "t").get<int64_t>();
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto& m = archive.tensor(prefix + "m." + std::to_string(i));
    const auto& v = archive.tensor(prefix + "v." + std::to_string(i));
    if (m.sizes() != m_[i].sizes() || v.sizes() != v_[i].sizes()) {
      throw CheckpointError("optimizer moment " + prefix + std::to_string(i) +
                            " does not match its parameter");
    }
    m_[i].copy_(m);
    v_[i].copy_(v);
  }
}

// ---------------------------------------------------------------------------

namespace {

double checked(const torch::Tensor& loss, const char* what, int64_t update) {
  const double value = loss.item<double>();
  if (!std::isfinite(value)) {
    throw DivergenceError(std::string("non-finite ") + what + " loss (" + std::to_string(value) +
                          ") at update " + std::to_string(update));
  }
  return value;
}

double mean_of(const torch::Tensor& t) { return t.detach().mean().item<double>(); }

void copy_state(torch::nn::Module& dst, const torch::nn::Module& src) {
  torch::NoGradGuard no_grad;
  auto dp = dst.parameters();
  auto sp = src.parameters();
  for (size_t i = 0; i < dp.size(); ++i) dp[i].copy_(sp[i]);
  auto db = dst.buffers();
  auto sb = src.buffers();
  for (size_t i = 0; i < db.size(); ++i) db[i].copy_(sb[i]);
}

}  // namespace

StepStats adversarial_step(const AdversarialHooks& hooks, Adam& d_opt, Adam& g_opt,
                           int64_t d_steps, int64_t* d_updates, int64_t* g_updates) {
  StepStats stats;
  for (int64_t i = 0; i < d_steps; ++i) {
    d_opt.zero_grad();
    torch::Tensor loss;
    const auto d = hooks.d_loss(loss);
    const double value = checked(loss, "discriminator", *d_updates + 1);
    loss.backward();
    d_opt.step();
    ++*d_updates;
    stats.d_loss += value / static_cast<double>(d_steps);
    stats.ds_real += d.ds_real / static_cast<double>(d_steps);
    stats.ds_fake += d.ds_fake / static_cast<double>(d_steps);
    stats.dt_real += d.dt_real / static_cast<double>(d_steps);
    stats.dt_fake += d.dt_fake / static_cast<double>(d_steps);
  }
  g_opt.zero_grad();
  auto loss = hooks.g_loss();
  stats.g_loss = checked(loss, "generator", *g_updates + 1);
  loss.backward();
  g_opt.step();
  ++*g_updates;
  return stats;
}

void ema_update(torch::nn::Module& ema, const torch::nn::Module& model, int64_t step,
                int64_t start_step, double decay) {
  torch::NoGradGuard no_grad;
  auto ep = ema.parameters();
  auto mp = model.parameters();
  if (ep.size() != mp.size()) {
    throw InvalidInput("EMA copy is not congruent with the model");
  }
  for (size_t i = 0; i < ep.size(); ++i) {
    if (step < start_step) {
      ep[i].copy_(mp[i]);
    } else {
      ep[i].mul_(decay).add_(mp[i], 1.0 - decay);
    }
  }
  auto eb = ema.buffers();
  auto mb = model.buffers();
  for (size_t i = 0; i < eb.size(); ++i) eb[i].copy_(mb[i]);
}

// ---------------------------------------------------------------------------

void TrainerSpec::validate() const {
  generator.validate();
  fp.validate();
  train.validate();
  discriminator.validate(real_clip_length());
  if (generator.resolution != discriminator.resolution) {
    throw ConfigError("generator.resolution and discriminator.resolution differ");
  }
  if (generator.num_classes != discriminator.num_classes) {
    throw ConfigError("generator.num_classes and discriminator.num_classes differ");
  }
  if (fp.enabled && discriminator.k > generator.clip_length) {
    throw ConfigError("discriminator.k must not exceed the generated frame count in fp mode");
  }
}

int64_t TrainerSpec::real_clip_length() const {
  return generator.clip_length + (fp.enabled ? fp.conditioning_frames : 0);
}

Trainer::Trainer(TrainerSpec spec, uint64_t seed, uint64_t config_hash)
    : spec_(std::move(spec)), config_hash_(config_hash), rng_(make_generator(seed)) {
  spec_.validate();
  auto g_gen = make_generator(derive_seed(seed, 1));
  auto ds_gen = make_generator(derive_seed(seed, 2));
  auto dt_gen = make_generator(derive_seed(seed, 3));
  auto enc_gen = make_generator(derive_seed(seed, 4));
  g = Generator(spec_.generator, g_gen);
  ema = Generator(spec_.generator, g_gen);
  copy_state(*ema, *g);
  ds = SpatialDiscriminator(spec_.discriminator, ds_gen);
  dt = TemporalDiscriminator(spec_.discriminator, dt_gen);
  if (spec_.fp.enabled) {
    encoder = ConditioningEncoder(spec_.generator, spec_.discriminator,
                                  spec_.fp.conditioning_frames, enc_gen);
    ema_encoder = ConditioningEncoder(spec_.generator, spec_.discriminator,
                                      spec_.fp.conditioning_frames, enc_gen);
    copy_state(*ema_encoder, *encoder);
    ema_encoder->eval();
  }
  ema->eval();
  const auto& t = spec_.train;
  opt_g_.emplace(g_parameters(), t.lr_g, t.beta1, t.beta2, t.adam_eps);
  opt_d_.emplace(d_parameters(), t.lr_d, t.beta1, t.beta2, t.adam_eps);
}

std::vector<torch::Tensor> Trainer::g_parameters() const {
  auto params = g->parameters();
  if (encoder) {
    for (const auto& p : encoder->parameters()) params.push_back(p);
  }
  return params;
}

std::vector<torch::Tensor> Trainer::d_parameters() const {
  auto params = ds->parameters();
  for (const auto& p : dt->parameters()) params.push_back(p);
  return params;
}

torch::Tensor Trainer::fake_labels(int64_t n) {
  if (spec_.fp.enabled) return torch::zeros({n}, torch::kInt64);
  return torch::randint(0, spec_.generator.num_classes, {n}, rng_, torch::kInt64);
}

DStepStats Trainer::d_step(data::BatchSource& data, torch::Tensor& loss) {
  const auto& c = spec_;
  const auto b = c.train.batch_size;
  auto batch = data.next(b);
  const int64_t first = c.fp.enabled ? c.fp.conditioning_frames : 0;
  auto real_labels = c.fp.enabled ? torch::zeros({b}, torch::kInt64) : batch.labels;
  torch::Tensor fake;
  auto fake_y = fake_labels(b);
  {
    torch::NoGradGuard no_grad;
    auto z = sample_latents(b, c.generator.latent_dim, 1.0, rng_);
    fake = c.fp.enabled
               ? generate_continuation(g, encoder, batch.videos.slice(1, 0, first), z)
               : g->forward(z, fake_y);
  }
  // real and fake share one D forward so each D update advances the
  // spectral-norm power iteration exactly once
  auto videos = torch::cat({batch.videos, fake}, 0);
  auto labels = torch::cat({real_labels, fake_y}, 0);
  auto s = ds->forward(videos, labels, rng_, first);
  auto t = dt->forward(videos, labels, rng_);
  auto s_real = s.slice(0, 0, b), s_fake = s.slice(0, b);
  auto t_real = t.slice(0, 0, b), t_fake = t.slice(0, b);
  loss = d_loss_hinge(s_real, s_fake) + d_loss_hinge(t_real, t_fake);
  return {0.0, mean_of(s_real), mean_of(s_fake), mean_of(t_real), mean_of(t_fake)};
}

torch::Tensor Trainer::g_step() {
  const auto& c = spec_;
  const auto b = c.train.batch_size;
  auto z = sample_latents(b, c.generator.latent_dim, 1.0, rng_);
  auto y = fake_labels(b);
  torch::Tensor fake;
  int64_t first = 0;
  if (c.fp.enabled) {
    first = c.fp.conditioning_frames;
    fake = generate_continuation(g, encoder, pending_conditioning_, z);
  } else {
    fake = g->forward(z, y);
  }
  auto s = ds->forward(fake, y, rng_, first);
  auto t = dt->forward(fake, y, rng_);
  return g_loss_hinge(s) + g_loss_hinge(t);
}

StepStats Trainer::train_step(data::BatchSource& data) {
  g->train();
  if (encoder) encoder->train();
  ds->train();
  dt->train();
  AdversarialHooks hooks;
  hooks.d_loss = [&](torch::Tensor& loss) { return d_step(data, loss); };
  hooks.g_loss = [&]() {
    if (spec_.fp.enabled) {
      pending_conditioning_ =
          data.next(spec_.train.batch_size).videos.slice(1, 0, spec_.fp.conditioning_frames);
    }
    // D weights are not updated by the G step; skip their gradients
    for (auto& p : opt_d_->params()) p.requires_grad_(false);
    auto loss = g_step();
    for (auto& p : opt_d_->params()) p.requires_grad_(true);
    return loss;
  };
  auto stats = adversarial_step(hooks, *opt_d_, *opt_g_, spec_.train.d_steps_per_g, &d_updates_,
                                &g_updates_);
  pending_conditioning_ = torch::Tensor();
  ++step_;
  ema_update(*ema, *g, step_, spec_.train.ema_start_step, spec_.train.ema_decay);
  if (encoder) {
    ema_update(*ema_encoder, *encoder, step_, spec_.train.ema_start_step, spec_.train.ema_decay);
  }
  return stats;
}

torch::Tensor Trainer::sample(const torch::Tensor& z, const torch::Tensor& labels,
                              const torch::Tensor& conditioning) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> saved;
  if (!spec_.train.ema_running_stats) {
    // batch statistics without disturbing the stored running statistics
    for (const auto& b : ema->buffers()) saved.push_back(b.clone());
    ema->train();
  }
  torch::Tensor out;
  if (spec_.fp.enabled) {
    if (!conditioning.defined()) {
      throw InvalidInput("frame-prediction sampling needs conditioning frames");
    }
    out = generate_continuation(ema, ema_encoder, conditioning, z);
  } else {
    out = ema->forward(z, labels);
  }
  if (!saved.empty()) {
    auto buffers = ema->buffers();
    for (size_t i = 0; i < buffers.size(); ++i) buffers[i].copy_(saved[i]);
    ema->eval();
  }
  return out;
}

uint64_t Trainer::sampling_hash() const {
  std::vector<torch::Tensor> ts;
  for (const auto& p : ema->parameters()) ts.push_back(p);
  for (const auto& b : ema->buffers()) ts.push_back(b);
  if (ema_encoder) {
    for (const auto& p : ema_encoder->parameters()) ts.push_back(p);
    for (const auto& b : ema_encoder->buffers()) ts.push_back(b);
  }
  return hash_tensors(ts);
}

namespace {
constexpr const char* kCheckpointKind = "DVDGCKPT";
}

Archive Trainer::to_archive(const data::BatchSource* data) const {
  Archive a;
  a.kind = kCheckpointKind;
  a.version = kCheckpointVersion;
  a.config_hash = config_hash_;
  a.meta["step"] = step_;
  a.meta["d_updates"] = d_updates_;
  a.meta["g_updates"] = g_updates_;
  if (!config_json.is_null()) a.meta["config"] = config_json;
  add_module_state(a, "g.", *g);
  add_module_state(a, "ema.", *ema);
  add_module_state(a, "ds.", *ds);
  add_module_state(a, "dt.", *dt);
  if (encoder) {
    add_module_state(a, "enc.", *encoder);
    add_module_state(a, "ema_enc.", *ema_encoder);
  }
  opt_g_->save(a, "opt_g.");
  opt_d_->save(a, "opt_d.");
  auto rng = rng_;
  a.blobs["rng"] = generator_state(rng);
  if (data != nullptr) a.blobs["data"] = data->save_state();
  return a;
}

void Trainer::from_archive(const Archive& a, data::BatchSource* data) {
  if (a.kind != kCheckpointKind) {
    throw CheckpointError("not a training checkpoint (kind '" + a.kind + "')");
  }
  if (a.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(a.version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) +
                          ")");
  }
  if (a.config_hash != config_hash_) {
    throw ConfigMismatchError("checkpoint config hash " + hex64(a.config_hash) +
                              " does not match the current config " + hex64(config_hash_));
  }
  load_module_state(a, "g.", *g);
  load_module_state(a, "ema.", *ema);
  load_module_state(a, "ds.", *ds);
  load_module_state(a, "dt.", *dt);
  if (encoder) {
    load_module_state(a, "enc.", *encoder);
    load_module_state(a, "ema_enc.", *ema_encoder);
  }
  opt_g_->load(a, "opt_g.");
  opt_d_->load(a, "opt_d.");
  step_ = a.meta.at("step").get<int64_t>();
  d_updates_ = a.meta.at("d_updates").get<int64_t>();
  g_updates_ = a.meta.at("g_updates").get<int64_t>();
  set_generator_state(rng_, a.blobs.at("rng"));
  if (data != nullptr) {
    auto it = a.blobs.find("data");
    if (it == a.blobs.end()) throw CheckpointError("checkpoint has no data-pipeline state");
    data->load_state(it->second);
  }
}

void Trainer::save(const std::filesystem::path& file, const data::BatchSource* data) const {
  write_archive(file, to_archive(data));
}

void Trainer::load(const std::filesystem::path& file, data::BatchSource* data) {
  from_archive(read_archive(file), data);
}

uint64_t checkpoint_config_hash(const std::filesystem::path& file) {
  return read_archive(file).config_hash;
}

// ---------------------------------------------------------------------------

const char* MetricsLog::header() {
  return "step,d_loss,g_loss,ds_real_mean,ds_fake_mean,dt_real_mean,dt_fake_mean,fid,is,"
         "wall_time_s";
}

MetricsLog::MetricsLog(const std::filesystem::path& file, std::optional<int64_t> truncate_after) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const bool exists = std::filesystem::exists(file) && std::filesystem::file_size(file) > 0;
  if (exists && truncate_after) {
    std::ifstream in(file);
    std::string line, kept;
    std::getline(in, line);
    kept = line + "\n";
    while (std::getline(in, line)) {
      if (!line.empty() && std::stoll(line.substr(0, line.find(','))) <= *truncate_after) {
        kept += line + "\n";
      }
    }
    in.close();
    std::ofstream rewrite(file, std::ios::trunc);
    rewrite << kept;
  }
  out_.open(file, std::ios::app);
  if (!out_) throw IoError("cannot open " + file.string());
  if (!exists) out_ << header() << "\n" << std::flush;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt(std::optional<double> v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void MetricsLog::write(int64_t step, const StepStats& s, std::optional<double> fid,
                       std::optional<double> is, double wall_time_s) {
  out_ << step << ',' << fmt(s.d_loss) << ',' << fmt(s.g_loss) << ',' << fmt(s.ds_real) << ','
       << fmt(s.ds_fake) << ',' << fmt(s.dt_real) << ',' << fmt(s.dt_fake) << ',' << fmt(fid)
       << ',' << fmt(is) << ',' << fmt(wall_time_s) << '\n'
       << std::flush;
  if (!out_) throw IoError("failed to append to metrics log");
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (cells.size() < 10) cells.emplace_back();
    MetricsRow row;
    row.step = std::stoll(cells[0]);
    row.d_loss = std::stod(cells[1]);
    row.g_loss = std::stod(cells[2]);
    if (!cells[7].empty()) row.fid = std::stod(cells[7]);
    if (!cells[8].empty()) row.is = std::stod(cells[8]);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dvdgan
