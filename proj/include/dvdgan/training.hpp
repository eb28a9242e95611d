#pragma once

#include "dvdgan/archive.hpp"
#include "dvdgan/data/dataset.hpp"
#include "dvdgan/discriminators.hpp"
#include "dvdgan/frame_prediction.hpp"
#include "dvdgan/generator.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dvdgan {

/// mean(relu(1 - real)) + mean(relu(1 + fake)).
torch::Tensor d_loss_hinge(const torch::Tensor& real_scores, const torch::Tensor& fake_scores);
/// -mean(fake).
torch::Tensor g_loss_hinge(const torch::Tensor& fake_scores);

struct TrainConfig {
  int64_t batch_size = 32;
  double lr_g = 1e-4;
  double lr_d = 5e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t d_steps_per_g = 2;
  double ema_decay = 0.9999;
  int64_t ema_start_step = 2000;
  int64_t total_steps = 20000;
  // sample with BN running statistics (true) or per-batch statistics (false)
  bool ema_running_stats = true;

  void validate() const;
};

/// Adam with its moment buffers held as plain tensors so that optimizer state
/// checkpoints bit-exactly alongside the parameters.
class Adam {
 public:
  Adam(std::vector<torch::Tensor> params, double lr, double beta1, double beta2, double eps);

  void zero_grad();
  void step();

  int64_t steps() const { return t_; }
  double lr() const { return lr_; }
  const std::vector<torch::Tensor>& params() const { return params_; }

  void save(Archive& archive, const std::string& prefix) const;
  void load(const Archive& archive, const std::string& prefix);

 private:
  std::vector<torch::Tensor> params_;
  std::vector<torch::Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

/// Scalar diagnostics from one discriminator update.
struct DStepStats {
  double loss = 0;
  double ds_real = 0, ds_fake = 0, dt_real = 0, dt_fake = 0;
};

/// The schedule of one G step, independent of the networks involved:
/// `d_steps` times { zero D grads; loss = d_loss(); backward; D update }, then
/// { zero G grads; loss = g_loss(); backward; G update }. The hooks draw their
/// own fresh data. A non-finite loss raises DivergenceError before any update.
struct AdversarialHooks {
  std::function<DStepStats(torch::Tensor& loss)> d_loss;
  std::function<torch::Tensor()> g_loss;
};

struct StepStats {
  double d_loss = 0;  // mean over the step's D updates
  double g_loss = 0;
  double ds_real = 0, ds_fake = 0, dt_real = 0, dt_fake = 0;
};

StepStats adversarial_step(const AdversarialHooks& hooks, Adam& d_opt, Adam& g_opt,
                           int64_t d_steps, int64_t* d_updates, int64_t* g_updates);

/// Before `start_step` the EMA copy tracks g exactly; afterwards
/// ema <- decay * ema + (1 - decay) * g. Buffers (BN running statistics and
/// spectral-norm vectors) are always copied.
void ema_update(torch::nn::Module& ema, const torch::nn::Module& model, int64_t step,
                int64_t start_step, double decay);

/// Everything a resumable run owns.
struct TrainerSpec {
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;
  FPConfig fp;

  void validate() const;
  /// Frames per real clip: T, or C + T_gen in frame-prediction mode.
  int64_t real_clip_length() const;
};

class Trainer {
 public:
  static constexpr uint32_t kCheckpointVersion = 1;

  /// `config_hash` identifies the model-defining configuration; checkpoints
  /// with a different hash refuse to load.
  Trainer(TrainerSpec spec, uint64_t seed, uint64_t config_hash);

  /// d_steps_per_g D updates and one G update, then the EMA update.
  StepStats train_step(data::BatchSource& data);

  /// EMA-generator samples [n, T, R, R, 3] (T = C + T_gen in FP mode, where
  /// `conditioning` supplies the frames). Uses the configured BN mode.
  torch::Tensor sample(const torch::Tensor& z, const torch::Tensor& labels,
                       const torch::Tensor& conditioning = {});

  int64_t step() const { return step_; }
  int64_t d_updates() const { return d_updates_; }
  int64_t g_updates() const { return g_updates_; }
  const TrainerSpec& spec() const { return spec_; }
  uint64_t config_hash() const { return config_hash_; }
  at::Generator& rng() { return rng_; }

  /// Hash of the parameters and buffers used by sample().
  uint64_t sampling_hash() const;

  Archive to_archive(const data::BatchSource* data) const;
  void from_archive(const Archive& archive, data::BatchSource* data);
  void save(const std::filesystem::path& file, const data::BatchSource* data) const;
  void load(const std::filesystem::path& file, data::BatchSource* data);

  /// Stored verbatim in checkpoints so they are self-describing.
  nlohmann::json config_json;

  Generator g{nullptr}, ema{nullptr};
  SpatialDiscriminator ds{nullptr};
  TemporalDiscriminator dt{nullptr};
  ConditioningEncoder encoder{nullptr}, ema_encoder{nullptr};

 private:
  std::vector<torch::Tensor> g_parameters() const;
  std::vector<torch::Tensor> d_parameters() const;
  torch::Tensor fake_labels(int64_t n);
  DStepStats d_step(data::BatchSource& data, torch::Tensor& loss);
  torch::Tensor g_step();

  TrainerSpec spec_;
  uint64_t config_hash_;
  at::Generator rng_;
  std::optional<Adam> opt_g_, opt_d_;
  int64_t step_ = 0, d_updates_ = 0, g_updates_ = 0;
  torch::Tensor pending_conditioning_;  // real frames for the FP generator step
};

/// Reads a checkpoint's config hash without loading it.
uint64_t checkpoint_config_hash(const std::filesystem::path& file);

/// Append-only metrics CSV: step, d_loss, g_loss, ds_real_mean, ds_fake_mean,
/// dt_real_mean, dt_fake_mean, fid, is, wall_time_s. Missing metrics are left
/// blank.
class MetricsLog {
 public:
  static const char* header();

  /// Opens for appending; when `truncate_after` is set, rows with a step
  /// greater than it are dropped first (used when resuming).
  explicit MetricsLog(const std::filesystem::path& file,
                      std::optional<int64_t> truncate_after = std::nullopt);
  void write(int64_t step, const StepStats& stats, std::optional<double> fid,
             std::optional<double> is, double wall_time_s);

 private:
  std::ofstream out_;
};

struct MetricsRow {
  int64_t step = 0;
  double d_loss = 0, g_loss = 0;
  std::optional<double> fid, is;
};

std::vector<MetricsRow> read_metrics(const std::filesystem::path& file);

}  // namespace dvdgan
