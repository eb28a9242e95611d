#pragma once

#include "dvdgan/common.hpp"

namespace dvdgan::nn {

constexpr double kBatchNormEps = 1e-4;
constexpr double kBatchNormMomentum = 0.99;  // running = m * running + (1 - m) * batch

/// Batch normalization that never reduces over time. `x` is [B, T, C, H, W];
/// statistics are taken over (B, H, W) separately for every (t, c). In
/// training mode the running buffers ([T, C]) are updated in place; in eval
/// mode they are used instead of batch statistics.
torch::Tensor batch_norm_per_timestep(const torch::Tensor& x, bool training,
                                      torch::Tensor& running_mean, torch::Tensor& running_var,
                                      double eps = kBatchNormEps,
                                      double momentum = kBatchNormMomentum);

/// Module form operating on time-folded frames [B*T, C, H, W].
class TimestepBatchNormImpl : public torch::nn::Module {
 public:
  TimestepBatchNormImpl(int64_t channels, int64_t num_frames, bool affine = false);
  torch::Tensor forward(const torch::Tensor& frames);

  int64_t num_frames() const { return num_frames_; }

  torch::Tensor running_mean;
  torch::Tensor running_var;
  torch::Tensor weight;  // defined only when affine
  torch::Tensor bias;

 private:
  int64_t channels_;
  int64_t num_frames_;
};
TORCH_MODULE(TimestepBatchNorm);

/// Class-conditional BN: parameter-free per-timestep normalization followed by
/// out = gain(cond) * x_hat + offset(cond), with gain/offset affine in the
/// conditioning vector [z; e(y)]. The gain bias starts at 1, the offset bias at 0.
class ClassConditionalBatchNormImpl : public torch::nn::Module {
 public:
  ClassConditionalBatchNormImpl(int64_t channels, int64_t num_frames, int64_t cond_dim,
                                at::Generator& gen);

  /// frames [B*T, C, H, W]; cond [B, cond_dim].
  torch::Tensor forward(const torch::Tensor& frames, const torch::Tensor& cond);

  TimestepBatchNorm norm{nullptr};
  torch::nn::Linear gain{nullptr};
  torch::nn::Linear offset{nullptr};

 private:
  int64_t cond_dim_;
};
TORCH_MODULE(ClassConditionalBatchNorm);

/// Broadcasts per-video rows [B, D] to per-frame rows [B*T, D] matching fold_time.
torch::Tensor repeat_per_frame(const torch::Tensor& rows, int64_t num_frames);

}  // namespace dvdgan::nn
