#pragma once

#include "dvdgan/nn/batch_norm.hpp"
#include "dvdgan/nn/layers.hpp"

#include <optional>

namespace dvdgan::nn {

/// Generator residual block on time-folded frames:
///   CCBN -> ReLU -> [2x nearest upsample] -> conv3x3 -> CCBN -> ReLU -> conv3x3
/// plus a skip path of [upsample] -> [1x1 projection when channels change].
class GResBlockImpl : public torch::nn::Module {
 public:
  GResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t num_frames,
                int64_t cond_dim, bool upsample, at::Generator& gen);

  /// frames [B*T, C_in, H, W], cond [B, cond_dim] -> [B*T, C_out, H', W'].
  torch::Tensor forward(const torch::Tensor& frames, const torch::Tensor& cond);

  bool upsample() const { return upsample_; }

  ClassConditionalBatchNorm bn1{nullptr};
  torch::nn::Conv2d conv1{nullptr};
  ClassConditionalBatchNorm bn2{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::Conv2d skip{nullptr};  // null when in == out

 private:
  bool upsample_;
};
TORCH_MODULE(GResBlock);

/// Discriminator residual block, all convolutions spectrally normalized:
///   ReLU -> conv -> ReLU -> conv -> [avg-pool 2x2]
/// plus a skip path of [1x1 projection] -> [avg-pool]. The projection exists
/// when channels change or the block downsamples. With `is_3d` the convs are
/// 3x3x3 over [N, C, T, H, W] and pooling is spatial only (T preserved).
class DResBlockImpl : public torch::nn::Module {
 public:
  DResBlockImpl(int64_t in_channels, int64_t out_channels, bool downsample, bool is_3d,
                at::Generator& gen);

  torch::Tensor forward(const torch::Tensor& x);

  bool downsample() const { return downsample_; }
  bool is_3d() const { return is_3d_; }

  SNConv conv1{nullptr};
  SNConv conv2{nullptr};
  SNConv skip{nullptr};

 private:
  torch::Tensor pool(const torch::Tensor& x) const;

  bool downsample_;
  bool is_3d_;
};
TORCH_MODULE(DResBlock);

}  // namespace dvdgan::nn
