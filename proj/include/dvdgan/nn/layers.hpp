#pragma once

#include "dvdgan/common.hpp"

namespace dvdgan::nn {

/// Orthogonal matrix reshaped to `shape`. The matrix view is
/// (shape[0], prod(shape[1:])): rows orthonormal when wide, columns when tall.
torch::Tensor orthogonal_init(at::IntArrayRef shape, at::Generator& gen,
                              torch::Dtype dtype = torch::kFloat32);

/// Result of one spectral-normalization pass.
struct SpectralEstimate {
  torch::Tensor weight;  // weight / sigma (or weight itself when degenerate)
  double sigma = 0.0;
  bool degenerate = false;
};

/// Power-iteration spectral normalization of `weight` viewed as
/// (out, everything else). `u` (length out) and `v` (length in) are the
/// persistent singular-vector estimates; `iterations` steps of
///   v <- normalize(W^T u),  u <- normalize(W v)
/// are applied in place, then sigma = u^T W v. sigma carries no gradient.
/// A zero matrix is returned unchanged with `degenerate` set and the state
/// untouched.
SpectralEstimate spectral_normalize(const torch::Tensor& weight, torch::Tensor& u,
                                    torch::Tensor& v, int iterations = 1);

/// u/v buffers plus the update policy shared by the spectrally normalized layers:
/// one power iteration per forward pass in training mode, frozen in eval mode.
class SpectralState {
 public:
  SpectralState() = default;
  SpectralState(torch::nn::Module& owner, const torch::Tensor& weight, at::Generator& gen);

  torch::Tensor apply(const torch::Tensor& weight, bool training);

  const torch::Tensor& u() const { return u_; }
  double last_sigma() const { return last_sigma_; }
  bool degenerate() const { return degenerate_; }

 private:
  torch::Tensor u_;
  torch::Tensor v_;
  double last_sigma_ = 0.0;
  bool degenerate_ = false;
};

class SNLinearImpl : public torch::nn::Module {
 public:
  SNLinearImpl(int64_t in_features, int64_t out_features, at::Generator& gen, bool bias = true);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight();

  torch::Tensor weight;
  torch::Tensor bias;
  SpectralState spectral;
};
TORCH_MODULE(SNLinear);

/// Embedding table with spectral normalization of the (rows, dim) matrix.
class SNEmbeddingImpl : public torch::nn::Module {
 public:
  SNEmbeddingImpl(int64_t num_embeddings, int64_t dim, at::Generator& gen);
  torch::Tensor forward(const torch::Tensor& ids);

  torch::Tensor weight;
  SpectralState spectral;
};
TORCH_MODULE(SNEmbedding);

/// Same-padded spectrally normalized convolution; 2-D ([N, C, H, W]) or
/// 3-D ([N, C, T, H, W]) depending on `spatial_dims`.
class SNConvImpl : public torch::nn::Module {
 public:
  SNConvImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t spatial_dims,
             at::Generator& gen);
  torch::Tensor forward(const torch::Tensor& x);

  int64_t spatial_dims() const { return spatial_dims_; }

  torch::Tensor weight;
  torch::Tensor bias;
  SpectralState spectral;

 private:
  int64_t spatial_dims_;
  int64_t padding_;
};
TORCH_MODULE(SNConv);

/// Plain same-padded 2-D convolution with orthogonal weights and zero bias.
torch::nn::Conv2d make_conv2d(int64_t in_channels, int64_t out_channels, int64_t kernel,
                              at::Generator& gen);
torch::nn::Linear make_linear(int64_t in_features, int64_t out_features, at::Generator& gen);

/// Mean over non-overlapping factor x factor blocks of [T, H, W, C] or
/// [B, T, H, W, C] videos. H and W must be divisible by factor.
torch::Tensor average_pool_video(const torch::Tensor& video, int64_t factor);

/// 2x2 average pooling of a [T, H, W, C] video (H, W even).
torch::Tensor average_pool_2x2(const torch::Tensor& video);

}  // namespace dvdgan::nn
