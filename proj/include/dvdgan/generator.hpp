#pragma once

#include "dvdgan/nn/conv_gru.hpp"
#include "dvdgan/nn/res_blocks.hpp"

#include <vector>

namespace dvdgan {

/// Width of scale i is ch * layer_constants[i]; ch0 = ch * layer_constants[0].
/// The output side is 4 * 2^(scales - 1): the first scale does not upsample.
struct GeneratorConfig {
  int64_t resolution = 32;
  int64_t clip_length = 8;
  int64_t ch = 32;
  std::vector<int64_t> layer_constants{8, 4, 2, 1};
  int64_t num_classes = 4;
  int64_t latent_dim = 120;
  int64_t embed_dim = 120;

  void validate() const;
  int64_t num_scales() const { return static_cast<int64_t>(layer_constants.size()); }
  int64_t ch0() const { return ch * layer_constants.front(); }
  int64_t cond_dim() const { return latent_dim + embed_dim; }
  /// Channels entering scale i (and of its ConvGRU state).
  int64_t scale_input_channels(int64_t scale) const;
  int64_t scale_output_channels(int64_t scale) const;
  /// Spatial size at which scale i's ConvGRU runs.
  int64_t gru_resolution(int64_t scale) const;
  /// 4 * 2^(scales - 1).
  static int64_t output_resolution(size_t num_scales);
};

/// Latent seed -> per-scale [ConvGRU over time, two residual blocks per frame]
/// -> BN -> ReLU -> conv3x3 -> tanh. [z; e(y)] conditions every CCBN.
class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl(GeneratorConfig config, at::Generator& gen);

  /// z [B, latent_dim], y [B] -> videos [B, T, R, R, 3] in [-1, 1].
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& labels);

  /// Same, from an explicit class embedding e [B, embed_dim]. `initial_states`
  /// optionally supplies one ConvGRU initial state per scale
  /// ([B, scale_input_channels(i), gru_resolution(i)^2]); zeros otherwise.
  torch::Tensor generate(const torch::Tensor& z, const torch::Tensor& embedding,
                         const std::vector<torch::Tensor>& initial_states = {});

  torch::Tensor embed(const torch::Tensor& labels);

  const GeneratorConfig& config() const { return config_; }

  torch::nn::Embedding embedding{nullptr};
  torch::nn::Linear input{nullptr};
  std::vector<nn::ConvGRUCell> grus;
  std::vector<nn::GResBlock> blocks;  // two per scale
  nn::TimestepBatchNorm out_bn{nullptr};
  torch::nn::Conv2d out_conv{nullptr};

 private:
  GeneratorConfig config_;
};
TORCH_MODULE(Generator);

/// z ~ N(0, stddev^2 I) of shape [n, latent_dim].
torch::Tensor sample_latents(int64_t n, int64_t latent_dim, double stddev, at::Generator& gen);

/// Truncated sampling: draws z with the given stddev (in [0, 1]) and generates.
torch::Tensor sample_truncated(Generator& g, double stddev, const torch::Tensor& labels,
                               at::Generator& gen);

/// Videos at z(a) = (1 - a) z1 + a z2 for a = i / (steps - 1), fixed class.
/// Each step is generated as its own batch so endpoints reproduce single calls.
std::vector<torch::Tensor> interpolate_latent(Generator& g, const torch::Tensor& z1,
                                              const torch::Tensor& z2, int64_t label,
                                              int64_t steps);

/// Videos with embedding e(a) = (1 - a) e(y1) + a e(y2), fixed z.
std::vector<torch::Tensor> interpolate_class(Generator& g, const torch::Tensor& z, int64_t y1,
                                             int64_t y2, int64_t steps);

}  // namespace dvdgan
