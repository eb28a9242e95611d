#pragma once

#include "dvdgan/nn/res_blocks.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dvdgan {

/// Spatial downsampling applied to the whole video before the temporal
/// discriminator.
enum class Phi { kAvgPool2, kAvgPool4, kIdentity, kRandomHalfCrop };

Phi parse_phi(const std::string& name);
std::string to_string(Phi phi);

/// Output spatial side of phi for input side `side`.
int64_t phi_output_side(Phi phi, int64_t side);

/// Applies phi to videos [B, T, H, W, C]. The random half-sized crop draws one
/// offset per video from `gen`.
torch::Tensor apply_phi(const torch::Tensor& videos, Phi phi, at::Generator& gen);

/// Pixels processed by each discriminator for one video.
struct PixelBudget {
  int64_t spatial = 0;   // k * H * W
  int64_t temporal = 0;  // T * |phi(frame)|
  int64_t total = 0;
  int64_t full = 0;      // T * H * W
  double reduction = 0;  // 1 - total / full
};

PixelBudget pixel_budget(int64_t frames, int64_t height, int64_t width, int64_t k, Phi phi);

struct DiscriminatorConfig {
  int64_t resolution = 32;
  int64_t ch = 32;
  std::vector<int64_t> layer_constants{2, 4, 8, 16};
  int64_t num_classes = 4;
  int64_t k = 8;
  Phi phi = Phi::kAvgPool2;
  int64_t num_3d_blocks = 2;

  void validate(int64_t clip_length) const;
};

/// Projection conditioning: linear(features) + <embed(y), features>.
class ProjectionHeadImpl : public torch::nn::Module {
 public:
  ProjectionHeadImpl(int64_t features, int64_t num_classes, at::Generator& gen);
  /// features [N, C], labels [N] -> [N]
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& labels);

  nn::SNLinear linear{nullptr};
  nn::SNEmbedding embedding{nullptr};
};
TORCH_MODULE(ProjectionHead);

torch::Tensor projection_condition(const torch::Tensor& features, const torch::Tensor& labels,
                                   ProjectionHead& head);

/// Per-video frame indices: k distinct draws from [first, T) for each of B
/// videos, returned as [B, k] int64.
torch::Tensor sample_frame_indices(int64_t batch, int64_t frames, int64_t k, int64_t first,
                                   at::Generator& gen);

/// Gathers the frames named by indices [B, k] from videos [B, T, H, W, C].
torch::Tensor gather_frames(const torch::Tensor& videos, const torch::Tensor& indices);

using FrameScorer = std::function<torch::Tensor(const torch::Tensor& frames_nchw,
                                                const torch::Tensor& labels)>;

/// Samples k frames per video (from index `first` on), scores each frame
/// independently with `scorer`, and sums the k scores per video.
torch::Tensor sum_sampled_frame_scores(const torch::Tensor& videos, const torch::Tensor& labels,
                                       int64_t k, int64_t first, at::Generator& gen,
                                       const FrameScorer& scorer,
                                       torch::Tensor* indices_out = nullptr);

/// D_S: BigGAN-style 2-D residual stack applied to k sampled full-resolution
/// frames; the video score is the sum of per-frame scores.
class SpatialDiscriminatorImpl : public torch::nn::Module {
 public:
  SpatialDiscriminatorImpl(DiscriminatorConfig config, at::Generator& gen);

  /// videos [B, T, H, W, 3], labels [B] -> [B]. Frames before `first` are
  /// never sampled (frame-conditional mode).
  torch::Tensor forward(const torch::Tensor& videos, const torch::Tensor& labels,
                        at::Generator& gen, int64_t first = 0,
                        torch::Tensor* indices_out = nullptr);

  /// frames [N, 3, H, W], labels [N] -> per-frame scores [N].
  torch::Tensor score_frames(const torch::Tensor& frames, const torch::Tensor& labels);

  /// Pooled features [N, C] before the projection head.
  torch::Tensor frame_features(const torch::Tensor& frames);

  const DiscriminatorConfig& config() const { return config_; }

  std::vector<nn::DResBlock> blocks;
  ProjectionHead head{nullptr};

 private:
  DiscriminatorConfig config_;
};
TORCH_MODULE(SpatialDiscriminator);

/// D_T: phi-downsampled whole video through leading 3-D residual blocks
/// (spatial pooling only), then time folded into batch for the 2-D blocks,
/// sum-pooled over space and time, then projection conditioning.
class TemporalDiscriminatorImpl : public torch::nn::Module {
 public:
  TemporalDiscriminatorImpl(DiscriminatorConfig config, at::Generator& gen);

  /// videos [B, T, H, W, 3], labels [B] -> [B]. `gen` is used only by the
  /// random-crop phi.
  torch::Tensor forward(const torch::Tensor& videos, const torch::Tensor& labels,
                        at::Generator& gen);

  /// Score of an already-downsampled video [B, T, h, w, 3].
  torch::Tensor score_downsampled(const torch::Tensor& small, const torch::Tensor& labels);

  const DiscriminatorConfig& config() const { return config_; }

  std::vector<nn::DResBlock> blocks;
  ProjectionHead head{nullptr};

 private:
  DiscriminatorConfig config_;
};
TORCH_MODULE(TemporalDiscriminator);

/// Builds a D-style block stack for `input_side`-pixel inputs: block i maps
/// ch * c[i-1] -> ch * c[i] (3 channels into the first), downsampling in all
/// but the last block while the side stays even and >= 2.
std::vector<nn::DResBlock> make_disc_blocks(torch::nn::Module& owner, const std::string& prefix,
                                            int64_t ch, const std::vector<int64_t>& constants,
                                            int64_t input_side, int64_t num_3d,
                                            at::Generator& gen);

}  // namespace dvdgan
