#pragma once

#include "dvdgan/discriminators.hpp"
#include "dvdgan/generator.hpp"

#include <vector>

namespace dvdgan {

/// Frame-conditional mode. The generator produces `generator.clip_length`
/// frames after `conditioning_frames` given ones; class ids are fixed to 0.
struct FPConfig {
  bool enabled = false;
  int64_t conditioning_frames = 2;

  void validate() const;
};

/// Per-frame D_S-architecture residual stack (separate weights). After each
/// block the C frame features are stacked on channels and mapped by a 3x3
/// conv + ReLU to the hidden size of the generator scale they initialize.
/// Block outputs are paired with generator scales in reverse order.
class ConditioningEncoderImpl : public torch::nn::Module {
 public:
  ConditioningEncoderImpl(const GeneratorConfig& g, const DiscriminatorConfig& d,
                          int64_t conditioning_frames, at::Generator& gen);

  /// frames [B, C, H, W, 3] -> one ConvGRU initial state per generator scale,
  /// indexed by scale.
  std::vector<torch::Tensor> forward(const torch::Tensor& frames);

  int64_t conditioning_frames() const { return frames_; }

  std::vector<nn::DResBlock> blocks;
  std::vector<torch::nn::Conv2d> heads;  // heads[i] follows blocks[i]

 private:
  int64_t frames_;
  int64_t resolution_;
};
TORCH_MODULE(ConditioningEncoder);

/// Spatial side of each encoder block's output for `input_side` inputs.
std::vector<int64_t> encoder_block_sides(const DiscriminatorConfig& d);

/// [conditioning frames; G(z | encoder(frames))] of length C + T_gen.
torch::Tensor generate_continuation(Generator& g, ConditioningEncoder& encoder,
                                    const torch::Tensor& frames, const torch::Tensor& z);

struct FPViews {
  torch::Tensor ds_frames;  // [B, k, H, W, 3], drawn from indices >= C
  torch::Tensor ds_indices; // [B, k]
  torch::Tensor dt_video;   // [B, C + T_gen, H, W, 3]
};

/// Discriminator inputs for frame prediction. `conditioning` is [B, C, ...]
/// (C may be 0), `generated` is [B, T_gen, ...].
FPViews fp_discriminator_views(const torch::Tensor& conditioning, const torch::Tensor& generated,
                               int64_t k, at::Generator& gen);

}  // namespace dvdgan
