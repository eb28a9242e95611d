#include "dvdgan/frame_prediction.hpp"

namespace dvdgan {

void FPConfig::validate() const {
  if (enabled && conditioning_frames < 1) {
    throw ConfigError("fp.conditioning_frames must be >= 1");
  }
}

std::vector<int64_t> encoder_block_sides(const DiscriminatorConfig& d) {
  std::vector<int64_t> sides;
  int64_t side = d.resolution;
  const auto n = static_cast<int64_t>(d.layer_constants.size());
  for (int64_t i = 0; i < n; ++i) {
    if (i < n - 1 && side >= 2 && side % 2 == 0) side /= 2;
    sides.push_back(side);
  }
  return sides;
}

ConditioningEncoderImpl::ConditioningEncoderImpl(const GeneratorConfig& g,
                                                 const DiscriminatorConfig& d,
                                                 int64_t conditioning_frames, at::Generator& gen)
    : frames_(conditioning_frames), resolution_(d.resolution) {
  if (conditioning_frames < 1) {
    throw InvalidInput("conditioning encoder needs at least one frame");
  }
  const auto n = g.num_scales();
  if (static_cast<int64_t>(d.layer_constants.size()) != n) {
    throw InvalidInput("encoder needs one block per generator scale (" + std::to_string(n) +
                       "), discriminator layout has " +
                       std::to_string(d.layer_constants.size()));
  }
  const auto sides = encoder_block_sides(d);
  for (int64_t i = 0; i < n; ++i) {
    const auto scale = n - 1 - i;
    if (sides[static_cast<size_t>(i)] != g.gru_resolution(scale)) {
      throw InvalidInput("encoder block " + std::to_string(i) + " runs at " +
                         std::to_string(sides[static_cast<size_t>(i)]) +
                         "px but generator scale " + std::to_string(scale) + " expects " +
                         std::to_string(g.gru_resolution(scale)) + "px");
    }
  }
  blocks = make_disc_blocks(*this, "block", d.ch, d.layer_constants, d.resolution, 0, gen);
  for (int64_t i = 0; i < n; ++i) {
    const auto in = conditioning_frames * d.ch * d.layer_constants[static_cast<size_t>(i)];
    heads.push_back(register_module("head" + std::to_string(i),
                                    nn::make_conv2d(in, g.scale_input_channels(n - 1 - i), 3, gen)));
  }
}

std::vector<torch::Tensor> ConditioningEncoderImpl::forward(const torch::Tensor& frames) {
  if (frames.dim() != 5 || frames.size(1) != frames_ || frames.size(2) != resolution_ ||
      frames.size(3) != resolution_ || frames.size(4) != 3) {
    throw InvalidInput("encoder expects frames [B, " + std::to_string(frames_) + ", " +
                       std::to_string(resolution_) + ", " + std::to_string(resolution_) +
                       ", 3], got " + c10::str(frames.sizes()));
  }
  const auto b = frames.size(0);
  std::vector<torch::Tensor> states(blocks.size());
  auto h = fold_time(frames);
  for (size_t i = 0; i < blocks.size(); ++i) {
    h = blocks[i](h);
    auto stacked = h.reshape({b, frames_ * h.size(1), h.size(2), h.size(3)});
    states[blocks.size() - 1 - i] = torch::relu(heads[i](stacked));
  }
  return states;
}

torch::Tensor generate_continuation(Generator& g, ConditioningEncoder& encoder,
                                    const torch::Tensor& frames, const torch::Tensor& z) {
  const auto labels = torch::zeros({frames.size(0)}, torch::kInt64);
  auto generated = g->generate(z, g->embed(labels), encoder(frames));
  return torch::cat({frames.to(generated.scalar_type()), generated}, 1);
}

FPViews fp_discriminator_views(const torch::Tensor& conditioning, const torch::Tensor& generated,
                               int64_t k, at::Generator& gen) {
  const auto c = conditioning.defined() ? conditioning.size(1) : 0;
  const auto t_gen = generated.size(1);
  if (k < 1 || k > t_gen) {
    throw InvalidInput("k = " + std::to_string(k) + " must lie in [1, T_gen = " +
                       std::to_string(t_gen) + "]");
  }
  FPViews views;
  views.dt_video = c > 0 ? torch::cat({conditioning.to(generated.scalar_type()), generated}, 1)
                         : generated;
  views.ds_indices = sample_frame_indices(generated.size(0), c + t_gen, k, c, gen);
  views.ds_frames = gather_frames(views.dt_video, views.ds_indices);
  return views;
}

}  // namespace dvdgan
