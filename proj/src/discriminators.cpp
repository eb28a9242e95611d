#include "dvdgan/discriminators.hpp"

namespace dvdgan {

Phi parse_phi(const std::string& name) {
  if (name == "avgpool2x2") return Phi::kAvgPool2;
  if (name == "avgpool4x4") return Phi::kAvgPool4;
  if (name == "identity") return Phi::kIdentity;
  if (name == "random-half-crop") return Phi::kRandomHalfCrop;
  throw ConfigError("unknown phi '" + name +
                    "' (expected avgpool2x2, avgpool4x4, identity or random-half-crop)");
}

std::string to_string(Phi phi) {
  switch (phi) {
    case Phi::kAvgPool2: return "avgpool2x2";
    case Phi::kAvgPool4: return "avgpool4x4";
    case Phi::kIdentity: return "identity";
    case Phi::kRandomHalfCrop: return "random-half-crop";
  }
  return "?";
}

int64_t phi_output_side(Phi phi, int64_t side) {
  switch (phi) {
    case Phi::kAvgPool2: return side / 2;
    case Phi::kAvgPool4: return side / 4;
    case Phi::kIdentity: return side;
    case Phi::kRandomHalfCrop: return side / 2;
  }
  return side;
}

torch::Tensor apply_phi(const torch::Tensor& videos, Phi phi, at::Generator& gen) {
  if (videos.dim() != 5) {
    throw InvalidInput("phi expects videos [B, T, H, W, C]");
  }
  switch (phi) {
    case Phi::kAvgPool2: return nn::average_pool_video(videos, 2);
    case Phi::kAvgPool4: return nn::average_pool_video(videos, 4);
    case Phi::kIdentity: return videos;
    case Phi::kRandomHalfCrop: {
      const auto h = videos.size(2), w = videos.size(3);
      if (h % 2 != 0 || w % 2 != 0) {
        throw InvalidInput("random half crop needs even spatial dims");
      }
      std::vector<torch::Tensor> crops;
      for (int64_t b = 0; b < videos.size(0); ++b) {
        const auto top = uniform_int(gen, 0, h / 2);
        const auto left = uniform_int(gen, 0, w / 2);
        crops.push_back(videos[b].slice(1, top, top + h / 2).slice(2, left, left + w / 2));
      }
      return torch::stack(crops);
    }
  }
  return videos;
}

PixelBudget pixel_budget(int64_t frames, int64_t height, int64_t width, int64_t k, Phi phi) {
  if (frames < 1 || height < 1 || width < 1 || k < 1) {
    throw InvalidInput("pixel_budget needs positive dimensions");
  }
  PixelBudget b;
  b.spatial = k * height * width;
  b.temporal = frames * phi_output_side(phi, height) * phi_output_side(phi, width);
  b.total = b.spatial + b.temporal;
  b.full = frames * height * width;
  b.reduction = 1.0 - static_cast<double>(b.total) / static_cast<double>(b.full);
  return b;
}

void DiscriminatorConfig::validate(int64_t clip_length) const {
  if (layer_constants.empty()) throw ConfigError("discriminator.layer_constants must not be empty");
  if (ch < 1) throw ConfigError("discriminator.ch must be >= 1");
  if (k < 1 || k > clip_length) {
    throw ConfigError("discriminator.k must satisfy 1 <= k <= T (k=" + std::to_string(k) +
                      ", T=" + std::to_string(clip_length) + ")");
  }
  if (num_3d_blocks < 0 || num_3d_blocks > static_cast<int64_t>(layer_constants.size())) {
    throw ConfigError("discriminator.num_3d_blocks exceeds the block count");
  }
  if (phi_output_side(phi, resolution) < 1) {
    throw ConfigError("phi leaves no pixels at resolution " + std::to_string(resolution));
  }
}

ProjectionHeadImpl::ProjectionHeadImpl(int64_t features, int64_t num_classes, at::Generator& gen) {
  linear = register_module("linear", nn::SNLinear(features, 1, gen));
  embedding = register_module("embedding", nn::SNEmbedding(num_classes, features, gen));
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& features,
                                          const torch::Tensor& labels) {
  if (features.dim() != 2 || labels.dim() != 1 || labels.size(0) != features.size(0)) {
    throw InvalidInput("projection head expects features [N, C] and labels [N]");
  }
  auto e = embedding(labels);
  return linear(features).squeeze(1) + (e * features).sum(1);
}

torch::Tensor projection_condition(const torch::Tensor& features, const torch::Tensor& labels,
                                   ProjectionHead& head) {
  return head(features, labels);
}

torch::Tensor sample_frame_indices(int64_t batch, int64_t frames, int64_t k, int64_t first,
                                   at::Generator& gen) {
  if (first < 0 || k < 1 || k > frames - first) {
    throw InvalidInput("cannot sample k=" + std::to_string(k) + " frames from " +
                       std::to_string(frames - first) + " eligible frames");
  }
  auto out = torch::empty({batch, k}, torch::kLong);
  auto acc = out.accessor<int64_t, 2>();
  for (int64_t b = 0; b < batch; ++b) {
    auto draw = sample_without_replacement(frames - first, k, gen);
    for (int64_t i = 0; i < k; ++i) {
      acc[b][i] = draw[static_cast<size_t>(i)] + first;
    }
  }
  return out;
}

torch::Tensor gather_frames(const torch::Tensor& videos, const torch::Tensor& indices) {
  const auto b = videos.size(0), t = videos.size(1), k = indices.size(1);
  auto flat = (indices + torch::arange(b, torch::kLong).unsqueeze(1) * t).reshape({-1});
  auto folded = videos.reshape({b * t, videos.size(2), videos.size(3), videos.size(4)});
  return folded.index_select(0, flat).view({b, k, videos.size(2), videos.size(3), videos.size(4)});
}

torch::Tensor sum_sampled_frame_scores(const torch::Tensor& videos, const torch::Tensor& labels,
                                       int64_t k, int64_t first, at::Generator& gen,
                                       const FrameScorer& scorer, torch::Tensor* indices_out) {
  if (videos.dim() != 5) {
    throw InvalidInput("D_S expects videos [B, T, H, W, C]");
  }
  const auto b = videos.size(0);
  auto indices = sample_frame_indices(b, videos.size(1), k, first, gen);
  auto frames = fold_time(gather_frames(videos, indices));
  auto per_frame_labels = labels.unsqueeze(1).expand({b, k}).reshape({-1});
  auto scores = scorer(frames, per_frame_labels).view({b, k}).sum(1);
  if (indices_out != nullptr) {
    *indices_out = indices;
  }
  return scores;
}

std::vector<nn::DResBlock> make_disc_blocks(torch::nn::Module& owner, const std::string& prefix,
                                            int64_t ch, const std::vector<int64_t>& constants,
                                            int64_t input_side, int64_t num_3d,
                                            at::Generator& gen) {
  std::vector<nn::DResBlock> blocks;
  int64_t in = 3, side = input_side;
  const auto n = static_cast<int64_t>(constants.size());
  for (int64_t i = 0; i < n; ++i) {
    const auto out = ch * constants[static_cast<size_t>(i)];
    const bool down = i < n - 1 && side >= 2 && side % 2 == 0;
    blocks.push_back(owner.register_module(prefix + std::to_string(i),
                                           nn::DResBlock(in, out, down, i < num_3d, gen)));
    in = out;
    side = down ? side / 2 : side;
  }
  return blocks;
}

SpatialDiscriminatorImpl::SpatialDiscriminatorImpl(DiscriminatorConfig config, at::Generator& gen)
    : config_(std::move(config)) {
  blocks = make_disc_blocks(*this, "block", config_.ch, config_.layer_constants,
                            config_.resolution, 0, gen);
  head = register_module(
      "head", ProjectionHead(config_.ch * config_.layer_constants.back(), config_.num_classes, gen));
}

torch::Tensor SpatialDiscriminatorImpl::frame_features(const torch::Tensor& frames) {
  auto h = frames;
  for (auto& block : blocks) {
    h = block(h);
  }
  return torch::relu(h).sum({2, 3});
}

torch::Tensor SpatialDiscriminatorImpl::score_frames(const torch::Tensor& frames,
                                                     const torch::Tensor& labels) {
  return head(frame_features(frames), labels);
}

torch::Tensor SpatialDiscriminatorImpl::forward(const torch::Tensor& videos,
                                                const torch::Tensor& labels, at::Generator& gen,
                                                int64_t first, torch::Tensor* indices_out) {
  return sum_sampled_frame_scores(
      videos, labels, config_.k, first, gen,
      [this](const torch::Tensor& f, const torch::Tensor& y) { return score_frames(f, y); },
      indices_out);
}

TemporalDiscriminatorImpl::TemporalDiscriminatorImpl(DiscriminatorConfig config,
                                                     at::Generator& gen)
    : config_(std::move(config)) {
  blocks = make_disc_blocks(*this, "block", config_.ch, config_.layer_constants,
                            phi_output_side(config_.phi, config_.resolution),
                            config_.num_3d_blocks, gen);
  head = register_module(
      "head", ProjectionHead(config_.ch * config_.layer_constants.back(), config_.num_classes, gen));
}

torch::Tensor TemporalDiscriminatorImpl::score_downsampled(const torch::Tensor& small,
                                                           const torch::Tensor& labels) {
  const auto b = small.size(0), t = small.size(1);
  auto h = small.permute({0, 4, 1, 2, 3});  // [B, C, T, h, w]
  size_t i = 0;
  for (; i < blocks.size() && blocks[i]->is_3d(); ++i) {
    h = blocks[i](h);
  }
  // fold time into batch for the remaining 2-D blocks
  h = h.permute({0, 2, 1, 3, 4}).reshape({b * t, h.size(1), h.size(3), h.size(4)});
  for (; i < blocks.size(); ++i) {
    h = blocks[i](h);
  }
  auto features = torch::relu(h).sum({2, 3}).view({b, t, -1}).sum(1);
  return head(features, labels);
}

torch::Tensor TemporalDiscriminatorImpl::forward(const torch::Tensor& videos,
                                                 const torch::Tensor& labels, at::Generator& gen) {
  if (videos.dim() != 5 || videos.size(2) != config_.resolution ||
      videos.size(3) != config_.resolution) {
    throw InvalidInput("D_T expects [B, T, " + std::to_string(config_.resolution) + ", " +
                       std::to_string(config_.resolution) + ", 3] videos, got " +
                       c10::str(videos.sizes()));
  }
  return score_downsampled(apply_phi(videos, config_.phi, gen), labels);
}

}  // namespace dvdgan
