#include "dvdgan/data/video.hpp"

#include <string>

namespace dvdgan::data {

void validate(const RawVideo& video) {
  if (!video.frames.defined() || video.frames.dim() != 4 || video.frames.size(3) != 3) {
    throw InvalidInput("raw video must be a [T, H, W, 3] tensor");
  }
  if (video.frames.size(0) < 1 || video.frames.size(1) < 1 || video.frames.size(2) < 1) {
    throw InvalidInput("raw video has a zero-sized axis: " +
                       c10::str(video.frames.sizes()));
  }
  if (video.frames.scalar_type() != torch::kUInt8) {
    throw InvalidInput("raw video pixels must be uint8");
  }
}

std::pair<int64_t, int64_t> resized_dims(int64_t height, int64_t width, int64_t target) {
  if (target < 1) {
    throw InvalidInput("resize target must be >= 1");
  }
  // round-half-up of long * target / short in exact integer arithmetic
  auto scale = [target](int64_t long_side, int64_t short_side) {
    return (2 * long_side * target + short_side) / (2 * short_side);
  };
  if (height <= width) {
    return {target, scale(width, height)};
  }
  return {scale(height, width), target};
}

RawVideo resize_preserve_aspect(const RawVideo& video, int64_t target) {
  validate(video);
  const auto [h, w] = resized_dims(video.height(), video.width(), target);
  if (h == video.height() && w == video.width()) {
    return video;
  }
  namespace F = torch::nn::functional;
  auto x = video.frames.permute({0, 3, 1, 2}).to(torch::kFloat32);
  auto y = F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{h, w})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
  auto out = y.round().clamp(0, 255).to(torch::kUInt8).permute({0, 2, 3, 1}).contiguous();
  return {out, video.label};
}

RawVideo random_crop(const RawVideo& video, int64_t size, at::Generator& gen) {
  validate(video);
  if (size < 1 || size > video.height() || size > video.width()) {
    throw InvalidInput("crop size " + std::to_string(size) + " does not fit a " +
                       std::to_string(video.height()) + "x" + std::to_string(video.width()) +
                       " video");
  }
  const auto top = uniform_int(gen, 0, video.height() - size);
  const auto left = uniform_int(gen, 0, video.width() - size);
  auto out = video.frames.slice(1, top, top + size).slice(2, left, left + size).contiguous();
  return {out, video.label};
}

RawVideo sample_clip(const RawVideo& video, int64_t num_frames, int64_t stride,
                     at::Generator& gen) {
  validate(video);
  if (num_frames < 1 || stride < 1) {
    throw InvalidInput("num_frames and stride must be positive");
  }
  const auto span = (num_frames - 1) * stride + 1;
  if (video.num_frames() < span) {
    throw InvalidInput("video has " + std::to_string(video.num_frames()) +
                       " frames; a clip of " + std::to_string(num_frames) + " at stride " +
                       std::to_string(stride) + " needs " + std::to_string(span));
  }
  const auto start = uniform_int(gen, 0, video.num_frames() - span);
  auto out = video.frames.slice(0, start, start + span, stride).contiguous();
  return {out, video.label};
}

Clip normalize_clip(const RawVideo& video) {
  validate(video);
  auto x = video.frames.to(torch::kFloat32).div(127.5).sub(1.0);
  return {x, video.label};
}

torch::Tensor to_uint8(const torch::Tensor& videos) {
  return videos.detach().to(torch::kFloat32).add(1.0).mul(127.5).round().clamp(0, 255).to(
      torch::kUInt8);
}

Clip preprocess(const RawVideo& video, const PreprocessConfig& config, at::Generator& gen) {
  auto clip = sample_clip(video, config.num_frames, config.stride, gen);
  clip = resize_preserve_aspect(clip, config.resolution);
  clip = random_crop(clip, config.resolution, gen);
  return normalize_clip(clip);
}

}  // namespace dvdgan::data
