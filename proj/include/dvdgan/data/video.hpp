#pragma once

#include "dvdgan/common.hpp"

#include <cstdint>

namespace dvdgan::data {

/// A raw clip before preprocessing: uint8 pixels, [T, H, W, 3].
struct RawVideo {
  torch::Tensor frames;
  int64_t label = 0;

  int64_t num_frames() const { return frames.size(0); }
  int64_t height() const { return frames.size(1); }
  int64_t width() const { return frames.size(2); }
};

/// A training-ready clip: float32 in [-1, 1], [T, R, R, 3].
struct Clip {
  torch::Tensor frames;
  int64_t label = 0;
};

/// Batched clips: videos [B, T, R, R, 3], labels [B] (int64).
struct VideoBatch {
  torch::Tensor videos;
  torch::Tensor labels;

  int64_t size() const { return videos.size(0); }
};

void validate(const RawVideo& video);

/// Bilinear resize so min(H, W) == target. The long side is rounded half-up.
RawVideo resize_preserve_aspect(const RawVideo& video, int64_t target);

/// Output size of resize_preserve_aspect, as (height, width).
std::pair<int64_t, int64_t> resized_dims(int64_t height, int64_t width, int64_t target);

/// Square crop of side `size`, offsets uniform over every valid position.
RawVideo random_crop(const RawVideo& video, int64_t size, at::Generator& gen);

/// Frames s, s+stride, ..., with s uniform over valid starts.
RawVideo sample_clip(const RawVideo& video, int64_t num_frames, int64_t stride,
                     at::Generator& gen);

/// Affine map [0, 255] -> [-1, 1].
Clip normalize_clip(const RawVideo& video);

/// Inverse of normalize_clip for float videos in [-1, 1]; rounds and clamps.
torch::Tensor to_uint8(const torch::Tensor& videos);

struct PreprocessConfig {
  int64_t resolution = 32;
  int64_t num_frames = 8;
  int64_t stride = 2;
};

/// sample_clip -> resize_preserve_aspect -> random_crop -> normalize_clip.
Clip preprocess(const RawVideo& video, const PreprocessConfig& config, at::Generator& gen);

}  // namespace dvdgan::data
