#pragma once

#include "dvdgan/data/video.hpp"

#include <array>
#include <optional>
#include <vector>

namespace dvdgan::data {

/// Moving-shapes video dataset. Class id selects the direction of motion, so
/// single frames carry no class information while short clips do.
struct SyntheticDatasetConfig {
  int64_t num_classes = 4;
  int64_t resolution = 32;
  int64_t clip_length = 16;  // rendered frames per video
  int64_t shapes_per_video = 1;
  double min_speed = 1.0;  // pixels / frame
  double max_speed = 1.5;
  int64_t dataset_size = 400;
  uint64_t seed = 0;

  void validate() const;
};

enum class ShapeKind { kSquare, kDisk };

/// Ground-truth trajectory of one rendered shape. Positions are the top-left
/// corner of the bounding box in continuous pixel coordinates.
struct ShapeTrack {
  ShapeKind kind = ShapeKind::kSquare;
  double size = 5.0;
  std::array<uint8_t, 3> color{255, 255, 255};
  std::vector<std::array<double, 2>> positions;  // (x, y) per frame

  std::array<double, 2> center(int64_t frame) const;
};

struct SyntheticVideo {
  RawVideo video;
  std::vector<ShapeTrack> shapes;
};

/// Unit direction of motion for a class: angle 2*pi*label/num_classes, with
/// +x to the right and +y downwards. Class 0 moves right.
std::array<double, 2> class_direction(int64_t label, int64_t num_classes);

/// Constant-velocity motion with elastic bounces off the frame borders.
std::vector<std::array<double, 2>> simulate_track(std::array<double, 2> start,
                                                  std::array<double, 2> velocity, double size,
                                                  int64_t resolution, int64_t num_frames);

/// Rasterizes tracks with exact box-filter coverage (squares) or 4x4
/// supersampling (disks) over a black background.
torch::Tensor render_tracks(const std::vector<ShapeTrack>& shapes, int64_t resolution,
                            int64_t num_frames);

/// One video with its ground truth; deterministic in (config.seed, index).
SyntheticVideo generate_synthetic_video(const SyntheticDatasetConfig& config, int64_t index);

/// dataset_size videos, label = index % num_classes (balanced by construction).
std::vector<SyntheticVideo> generate_synthetic_videos(const SyntheticDatasetConfig& config);
std::vector<RawVideo> generate_synthetic_dataset(const SyntheticDatasetConfig& config);

/// Intensity-weighted centroid (x, y) of a frame. Accepts uint8 [H, W, 3] or
/// float [H, W, 3] in [-1, 1]. Per-channel intensities are mapped to [0, 1]
/// and `threshold` is subtracted (clamped at 0) before weighting, which
/// suppresses low-level background noise. Empty frames yield nullopt.
std::optional<std::array<double, 2>> frame_centroid(const torch::Tensor& frame,
                                                    double threshold = 0.0);

}  // namespace dvdgan::data
