#include "dvdgan/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dvdgan::data {

namespace {

double uniform_real(at::Generator& gen, double lo, double hi) {
  const auto u = torch::rand({1}, gen, torch::kFloat64).item<double>();
  return lo + (hi - lo) * u;
}

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// Start coordinate such that a shape moving at `v` for `frames` steps stays
// inside [0, limit] without bouncing whenever that is possible.
double sample_start(at::Generator& gen, double v, double limit, int64_t frames) {
  const double travel = std::abs(v) * static_cast<double>(frames - 1);
  if (travel > limit) {
    return uniform_real(gen, 0.0, limit);
  }
  return v >= 0 ? uniform_real(gen, 0.0, limit - travel) : uniform_real(gen, travel, limit);
}

}  // namespace

void SyntheticDatasetConfig::validate() const {
  if (num_classes < 2) throw InvalidInput("synthetic dataset needs num_classes >= 2");
  if (resolution < 16) throw InvalidInput("synthetic dataset needs resolution >= 16");
  if (clip_length < 4) throw InvalidInput("synthetic dataset needs clip_length >= 4");
  if (shapes_per_video < 1) throw InvalidInput("shapes_per_video must be >= 1");
  if (!(min_speed > 0) || max_speed < min_speed) {
    throw InvalidInput("velocity range must satisfy 0 < min_speed <= max_speed");
  }
  if (dataset_size < 1) throw InvalidInput("dataset_size must be >= 1");
}

std::array<double, 2> ShapeTrack::center(int64_t frame) const {
  const auto& p = positions.at(static_cast<size_t>(frame));
  return {p[0] + size / 2.0, p[1] + size / 2.0};
}

std::array<double, 2> class_direction(int64_t label, int64_t num_classes) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(label) /
                       static_cast<double>(num_classes);
  auto snap = [](double v) { return std::abs(v) < 1e-12 ? 0.0 : v; };
  return {snap(std::cos(angle)), snap(std::sin(angle))};
}

std::vector<std::array<double, 2>> simulate_track(std::array<double, 2> start,
                                                  std::array<double, 2> velocity, double size,
                                                  int64_t resolution, int64_t num_frames) {
  const double limit = static_cast<double>(resolution) - size;
  std::vector<std::array<double, 2>> out;
  out.reserve(static_cast<size_t>(num_frames));
  auto p = start;
  auto v = velocity;
  for (int64_t t = 0; t < num_frames; ++t) {
    out.push_back(p);
    for (int axis = 0; axis < 2; ++axis) {
      p[axis] += v[axis];
      if (p[axis] < 0.0) {
        p[axis] = -p[axis];
        v[axis] = -v[axis];
      } else if (p[axis] > limit) {
        p[axis] = 2.0 * limit - p[axis];
        v[axis] = -v[axis];
      }
    }
  }
  return out;
}

torch::Tensor render_tracks(const std::vector<ShapeTrack>& shapes, int64_t resolution,
                            int64_t num_frames) {
  auto canvas = torch::zeros({num_frames, resolution, resolution, 3}, torch::kFloat64);
  auto acc = canvas.accessor<double, 4>();
  for (const auto& shape : shapes) {
    for (int64_t t = 0; t < num_frames; ++t) {
      const auto [x, y] = shape.positions.at(static_cast<size_t>(t));
      const auto x1 = x + shape.size, y1 = y + shape.size;
      const auto r0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(y)));
      const auto r1 = std::min<int64_t>(resolution, static_cast<int64_t>(std::ceil(y1)));
      const auto c0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(x)));
      const auto c1 = std::min<int64_t>(resolution, static_cast<int64_t>(std::ceil(x1)));
      for (int64_t r = r0; r < r1; ++r) {
        for (int64_t c = c0; c < c1; ++c) {
          double alpha = 0.0;
          if (shape.kind == ShapeKind::kSquare) {
            alpha = overlap(x, x1, c, c + 1.0) * overlap(y, y1, r, r + 1.0);
          } else {
            const double cx = x + shape.size / 2, cy = y + shape.size / 2,
                         rad = shape.size / 2;
            int hits = 0;
            for (int sy = 0; sy < 4; ++sy) {
              for (int sx = 0; sx < 4; ++sx) {
                const double px = c + (sx + 0.5) / 4.0, py = r + (sy + 0.5) / 4.0;
                hits += (px - cx) * (px - cx) + (py - cy) * (py - cy) <= rad * rad;
              }
            }
            alpha = hits / 16.0;
          }
          if (alpha <= 0.0) continue;
          for (int ch = 0; ch < 3; ++ch) {
            acc[t][r][c][ch] = acc[t][r][c][ch] * (1.0 - alpha) + shape.color[ch] * alpha;
          }
        }
      }
    }
  }
  return canvas.round().clamp(0, 255).to(torch::kUInt8);
}

SyntheticVideo generate_synthetic_video(const SyntheticDatasetConfig& config, int64_t index) {
  config.validate();
  auto gen = make_generator(derive_seed(config.seed, static_cast<uint64_t>(index)));
  const int64_t label = index % config.num_classes;
  const auto dir = class_direction(label, config.num_classes);
  const double res = static_cast<double>(config.resolution);

  SyntheticVideo out;
  for (int64_t s = 0; s < config.shapes_per_video; ++s) {
    ShapeTrack shape;
    shape.kind = uniform_int(gen, 0, 1) == 0 ? ShapeKind::kSquare : ShapeKind::kDisk;
    shape.size = uniform_real(gen, res / 7.0, res / 5.0);
    for (auto& c : shape.color) {
      c = static_cast<uint8_t>(uniform_int(gen, 96, 255));
    }
    const double speed = uniform_real(gen, config.min_speed, config.max_speed);
    const std::array<double, 2> velocity{dir[0] * speed, dir[1] * speed};
    const double limit = res - shape.size;
    const std::array<double, 2> start{sample_start(gen, velocity[0], limit, config.clip_length),
                                      sample_start(gen, velocity[1], limit, config.clip_length)};
    shape.positions =
        simulate_track(start, velocity, shape.size, config.resolution, config.clip_length);
    out.shapes.push_back(std::move(shape));
  }
  out.video.frames = render_tracks(out.shapes, config.resolution, config.clip_length);
  out.video.label = label;
  return out;
}

std::vector<SyntheticVideo> generate_synthetic_videos(const SyntheticDatasetConfig& config) {
  config.validate();
  std::vector<SyntheticVideo> out;
  out.reserve(static_cast<size_t>(config.dataset_size));
  for (int64_t i = 0; i < config.dataset_size; ++i) {
    out.push_back(generate_synthetic_video(config, i));
  }
  return out;
}

std::vector<RawVideo> generate_synthetic_dataset(const SyntheticDatasetConfig& config) {
  std::vector<RawVideo> out;
  for (auto& v : generate_synthetic_videos(config)) {
    out.push_back(std::move(v.video));
  }
  return out;
}

std::optional<std::array<double, 2>> frame_centroid(const torch::Tensor& frame,
                                                    double threshold) {
  TORCH_CHECK(frame.dim() == 3 && frame.size(2) == 3, "expected [H, W, 3] frame");
  torch::Tensor intensity;
  if (frame.scalar_type() == torch::kUInt8) {
    intensity = frame.to(torch::kFloat64).div(255.0);
  } else {
    intensity = frame.detach().to(torch::kFloat64).add(1.0).mul(0.5);
  }
  auto weight = intensity.sub(threshold).clamp_min(0.0).sum(2);
  const double total = weight.sum().item<double>();
  if (total < 1e-9) {
    return std::nullopt;
  }
  const auto h = frame.size(0), w = frame.size(1);
  auto xs = torch::arange(w, torch::kFloat64).add(0.5).view({1, w});
  auto ys = torch::arange(h, torch::kFloat64).add(0.5).view({h, 1});
  return std::array<double, 2>{(weight * xs).sum().item<double>() / total,
                               (weight * ys).sum().item<double>() / total};
}

}  // namespace dvdgan::data
