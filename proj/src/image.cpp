#include "dvdgan/image.hpp"

#include "dvdgan/data/video.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace dvdgan::image {

void write_png(const std::filesystem::path& file, const torch::Tensor& rgb) {
  if (rgb.dim() != 3 || rgb.size(2) != 3 || rgb.scalar_type() != torch::kUInt8) {
    throw InvalidInput("write_png expects a uint8 [H, W, 3] image");
  }
  if (file.has_parent_path()) {
    std::filesystem::create_directories(file.parent_path());
  }
  auto img = rgb.contiguous();
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.size(1));
  desc.height = static_cast<png_uint_32>(img.size(0));
  desc.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&desc, file.c_str(), 0, img.data_ptr<uint8_t>(), 0, nullptr) == 0) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw IoError("cannot write " + file.string() + ": " + msg);
  }
}

torch::Tensor read_png(const std::filesystem::path& file) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&desc, file.c_str()) == 0) {
    throw IoError("cannot read " + file.string() + ": " + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  auto out = torch::empty({static_cast<int64_t>(desc.height), static_cast<int64_t>(desc.width), 3},
                          torch::kUInt8);
  if (png_image_finish_read(&desc, nullptr, out.data_ptr<uint8_t>(), 0, nullptr) == 0) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw IoError("cannot decode " + file.string() + ": " + msg);
  }
  return out;
}

namespace {

torch::Tensor as_uint8(const torch::Tensor& t) {
  return t.scalar_type() == torch::kUInt8 ? t : data::to_uint8(t);
}

}  // namespace

torch::Tensor video_rows_montage(const torch::Tensor& videos, int64_t gap) {
  if (videos.dim() != 5 || videos.size(4) != 3) {
    throw InvalidInput("montage expects videos [N, T, H, W, 3]");
  }
  auto v = as_uint8(videos);
  const auto n = v.size(0), t = v.size(1), h = v.size(2), w = v.size(3);
  auto canvas = torch::zeros({n * h + (n - 1) * gap, t * w + (t - 1) * gap, 3}, torch::kUInt8);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < t; ++j) {
      canvas.slice(0, i * (h + gap), i * (h + gap) + h)
          .slice(1, j * (w + gap), j * (w + gap) + w)
          .copy_(v[i][j]);
    }
  }
  return canvas;
}

torch::Tensor raster_montage(const torch::Tensor& video, int64_t columns, int64_t gap) {
  if (video.dim() != 4 || columns < 1) {
    throw InvalidInput("raster montage expects a [T, H, W, 3] video and columns >= 1");
  }
  auto v = as_uint8(video);
  const auto t = v.size(0), h = v.size(1), w = v.size(2);
  const auto rows = (t + columns - 1) / columns;
  const auto cols = std::min(columns, t);
  auto canvas =
      torch::zeros({rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap, 3}, torch::kUInt8);
  for (int64_t f = 0; f < t; ++f) {
    const auto r = f / columns, c = f % columns;
    canvas.slice(0, r * (h + gap), r * (h + gap) + h)
        .slice(1, c * (w + gap), c * (w + gap) + w)
        .copy_(v[f]);
  }
  return canvas;
}

std::array<uint8_t, 3> palette(size_t index) {
  static constexpr std::array<std::array<uint8_t, 3>, 6> kColors{{{31, 119, 180},
                                                                   {255, 127, 14},
                                                                   {44, 160, 44},
                                                                   {214, 39, 40},
                                                                   {148, 103, 189},
                                                                   {140, 86, 75}}};
  return kColors[index % kColors.size()];
}

namespace {

class Canvas {
 public:
  Canvas(int64_t w, int64_t h) : w_(w), h_(h), img_(torch::full({h, w, 3}, 255, torch::kUInt8)) {}

  void set(int64_t x, int64_t y, std::array<uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = img_.data_ptr<uint8_t>() + (y * w_ + x) * 3;
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void line(int64_t x0, int64_t y0, int64_t x1, int64_t y1, std::array<uint8_t, 3> c) {
    const int64_t dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int64_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int64_t err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const auto e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }

  void box(int64_t x, int64_t y, int64_t r, std::array<uint8_t, 3> c) {
    for (int64_t i = -r; i <= r; ++i) {
      for (int64_t j = -r; j <= r; ++j) set(x + i, y + j, c);
    }
  }

  void ring(int64_t x, int64_t y, int64_t r, std::array<uint8_t, 3> c) {
    line(x - r, y - r, x + r, y - r, c);
    line(x + r, y - r, x + r, y + r, c);
    line(x + r, y + r, x - r, y + r, c);
    line(x - r, y + r, x - r, y - r, c);
  }

  torch::Tensor image() const { return img_; }

 private:
  int64_t w_, h_;
  torch::Tensor img_;
};

}  // namespace

torch::Tensor line_plot(const std::vector<Series>& series, int64_t width, int64_t height,
                        const std::array<double, 2>* highlight) {
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i] - e);
      y_hi = std::max(y_hi, s.y[i] + e);
    }
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0; x_hi = 1; y_lo = 0; y_hi = 1;
  }
  if (x_hi - x_lo < 1e-12) { x_lo -= 0.5; x_hi += 0.5; }
  if (y_hi - y_lo < 1e-12) { y_lo -= 0.5; y_hi += 0.5; }
  const int64_t margin = 24;
  Canvas canvas(width, height);
  auto px = [&](double x) {
    return margin + static_cast<int64_t>(std::lround((x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)));
  };
  auto py = [&](double y) {
    return height - margin -
           static_cast<int64_t>(std::lround((y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)));
  };
  const std::array<uint8_t, 3> axis{0, 0, 0};
  canvas.line(margin, height - margin, width - margin, height - margin, axis);
  canvas.line(margin, margin, margin, height - margin, axis);
  for (const auto& s : series) {
    int64_t prev_x = -1, prev_y = -1;
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        prev_x = -1;
        continue;
      }
      const auto x = px(s.x[i]), y = py(s.y[i]);
      if (prev_x >= 0) canvas.line(prev_x, prev_y, x, y, s.color);
      canvas.box(x, y, 2, s.color);
      if (i < s.err.size() && std::isfinite(s.err[i]) && s.err[i] > 0) {
        const auto lo = py(s.y[i] - s.err[i]), hi = py(s.y[i] + s.err[i]);
        canvas.line(x, lo, x, hi, s.color);
        canvas.line(x - 3, lo, x + 3, lo, s.color);
        canvas.line(x - 3, hi, x + 3, hi, s.color);
      }
      prev_x = x;
      prev_y = y;
    }
  }
  if (highlight != nullptr) {
    canvas.ring(px((*highlight)[0]), py((*highlight)[1]), 6, {214, 39, 40});
  }
  return canvas.image();
}

}  // namespace dvdgan::image
