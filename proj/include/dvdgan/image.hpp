#pragma once

#include "dvdgan/common.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace dvdgan::image {

/// Writes an RGB uint8 [H, W, 3] image.
void write_png(const std::filesystem::path& file, const torch::Tensor& rgb);
/// Reads an 8-bit RGB PNG back into [H, W, 3] uint8.
torch::Tensor read_png(const std::filesystem::path& file);

/// Grid montage of videos [N, T, H, W, 3] (float in [-1, 1] or uint8): one row
/// per video, one column per frame, separated by `gap` black pixels.
torch::Tensor video_rows_montage(const torch::Tensor& videos, int64_t gap = 1);

/// All frames of one video [T, H, W, 3] in raster-scan order, `columns` per row.
torch::Tensor raster_montage(const torch::Tensor& video, int64_t columns, int64_t gap = 1);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional symmetric error bars
  std::array<uint8_t, 3> color{31, 119, 180};
};

/// Minimal raster line plot (axes, polylines, markers, error bars), autoscaled
/// to the union of all series. `highlight` optionally rings one (x, y) point.
torch::Tensor line_plot(const std::vector<Series>& series, int64_t width = 480,
                        int64_t height = 320, const std::array<double, 2>* highlight = nullptr);

std::array<uint8_t, 3> palette(size_t index);

}  // namespace dvdgan::image
