#pragma once

#include <torch/types.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace pvvae {

/// Writes an 8-bit RGB PNG. `image` is (H, W, 3), either uint8 or floating
/// point in [0, 1] (clamped). Throws IoError when the file cannot be written.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Reads an 8-bit RGB or RGBA PNG back as uint8 (H, W, 3).
torch::Tensor read_png(const std::filesystem::path& path);

/// Maps a [-1, 1] frame (H, W, 3) or (3, H, W) to [0, 1] (H, W, 3).
torch::Tensor frame_to_image(const torch::Tensor& frame);

/// Lays out equally sized (H, W, 3) float images row by row with `pad`
/// white pixels between cells, each pixel repeated `scale` times.
torch::Tensor tile_grid(const std::vector<torch::Tensor>& images, int64_t columns, int64_t pad = 2, int64_t scale = 1);

using Color = std::array<float, 3>;

/// Bar chart of non-negative values on a white canvas with a baseline axis.
torch::Tensor bar_chart(const std::vector<double>& values, int64_t height = 240, int64_t width = 320,
                        Color color = {0.2f, 0.4f, 0.8f});

/// Polylines sharing one y range; each series is drawn over x = 0..n-1 with
/// square markers at the samples.
torch::Tensor line_chart(const std::vector<std::vector<double>>& series, const std::vector<Color>& colors,
                         int64_t height = 240, int64_t width = 320);

}  // namespace pvvae
