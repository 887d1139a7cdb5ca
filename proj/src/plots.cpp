#include "pvvae/plots.hpp"

#include "pvvae/errors.hpp"

#include <png.h>
#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace pvvae {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

torch::Tensor as_uint8(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(2) != 3) throw DimensionError("png images must be (H, W, 3)");
  if (image.scalar_type() == torch::kUInt8) return image.contiguous();
  return (image.to(torch::kFloat32).clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
}

}  // namespace

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  auto pixels = as_uint8(image);
  const auto height = static_cast<png_uint_32>(pixels.size(0));
  const auto width = static_cast<png_uint_32>(pixels.size(1));
  File file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* data = pixels.data_ptr<uint8_t>();
  for (png_uint_32 r = 0; r < height; ++r) png_write_row(png, data + static_cast<size_t>(r) * width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor read_png(const std::filesystem::path& path) {
  File file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot read " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("not a readable png: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_expand(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const auto height = png_get_image_height(png, info), width = png_get_image_width(png, info);
  auto out = torch::empty({static_cast<int64_t>(height), static_cast<int64_t>(width), 3}, torch::kUInt8);
  auto* data = out.data_ptr<uint8_t>();
  for (png_uint_32 r = 0; r < height; ++r) png_read_row(png, data + static_cast<size_t>(r) * width * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

torch::Tensor frame_to_image(const torch::Tensor& frame) {
  auto f = frame.detach().to(torch::kFloat32);
  if (f.dim() == 3 && f.size(0) == 3 && f.size(2) != 3) f = f.permute({1, 2, 0});
  if (f.dim() != 3 || f.size(2) != 3) throw DimensionError("frame_to_image expects (H, W, 3) or (3, H, W)");
  return ((f + 1.0) * 0.5).clamp(0.0, 1.0).contiguous();
}

torch::Tensor tile_grid(const std::vector<torch::Tensor>& images, int64_t columns, int64_t pad, int64_t scale) {
  if (images.empty()) throw InputError("tile_grid needs at least one image");
  if (columns < 1 || pad < 0 || scale < 1) throw InputError("tile_grid: invalid layout");
  const int64_t h = images[0].size(0) * scale, w = images[0].size(1) * scale;
  const int64_t n = static_cast<int64_t>(images.size());
  const int64_t cols = std::min(columns, n), rows = (n + columns - 1) / columns;
  auto canvas = torch::ones({rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, 3});
  for (int64_t i = 0; i < n; ++i) {
    auto img = images[static_cast<size_t>(i)].to(torch::kFloat32);
    if (img.dim() != 3 || img.size(0) * scale != h || img.size(1) * scale != w)
      throw DimensionError("tile_grid images must share one (H, W, 3) shape");
    if (scale > 1) img = img.repeat_interleave(scale, 0).repeat_interleave(scale, 1);
    const int64_t r = i / columns, c = i % columns;
    canvas.narrow(0, pad + r * (h + pad), h).narrow(1, pad + c * (w + pad), w).copy_(img);
  }
  return canvas;
}

namespace {

constexpr int64_t kMargin = 16;

void fill_rect(torch::Tensor& canvas, int64_t y0, int64_t x0, int64_t y1, int64_t x1, Color color) {
  y0 = std::clamp<int64_t>(y0, 0, canvas.size(0));
  y1 = std::clamp<int64_t>(y1, 0, canvas.size(0));
  x0 = std::clamp<int64_t>(x0, 0, canvas.size(1));
  x1 = std::clamp<int64_t>(x1, 0, canvas.size(1));
  if (y1 <= y0 || x1 <= x0) return;
  auto region = canvas.narrow(0, y0, y1 - y0).narrow(1, x0, x1 - x0);
  for (int64_t ch = 0; ch < 3; ++ch) region.select(2, ch).fill_(color[static_cast<size_t>(ch)]);
}

void draw_axes(torch::Tensor& canvas) {
  const int64_t h = canvas.size(0), w = canvas.size(1);
  fill_rect(canvas, h - kMargin, kMargin, h - kMargin + 1, w - kMargin, {0, 0, 0});
  fill_rect(canvas, kMargin, kMargin, h - kMargin, kMargin + 1, {0, 0, 0});
}

// Bresenham between two pixel positions.
void draw_line(torch::Tensor& canvas, int64_t x0, int64_t y0, int64_t x1, int64_t y1, Color color) {
  const int64_t dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int64_t sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int64_t err = dx + dy;
  while (true) {
    fill_rect(canvas, y0, x0, y0 + 2, x0 + 2, color);
    if (x0 == x1 && y0 == y1) break;
    const int64_t e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

torch::Tensor bar_chart(const std::vector<double>& values, int64_t height, int64_t width, Color color) {
  if (height <= 2 * kMargin || width <= 2 * kMargin) throw InputError("chart too small");
  auto canvas = torch::ones({height, width, 3});
  draw_axes(canvas);
  if (values.empty()) return canvas;
  double top = 0.0;
  for (double v : values)
    if (std::isfinite(v)) top = std::max(top, v);
  if (top <= 0.0) top = 1.0;
  const double plot_h = static_cast<double>(height - 2 * kMargin), plot_w = static_cast<double>(width - 2 * kMargin);
  const double slot = plot_w / static_cast<double>(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || values[i] <= 0.0) continue;
    const auto x0 = kMargin + 1 + static_cast<int64_t>(slot * static_cast<double>(i) + slot * 0.1);
    const auto x1 = kMargin + 1 + static_cast<int64_t>(slot * static_cast<double>(i + 1) - slot * 0.1);
    const auto bar = static_cast<int64_t>(values[i] / top * plot_h);
    fill_rect(canvas, height - kMargin - bar, x0, height - kMargin, std::max(x1, x0 + 1), color);
  }
  return canvas;
}

torch::Tensor line_chart(const std::vector<std::vector<double>>& series, const std::vector<Color>& colors,
                         int64_t height, int64_t width) {
  if (height <= 2 * kMargin || width <= 2 * kMargin) throw InputError("chart too small");
  if (colors.size() < series.size()) throw InputError("line_chart needs one color per series");
  auto canvas = torch::ones({height, width, 3});
  draw_axes(canvas);
  double lo = 0.0, hi = 0.0;
  size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.size());
    for (double v : s)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (hi <= lo) hi = lo + 1.0;
  const double plot_h = static_cast<double>(height - 2 * kMargin - 4);
  const double plot_w = static_cast<double>(width - 2 * kMargin - 4);
  auto px = [&](size_t i) {
    return kMargin + 2 + static_cast<int64_t>(longest > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(longest - 1) : 0.0);
  };
  auto py = [&](double v) { return height - kMargin - 2 - static_cast<int64_t>((v - lo) / (hi - lo) * plot_h); };
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    for (size_t i = 0; i < s.size(); ++i) {
      if (!std::isfinite(s[i])) continue;
      fill_rect(canvas, py(s[i]) - 3, px(i) - 3, py(s[i]) + 4, px(i) + 4, colors[k]);
      if (i + 1 < s.size() && std::isfinite(s[i + 1])) draw_line(canvas, px(i), py(s[i]), px(i + 1), py(s[i + 1]), colors[k]);
    }
  }
  return canvas;
}

}  // namespace pvvae
