#pragma once

// Raster data model and the pixel-level primitives shared by every stage:
// patch extraction, Gaussian filtering of alpha masks, alpha compositing and
// bilinear resampling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "synthcell/error.hpp"

namespace synthcell {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Top-left anchored integer rectangle, [x, x+w) × [y, y+h).
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long long area() const { return static_cast<long long>(w) * h; }

  bool in_bounds(int width, int height) const {
    return w >= 1 && h >= 1 && x >= 0 && y >= 0 && right() <= width && bottom() <= height;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline BoundingBox box_union(const BoundingBox& a, const BoundingBox& b) {
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.right(), b.right());
  const int y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

/// Rectangles intersect or share an edge or corner (gap 0).
inline bool boxes_touch(const BoundingBox& a, const BoundingBox& b) {
  return a.x <= b.right() && b.x <= a.right() && a.y <= b.bottom() && b.y <= a.bottom();
}

/// Dense row-major 2-D array. Backs label maps, alpha masks and binary masks.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{}) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      fail(ErrorCode::InvalidParam, "grid dimensions must be >= 1, got " +
                                        std::to_string(width) + "x" + std::to_string(height));
    }
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Grid(int width, int height, std::vector<T> values) : width_(width), height_(height) {
    if (width < 1 || height < 1) fail(ErrorCode::InvalidParam, "grid dimensions must be >= 1");
    if (values.size() != static_cast<std::size_t>(width) * height) {
      fail(ErrorCode::DimensionMismatch, "grid buffer length does not match dimensions");
    }
    values_ = std::move(values);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T& at(int x, int y) { return values_[index(x, y)]; }
  const T& at(int x, int y) const { return values_[index(x, y)]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  const std::vector<T>& vector() const { return values_; }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + static_cast<std::size_t>(x);
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

/// Instance ids per pixel, 0 = background.
using LabelMap = Grid<std::uint32_t>;
/// Blend weights in [0,1].
using AlphaMask = Grid<double>;
/// 0/1 occupancy.
using BinaryMask = Grid<std::uint8_t>;

/// Interleaved 8-bit raster with 1 (gray) or 3 (RGB) channels.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels, std::uint8_t fill = 0)
      : width_(width), height_(height), channels_(channels) {
    validate_shape();
    pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  RasterImage(int width, int height, int channels, std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
    validate_shape();
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
      fail(ErrorCode::DimensionMismatch, "pixel buffer length does not match width*height*channels");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }

  std::uint8_t& at(int x, int y, int c = 0) { return pixels_[offset(x, y) + c]; }
  std::uint8_t at(int x, int y, int c = 0) const { return pixels_[offset(x, y) + c]; }

  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + static_cast<std::size_t>(x)) * channels_;
  }

  std::span<std::uint8_t> pixels() { return pixels_; }
  std::span<const std::uint8_t> pixels() const { return pixels_; }
  const std::vector<std::uint8_t>& buffer() const { return pixels_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  void validate_shape() const {
    if (width_ < 1 || height_ < 1) fail(ErrorCode::InvalidParam, "raster dimensions must be >= 1");
    if (channels_ != 1 && channels_ != 3) {
      fail(ErrorCode::UnsupportedFormat, "raster must have 1 or 3 channels, got " + std::to_string(channels_));
    }
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Round half up, then clamp to the 8-bit range.
inline std::uint8_t to_u8(double v) {
  const double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

/// Euclidean distance between the samples of pixel (ax,ay) of `a` and (bx,by) of `b`.
inline double pixel_distance(const RasterImage& a, int ax, int ay, const RasterImage& b, int bx, int by) {
  double sum = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const double d = static_cast<double>(a.at(ax, ay, c)) - static_cast<double>(b.at(bx, by, c));
    sum += d * d;
  }
  return std::sqrt(sum);
}

inline RasterImage extract_patch(const RasterImage& img, const BoundingBox& box) {
  if (!box.in_bounds(img.width(), img.height())) {
    fail(ErrorCode::OutOfBounds, "patch box (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                                     std::to_string(box.w) + "," + std::to_string(box.h) +
                                     ") outside image " + std::to_string(img.width()) + "x" +
                                     std::to_string(img.height()));
  }
  RasterImage out(box.w, box.h, img.channels());
  const std::size_t row_bytes = static_cast<std::size_t>(box.w) * img.channels();
  for (int y = 0; y < box.h; ++y) {
    const auto src = img.pixels().subspan(img.offset(box.x, box.y + y), row_bytes);
    std::copy(src.begin(), src.end(), out.pixels().begin() + static_cast<std::ptrdiff_t>(out.offset(0, y)));
  }
  return out;
}

template <typename T>
Grid<T> extract_region(const Grid<T>& grid, const BoundingBox& box) {
  if (!box.in_bounds(grid.width(), grid.height())) fail(ErrorCode::OutOfBounds, "region box outside grid");
  Grid<T> out(box.w, box.h);
  for (int y = 0; y < box.h; ++y)
    for (int x = 0; x < box.w; ++x) out.at(x, y) = grid.at(box.x + x, box.y + y);
  return out;
}

/// Normalized 1-D Gaussian taps, radius ceil(3·sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    fail(ErrorCode::InvalidParam, "gaussian sigma must be > 0, got " + std::to_string(sigma));
  }
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    taps[i + radius] = v;
    sum += v;
  }
  for (double& t : taps) t /= sum;
  return taps;
}

/// Separable Gaussian blur of a single real-valued plane with edge clamping.
inline std::vector<double> gaussian_blur_plane(std::span<const double> plane, int width, int height, double sigma) {
  const std::vector<double> taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  std::vector<double> tmp(plane.size());
  std::vector<double> out(plane.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int sx = std::clamp(x + k, 0, width - 1);
        acc += taps[k + radius] * plane[static_cast<std::size_t>(y) * width + sx];
      }
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int sy = std::clamp(y + k, 0, height - 1);
        acc += taps[k + radius] * tmp[static_cast<std::size_t>(sy) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  return out;
}

inline AlphaMask gaussian_alpha(const AlphaMask& mask, double sigma) {
  std::vector<double> blurred = gaussian_blur_plane(mask.values(), mask.width(), mask.height(), sigma);
  for (double& v : blurred) v = std::clamp(v, 0.0, 1.0);
  return AlphaMask(mask.width(), mask.height(), std::move(blurred));
}

/// Blends `patch` over `dst` at `origin`: out = round(a·patch + (1−a)·dst).
inline RasterImage alpha_composite(const RasterImage& dst, const RasterImage& patch, const AlphaMask& alpha,
                                   Point origin) {
  if (patch.width() != alpha.width() || patch.height() != alpha.height()) {
    fail(ErrorCode::DimensionMismatch, "patch and alpha dimensions differ");
  }
  if (patch.channels() != dst.channels()) {
    fail(ErrorCode::ChannelMismatch, "patch has " + std::to_string(patch.channels()) +
                                         " channels, destination has " + std::to_string(dst.channels()));
  }
  const BoundingBox placed{origin.x, origin.y, patch.width(), patch.height()};
  if (!placed.in_bounds(dst.width(), dst.height())) fail(ErrorCode::OutOfBounds, "composite rectangle outside destination");

  RasterImage out = dst;
  for (int y = 0; y < patch.height(); ++y) {
    for (int x = 0; x < patch.width(); ++x) {
      const double a = alpha.at(x, y);
      if (a <= 0.0) continue;
      for (int c = 0; c < dst.channels(); ++c) {
        const double v = a * patch.at(x, y, c) + (1.0 - a) * dst.at(origin.x + x, origin.y + y, c);
        out.at(origin.x + x, origin.y + y, c) = to_u8(v);
      }
    }
  }
  return out;
}

/// Luma plane (ITU-R 601 weights for RGB), unrounded.
inline std::vector<double> gray_plane(const RasterImage& img) {
  std::vector<double> out(static_cast<std::size_t>(img.width()) * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double v;
      if (img.channels() == 1) {
        v = img.at(x, y);
      } else {
        v = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      }
      out[static_cast<std::size_t>(y) * img.width() + x] = v;
    }
  }
  return out;
}

/// Bilinear resample of a single plane with half-pixel centers and edge clamping.
inline std::vector<double> resample_bilinear(std::span<const double> plane, int width, int height, int out_w,
                                             int out_h) {
  if (out_w < 1 || out_h < 1) fail(ErrorCode::InvalidParam, "resample target must be >= 1x1");
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h);
  const double sx = static_cast<double>(width) / out_w;
  const double sy = static_cast<double>(height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, width - 1);
      const double tx = fx - x0;
      auto px = [&](int xx, int yy) { return plane[static_cast<std::size_t>(yy) * width + xx]; };
      const double top = px(x0, y0) * (1.0 - tx) + px(x1, y0) * tx;
      const double bot = px(x0, y1) * (1.0 - tx) + px(x1, y1) * tx;
      out[static_cast<std::size_t>(y) * out_w + x] = top * (1.0 - ty) + bot * ty;
    }
  }
  return out;
}

/// Grayscale `img` resampled to size×size, samples scaled to [0,1].
inline std::vector<double> gray_thumbnail(const RasterImage& img, int size) {
  std::vector<double> v = resample_bilinear(gray_plane(img), img.width(), img.height(), size, size);
  for (double& s : v) s /= 255.0;
  return v;
}

/// Splits an interleaved raster into one real-valued plane per channel.
inline std::vector<std::vector<double>> channel_planes(const RasterImage& img) {
  std::vector<std::vector<double>> planes(img.channels(),
                                          std::vector<double>(static_cast<std::size_t>(img.width()) * img.height()));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        planes[c][static_cast<std::size_t>(y) * img.width() + x] = img.at(x, y, c);
  return planes;
}

}  // namespace synthcell
