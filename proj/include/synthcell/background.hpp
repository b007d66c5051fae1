#pragma once

// Cell-free background synthesis. Every merged cell box is refilled with
// outside pixels that best match the box's corner colors, then blended back
// through a Gaussian-softened rectangular mask.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"
#include "synthcell/instances.hpp"
#include "synthcell/rng.hpp"

namespace synthcell {

struct InpaintConfig {
  int n_candidates = 32;
  std::optional<double> sigma;    // default: max(1, min(w,h)/8) per box
  std::optional<int> rect_inset;  // default: ceil(3·sigma), limited to fit the box
  std::uint64_t seed = 0;
};

/// Effective (sigma, inset) for one box.
struct BoxBlend {
  double sigma;
  int inset;
};

inline BoxBlend resolve_blend(const InpaintConfig& cfg, const BoundingBox& box) {
  const int short_side = std::min(box.w, box.h);
  const double sigma = cfg.sigma ? *cfg.sigma : std::max(1.0, short_side / 8.0);
  if (!(sigma > 0.0)) fail(ErrorCode::InvalidParam, "inpaint sigma must be > 0");
  if (cfg.rect_inset) {
    if (*cfg.rect_inset < 0 || 2 * *cfg.rect_inset >= short_side) {
      fail(ErrorCode::InvalidParam, "rect_inset " + std::to_string(*cfg.rect_inset) + " does not fit a box of short side " +
                                        std::to_string(short_side));
    }
    return {sigma, *cfg.rect_inset};
  }
  const int wanted = static_cast<int>(std::ceil(3.0 * sigma));
  return {sigma, std::min(wanted, (short_side - 1) / 2)};
}

/// Union of the given boxes as a 0/1 mask.
inline BinaryMask box_occupancy(int width, int height, std::span<const BoundingBox> boxes) {
  BinaryMask occ(width, height, 0);
  for (const auto& b : boxes)
    for (int y = b.y; y < b.bottom(); ++y)
      for (int x = b.x; x < b.right(); ++x) occ.at(x, y) = 1;
  return occ;
}

inline std::vector<Point> outside_positions(const BinaryMask& occupancy) {
  std::vector<Point> out;
  for (int y = 0; y < occupancy.height(); ++y)
    for (int x = 0; x < occupancy.width(); ++x)
      if (!occupancy.at(x, y)) out.push_back({x, y});
  return out;
}

/// Refills every pixel of `box` with the best of n randomly drawn outside
/// pixels, scored by mean Euclidean distance to the box's four corners.
inline RasterImage replace_inside_pixels(const RasterImage& img, const BoundingBox& box, const BinaryMask& occupancy,
                                         const InpaintConfig& cfg, Rng& rng) {
  if (!box.in_bounds(img.width(), img.height())) fail(ErrorCode::OutOfBounds, "inpaint box outside image");
  if (occupancy.width() != img.width() || occupancy.height() != img.height()) {
    fail(ErrorCode::DimensionMismatch, "occupancy mask does not match image");
  }
  if (cfg.n_candidates < 1) fail(ErrorCode::InvalidParam, "n_candidates must be >= 1");
  const std::vector<Point> outside = outside_positions(occupancy);
  if (outside.empty()) fail(ErrorCode::NoOutsidePixels, "every pixel lies inside a cell box");

  const Point corners[4] = {{box.x, box.y}, {box.right() - 1, box.y}, {box.x, box.bottom() - 1},
                            {box.right() - 1, box.bottom() - 1}};
  auto corner_distance = [&](Point p) {
    double sum = 0.0;
    for (const Point& c : corners) sum += pixel_distance(img, p.x, p.y, img, c.x, c.y);
    return sum / 4.0;
  };

  RasterImage patch(box.w, box.h, img.channels());
  for (int y = 0; y < box.h; ++y) {
    for (int x = 0; x < box.w; ++x) {
      Point best{};
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < cfg.n_candidates; ++k) {
        const Point cand = outside[rng.uniform_index(outside.size())];
        const double d = corner_distance(cand);
        if (d < best_d) {
          best_d = d;
          best = cand;
        }
      }
      for (int c = 0; c < img.channels(); ++c) patch.at(x, y, c) = img.at(best.x, best.y, c);
    }
  }
  return patch;
}

/// Box-sized alpha: zeros with a ones rectangle inset by `inset`, Gaussian-filtered.
inline AlphaMask rectangle_alpha(int w, int h, int inset, double sigma) {
  AlphaMask rect(w, h, 0.0);
  for (int y = inset; y < h - inset; ++y)
    for (int x = inset; x < w - inset; ++x) rect.at(x, y) = 1.0;
  return gaussian_alpha(rect, sigma);
}

inline RasterImage remove_object(const RasterImage& img, const BoundingBox& box, const BinaryMask& occupancy,
                                 const InpaintConfig& cfg, Rng& rng) {
  const BoxBlend blend = resolve_blend(cfg, box);
  const RasterImage patch = replace_inside_pixels(img, box, occupancy, cfg, rng);
  const AlphaMask alpha = rectangle_alpha(box.w, box.h, blend.inset, blend.sigma);
  return alpha_composite(img, patch, alpha, {box.x, box.y});
}

/// Removes every annotated cell. `stream_id` selects this image's RNG
/// streams so that images can be processed in any order.
inline RasterImage generate_background(const RasterImage& img, const LabelMap& map, const InpaintConfig& cfg,
                                       std::uint64_t stream_id = 0) {
  if (img.width() != map.width() || img.height() != map.height()) {
    fail(ErrorCode::DimensionMismatch, "image and label map dimensions differ");
  }
  const std::vector<BoundingBox> boxes = merged_object_boxes(map);  // sorted by (y, x)
  if (boxes.empty()) return img;
  const BinaryMask occupancy = box_occupancy(img.width(), img.height(), boxes);
  const std::uint64_t image_seed = derive_seed(cfg.seed, stream_id);
  RasterImage current = img;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    Rng rng = Rng::stream(image_seed, i);
    current = remove_object(current, boxes[i], occupancy, cfg, rng);
  }
  return current;
}

}  // namespace synthcell
