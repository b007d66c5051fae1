#pragma once

// Instance annotations and their COCO-style JSON form. Masks are written as
// uncompressed run-length counts over the full image in column-major order,
// starting with the run of zeros.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"

namespace synthcell {

enum class AnnotationKind { SCO, MCOMember };

inline std::string_view to_string(AnnotationKind k) { return k == AnnotationKind::SCO ? "SCO" : "MCO-member"; }

struct Annotation {
  int image_id = 0;
  int instance_id = 0;
  BoundingBox bbox;
  BinaryMask mask;  // bbox-local footprint
  AnnotationKind kind = AnnotationKind::SCO;
  long long area = 0;

  bool covers(int x, int y) const {
    const int lx = x - bbox.x;
    const int ly = y - bbox.y;
    return mask.contains(lx, ly) && mask.at(lx, ly) != 0;
  }
};

/// Column-major run lengths of a bbox-local mask embedded in a width×height image.
inline std::vector<std::uint32_t> rle_encode(const BinaryMask& local, const BoundingBox& bbox, int width, int height) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < width; ++x) {
    for (int y = 0; y < height; ++y) {
      const int lx = x - bbox.x;
      const int ly = y - bbox.y;
      const std::uint8_t v = local.contains(lx, ly) && local.at(lx, ly) ? 1 : 0;
      if (v != current) {
        counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  counts.push_back(run);
  return counts;
}

/// Full-image mask from column-major run lengths.
inline BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, int width, int height) {
  BinaryMask mask(width, height, 0);
  const std::size_t total = static_cast<std::size_t>(width) * height;
  std::size_t pos = 0;
  std::uint8_t v = 0;
  for (std::uint32_t run : counts) {
    if (pos + run > total) fail(ErrorCode::InvalidParam, "RLE counts exceed image size");
    for (std::uint32_t k = 0; k < run; ++k, ++pos) {
      if (v) mask.at(static_cast<int>(pos / height), static_cast<int>(pos % height)) = 1;
    }
    v ^= 1;
  }
  if (pos != total) fail(ErrorCode::InvalidParam, "RLE counts do not cover the image");
  return mask;
}

struct CocoImage {
  int id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
};

inline nlohmann::json to_coco_json(const std::vector<CocoImage>& images, const std::vector<Annotation>& annotations) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& im : images) {
    j["images"].push_back({{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
  }
  auto find_image = [&](int id) -> const CocoImage& {
    for (const auto& im : images)
      if (im.id == id) return im;
    fail(ErrorCode::InvalidParam, "annotation refers to unknown image " + std::to_string(id));
  };
  j["annotations"] = nlohmann::json::array();
  int next_id = 1;
  for (const auto& a : annotations) {
    const CocoImage& im = find_image(a.image_id);
    j["annotations"].push_back({
        {"id", next_id++},
        {"image_id", a.image_id},
        {"category_id", 1},
        {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
        {"segmentation", {{"size", {im.height, im.width}}, {"counts", rle_encode(a.mask, a.bbox, im.width, im.height)}}},
        {"area", a.area},
        {"iscrowd", 0},
        {"instance_id", a.instance_id},
        {"kind", std::string(to_string(a.kind))},
    });
  }
  j["categories"] = nlohmann::json::array({{{"id", 1}, {"name", "cell"}}});
  return j;
}

}  // namespace synthcell
