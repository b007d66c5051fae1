#pragma once

// Cell object extraction: connected components, interconnected-box merging,
// single-/multi-cell object classification and dataset statistics.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"
#include "synthcell/parallel.hpp"

namespace synthcell {

struct Component {
  std::uint32_t label = 0;          // source value of the component's pixels
  std::vector<std::size_t> pixels;  // row-major linear indices, ascending
  BoundingBox box;
};

/// 8-connected components of nonzero pixels. Pixels with different values
/// are never merged. Components come out ordered by their first pixel in
/// row-major order.
template <typename T>
std::vector<Component> connected_components(const Grid<T>& map) {
  const int w = map.width();
  const int h = map.height();
  std::vector<std::uint8_t> seen(map.size(), 0);
  std::vector<Component> out;
  std::vector<std::size_t> stack;

  for (std::size_t start = 0; start < map.size(); ++start) {
    if (map[start] == T{} || seen[start]) continue;
    Component comp;
    comp.label = static_cast<std::uint32_t>(map[start]);
    const T value = map[start];
    int x0 = w, y0 = h, x1 = -1, y1 = -1;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      comp.pixels.push_back(idx);
      const int x = static_cast<int>(idx % w);
      const int y = static_cast<int>(idx / w);
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if ((dx == 0 && dy == 0) || !map.contains(nx, ny)) continue;
          const std::size_t n = map.index(nx, ny);
          if (!seen[n] && map[n] == value) {
            seen[n] = 1;
            stack.push_back(n);
          }
        }
      }
    }
    std::sort(comp.pixels.begin(), comp.pixels.end());
    comp.box = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
    out.push_back(std::move(comp));
  }
  return out;
}

struct BoxGroup {
  BoundingBox box;                   // tight union of the members
  std::vector<std::size_t> members;  // indices into the input list, ascending
};

/// Groups boxes under the transitive closure of "intersect or touch",
/// repeating until the merged boxes are pairwise non-touching. Groups are
/// ordered by (y, x) of their merged box.
inline std::vector<BoxGroup> merge_box_groups(std::span<const BoundingBox> boxes) {
  std::vector<BoxGroup> groups;
  groups.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) groups.push_back({boxes[i], {i}});

  bool merged = true;
  while (merged) {
    merged = false;
    std::vector<std::size_t> parent(groups.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (std::size_t i = 0; i < groups.size(); ++i) {
      for (std::size_t j = i + 1; j < groups.size(); ++j) {
        if (!boxes_touch(groups[i].box, groups[j].box)) continue;
        const std::size_t a = find(i);
        const std::size_t b = find(j);
        if (a != b) {
          parent[std::max(a, b)] = std::min(a, b);
          merged = true;
        }
      }
    }
    if (!merged) break;
    std::map<std::size_t, BoxGroup> roots;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const std::size_t r = find(i);
      auto [it, fresh] = roots.try_emplace(r, groups[i]);
      if (!fresh) {
        it->second.box = box_union(it->second.box, groups[i].box);
        it->second.members.insert(it->second.members.end(), groups[i].members.begin(), groups[i].members.end());
      }
    }
    groups.clear();
    for (auto& [root, g] : roots) groups.push_back(std::move(g));
  }
  for (auto& g : groups) std::sort(g.members.begin(), g.members.end());
  std::sort(groups.begin(), groups.end(), [](const BoxGroup& a, const BoxGroup& b) {
    return std::tie(a.box.y, a.box.x, a.box.h, a.box.w) < std::tie(b.box.y, b.box.x, b.box.h, b.box.w);
  });
  return groups;
}

inline std::vector<BoundingBox> merge_interconnected_boxes(std::span<const BoundingBox> boxes) {
  std::vector<BoundingBox> out;
  for (const auto& g : merge_box_groups(boxes)) out.push_back(g.box);
  return out;
}

/// Merged boxes of the connected components of a label map.
inline std::vector<BoundingBox> merged_object_boxes(const LabelMap& map) {
  std::vector<BoundingBox> boxes;
  for (const auto& c : connected_components(map)) boxes.push_back(c.box);
  return merge_interconnected_boxes(boxes);
}

enum class ObjectKind { SCO, MCO };

inline std::string_view to_string(ObjectKind k) { return k == ObjectKind::SCO ? "SCO" : "MCO"; }

/// An isolated cell (SCO) or a cluster of cells with interconnected boxes (MCO).
struct CellObject {
  RasterImage patch;
  AlphaMask mask;    // 0/1, union of the member components
  LabelMap members;  // member index 1..component_count per pixel, 0 outside the mask
  BoundingBox source_box;
  ObjectKind kind = ObjectKind::SCO;
  std::string source_image_id;
  int component_count = 1;
  std::vector<std::uint32_t> source_labels;  // source label of member k at [k-1]

  long long mask_area() const {
    long long n = 0;
    for (double v : mask.values()) n += v > 0.5 ? 1 : 0;
    return n;
  }
};

/// True when the box lies within `margin` pixels of the image border.
/// Margin 0 excludes boxes that touch the border.
inline bool near_border(const BoundingBox& box, int width, int height, int margin = 0) {
  return box.x <= margin || box.y <= margin || box.right() >= width - margin || box.bottom() >= height - margin;
}

/// Extracts one CellObject per merged box. Objects near the border are dropped.
inline std::vector<CellObject> extract_objects(const RasterImage& img, const LabelMap& map,
                                               const std::string& image_id = "", int border_margin = 0) {
  if (img.width() != map.width() || img.height() != map.height()) {
    fail(ErrorCode::DimensionMismatch, "image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                                           " vs label map " + std::to_string(map.width()) + "x" +
                                           std::to_string(map.height()) + (image_id.empty() ? "" : " (" + image_id + ")"));
  }
  if (border_margin < 0) fail(ErrorCode::InvalidParam, "border margin must be >= 0");
  const std::vector<Component> comps = connected_components(map);
  std::vector<BoundingBox> boxes;
  boxes.reserve(comps.size());
  for (const auto& c : comps) boxes.push_back(c.box);

  std::vector<CellObject> out;
  for (const BoxGroup& g : merge_box_groups(boxes)) {
    if (near_border(g.box, img.width(), img.height(), border_margin)) continue;
    CellObject obj;
    obj.patch = extract_patch(img, g.box);
    obj.mask = AlphaMask(g.box.w, g.box.h, 0.0);
    obj.members = LabelMap(g.box.w, g.box.h, 0);
    obj.source_box = g.box;
    obj.source_image_id = image_id;
    obj.component_count = static_cast<int>(g.members.size());
    obj.kind = obj.component_count == 1 ? ObjectKind::SCO : ObjectKind::MCO;
    std::uint32_t member_id = 0;
    for (std::size_t ci : g.members) {
      ++member_id;
      obj.source_labels.push_back(comps[ci].label);
      for (std::size_t idx : comps[ci].pixels) {
        const int x = static_cast<int>(idx % map.width()) - g.box.x;
        const int y = static_cast<int>(idx / map.width()) - g.box.y;
        obj.mask.at(x, y) = 1.0;
        obj.members.at(x, y) = member_id;
      }
    }
    out.push_back(std::move(obj));
  }
  return out;
}

struct AnnotatedImage {
  std::string id;
  RasterImage image;
  LabelMap labels;
};

struct ObjectPool {
  std::vector<CellObject> scos;
  std::vector<CellObject> mcos;
  std::map<int, int> count_histogram;  // objects per image -> number of images
  double sco_mco_ratio = 0.0;

  std::size_t size() const { return scos.size() + mcos.size(); }
  bool empty() const { return size() == 0; }

  /// Most frequent object count; ties resolve to the smallest count.
  int mode_count() const {
    int best = 0;
    int freq = -1;
    for (const auto& [count, f] : count_histogram) {
      if (f > freq) {
        best = count;
        freq = f;
      }
    }
    return best;
  }
};

inline void finalize_pool(ObjectPool& pool) {
  auto order = [](const CellObject& a, const CellObject& b) {
    return std::tie(a.source_image_id, a.source_box.x, a.source_box.y) <
           std::tie(b.source_image_id, b.source_box.x, b.source_box.y);
  };
  std::stable_sort(pool.scos.begin(), pool.scos.end(), order);
  std::stable_sort(pool.mcos.begin(), pool.mcos.end(), order);
  pool.sco_mco_ratio = pool.empty() ? 0.0 : static_cast<double>(pool.scos.size()) / static_cast<double>(pool.size());
}

inline ObjectPool pool_statistics(std::span<const AnnotatedImage> dataset, int border_margin = 0, int jobs = 1) {
  if (dataset.empty()) fail(ErrorCode::EmptyDataset, "pool statistics need at least one image");
  std::vector<std::vector<CellObject>> per_image(dataset.size());
  parallel_for(dataset.size(), jobs, [&](std::size_t i) {
    per_image[i] = extract_objects(dataset[i].image, dataset[i].labels, dataset[i].id, border_margin);
  });
  ObjectPool pool;
  for (auto& objs : per_image) {
    ++pool.count_histogram[static_cast<int>(objs.size())];
    for (auto& o : objs) (o.kind == ObjectKind::SCO ? pool.scos : pool.mcos).push_back(std::move(o));
  }
  finalize_pool(pool);
  return pool;
}

}  // namespace synthcell
