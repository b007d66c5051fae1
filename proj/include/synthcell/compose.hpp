#pragma once

// Synthetic image composition: augmented cell objects are placed on
// cell-free backgrounds at texture-matched, overlap-free positions, blended
// through a Gaussian-softened mask, and annotated with their unfiltered masks.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "synthcell/augment.hpp"
#include "synthcell/coco.hpp"
#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"
#include "synthcell/instances.hpp"
#include "synthcell/manifest.hpp"
#include "synthcell/parallel.hpp"
#include "synthcell/png_io.hpp"
#include "synthcell/rng.hpp"

namespace synthcell {

struct PlacementConfig {
  int n_candidates = 32;
  double sigma = 1.0;
  int max_attempts = 10;

  void validate() const {
    if (n_candidates < 1) fail(ErrorCode::InvalidParam, "placement n_candidates must be >= 1");
    if (!(sigma > 0.0)) fail(ErrorCode::InvalidParam, "placement sigma must be > 0");
    if (max_attempts < 1) fail(ErrorCode::InvalidParam, "placement max_attempts must be >= 1");
  }
};

enum class CountMode { Empirical, Mode };

struct ComposerConfig {
  int r = 1;
  CountMode count_mode = CountMode::Empirical;
  std::uint64_t seed = 0;
};

/// Mean Euclidean distance between the cell patch's four corner pixels and
/// the background at the matching corners of the placed box.
inline double corner_mismatch(const RasterImage& bg, const RasterImage& patch, Point origin) {
  const int w = patch.width();
  const int h = patch.height();
  const Point local[4] = {{0, 0}, {w - 1, 0}, {0, h - 1}, {w - 1, h - 1}};
  double sum = 0.0;
  for (const Point& c : local) sum += pixel_distance(patch, c.x, c.y, bg, origin.x + c.x, origin.y + c.y);
  return sum / 4.0;
}

inline bool overlaps(const BinaryMask& occupied, const CellObject& cell, Point origin) {
  for (int y = 0; y < cell.mask.height(); ++y)
    for (int x = 0; x < cell.mask.width(); ++x)
      if (cell.mask.at(x, y) > 0.5 && occupied.at(origin.x + x, origin.y + y)) return true;
  return false;
}

/// Best of n random origins by corner mismatch, among those that keep the
/// cell off the image border and clear of `occupied`. Retries whole batches
/// up to max_attempts times.
inline Point find_placement(const RasterImage& bg, const BinaryMask& occupied, const CellObject& cell,
                            const PlacementConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cell.patch.channels() != bg.channels()) fail(ErrorCode::ChannelMismatch, "cell and background channel counts differ");
  if (occupied.width() != bg.width() || occupied.height() != bg.height()) {
    fail(ErrorCode::DimensionMismatch, "occupancy mask does not match background");
  }
  // Valid origins keep the box one pixel clear of every border, so a placed
  // object survives border exclusion when its label map is re-extracted.
  const int max_x = bg.width() - cell.patch.width() - 1;
  const int max_y = bg.height() - cell.patch.height() - 1;
  if (max_x < 1 || max_y < 1) {
    fail(ErrorCode::NoValidPlacement, "cell " + std::to_string(cell.patch.width()) + "x" +
                                          std::to_string(cell.patch.height()) + " does not fit the background");
  }
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    std::optional<Point> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.n_candidates; ++k) {
      const Point cand{static_cast<int>(rng.uniform_int(1, max_x)), static_cast<int>(rng.uniform_int(1, max_y))};
      if (overlaps(occupied, cell, cand)) continue;
      const double d = corner_mismatch(bg, cell.patch, cand);
      if (d < best_d) {
        best_d = d;
        best = cand;
      }
    }
    if (best) return *best;
  }
  fail(ErrorCode::NoValidPlacement, "no overlap-free position after " + std::to_string(cfg.max_attempts) + " batches");
}

struct PlacedCell {
  RasterImage image;
  std::vector<Annotation> annotations;  // one per surviving member component
};

/// Blends the cell in with a Gaussian-filtered copy of its mask; annotations
/// use the unfiltered mask, one per member component.
inline PlacedCell place_cell(const RasterImage& bg, const CellObject& cell, Point origin, double sigma) {
  const AlphaMask alpha = gaussian_alpha(cell.mask, sigma);
  PlacedCell out{alpha_composite(bg, cell.patch, alpha, origin), {}};
  std::uint32_t max_member = 0;
  for (auto v : cell.members.values()) max_member = std::max(max_member, v);
  for (std::uint32_t m = 1; m <= max_member; ++m) {
    int x0 = cell.members.width(), y0 = cell.members.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < cell.members.height(); ++y)
      for (int x = 0; x < cell.members.width(); ++x)
        if (cell.members.at(x, y) == m) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 < 0) continue;
    Annotation a;
    a.bbox = {origin.x + x0, origin.y + y0, x1 - x0 + 1, y1 - y0 + 1};
    a.mask = BinaryMask(a.bbox.w, a.bbox.h, 0);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (cell.members.at(x, y) == m) {
          a.mask.at(x - x0, y - y0) = 1;
          ++a.area;
        }
    a.kind = cell.kind == ObjectKind::SCO ? AnnotationKind::SCO : AnnotationKind::MCOMember;
    out.annotations.push_back(std::move(a));
  }
  return out;
}

/// Object count for one image: a draw from the histogram, or its mode.
inline int draw_object_count(const std::map<int, int>& histogram, CountMode mode, Rng& rng) {
  if (histogram.empty()) fail(ErrorCode::EmptyPool, "count histogram is empty");
  if (mode == CountMode::Mode) {
    int best = 0, freq = -1;
    for (const auto& [count, f] : histogram)
      if (f > freq) {
        best = count;
        freq = f;
      }
    return best;
  }
  long long total = 0;
  for (const auto& [count, f] : histogram) total += f;
  long long pick = static_cast<long long>(rng.uniform_index(static_cast<std::uint64_t>(total)));
  for (const auto& [count, f] : histogram) {
    if (pick < f) return count;
    pick -= f;
  }
  return histogram.rbegin()->first;
}

struct GeneratedImage {
  RasterImage image;
  LabelMap labels;
  std::vector<Annotation> annotations;
  int requested = 0;   // object count drawn for this image
  int placed = 0;      // objects actually placed
  int shortfall = 0;   // requested - placed
  int degenerate = 0;  // transforms that produced an empty mask
  int sco_draws = 0;
  int mco_draws = 0;
};

inline GeneratedImage generate_image(const ObjectPool& pool, const RasterImage& bg, std::span<const Policy> policies,
                                     const ComposerConfig& cfg, const PlacementConfig& pcfg, const AugmentConfig& aug,
                                     Rng& rng) {
  if (pool.empty()) fail(ErrorCode::EmptyPool, "object pool has no cells");
  if (policies.empty()) fail(ErrorCode::InvalidParam, "no policies to apply");
  pcfg.validate();

  GeneratedImage g;
  g.requested = draw_object_count(pool.count_histogram, cfg.count_mode, rng);

  auto draw_cell = [&]() -> std::optional<CellObject> {
    for (int attempt = 0; attempt < pcfg.max_attempts; ++attempt) {
      bool sco = rng.bernoulli(pool.sco_mco_ratio);
      if (sco && pool.scos.empty()) sco = false;
      if (!sco && pool.mcos.empty()) sco = true;
      (sco ? g.sco_draws : g.mco_draws) += 1;
      const auto& list = sco ? pool.scos : pool.mcos;
      const CellObject& cell = list[rng.uniform_index(list.size())];
      const Policy& policy = policies[rng.uniform_index(policies.size())];
      try {
        return apply_policy(cell, policy, aug, rng);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateResult) throw;
        ++g.degenerate;
      }
    }
    return std::nullopt;
  };

  std::vector<CellObject> drawn;
  for (int k = 0; k < g.requested; ++k) {
    if (auto c = draw_cell()) drawn.push_back(std::move(*c));
  }
  std::stable_sort(drawn.begin(), drawn.end(),
                   [](const CellObject& a, const CellObject& b) { return a.mask_area() > b.mask_area(); });

  g.image = bg;
  g.labels = LabelMap(bg.width(), bg.height(), 0);
  BinaryMask occupied(bg.width(), bg.height(), 0);
  auto try_place = [&](const CellObject& cell) {
    try {
      const Point origin = find_placement(g.image, occupied, cell, pcfg, rng);
      PlacedCell placed = place_cell(g.image, cell, origin, pcfg.sigma);
      g.image = std::move(placed.image);
      for (auto& a : placed.annotations) {
        a.instance_id = static_cast<int>(g.annotations.size()) + 1;
        for (int y = 0; y < a.bbox.h; ++y)
          for (int x = 0; x < a.bbox.w; ++x)
            if (a.mask.at(x, y)) {
              g.labels.at(a.bbox.x + x, a.bbox.y + y) = static_cast<std::uint32_t>(a.instance_id);
              occupied.at(a.bbox.x + x, a.bbox.y + y) = 1;
            }
        g.annotations.push_back(std::move(a));
      }
      return true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoValidPlacement) throw;
      return false;
    }
  };

  for (const CellObject& cell : drawn) {
    bool ok = try_place(cell);
    for (int attempt = 0; !ok && attempt < pcfg.max_attempts; ++attempt) {
      if (auto c = draw_cell()) ok = try_place(*c);
    }
    if (ok) ++g.placed;
  }
  g.shortfall = g.requested - g.placed;
  return g;
}

struct GeneratedDataset {
  DatasetManifest manifest;
  std::vector<CocoImage> images;
  std::vector<Annotation> annotations;
};

/// Writes r generated images under out_dir:
///   images/gen_NNNNN.png, labels/gen_NNNNN.png (16-bit instance ids),
///   annotations.json (COCO style), manifest.json.
/// Image i uses background i mod |backgrounds| and RNG stream (seed, i), so
/// the output does not depend on `jobs`.
inline GeneratedDataset generate_dataset(const ObjectPool& pool, std::span<const RasterImage> backgrounds,
                                         std::span<const Policy> policies, const ComposerConfig& cfg,
                                         const PlacementConfig& pcfg, const AugmentConfig& aug,
                                         const std::filesystem::path& out_dir, int jobs = 1,
                                         const std::string& config_hash_value = "") {
  if (cfg.r < 1) fail(ErrorCode::InvalidParam, "r must be >= 1");
  if (backgrounds.empty()) fail(ErrorCode::InvalidParam, "at least one background is required");
  if (pool.empty()) fail(ErrorCode::EmptyPool, "object pool has no cells");

  const auto n = static_cast<std::size_t>(cfg.r);
  std::vector<GeneratedImage> results(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    Rng rng = Rng::stream(cfg.seed, i);
    GeneratedImage g = generate_image(pool, backgrounds[i % backgrounds.size()], policies, cfg, pcfg, aug, rng);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "gen_%05zu.png", i);
    save_raster(out_dir / "images" / stem, g.image);
    save_label_map(out_dir / "labels" / stem, g.labels);
    g.image = RasterImage();
    g.labels = LabelMap();
    results[i] = std::move(g);
  });

  GeneratedDataset ds;
  ds.manifest.base_dir = out_dir;
  ds.manifest.name = "generated";
  ds.manifest.seed = cfg.seed;
  for (const char* key : {"requested", "placed", "shortfall", "degenerate", "sco_draws", "mco_draws"})
    ds.manifest.counters[key] = 0;
  for (std::size_t i = 0; i < n; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "gen_%05zu.png", i);
    const int image_id = static_cast<int>(i) + 1;
    const RasterImage& bg = backgrounds[i % backgrounds.size()];
    ds.images.push_back({image_id, std::string("images/") + stem, bg.width(), bg.height()});
    ds.manifest.items.push_back({std::string("images/") + stem, std::string("labels/") + stem, Split::Train});
    auto& g = results[i];
    for (auto& a : g.annotations) {
      a.image_id = image_id;
      ds.annotations.push_back(std::move(a));
    }
    ds.manifest.counters["requested"] += g.requested;
    ds.manifest.counters["placed"] += g.placed;
    ds.manifest.counters["shortfall"] += g.shortfall;
    ds.manifest.counters["degenerate"] += g.degenerate;
    ds.manifest.counters["sco_draws"] += g.sco_draws;
    ds.manifest.counters["mco_draws"] += g.mco_draws;
  }
  ds.manifest.config_hash = config_hash_value;
  write_json_file(out_dir / "annotations.json", to_coco_json(ds.images, ds.annotations));
  save_manifest(out_dir / "manifest.json", ds.manifest);
  return ds;
}

}  // namespace synthcell
