#pragma once

// End-to-end commands over on-disk artifacts: manifests in, pools,
// backgrounds, policies, generated datasets and metric CSVs out.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthcell/augment.hpp"
#include "synthcell/background.hpp"
#include "synthcell/compose.hpp"
#include "synthcell/config.hpp"
#include "synthcell/error.hpp"
#include "synthcell/instances.hpp"
#include "synthcell/manifest.hpp"
#include "synthcell/metrics.hpp"
#include "synthcell/parallel.hpp"
#include "synthcell/png_io.hpp"
#include "synthcell/scorer.hpp"
#include "synthcell/search.hpp"

namespace synthcell {

namespace fs = std::filesystem;

inline std::string indexed_name(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%05zu%s", prefix, i, suffix);
  return buf;
}

// ---------------------------------------------------------------------------
// Pool archive: <dir>/pool.json + <dir>/objects/obj_NNNNN_{patch,mask,members}.png

inline void save_pool(const fs::path& dir, const ObjectPool& pool, const std::string& config_hash_value = "") {
  nlohmann::json objects = nlohmann::json::array();
  std::size_t i = 0;
  auto emit = [&](const CellObject& o) {
    const std::string stem = indexed_name("objects/obj_", i++, "");
    save_raster(dir / (stem + "_patch.png"), o.patch);
    BinaryMask mask(o.mask.width(), o.mask.height(), 0);
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = o.mask[k] > 0.5 ? 1 : 0;
    save_binary_mask(dir / (stem + "_mask.png"), mask);
    save_label_map(dir / (stem + "_members.png"), o.members);
    objects.push_back({{"kind", std::string(to_string(o.kind))},
                       {"source_image_id", o.source_image_id},
                       {"source_box", {o.source_box.x, o.source_box.y, o.source_box.w, o.source_box.h}},
                       {"component_count", o.component_count},
                       {"source_labels", o.source_labels},
                       {"patch", stem + "_patch.png"},
                       {"mask", stem + "_mask.png"},
                       {"members", stem + "_members.png"}});
  };
  for (const auto& o : pool.scos) emit(o);
  for (const auto& o : pool.mcos) emit(o);
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [count, freq] : pool.count_histogram) hist[std::to_string(count)] = freq;
  write_json_file(dir / "pool.json", {{"objects", objects},
                                      {"count_histogram", hist},
                                      {"sco_mco_ratio", pool.sco_mco_ratio},
                                      {"n_sco", pool.scos.size()},
                                      {"n_mco", pool.mcos.size()},
                                      {"config_hash", config_hash_value}});
}

inline ObjectPool load_pool(const fs::path& dir) {
  const nlohmann::json j = read_json_file(dir / "pool.json");
  ObjectPool pool;
  try {
    for (const auto& o : j.at("objects")) {
      CellObject c;
      c.patch = load_raster(dir / o.at("patch").get<std::string>());
      const BinaryMask mask = load_binary_mask(dir / o.at("mask").get<std::string>());
      c.mask = AlphaMask(mask.width(), mask.height(), 0.0);
      for (std::size_t k = 0; k < mask.size(); ++k) c.mask[k] = mask[k];
      c.members = load_label_map(dir / o.at("members").get<std::string>());
      const auto b = o.at("source_box");
      c.source_box = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
      c.source_image_id = o.at("source_image_id").get<std::string>();
      c.component_count = o.at("component_count").get<int>();
      c.source_labels = o.value("source_labels", std::vector<std::uint32_t>{});
      c.kind = o.at("kind").get<std::string>() == "SCO" ? ObjectKind::SCO : ObjectKind::MCO;
      (c.kind == ObjectKind::SCO ? pool.scos : pool.mcos).push_back(std::move(c));
    }
    for (const auto& [count, freq] : j.at("count_histogram").items()) pool.count_histogram[std::stoi(count)] = freq.get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidManifest, (dir / "pool.json").string() + ": " + e.what());
  }
  finalize_pool(pool);
  return pool;
}

// ---------------------------------------------------------------------------

inline std::vector<AnnotatedImage> load_split(const DatasetManifest& m, Split split, int jobs = 1) {
  const std::vector<ManifestItem> items = m.split(split);
  std::vector<AnnotatedImage> out(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    out[i].id = items[i].image;
    out[i].image = load_raster(m.resolve(items[i].image));
    out[i].labels = load_label_map(m.resolve(items[i].label_map));
    if (out[i].image.width() != out[i].labels.width() || out[i].image.height() != out[i].labels.height()) {
      fail(ErrorCode::DimensionMismatch, items[i].image + " and " + items[i].label_map + " differ in size");
    }
  });
  return out;
}

inline ObjectPool cmd_extract(const fs::path& manifest_path, const PipelineConfig& cfg, const fs::path& out_dir,
                              int jobs = 1) {
  const DatasetManifest m = load_manifest(manifest_path);
  const std::vector<AnnotatedImage> train = load_split(m, Split::Train, jobs);
  if (train.empty()) fail(ErrorCode::EmptyDataset, manifest_path.string() + " has no train items");
  ObjectPool pool = pool_statistics(train, cfg.border_margin, jobs);
  save_pool(out_dir, pool, config_hash(to_json(cfg)));
  return pool;
}

/// Writes <out>/bg_NNNNN.png per train image and <out>/backgrounds.json.
inline std::vector<fs::path> cmd_backgrounds(const fs::path& manifest_path, const PipelineConfig& cfg,
                                             const fs::path& out_dir, int jobs = 1) {
  const DatasetManifest m = load_manifest(manifest_path);
  const std::vector<ManifestItem> items = m.split(Split::Train);
  if (items.empty()) fail(ErrorCode::EmptyDataset, manifest_path.string() + " has no train items");
  std::vector<fs::path> files(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    const RasterImage img = load_raster(m.resolve(items[i].image));
    const LabelMap labels = load_label_map(m.resolve(items[i].label_map));
    const RasterImage bg = generate_background(img, labels, cfg.inpaint, i);
    files[i] = out_dir / indexed_name("bg_", i, ".png");
    save_raster(files[i], bg);
  });
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    list.push_back({{"file", files[i].filename().string()}, {"source", items[i].image}});
  }
  write_json_file(out_dir / "backgrounds.json",
                  {{"backgrounds", list}, {"seed", cfg.seed}, {"config_hash", config_hash(to_json(cfg))}});
  return files;
}

inline std::vector<RasterImage> load_backgrounds(const fs::path& dir) {
  const nlohmann::json j = read_json_file(dir / "backgrounds.json");
  std::vector<RasterImage> out;
  for (const auto& b : j.at("backgrounds")) out.push_back(load_raster(dir / b.at("file").get<std::string>()));
  if (out.empty()) fail(ErrorCode::EmptyDataset, "no backgrounds listed in " + (dir / "backgrounds.json").string());
  return out;
}

inline std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

inline std::unique_ptr<Scorer> make_scorer(const ScorerConfig& sc, int jobs) {
  const std::string command = env_or("SYNTHCELL_SCORER", sc.kind == "external" ? sc.command : "");
  if (!command.empty()) return std::make_unique<ExternalScorer>(command, sc.reentrant ? std::max(1, jobs) : 1);
  return std::make_unique<PcaScorer>(sc.components, sc.input_size);
}

inline std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& ec) {
  const std::string command = env_or("SYNTHCELL_EMBEDDER", ec.kind == "external" ? ec.command : "");
  if (!command.empty()) return std::make_unique<ExternalEmbedder>(command);
  return default_embedder();
}

/// Writes <out>/policies.json and <out>/scores.csv (chain,score per evaluation).
inline SearchResult cmd_search(const fs::path& pool_dir, const PipelineConfig& cfg, const fs::path& out_dir, int jobs = 1,
                               bool scorer_reentrant = false) {
  const ObjectPool pool = load_pool(pool_dir);
  if (pool.empty()) fail(ErrorCode::NoCells, "pool at " + pool_dir.string() + " is empty");
  ScorerConfig sc = cfg.scorer;
  sc.reentrant = sc.reentrant || scorer_reentrant;
  std::unique_ptr<Scorer> scorer = make_scorer(sc, jobs);
  const std::vector<RasterImage> crops = reference_crops(pool);
  scorer->fit(crops);
  GreedyConfig g = cfg.greedy;
  g.jobs = jobs;
  SearchResult result = greedy_autoaugment(pool, cfg.space, g, *scorer, cfg.augment);
  write_json_file(out_dir / "policies.json", policies_to_json(result.policies));
  std::ostringstream csv;
  csv.precision(17);
  csv << "chain,score\n";
  for (const auto& e : result.evaluated) csv << describe(e.chain) << ',' << e.score << '\n';
  write_text_file(out_dir / "scores.csv", csv.str());
  return result;
}

inline std::vector<Policy> load_policies(const fs::path& path) {
  std::vector<Policy> p = policies_from_json(read_json_file(path));
  if (p.empty()) fail(ErrorCode::InvalidConfig, path.string() + " lists no policies");
  return p;
}

inline GeneratedDataset cmd_generate(const fs::path& pool_dir, const fs::path& backgrounds_dir,
                                     const fs::path& policies_path, const PipelineConfig& cfg, const fs::path& out_dir,
                                     int jobs = 1) {
  const ObjectPool pool = load_pool(pool_dir);
  const std::vector<RasterImage> backgrounds = load_backgrounds(backgrounds_dir);
  const std::vector<Policy> policies = load_policies(policies_path);
  for (const auto& p : policies)
    for (const auto& sp : p.subs) validate_subpolicy(sp, cfg.augment);
  return generate_dataset(pool, backgrounds, policies, cfg.composer, cfg.placement, cfg.augment, out_dir, jobs,
                          config_hash(to_json(cfg)));
}

inline DatasetManifest cmd_mix(const fs::path& manifest_a, const fs::path& manifest_b, const fs::path& out_path) {
  const DatasetManifest a = load_manifest(manifest_a);
  const DatasetManifest b = load_manifest(manifest_b);
  const fs::path out_dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  DatasetManifest mixed = mix_manifests(a, b, out_dir);
  save_manifest(out_path, mixed);
  return mixed;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Image files named by `input`: a manifest (.json file), a directory holding
/// manifest.json, or a directory of PNGs (sorted by name).
inline std::vector<fs::path> image_inputs(const fs::path& input) {
  std::vector<fs::path> files;
  auto from_manifest = [&](const fs::path& mpath) {
    const DatasetManifest m = load_manifest(mpath);
    for (const auto& it : m.items) files.push_back(m.resolve(it.image));
  };
  if (fs::is_regular_file(input) && input.extension() == ".json") {
    from_manifest(input);
  } else if (fs::is_directory(input) && fs::is_regular_file(input / "manifest.json")) {
    from_manifest(input / "manifest.json");
  } else if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    fail(ErrorCode::NotFound, "no image set at " + input.string());
  }
  if (files.empty()) fail(ErrorCode::EmptyDataset, "no images found at " + input.string());
  return files;
}

inline std::vector<FeatureVector> embed_all(const std::vector<fs::path>& files, const Embedder& embedder, int jobs) {
  std::vector<FeatureVector> out(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) { out[i] = embedder.embed(load_raster(files[i])); });
  return out;
}

struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::string subset;
  std::uint64_t seed = 0;
};

inline std::string to_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,value,subset,seed\n";
  for (const auto& r : rows) out << r.metric << ',' << r.value << ',' << r.subset << ',' << r.seed << '\n';
  return out.str();
}

/// `size` indices of [0, n) without replacement, ascending; all of them when
/// size is 0 or ≥ n.
inline std::vector<std::size_t> subset_indices(std::size_t n, std::size_t size, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (size == 0 || size >= n) return idx;
  for (std::size_t i = 0; i < size; ++i) std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

enum class SetMetric { Fid, Kid };

/// Metric over `subsets` resampled subsets plus their mean.
inline std::vector<MetricRow> evaluate_sets(SetMetric metric, const std::vector<FeatureVector>& real,
                                            const std::vector<FeatureVector>& fake, const MetricsConfig& mc,
                                            std::uint64_t seed) {
  const std::string name = metric == SetMetric::Fid ? "fid" : "kid";
  std::vector<MetricRow> rows;
  double sum = 0.0;
  for (int s = 0; s < mc.subsets; ++s) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(s));
    std::vector<FeatureVector> a, b;
    for (std::size_t i : subset_indices(real.size(), static_cast<std::size_t>(mc.subset_size), rng)) a.push_back(real[i]);
    for (std::size_t i : subset_indices(fake.size(), static_cast<std::size_t>(mc.subset_size), rng)) b.push_back(fake[i]);
    const double v = metric == SetMetric::Fid ? fid(fit_gaussian(a), fit_gaussian(b)) : kid(a, b);
    rows.push_back({name, v, std::to_string(s), seed});
    sum += v;
  }
  rows.push_back({name, sum / mc.subsets, "mean", seed});
  return rows;
}

inline std::vector<MetricRow> cmd_eval_set(SetMetric metric, const fs::path& real, const fs::path& fake,
                                           const PipelineConfig& cfg, const fs::path& out_csv, int jobs = 1) {
  const std::unique_ptr<Embedder> embedder = make_embedder(cfg.metrics.embedder);
  const auto real_vecs = embed_all(image_inputs(real), *embedder, jobs);
  const auto fake_vecs = embed_all(image_inputs(fake), *embedder, jobs);
  const auto rows = evaluate_sets(metric, real_vecs, fake_vecs, cfg.metrics, cfg.seed);
  if (!out_csv.empty()) write_text_file(out_csv, to_csv(rows));
  return rows;
}

inline BoundingBox box_from_json(const nlohmann::json& b) {
  if (!b.is_array() || b.size() != 4) fail(ErrorCode::InvalidConfig, "bbox must be [x,y,w,h]: " + b.dump());
  return {static_cast<int>(std::lround(b[0].get<double>())), static_cast<int>(std::lround(b[1].get<double>())),
          static_cast<int>(std::lround(b[2].get<double>())), static_cast<int>(std::lround(b[3].get<double>()))};
}

inline std::vector<Detection> load_detections(const fs::path& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.is_array()) fail(ErrorCode::InvalidConfig, path.string() + ": detections must be a JSON array");
  std::vector<Detection> out;
  try {
    for (const auto& d : j) out.push_back({d.at("image_id").get<int>(), box_from_json(d.at("bbox")), d.at("score").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return out;
}

inline std::vector<GroundTruth> load_ground_truth(const fs::path& path) {
  const nlohmann::json j = read_json_file(path);
  std::vector<GroundTruth> out;
  try {
    for (const auto& a : j.at("annotations")) {
      out.push_back({a.at("image_id").get<int>(), box_from_json(a.at("bbox")), a.value("area", 0.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return out;
}

/// AP (mean over IoU .50:.95), AP50, AP75 and AP_s. AP_s is omitted when no
/// ground truth is small.
inline std::vector<MetricRow> cmd_eval_ap(const fs::path& detections, const fs::path& ground_truth,
                                          const fs::path& out_csv, std::uint64_t seed = 0) {
  const auto dets = load_detections(detections);
  const auto gts = load_ground_truth(ground_truth);
  std::vector<MetricRow> rows{
      {"AP", average_precision_coco(dets, gts), "all", seed},
      {"AP50", average_precision(dets, gts, 0.5), "all", seed},
      {"AP75", average_precision(dets, gts, 0.75), "all", seed},
  };
  try {
    rows.push_back({"APs", average_precision_coco(dets, gts, SizeFilter::Small), "small", seed});
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoGroundTruth) throw;
  }
  if (!out_csv.empty()) write_text_file(out_csv, to_csv(rows));
  return rows;
}

/// Pool statistics of a manifest's train split, without writing anything.
inline nlohmann::json cmd_stats(const fs::path& manifest_path, const PipelineConfig& cfg, int jobs = 1) {
  const DatasetManifest m = load_manifest(manifest_path);
  const auto train = load_split(m, Split::Train, jobs);
  nlohmann::json splits = {{"train", train.size()},
                           {"val", m.split(Split::Val).size()},
                           {"test", m.split(Split::Test).size()}};
  if (train.empty()) return {{"splits", splits}};
  const ObjectPool pool = pool_statistics(train, cfg.border_margin, jobs);
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [count, freq] : pool.count_histogram) hist[std::to_string(count)] = freq;
  return {{"splits", splits},
          {"n_sco", pool.scos.size()},
          {"n_mco", pool.mcos.size()},
          {"sco_mco_ratio", pool.sco_mco_ratio},
          {"count_histogram", hist},
          {"mode_count", pool.mode_count()}};
}

}  // namespace synthcell
