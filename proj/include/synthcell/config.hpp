#pragma once

// PipelineConfig: every stage's settings as one JSON document. Missing keys
// take defaults; unknown keys are rejected.
//
// {
//   "seed": 0,
//   "extract":   {"border_margin": 0},
//   "inpaint":   {"n_candidates": 32, "sigma": null, "rect_inset": null},
//   "augment":   {"rotate_degrees": [-30, 30], "posterize_bits": [4, 8],
//                 "enhance_factor": [0.1, 1.9], "smooth_radius": [0, 2],
//                 "resize_scale": [0.5, 1.5]},
//   "search":    {"n_o": 11, "n_p": 10, "n_m": 10, "l_max": 2, "beam_k": 10,
//                 "top_b": 5, "eval_cells": 64,
//                 "scorer": {"kind": "pca", "components": 8, "input_size": 16,
//                            "command": "", "reentrant": false}},
//   "placement": {"n_candidates": 32, "sigma": 1.0, "max_attempts": 10},
//   "composer":  {"r": 10, "count_mode": "empirical"},
//   "metrics":   {"embedder": {"kind": "default", "command": ""},
//                 "subsets": 3, "subset_size": 0}
// }

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "synthcell/augment.hpp"
#include "synthcell/background.hpp"
#include "synthcell/compose.hpp"
#include "synthcell/error.hpp"
#include "synthcell/manifest.hpp"
#include "synthcell/search.hpp"

namespace synthcell {

struct ScorerConfig {
  std::string kind = "pca";  // pca | external
  int components = 8;
  int input_size = 16;
  std::string command;
  bool reentrant = false;
};

struct EmbedderConfig {
  std::string kind = "default";  // default | external
  std::string command;
};

struct MetricsConfig {
  EmbedderConfig embedder;
  int subsets = 3;
  int subset_size = 0;  // 0 = whole set
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int border_margin = 0;
  InpaintConfig inpaint;
  AugmentConfig augment;
  SearchSpaceSpec space;
  GreedyConfig greedy;
  ScorerConfig scorer;
  PlacementConfig placement;
  ComposerConfig composer{10, CountMode::Empirical, 0};
  MetricsConfig metrics;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) fail(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::InvalidConfig, std::string(key) + " in " + where + " has the wrong type");
  }
}

inline void read_range(const nlohmann::json& j, const char* key, Range& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    fail(ErrorCode::InvalidConfig, std::string(key) + " in " + where + " must be [lo, hi]");
  }
  out = {v[0].get<double>(), v[1].get<double>()};
}

inline nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read;
  PipelineConfig c;
  check_keys(j, {"seed", "extract", "inpaint", "augment", "search", "placement", "composer", "metrics"}, "config");
  read(j, "seed", c.seed, "config");

  if (j.contains("extract")) {
    const auto& e = j.at("extract");
    check_keys(e, {"border_margin"}, "extract");
    read(e, "border_margin", c.border_margin, "extract");
  }
  if (j.contains("inpaint")) {
    const auto& e = j.at("inpaint");
    check_keys(e, {"n_candidates", "sigma", "rect_inset"}, "inpaint");
    read(e, "n_candidates", c.inpaint.n_candidates, "inpaint");
    if (e.contains("sigma") && !e.at("sigma").is_null()) c.inpaint.sigma = e.at("sigma").get<double>();
    if (e.contains("rect_inset") && !e.at("rect_inset").is_null()) c.inpaint.rect_inset = e.at("rect_inset").get<int>();
  }
  if (j.contains("augment")) {
    const auto& e = j.at("augment");
    check_keys(e, {"rotate_degrees", "posterize_bits", "enhance_factor", "smooth_radius", "resize_scale"}, "augment");
    detail::read_range(e, "rotate_degrees", c.augment.rotate_degrees, "augment");
    detail::read_range(e, "posterize_bits", c.augment.posterize_bits, "augment");
    detail::read_range(e, "enhance_factor", c.augment.enhance_factor, "augment");
    detail::read_range(e, "smooth_radius", c.augment.smooth_radius, "augment");
    detail::read_range(e, "resize_scale", c.augment.resize_scale, "augment");
  }
  if (j.contains("search")) {
    const auto& e = j.at("search");
    check_keys(e, {"n_o", "n_p", "n_m", "l_max", "beam_k", "top_b", "eval_cells", "scorer"}, "search");
    read(e, "n_o", c.space.n_o, "search");
    read(e, "n_p", c.space.n_p, "search");
    read(e, "n_m", c.space.n_m, "search");
    read(e, "l_max", c.greedy.l_max, "search");
    read(e, "beam_k", c.greedy.beam_k, "search");
    read(e, "top_b", c.greedy.top_b, "search");
    read(e, "eval_cells", c.greedy.eval_cells, "search");
    if (e.contains("scorer")) {
      const auto& s = e.at("scorer");
      check_keys(s, {"kind", "components", "input_size", "command", "reentrant"}, "search.scorer");
      read(s, "kind", c.scorer.kind, "search.scorer");
      read(s, "components", c.scorer.components, "search.scorer");
      read(s, "input_size", c.scorer.input_size, "search.scorer");
      read(s, "command", c.scorer.command, "search.scorer");
      read(s, "reentrant", c.scorer.reentrant, "search.scorer");
      if (c.scorer.kind != "pca" && c.scorer.kind != "external") {
        fail(ErrorCode::InvalidConfig, "search.scorer.kind must be pca or external");
      }
    }
  }
  if (j.contains("placement")) {
    const auto& e = j.at("placement");
    check_keys(e, {"n_candidates", "sigma", "max_attempts"}, "placement");
    read(e, "n_candidates", c.placement.n_candidates, "placement");
    read(e, "sigma", c.placement.sigma, "placement");
    read(e, "max_attempts", c.placement.max_attempts, "placement");
  }
  if (j.contains("composer")) {
    const auto& e = j.at("composer");
    check_keys(e, {"r", "count_mode"}, "composer");
    read(e, "r", c.composer.r, "composer");
    std::string mode = "empirical";
    read(e, "count_mode", mode, "composer");
    if (mode == "empirical") {
      c.composer.count_mode = CountMode::Empirical;
    } else if (mode == "mode") {
      c.composer.count_mode = CountMode::Mode;
    } else {
      fail(ErrorCode::InvalidConfig, "composer.count_mode must be empirical or mode");
    }
  }
  if (j.contains("metrics")) {
    const auto& e = j.at("metrics");
    check_keys(e, {"embedder", "subsets", "subset_size"}, "metrics");
    read(e, "subsets", c.metrics.subsets, "metrics");
    read(e, "subset_size", c.metrics.subset_size, "metrics");
    if (e.contains("embedder")) {
      const auto& m = e.at("embedder");
      check_keys(m, {"kind", "command"}, "metrics.embedder");
      read(m, "kind", c.metrics.embedder.kind, "metrics.embedder");
      read(m, "command", c.metrics.embedder.command, "metrics.embedder");
      if (c.metrics.embedder.kind != "default" && c.metrics.embedder.kind != "external") {
        fail(ErrorCode::InvalidConfig, "metrics.embedder.kind must be default or external");
      }
    }
  }

  c.space.f = c.greedy.l_max;
  c.augment.n_p = c.space.n_p;
  c.augment.n_m = c.space.n_m;
  c.inpaint.seed = c.seed;
  c.greedy.seed = c.seed;
  c.composer.seed = c.seed;
  try {
    c.space.validate();
    c.greedy.validate();
    c.placement.validate();
  } catch (const Error& e) {
    fail(ErrorCode::InvalidConfig, e.what());
  }
  if (c.inpaint.n_candidates < 1) fail(ErrorCode::InvalidConfig, "inpaint.n_candidates must be >= 1");
  if (c.inpaint.sigma && !(*c.inpaint.sigma > 0.0)) fail(ErrorCode::InvalidConfig, "inpaint.sigma must be > 0");
  if (c.border_margin < 0) fail(ErrorCode::InvalidConfig, "extract.border_margin must be >= 0");
  if (c.composer.r < 1) fail(ErrorCode::InvalidConfig, "composer.r must be >= 1");
  if (c.metrics.subsets < 1 || c.metrics.subset_size < 0) fail(ErrorCode::InvalidConfig, "metrics subsets invalid");
  return c;
}

/// Canonical form: every field explicit, keys sorted.
inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json inpaint = {{"n_candidates", c.inpaint.n_candidates}, {"sigma", nullptr}, {"rect_inset", nullptr}};
  if (c.inpaint.sigma) inpaint["sigma"] = *c.inpaint.sigma;
  if (c.inpaint.rect_inset) inpaint["rect_inset"] = *c.inpaint.rect_inset;
  return {
      {"seed", c.seed},
      {"extract", {{"border_margin", c.border_margin}}},
      {"inpaint", inpaint},
      {"augment",
       {{"rotate_degrees", detail::range_json(c.augment.rotate_degrees)},
        {"posterize_bits", detail::range_json(c.augment.posterize_bits)},
        {"enhance_factor", detail::range_json(c.augment.enhance_factor)},
        {"smooth_radius", detail::range_json(c.augment.smooth_radius)},
        {"resize_scale", detail::range_json(c.augment.resize_scale)}}},
      {"search",
       {{"n_o", c.space.n_o},
        {"n_p", c.space.n_p},
        {"n_m", c.space.n_m},
        {"l_max", c.greedy.l_max},
        {"beam_k", c.greedy.beam_k},
        {"top_b", c.greedy.top_b},
        {"eval_cells", c.greedy.eval_cells},
        {"scorer",
         {{"kind", c.scorer.kind},
          {"components", c.scorer.components},
          {"input_size", c.scorer.input_size},
          {"command", c.scorer.command},
          {"reentrant", c.scorer.reentrant}}}}},
      {"placement",
       {{"n_candidates", c.placement.n_candidates},
        {"sigma", c.placement.sigma},
        {"max_attempts", c.placement.max_attempts}}},
      {"composer",
       {{"r", c.composer.r}, {"count_mode", c.composer.count_mode == CountMode::Empirical ? "empirical" : "mode"}}},
      {"metrics",
       {{"embedder", {{"kind", c.metrics.embedder.kind}, {"command", c.metrics.embedder.command}}},
        {"subsets", c.metrics.subsets},
        {"subset_size", c.metrics.subset_size}}},
  };
}

inline PipelineConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json_file(path)); }

inline void apply_seed(PipelineConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.inpaint.seed = seed;
  c.greedy.seed = seed;
  c.composer.seed = seed;
}

}  // namespace synthcell
