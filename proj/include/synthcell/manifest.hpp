#pragma once

// Dataset manifests: the JSON inventory of image / label-map pairs with their
// split, seed, provenance and generation counters. Item paths are stored
// relative to the manifest's own directory.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthcell/error.hpp"

namespace synthcell {

inline constexpr std::string_view kGeneratorVersion = "synthcell 1.0.0";

enum class Split { Train, Val, Test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  fail(ErrorCode::InvalidManifest, "unknown split '" + std::string(s) + "'");
}

struct ManifestItem {
  std::string image;
  std::string label_map;
  Split split = Split::Train;
  friend bool operator==(const ManifestItem&, const ManifestItem&) = default;
};

struct DatasetManifest {
  std::string name;
  std::vector<ManifestItem> items;
  std::uint64_t seed = 0;
  std::string generator_version{kGeneratorVersion};
  std::string config_hash;
  std::map<std::string, long long> counters;
  std::filesystem::path base_dir;  // not serialized

  std::vector<ManifestItem> split(Split s) const {
    std::vector<ManifestItem> out;
    for (const auto& it : items)
      if (it.split == s) out.push_back(it);
    return out;
  }

  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the canonical (sorted-key, compact) JSON serialization.
inline std::string config_hash(const nlohmann::json& j) { return fnv1a_hex(j.dump()); }

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : m.items) {
    items.push_back({{"image", it.image}, {"label_map", it.label_map}, {"split", std::string(to_string(it.split))}});
  }
  return {{"name", m.name},
          {"items", items},
          {"seed", m.seed},
          {"provenance", {{"generator", m.generator_version}, {"config_hash", m.config_hash}}},
          {"counters", m.counters}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object() || !j.contains("items") || !j.at("items").is_array()) {
    fail(ErrorCode::InvalidManifest, "manifest needs an items array");
  }
  DatasetManifest m;
  m.base_dir = base_dir;
  m.name = j.value("name", "");
  m.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("provenance")) {
    const auto& p = j.at("provenance");
    m.generator_version = p.value("generator", std::string(kGeneratorVersion));
    m.config_hash = p.value("config_hash", "");
  }
  if (j.contains("counters")) m.counters = j.at("counters").get<std::map<std::string, long long>>();
  for (const auto& it : j.at("items")) {
    if (!it.contains("image") || !it.contains("label_map")) {
      fail(ErrorCode::InvalidManifest, "manifest item needs image and label_map: " + it.dump());
    }
    m.items.push_back({it.at("image").get<std::string>(), it.at("label_map").get<std::string>(),
                       split_from_string(it.value("split", "train"))});
  }
  return m;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::NotFound, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

/// Checks that splits are disjoint and every referenced file exists.
inline void validate_manifest(const DatasetManifest& m) {
  std::map<std::string, Split> seen;
  for (const auto& it : m.items) {
    const std::string key = std::filesystem::weakly_canonical(m.resolve(it.image)).string();
    auto [pos, fresh] = seen.emplace(key, it.split);
    if (!fresh && pos->second != it.split) {
      fail(ErrorCode::InvalidManifest, it.image + " appears in both " + std::string(to_string(pos->second)) + " and " +
                                           std::string(to_string(it.split)));
    }
    for (const auto& p : {it.image, it.label_map}) {
      if (!std::filesystem::is_regular_file(m.resolve(p))) {
        fail(ErrorCode::InvalidManifest, "manifest '" + m.name + "' references missing file " + m.resolve(p).string());
      }
    }
  }
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m = manifest_from_json(read_json_file(path), path.parent_path());
  validate_manifest(m);
  return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  write_json_file(path, to_json(m));
}

/// Re-expresses an item path of `from` relative to directory `to_dir`.
inline std::string rebase_path(const DatasetManifest& from, const std::string& p, const std::filesystem::path& to_dir) {
  const std::filesystem::path abs = std::filesystem::absolute(from.resolve(p)).lexically_normal();
  const std::filesystem::path dir = std::filesystem::absolute(to_dir).lexically_normal();
  const std::filesystem::path rel = abs.lexically_relative(dir);
  return rel.empty() ? abs.string() : rel.generic_string();
}

/// Train split = train(a) ∪ train(b); val and test come from `a` only.
inline DatasetManifest mix_manifests(const DatasetManifest& a, const DatasetManifest& b,
                                     const std::filesystem::path& out_dir, const std::string& name = "") {
  DatasetManifest m;
  m.base_dir = out_dir;
  m.name = name.empty() ? a.name + (b.name.empty() ? "" : "+" + b.name) : name;
  m.seed = a.seed;
  auto take = [&](const DatasetManifest& src, Split s) {
    for (const auto& it : src.items) {
      if (it.split != s) continue;
      m.items.push_back({rebase_path(src, it.image, out_dir), rebase_path(src, it.label_map, out_dir), it.split});
    }
  };
  take(a, Split::Train);
  take(b, Split::Train);
  take(a, Split::Val);
  take(a, Split::Test);
  for (const auto& [k, v] : b.counters) m.counters[k] += v;
  for (const auto& [k, v] : a.counters) m.counters[k] += v;
  m.config_hash = config_hash({{"a", to_json(a)}, {"b", to_json(b)}});
  return m;
}

}  // namespace synthcell
