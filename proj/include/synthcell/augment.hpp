#pragma once

// The eleven augmentation operations and sub-policy/policy application on
// CellObjects. Geometric operations move patch and mask in lockstep;
// photometric operations only touch mask-foreground pixels of the patch.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"
#include "synthcell/instances.hpp"
#include "synthcell/rng.hpp"

namespace synthcell {

enum class OpId : int {
  FlipLR = 0,
  FlipUD,
  AutoContrast,
  Equalize,
  Rotate,
  Posterize,
  Contrast,
  Brightness,
  Sharpness,
  Smooth,
  Resize,
};

inline constexpr int kOpCount = 11;

struct OpSpec {
  OpId id;
  std::string_view name;
  bool geometric;
  bool takes_magnitude;
};

inline constexpr std::array<OpSpec, kOpCount> kOpTable{{
    {OpId::FlipLR, "FlipLR", true, false},
    {OpId::FlipUD, "FlipUD", true, false},
    {OpId::AutoContrast, "AutoContrast", false, false},
    {OpId::Equalize, "Equalize", false, false},
    {OpId::Rotate, "Rotate", true, true},
    {OpId::Posterize, "Posterize", false, true},
    {OpId::Contrast, "Contrast", false, true},
    {OpId::Brightness, "Brightness", false, true},
    {OpId::Sharpness, "Sharpness", false, true},
    {OpId::Smooth, "Smooth", false, true},
    {OpId::Resize, "Resize", true, true},
}};

inline const OpSpec& op_spec(OpId id) { return kOpTable[static_cast<std::size_t>(id)]; }

inline OpId op_from_name(std::string_view name) {
  for (const auto& s : kOpTable)
    if (s.name == name) return s.id;
  fail(ErrorCode::InvalidIndex, "unknown operation '" + std::string(name) + "'");
}

struct Range {
  double lo;
  double hi;
};

/// Discretization of probability and magnitude plus the magnitude ranges.
struct AugmentConfig {
  int n_p = 10;
  int n_m = 10;
  Range rotate_degrees{-30.0, 30.0};
  Range posterize_bits{4.0, 8.0};
  Range enhance_factor{0.1, 1.9};  // Contrast, Brightness, Sharpness
  Range smooth_radius{0.0, 2.0};
  Range resize_scale{0.5, 1.5};
};

inline Range magnitude_range(OpId op, const AugmentConfig& cfg) {
  switch (op) {
    case OpId::Rotate: return cfg.rotate_degrees;
    case OpId::Posterize: return cfg.posterize_bits;
    case OpId::Contrast:
    case OpId::Brightness:
    case OpId::Sharpness: return cfg.enhance_factor;
    case OpId::Smooth: return cfg.smooth_radius;
    case OpId::Resize: return cfg.resize_scale;
    default: return {0.0, 0.0};
  }
}

/// Parameter value for magnitude level mag_idx in [1, n_m], linear over the
/// op's range. Posterize levels are rounded to whole bits.
inline double magnitude_value(OpId op, int mag_idx, const AugmentConfig& cfg) {
  if (mag_idx < 1 || mag_idx > cfg.n_m) fail(ErrorCode::InvalidIndex, "magnitude index " + std::to_string(mag_idx));
  const Range r = magnitude_range(op, cfg);
  const double t = cfg.n_m == 1 ? 0.5 : static_cast<double>(mag_idx - 1) / (cfg.n_m - 1);
  const double v = r.lo + (r.hi - r.lo) * t;
  return op == OpId::Posterize ? std::round(v) : v;
}

inline double probability_value(int prob_idx, const AugmentConfig& cfg) {
  if (prob_idx < 1 || prob_idx > cfg.n_p) fail(ErrorCode::InvalidIndex, "probability index " + std::to_string(prob_idx));
  return static_cast<double>(prob_idx) / cfg.n_p;
}

struct SubPolicy {
  OpId op = OpId::FlipLR;
  int prob_idx = 1;
  int mag_idx = 1;

  auto key() const { return std::array<int, 3>{static_cast<int>(op), prob_idx, mag_idx}; }
  friend bool operator==(const SubPolicy&, const SubPolicy&) = default;
  friend auto operator<=>(const SubPolicy& a, const SubPolicy& b) { return a.key() <=> b.key(); }
};

struct Policy {
  std::vector<SubPolicy> subs;
  double score = 0.0;
};

inline std::string describe(std::span<const SubPolicy> chain) {
  std::string s;
  for (const auto& sp : chain) {
    if (!s.empty()) s += '|';
    s += std::string(op_spec(sp.op).name) + ":" + std::to_string(sp.prob_idx) + ":" + std::to_string(sp.mag_idx);
  }
  return s;
}

namespace detail {

inline void require_cell(const CellObject& cell) {
  if (cell.patch.width() != cell.mask.width() || cell.patch.height() != cell.mask.height() ||
      cell.members.width() != cell.mask.width() || cell.members.height() != cell.mask.height()) {
    fail(ErrorCode::DimensionMismatch, "cell patch, mask and members must share dimensions");
  }
}

/// Rebuilds a cell from warped patch and member labels, cropping both to the
/// tight box of the foreground.
inline CellObject recombine(const CellObject& src, RasterImage patch, const LabelMap& members) {
  int x0 = members.width(), y0 = members.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < members.height(); ++y) {
    for (int x = 0; x < members.width(); ++x) {
      if (members.at(x, y) == 0) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) fail(ErrorCode::DegenerateResult, "transformed mask is empty");
  const BoundingBox tight{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  CellObject out = src;
  out.patch = extract_patch(patch, tight);
  out.members = extract_region(members, tight);
  out.mask = AlphaMask(tight.w, tight.h, 0.0);
  for (std::size_t i = 0; i < out.members.size(); ++i) out.mask[i] = out.members[i] ? 1.0 : 0.0;
  return out;
}

inline RasterImage flip_patch(const RasterImage& p, bool horizontal) {
  RasterImage out(p.width(), p.height(), p.channels());
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x) {
      const int sx = horizontal ? p.width() - 1 - x : x;
      const int sy = horizontal ? y : p.height() - 1 - y;
      for (int c = 0; c < p.channels(); ++c) out.at(x, y, c) = p.at(sx, sy, c);
    }
  return out;
}

inline LabelMap flip_labels(const LabelMap& m, bool horizontal) {
  LabelMap out(m.width(), m.height());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      out.at(x, y) = horizontal ? m.at(m.width() - 1 - x, y) : m.at(x, m.height() - 1 - y);
  return out;
}

struct RotationFrame {
  int out_w;
  int out_h;
  double cos_t;
  double sin_t;
  double cx_in, cy_in, cx_out, cy_out;

  // Source coordinate of destination pixel (x, y).
  std::pair<double, double> source(int x, int y) const {
    const double dx = x - cx_out;
    const double dy = y - cy_out;
    return {cos_t * dx + sin_t * dy + cx_in, -sin_t * dx + cos_t * dy + cy_in};
  }
};

inline RotationFrame rotation_frame(int w, int h, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  RotationFrame f{};
  f.cos_t = std::cos(rad);
  f.sin_t = std::sin(rad);
  const double ew = std::abs(w * f.cos_t) + std::abs(h * f.sin_t);
  const double eh = std::abs(w * f.sin_t) + std::abs(h * f.cos_t);
  f.out_w = std::max(1, static_cast<int>(std::ceil(ew - 1e-9)));
  f.out_h = std::max(1, static_cast<int>(std::ceil(eh - 1e-9)));
  f.cx_in = (w - 1) / 2.0;
  f.cy_in = (h - 1) / 2.0;
  f.cx_out = (f.out_w - 1) / 2.0;
  f.cy_out = (f.out_h - 1) / 2.0;
  return f;
}

/// Bilinear sample with clamped coordinates.
inline double sample_bilinear(const RasterImage& p, double fx, double fy, int c) {
  fx = std::clamp(fx, 0.0, static_cast<double>(p.width() - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(p.height() - 1));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const int x1 = std::min(x0 + 1, p.width() - 1);
  const int y1 = std::min(y0 + 1, p.height() - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  const double top = p.at(x0, y0, c) * (1.0 - tx) + p.at(x1, y0, c) * tx;
  const double bot = p.at(x0, y1, c) * (1.0 - tx) + p.at(x1, y1, c) * tx;
  return top * (1.0 - ty) + bot * ty;
}

inline RasterImage rotate_patch(const RasterImage& p, double degrees) {
  const RotationFrame f = rotation_frame(p.width(), p.height(), degrees);
  RasterImage out(f.out_w, f.out_h, p.channels());
  for (int y = 0; y < f.out_h; ++y)
    for (int x = 0; x < f.out_w; ++x) {
      const auto [sx, sy] = f.source(x, y);
      for (int c = 0; c < p.channels(); ++c) out.at(x, y, c) = to_u8(sample_bilinear(p, sx, sy, c));
    }
  return out;
}

inline LabelMap rotate_labels(const LabelMap& m, double degrees) {
  const RotationFrame f = rotation_frame(m.width(), m.height(), degrees);
  LabelMap out(f.out_w, f.out_h, 0);
  for (int y = 0; y < f.out_h; ++y)
    for (int x = 0; x < f.out_w; ++x) {
      const auto [sx, sy] = f.source(x, y);
      const int nx = static_cast<int>(std::floor(sx + 0.5));
      const int ny = static_cast<int>(std::floor(sy + 0.5));
      if (m.contains(nx, ny)) out.at(x, y) = m.at(nx, ny);
    }
  return out;
}

inline std::pair<int, int> resized_extent(int w, int h, double scale) {
  return {std::max(1, static_cast<int>(std::lround(w * scale))), std::max(1, static_cast<int>(std::lround(h * scale)))};
}

inline RasterImage resize_patch(const RasterImage& p, double scale) {
  const auto [ow, oh] = resized_extent(p.width(), p.height(), scale);
  const auto planes = channel_planes(p);
  RasterImage out(ow, oh, p.channels());
  for (int c = 0; c < p.channels(); ++c) {
    const auto r = resample_bilinear(planes[c], p.width(), p.height(), ow, oh);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) out.at(x, y, c) = to_u8(r[static_cast<std::size_t>(y) * ow + x]);
  }
  return out;
}

inline LabelMap resize_labels(const LabelMap& m, double scale) {
  const auto [ow, oh] = resized_extent(m.width(), m.height(), scale);
  LabelMap out(ow, oh, 0);
  for (int y = 0; y < oh; ++y) {
    const int sy = std::min(m.height() - 1, static_cast<int>(std::floor((y + 0.5) * m.height() / oh)));
    for (int x = 0; x < ow; ++x) {
      const int sx = std::min(m.width() - 1, static_cast<int>(std::floor((x + 0.5) * m.width() / ow)));
      out.at(x, y) = m.at(sx, sy);
    }
  }
  return out;
}

/// Patch half of a geometric op.
inline RasterImage warp_patch(const RasterImage& p, OpId op, double param) {
  switch (op) {
    case OpId::FlipLR: return flip_patch(p, true);
    case OpId::FlipUD: return flip_patch(p, false);
    case OpId::Rotate: return rotate_patch(p, param);
    case OpId::Resize: return resize_patch(p, param);
    default: fail(ErrorCode::InvalidParam, "not a geometric op");
  }
}

/// Mask half of a geometric op (nearest neighbour).
inline LabelMap warp_labels(const LabelMap& m, OpId op, double param) {
  switch (op) {
    case OpId::FlipLR: return flip_labels(m, true);
    case OpId::FlipUD: return flip_labels(m, false);
    case OpId::Rotate: return rotate_labels(m, param);
    case OpId::Resize: return resize_labels(m, param);
    default: fail(ErrorCode::InvalidParam, "not a geometric op");
  }
}

template <typename Fn>
void for_each_foreground(const CellObject& cell, Fn&& fn) {
  for (int y = 0; y < cell.mask.height(); ++y)
    for (int x = 0; x < cell.mask.width(); ++x)
      if (cell.mask.at(x, y) > 0.5) fn(x, y);
}

inline void autocontrast(CellObject& cell) {
  for (int c = 0; c < cell.patch.channels(); ++c) {
    int lo = 255, hi = 0;
    for_each_foreground(cell, [&](int x, int y) {
      lo = std::min<int>(lo, cell.patch.at(x, y, c));
      hi = std::max<int>(hi, cell.patch.at(x, y, c));
    });
    if (hi <= lo) continue;
    const double scale = 255.0 / (hi - lo);
    for_each_foreground(cell, [&](int x, int y) { cell.patch.at(x, y, c) = to_u8((cell.patch.at(x, y, c) - lo) * scale); });
  }
}

// Histogram equalization with the step/lookup construction used by PIL.
inline void equalize(CellObject& cell) {
  for (int c = 0; c < cell.patch.channels(); ++c) {
    std::array<long long, 256> hist{};
    for_each_foreground(cell, [&](int x, int y) { ++hist[cell.patch.at(x, y, c)]; });
    long long total = 0;
    int last = -1;
    for (int i = 0; i < 256; ++i) {
      total += hist[i];
      if (hist[i]) last = i;
    }
    if (last < 0) continue;
    const long long step = (total - hist[last]) / 255;
    if (step == 0) continue;
    std::array<std::uint8_t, 256> lut{};
    long long n = step / 2;
    for (int i = 0; i < 256; ++i) {
      lut[i] = static_cast<std::uint8_t>(std::min<long long>(255, n / step));
      n += hist[i];
    }
    for_each_foreground(cell, [&](int x, int y) { cell.patch.at(x, y, c) = lut[cell.patch.at(x, y, c)]; });
  }
}

inline void posterize(CellObject& cell, int bits) {
  bits = std::clamp(bits, 1, 8);
  const auto keep = static_cast<std::uint8_t>(0xFF << (8 - bits));
  for_each_foreground(cell, [&](int x, int y) {
    for (int c = 0; c < cell.patch.channels(); ++c) cell.patch.at(x, y, c) &= keep;
  });
}

inline void contrast(CellObject& cell, double factor) {
  const std::vector<double> gray = gray_plane(cell.patch);
  double sum = 0.0;
  long long n = 0;
  for_each_foreground(cell, [&](int x, int y) {
    sum += gray[static_cast<std::size_t>(y) * cell.patch.width() + x];
    ++n;
  });
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  for_each_foreground(cell, [&](int x, int y) {
    for (int c = 0; c < cell.patch.channels(); ++c)
      cell.patch.at(x, y, c) = to_u8(mean + factor * (cell.patch.at(x, y, c) - mean));
  });
}

inline void brightness(CellObject& cell, double factor) {
  for_each_foreground(cell, [&](int x, int y) {
    for (int c = 0; c < cell.patch.channels(); ++c) cell.patch.at(x, y, c) = to_u8(cell.patch.at(x, y, c) * factor);
  });
}

// Blend between the 3×3 smoothed patch (center weight 5, total 13) and the original.
inline void sharpness(CellObject& cell, double factor) {
  const RasterImage& p = cell.patch;
  RasterImage out = p;
  for_each_foreground(cell, [&](int x, int y) {
    for (int c = 0; c < p.channels(); ++c) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = std::clamp(x + dx, 0, p.width() - 1);
          const int sy = std::clamp(y + dy, 0, p.height() - 1);
          acc += (dx == 0 && dy == 0 ? 5.0 : 1.0) * p.at(sx, sy, c);
        }
      const double smooth = acc / 13.0;
      out.at(x, y, c) = to_u8(smooth + factor * (p.at(x, y, c) - smooth));
    }
  });
  cell.patch = std::move(out);
}

inline void smooth(CellObject& cell, double radius) {
  if (radius <= 0.0) return;
  const auto planes = channel_planes(cell.patch);
  const int w = cell.patch.width();
  for (int c = 0; c < cell.patch.channels(); ++c) {
    const auto blurred = gaussian_blur_plane(planes[c], w, cell.patch.height(), radius);
    for_each_foreground(cell, [&](int x, int y) {
      cell.patch.at(x, y, c) = to_u8(blurred[static_cast<std::size_t>(y) * w + x]);
    });
  }
}

}  // namespace detail

/// Applies one operation at an explicit parameter value (degrees, bits,
/// factor, radius or scale; ignored for the magnitude-free ops).
inline CellObject apply_op(const CellObject& cell, OpId op, double param) {
  detail::require_cell(cell);
  if (op_spec(op).geometric) {
    return detail::recombine(cell, detail::warp_patch(cell.patch, op, param), detail::warp_labels(cell.members, op, param));
  }
  CellObject out = cell;
  switch (op) {
    case OpId::AutoContrast: detail::autocontrast(out); break;
    case OpId::Equalize: detail::equalize(out); break;
    case OpId::Posterize: detail::posterize(out, static_cast<int>(std::lround(param))); break;
    case OpId::Contrast: detail::contrast(out, param); break;
    case OpId::Brightness: detail::brightness(out, param); break;
    case OpId::Sharpness: detail::sharpness(out, param); break;
    case OpId::Smooth: detail::smooth(out, param); break;
    default: break;
  }
  return out;
}

inline void validate_subpolicy(const SubPolicy& sp, const AugmentConfig& cfg) {
  const int op = static_cast<int>(sp.op);
  if (op < 0 || op >= kOpCount) fail(ErrorCode::InvalidIndex, "op id " + std::to_string(op));
  probability_value(sp.prob_idx, cfg);
  magnitude_value(sp.op, sp.mag_idx, cfg);
}

/// Applies the sub-policy unconditionally (probability treated as 1).
inline CellObject apply_subpolicy_forced(const CellObject& cell, const SubPolicy& sp, const AugmentConfig& cfg) {
  validate_subpolicy(sp, cfg);
  return apply_op(cell, sp.op, magnitude_value(sp.op, sp.mag_idx, cfg));
}

/// Applies the sub-policy with probability prob_idx / n_p. Exactly one
/// uniform draw is consumed either way.
inline CellObject apply_subpolicy(const CellObject& cell, const SubPolicy& sp, const AugmentConfig& cfg, Rng& rng) {
  validate_subpolicy(sp, cfg);
  if (!rng.bernoulli(probability_value(sp.prob_idx, cfg))) return cell;
  return apply_op(cell, sp.op, magnitude_value(sp.op, sp.mag_idx, cfg));
}

inline CellObject apply_chain_forced(const CellObject& cell, std::span<const SubPolicy> chain, const AugmentConfig& cfg) {
  CellObject out = cell;
  for (const auto& sp : chain) out = apply_subpolicy_forced(out, sp, cfg);
  return out;
}

inline CellObject apply_policy(const CellObject& cell, const Policy& policy, const AugmentConfig& cfg, Rng& rng) {
  if (policy.subs.empty()) fail(ErrorCode::InvalidIndex, "policy has no sub-policies");
  CellObject out = cell;
  for (const auto& sp : policy.subs) out = apply_subpolicy(out, sp, cfg, rng);
  return out;
}

// JSON: {"subs":[{"op":"Rotate","p":7,"m":3}, ...], "score": s}

inline nlohmann::json to_json(const SubPolicy& sp) {
  return {{"op", std::string(op_spec(sp.op).name)}, {"p", sp.prob_idx}, {"m", sp.mag_idx}};
}

inline nlohmann::json to_json(const Policy& p) {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& sp : p.subs) subs.push_back(to_json(sp));
  return {{"subs", subs}, {"score", p.score}};
}

inline SubPolicy subpolicy_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("op") || !j.contains("p") || !j.contains("m")) {
    fail(ErrorCode::InvalidConfig, "sub-policy needs op, p and m: " + j.dump());
  }
  return {op_from_name(j.at("op").get<std::string>()), j.at("p").get<int>(), j.at("m").get<int>()};
}

inline Policy policy_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("subs") || !j.at("subs").is_array()) {
    fail(ErrorCode::InvalidConfig, "policy needs a subs array: " + j.dump());
  }
  Policy p;
  for (const auto& s : j.at("subs")) p.subs.push_back(subpolicy_from_json(s));
  if (p.subs.empty()) fail(ErrorCode::InvalidConfig, "policy has no sub-policies");
  p.score = j.value("score", 0.0);
  return p;
}

inline nlohmann::json policies_to_json(std::span<const Policy> policies) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : policies) arr.push_back(to_json(p));
  return arr;
}

inline std::vector<Policy> policies_from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(ErrorCode::InvalidConfig, "policy list must be a JSON array");
  std::vector<Policy> out;
  for (const auto& p : j) out.push_back(policy_from_json(p));
  return out;
}

}  // namespace synthcell
