#pragma once

// Image-set quality metrics (FID, KID) over a pluggable embedder, and
// box-detection metrics (IoU, COCO-style interpolated AP).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"
#include "synthcell/png_io.hpp"
#include "synthcell/scorer.hpp"
#include "synthcell/subprocess.hpp"

namespace synthcell {

using FeatureVector = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual FeatureVector embed(const RasterImage& image) const = 0;
};

/// 16×16 grayscale bilinear thumbnail scaled to [0,1], d = 256.
class ThumbnailEmbedder final : public Embedder {
 public:
  explicit ThumbnailEmbedder(int size = 16) : size_(size) {}
  FeatureVector embed(const RasterImage& image) const override { return gray_thumbnail(image, size_); }

 private:
  int size_;
};

inline std::unique_ptr<Embedder> default_embedder() { return std::make_unique<ThumbnailEmbedder>(16); }

/// External feature program: "EMBED <png-path>" -> one line of d
/// space-separated reals. d is fixed by the first reply.
class ExternalEmbedder final : public Embedder {
 public:
  explicit ExternalEmbedder(std::string command)
      : process_(std::move(command)), scratch_("synthcell-embedder") {}

  FeatureVector embed(const RasterImage& image) const override {
    std::lock_guard lock(mutex_);
    const auto path = scratch_.path() / "embed.png";
    save_raster(path, image);
    const std::string reply = process_.request("EMBED " + path.string());
    FeatureVector v;
    std::istringstream in(reply);
    std::string tok;
    while (in >> tok) {
      const auto x = parse_real(tok);
      if (!x) fail(ErrorCode::ProtocolError, "embedder '" + process_.command() + "' replied non-numeric '" + tok + "'");
      v.push_back(*x);
    }
    if (v.empty()) fail(ErrorCode::ProtocolError, "embedder '" + process_.command() + "' replied with an empty line");
    if (!dim_) {
      dim_ = v.size();
    } else if (*dim_ != v.size()) {
      fail(ErrorCode::DimensionDrift, "embedder dimension changed from " + std::to_string(*dim_) + " to " +
                                          std::to_string(v.size()));
    }
    return v;
  }

 private:
  mutable std::mutex mutex_;
  mutable LineProcess process_;
  ScratchDir scratch_;
  mutable std::optional<std::size_t> dim_;
};

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd cov;  // unbiased, divisor N−1

  Eigen::Index dim() const { return mu.size(); }
};

inline GaussianStats fit_gaussian(std::span<const FeatureVector> vectors) {
  if (vectors.size() < 2) fail(ErrorCode::InsufficientSamples, "a Gaussian fit needs at least 2 vectors");
  const auto d = static_cast<Eigen::Index>(vectors.front().size());
  const auto n = static_cast<Eigen::Index>(vectors.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = vectors[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(v.size()) != d) fail(ErrorCode::DimensionMismatch, "feature vectors differ in length");
    for (Eigen::Index k = 0; k < d; ++k) x(i, k) = v[static_cast<std::size_t>(k)];
  }
  GaussianStats s;
  s.mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mu.transpose();
  const Eigen::MatrixXd c = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.cov = 0.5 * (c + c.transpose());
  return s;
}

namespace detail {

inline constexpr double kEigenClamp = 1e-8;

inline Eigen::VectorXd checked_eigenvalues(const Eigen::VectorXd& values, const char* what) {
  Eigen::VectorXd out = values;
  // Below this the value is rounding noise of a rank-deficient matrix.
  const double noise = out.size() == 0 ? 0.0
                                       : static_cast<double>(out.size()) * std::numeric_limits<double>::epsilon() *
                                             out.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out(i) < -kEigenClamp) {
      fail(ErrorCode::NumericalFailure, std::string(what) + " has eigenvalue " + std::to_string(out(i)));
    }
    if (out(i) <= noise) out(i) = 0.0;
  }
  return out;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "eigendecomposition failed");
  const Eigen::VectorXd lambda = checked_eigenvalues(eig.eigenvalues(), "covariance");
  return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// Fréchet distance ‖μa−μb‖² + Tr(Ca + Cb − 2(Ca Cb)^½). The trace of the
/// matrix root is Σ√λ over the eigenvalues of √Ca·Cb·√Ca.
inline double fid(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim() || a.cov.rows() != a.dim() || b.cov.rows() != b.dim()) {
    fail(ErrorCode::DimensionMismatch, "FID operands differ in dimension");
  }
  const Eigen::MatrixXd root_a = detail::psd_sqrt(a.cov);
  Eigen::MatrixXd m = root_a * b.cov * root_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "eigendecomposition failed");
  const Eigen::VectorXd lambda = detail::checked_eigenvalues(eig.eigenvalues(), "sqrt(Ca)·Cb·sqrt(Ca)");
  const double trace_root = lambda.cwiseSqrt().sum();
  return (a.mu - b.mu).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * trace_root;
}

/// Polynomial kernel (x·y/d + 1)³.
inline double kid_kernel(std::span<const double> x, std::span<const double> y) {
  double dot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  const double t = dot / static_cast<double>(x.size()) + 1.0;
  return t * t * t;
}

/// Unbiased MMD² with the cubic polynomial kernel.
inline double kid(std::span<const FeatureVector> xs, std::span<const FeatureVector> ys) {
  if (xs.size() < 2 || ys.size() < 2) fail(ErrorCode::InsufficientSamples, "KID needs at least 2 samples per set");
  const std::size_t d = xs.front().size();
  for (const auto* set : {&xs, &ys})
    for (const auto& v : *set)
      if (v.size() != d) fail(ErrorCode::DimensionMismatch, "feature vectors differ in length");
  const double m = static_cast<double>(xs.size());
  const double n = static_cast<double>(ys.size());
  auto within = [](std::span<const FeatureVector> s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) sum += kid_kernel(s[i], s[j]);
    return 2.0 * sum;
  };
  double cross = 0.0;
  for (const auto& x : xs)
    for (const auto& y : ys) cross += kid_kernel(x, y);
  return within(xs) / (m * (m - 1.0)) + within(ys) / (n * (n - 1.0)) - 2.0 * cross / (m * n);
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const long long ix = std::max(0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const long long iy = std::max(0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const long long inter = ix * iy;
  const long long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

struct Detection {
  int image_id = 0;
  BoundingBox bbox;
  double score = 0.0;
};

struct GroundTruth {
  int image_id = 0;
  BoundingBox bbox;
  double area = 0.0;  // object area used by the size filter; bbox area when unknown
};

enum class SizeFilter { All, Small };

inline constexpr double kSmallArea = 32.0 * 32.0;

/// COCO-style AP at one IoU threshold with 101-point interpolation.
///
/// Detections are visited by descending score (stable). Each is matched to
/// the highest-IoU unmatched ground truth of its image with IoU ≥ thresh.
/// With SizeFilter::Small, ground truths of area ≥ 32² are ignored: a
/// detection matched to one is dropped, as is an unmatched detection whose
/// own box is not small.
inline double average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts, double iou_thresh,
                                 SizeFilter filter = SizeFilter::All) {
  if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) fail(ErrorCode::InvalidParam, "IoU threshold must be in (0,1)");
  for (const auto& d : dets)
    if (!std::isfinite(d.score)) fail(ErrorCode::InvalidParam, "detection score must be finite");

  auto gt_area = [](const GroundTruth& g) { return g.area > 0.0 ? g.area : static_cast<double>(g.bbox.area()); };
  std::vector<bool> ignored(gts.size(), false);
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    ignored[i] = filter == SizeFilter::Small && gt_area(gts[i]) >= kSmallArea;
    if (!ignored[i]) ++n_gt;
  }
  if (n_gt == 0) fail(ErrorCode::NoGroundTruth, "no ground truth boxes after size filtering");

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<bool> matched(gts.size(), false);
  std::vector<int> outcome;  // 1 = TP, 0 = FP
  outcome.reserve(dets.size());
  for (std::size_t di : order) {
    const Detection& d = dets[di];
    // Prefer a counted ground truth; fall back to an ignored one.
    std::optional<std::size_t> best;
    bool best_ignored = true;
    double best_iou = iou_thresh;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].image_id != d.image_id) continue;
      const double v = iou(d.bbox, gts[g].bbox);
      if (v < iou_thresh) continue;
      const bool better = !best || (best_ignored && !ignored[g]) || (best_ignored == ignored[g] && v > best_iou);
      if (better) {
        best = g;
        best_ignored = ignored[g];
        best_iou = v;
      }
    }
    if (best) {
      matched[*best] = true;
      if (!ignored[*best]) outcome.push_back(1);
    } else if (filter == SizeFilter::All || static_cast<double>(d.bbox.area()) < kSmallArea) {
      outcome.push_back(0);
    }
  }

  std::vector<double> precision(outcome.size());
  std::vector<double> recall(outcome.size());
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < outcome.size(); ++i) {
    (outcome[i] ? tp : fp) += 1.0;
    precision[i] = tp / (tp + fp);
    recall[i] = tp / static_cast<double>(n_gt);
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

/// Mean AP over IoU thresholds 0.50, 0.55, …, 0.95.
inline double average_precision_coco(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                     SizeFilter filter = SizeFilter::All) {
  double sum = 0.0;
  for (int k = 0; k < 10; ++k) sum += average_precision(dets, gts, 0.5 + 0.05 * k, filter);
  return sum / 10.0;
}

}  // namespace synthcell
