#pragma once

// Policy scorers: an interface, a PCA reconstruction scorer, and a hook that
// delegates to an external program over a line protocol.

#include <atomic>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"
#include "synthcell/png_io.hpp"
#include "synthcell/subprocess.hpp"

namespace synthcell {

/// Rates how closely a crop resembles the reference crops it was fitted on.
/// Higher is closer. Only the ranking of scores is meaningful.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual void fit(std::span<const RasterImage> reference_crops) = 0;
  /// Must be safe to call concurrently after fit.
  virtual double score(const RasterImage& crop) const = 0;
};

/// Parses a whole line as one decimal real, surrounding whitespace allowed.
inline std::optional<double> parse_real(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

/// Reconstruction error under a PCA basis of the reference crops, negated:
/// score(x) = −‖x − reconstruct(x)‖² / dim on input_size² gray thumbnails.
class PcaScorer final : public Scorer {
 public:
  PcaScorer(int components, int input_size) : components_(components), input_size_(input_size) {
    if (input_size < 1) fail(ErrorCode::InvalidParam, "PCA input size must be >= 1");
    if (components < 1 || components > input_size * input_size) {
      fail(ErrorCode::InvalidParam, "PCA components must be in [1, input_size^2]");
    }
  }

  void fit(std::span<const RasterImage> crops) override {
    const auto n = static_cast<Eigen::Index>(crops.size());
    if (n < components_ || n < 2) {
      fail(ErrorCode::InsufficientData, "PCA scorer with " + std::to_string(components_) + " components got " +
                                            std::to_string(crops.size()) + " crops");
    }
    const Eigen::Index dim = static_cast<Eigen::Index>(input_size_) * input_size_;
    Eigen::MatrixXd data(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) data.row(i) = embed(crops[static_cast<std::size_t>(i)]).transpose();
    mean_ = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - mean_.transpose();
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) fail(ErrorCode::NumericalFailure, "PCA eigendecomposition failed");
    // Eigenvalues ascend; keep the trailing columns.
    basis_ = eig.eigenvectors().rightCols(components_);
  }

  double score(const RasterImage& crop) const override {
    if (basis_.size() == 0) fail(ErrorCode::InvalidParam, "PCA scorer used before fit");
    const Eigen::VectorXd c = embed(crop) - mean_;
    const Eigen::VectorXd residual = c - basis_ * (basis_.transpose() * c);
    return -residual.squaredNorm() / static_cast<double>(c.size());
  }

  int components() const { return components_; }
  int input_size() const { return input_size_; }

 private:
  Eigen::VectorXd embed(const RasterImage& crop) const {
    const std::vector<double> v = gray_thumbnail(crop, input_size_);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  int components_;
  int input_size_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd basis_;
};

/// Scratch directory removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& prefix) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (prefix + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Delegates scoring to an external program.
///
/// Protocol, one request per line on the program's stdin, one reply line on
/// its stdout:
///   FIT <dir>        -> any acknowledgement line; <dir> holds crop_NNNNN.png
///   SCORE <png-path> -> one decimal real
/// A non-zero exit is a ProcessFailure; a missing or non-numeric reply is a
/// ProtocolError. Requests are serialized through one process unless
/// `workers` > 1, which starts that many copies for a reentrant program.
class ExternalScorer final : public Scorer {
 public:
  explicit ExternalScorer(std::string command, int workers = 1) : command_(std::move(command)), scratch_("synthcell-scorer") {
    if (command_.empty()) fail(ErrorCode::InvalidParam, "external scorer command is empty");
    for (int i = 0; i < std::max(1, workers); ++i) workers_.push_back(std::make_unique<Worker>(command_));
  }

  void fit(std::span<const RasterImage> crops) override {
    const auto dir = scratch_.path() / "fit";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < crops.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "crop_%05zu.png", i);
      save_raster(dir / name, crops[i]);
    }
    for (auto& w : workers_) {
      std::lock_guard lock(w->mutex);
      w->process.request("FIT " + dir.string());
    }
  }

  double score(const RasterImage& crop) const override {
    Worker& w = acquire();
    std::lock_guard lock(w.mutex, std::adopt_lock);
    const auto path = scratch_.path() / ("score_" + std::to_string(w.id) + ".png");
    save_raster(path, crop);
    const std::string reply = w.process.request("SCORE " + path.string());
    const auto v = parse_real(reply);
    if (!v) fail(ErrorCode::ProtocolError, "scorer '" + command_ + "' replied '" + reply + "', expected a number");
    return *v;
  }

 private:
  struct Worker {
    explicit Worker(const std::string& cmd) : process(cmd) {
      static std::atomic<int> next{0};
      id = next.fetch_add(1);
    }
    LineProcess process;
    std::mutex mutex;
    int id = 0;
  };

  // Returns a locked worker.
  Worker& acquire() const {
    for (auto& w : workers_)
      if (w->mutex.try_lock()) return *w;
    const std::size_t pick = std::hash<std::thread::id>{}(std::this_thread::get_id()) % workers_.size();
    workers_[pick]->mutex.lock();
    return *workers_[pick];
  }

  std::string command_;
  ScratchDir scratch_;
  std::vector<std::unique_ptr<Worker>> workers_;
};

}  // namespace synthcell
