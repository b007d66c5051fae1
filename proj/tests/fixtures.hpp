#pragma once

// Synthetic annotated images, temporary directories and stub programs shared
// by the test binaries.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "synthcell/synthcell.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace synthcell;

class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "synthcell-test-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Smooth-ish textured background: low-frequency gradient plus noise.
inline RasterImage noisy_background(Rng& rng, int w, int h, int channels) {
  RasterImage img(w, h, channels);
  const double phase = rng.uniform01() * 6.28;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const double base = 70.0 + 25.0 * std::sin(phase + 0.07 * x + 0.05 * y + c);
        img.at(x, y, c) = to_u8(base + rng.uniform_int(-12, 12));
      }
  return img;
}

struct Blob {
  double cx, cy, rx, ry;
};

/// Paints ellipse `label` onto free pixels of the label map and brightens the image there.
inline void paint_blob(RasterImage& img, LabelMap& labels, const Blob& b, std::uint32_t label, Rng& rng) {
  const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - b.rx)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(b.cx + b.rx)));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - b.ry)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(b.cy + b.ry)));
  const int tone = static_cast<int>(rng.uniform_int(150, 230));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x - b.cx) / b.rx;
      const double dy = (y - b.cy) / b.ry;
      if (dx * dx + dy * dy > 1.0 || labels.at(x, y) != 0) continue;
      labels.at(x, y) = label;
      for (int c = 0; c < img.channels(); ++c) img.at(x, y, c) = to_u8(tone - 40.0 * (dx * dx + dy * dy) + rng.uniform_int(-6, 6) + 8 * c);
    }
}

/// Image with `n_cells` ellipses kept off the border. About a third of the
/// cells are planted right next to the previous one so that MCOs occur.
inline AnnotatedImage synthetic_annotated(Rng& rng, int w, int h, int n_cells, int channels = 3, const std::string& id = "") {
  AnnotatedImage out{id, noisy_background(rng, w, h, channels), LabelMap(w, h, 0)};
  Blob prev{0, 0, 0, 0};
  for (int k = 0; k < n_cells; ++k) {
    Blob b{};
    b.rx = 2.5 + rng.uniform01() * 4.0;
    b.ry = 2.5 + rng.uniform01() * 4.0;
    if (k > 0 && rng.bernoulli(0.33)) {
      b.cx = prev.cx + prev.rx + b.rx - 1.0;
      b.cy = prev.cy + (rng.uniform01() - 0.5) * 3.0;
    } else {
      b.cx = 3.0 + b.rx + rng.uniform01() * (w - 6.0 - 2 * b.rx);
      b.cy = 3.0 + b.ry + rng.uniform01() * (h - 6.0 - 2 * b.ry);
    }
    b.cx = std::clamp(b.cx, 3.0 + b.rx, w - 4.0 - b.rx);
    b.cy = std::clamp(b.cy, 3.0 + b.ry, h - 4.0 - b.ry);
    paint_blob(out.image, out.labels, b, static_cast<std::uint32_t>(k + 1), rng);
    prev = b;
  }
  return out;
}

/// Writes `n_train + n_val + n_test` synthetic images with a manifest and returns its path.
inline fs::path write_dataset(const fs::path& dir, int n_train, int n_val, int n_test, std::uint64_t seed,
                              int w = 64, int h = 64, int cells = 5) {
  DatasetManifest m;
  m.name = "synthetic";
  m.seed = seed;
  m.base_dir = dir;
  int idx = 0;
  auto add = [&](int count, Split split) {
    for (int k = 0; k < count; ++k, ++idx) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(idx));
      const AnnotatedImage a = synthetic_annotated(rng, w, h, cells);
      const std::string stem = "img_" + std::to_string(idx) + ".png";
      save_raster(dir / "images" / stem, a.image);
      save_label_map(dir / "labels" / stem, a.labels);
      m.items.push_back({"images/" + stem, "labels/" + stem, split});
    }
  };
  add(n_train, Split::Train);
  add(n_val, Split::Val);
  add(n_test, Split::Test);
  save_manifest(dir / "manifest.json", m);
  return dir / "manifest.json";
}

inline ObjectPool synthetic_pool(std::uint64_t seed, int images = 6, int w = 64, int h = 64, int cells = 5,
                                 int channels = 3) {
  std::vector<AnnotatedImage> data;
  for (int i = 0; i < images; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    data.push_back(synthetic_annotated(rng, w, h, cells, channels, "img" + std::to_string(i)));
  }
  return pool_statistics(data);
}

inline fs::path write_script(const fs::path& path, const std::string& body) {
  std::ofstream(path) << body;
  fs::permissions(path, fs::perms::owner_all);
  return path;
}

/// Line-protocol scorer: FIT -> "ok", SCORE <png> -> mean byte of the file tail.
inline const char* kScorerScript = R"(import sys
for line in sys.stdin:
    cmd, _, arg = line.strip().partition(' ')
    if cmd == 'FIT':
        print('ok', flush=True)
    elif cmd == 'SCORE':
        data = open(arg, 'rb').read()
        print(len(data) % 97 / 97.0, flush=True)
    else:
        print('?', flush=True)
)";

/// Embedder stub: EMBED <png> -> d reals derived from the file bytes.
inline std::string embedder_script(int d, bool drift = false) {
  std::string s = "import sys\nd = " + std::to_string(d) + "\nn = 0\n";
  s += "for line in sys.stdin:\n";
  s += "    data = open(line.strip().split(' ', 1)[1], 'rb').read()\n";
  s += "    n += 1\n";
  if (drift) s += "    k = d + (1 if n > 1 else 0)\n";
  else s += "    k = d\n";
  s += "    print(' '.join(str((sum(data[i::k]) % 1000) / 1000.0) for i in range(k)), flush=True)\n";
  return s;
}

}  // namespace fixtures
