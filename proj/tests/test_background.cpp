#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"

using namespace synthcell;

namespace {

std::set<std::vector<std::uint8_t>> outside_values(const RasterImage& img, const BinaryMask& occ) {
  std::set<std::vector<std::uint8_t>> out;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      if (occ.at(x, y)) continue;
      std::vector<std::uint8_t> px;
      for (int c = 0; c < img.channels(); ++c) px.push_back(img.at(x, y, c));
      out.insert(px);
    }
  return out;
}

}  // namespace

TEST(Background, PixelsOutsideMergedBoxesUnchanged) {
  Rng rng(21);
  for (int i = 0; i < 5; ++i) {
    const AnnotatedImage a = fixtures::synthetic_annotated(rng, 64, 48, 6);
    InpaintConfig cfg;
    cfg.seed = 100 + i;
    const RasterImage bg = generate_background(a.image, a.labels, cfg);
    const auto boxes = merged_object_boxes(a.labels);
    const BinaryMask occ = box_occupancy(64, 48, boxes);
    bool changed_inside = false;
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) {
          if (!occ.at(x, y)) {
            ASSERT_EQ(bg.at(x, y, c), a.image.at(x, y, c));
          } else {
            changed_inside = changed_inside || bg.at(x, y, c) != a.image.at(x, y, c);
          }
        }
    EXPECT_TRUE(changed_inside);
  }
}

TEST(Background, HardEdgedReplacementDrawsFromOutsidePopulation) {
  Rng rng(22);
  const AnnotatedImage a = fixtures::synthetic_annotated(rng, 48, 48, 5);
  InpaintConfig cfg;
  cfg.sigma = 1e-6;
  cfg.rect_inset = 0;
  const RasterImage bg = generate_background(a.image, a.labels, cfg);
  const BinaryMask occ = box_occupancy(48, 48, merged_object_boxes(a.labels));
  const auto population = outside_values(a.image, occ);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      if (!occ.at(x, y)) continue;
      std::vector<std::uint8_t> px{bg.at(x, y, 0), bg.at(x, y, 1), bg.at(x, y, 2)};
      EXPECT_TRUE(population.count(px)) << x << "," << y;
    }
}

TEST(Background, BestCandidateMinimisesCornerDistance) {
  // With many candidates every pixel settles on the outside value closest to
  // the box corners.
  RasterImage img(12, 12, 1, 200);
  img.at(0, 0) = 50;  // the single outside value closest to the corners
  LabelMap map(12, 12, 0);
  for (int y = 3; y < 9; ++y)
    for (int x = 3; x < 9; ++x) {
      map.at(x, y) = 1;
      img.at(x, y) = 40;
    }
  const BinaryMask occ = box_occupancy(12, 12, merged_object_boxes(map));
  InpaintConfig cfg;
  cfg.n_candidates = 4000;
  Rng rng(1);
  const RasterImage patch = replace_inside_pixels(img, {3, 3, 6, 6}, occ, cfg, rng);
  for (auto v : patch.pixels()) EXPECT_EQ(v, 50);
}

TEST(Background, DeterministicPerStream) {
  Rng rng(23);
  const AnnotatedImage a = fixtures::synthetic_annotated(rng, 40, 40, 4);
  InpaintConfig cfg;
  cfg.seed = 5;
  EXPECT_EQ(generate_background(a.image, a.labels, cfg, 3), generate_background(a.image, a.labels, cfg, 3));
  EXPECT_NE(generate_background(a.image, a.labels, cfg, 3), generate_background(a.image, a.labels, cfg, 4));
}

TEST(Background, NoCellsIsIdentity) {
  Rng rng(24);
  const RasterImage img = fixtures::noisy_background(rng, 16, 16, 3);
  EXPECT_EQ(generate_background(img, LabelMap(16, 16, 0), {}), img);
}

TEST(Background, FullyCoveredImageFails) {
  RasterImage img(6, 6, 1, 9);
  LabelMap map(6, 6, 1);
  try {
    generate_background(img, map, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoOutsidePixels);
    EXPECT_EQ(exit_code_for(e.code()), 3);
  }
}

TEST(Background, BlendParameters) {
  const BoxBlend d = resolve_blend({}, {0, 0, 40, 16});
  EXPECT_DOUBLE_EQ(d.sigma, 2.0);
  EXPECT_EQ(d.inset, 6);
  const BoxBlend small = resolve_blend({}, {0, 0, 5, 5});
  EXPECT_DOUBLE_EQ(small.sigma, 1.0);
  EXPECT_EQ(small.inset, 2);
  InpaintConfig cfg;
  cfg.rect_inset = 3;
  EXPECT_THROW(resolve_blend(cfg, {0, 0, 6, 6}), Error);
  EXPECT_EQ(resolve_blend(cfg, {0, 0, 7, 7}).inset, 3);
}

TEST(Background, RectangleAlphaPeaksInsideAndFadesOut) {
  const AlphaMask a = rectangle_alpha(21, 21, 5, 1.5);
  EXPECT_NEAR(a.at(10, 10), 1.0, 1e-12);
  EXPECT_LT(a.at(0, 0), 1e-3);
  for (double v : a.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
