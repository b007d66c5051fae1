#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace synthcell;

namespace {

std::vector<FeatureVector> random_vectors(Rng& rng, int n, int d, double shift = 0.0) {
  std::vector<FeatureVector> out(n, FeatureVector(d));
  for (auto& v : out)
    for (auto& x : v) x = rng.uniform01() * 2.0 - 1.0 + shift;
  return out;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::NotFound;
}

}  // namespace

TEST(FitGaussian, MatchesTwoPassEstimates) {
  Rng rng(1);
  const auto xs = random_vectors(rng, 30, 5);
  const GaussianStats s = fit_gaussian(xs);
  for (int i = 0; i < 5; ++i) {
    double mean = 0.0;
    for (const auto& v : xs) mean += v[i];
    mean /= 30.0;
    EXPECT_NEAR(s.mu(i), mean, 1e-14);
  }
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      double c = 0.0;
      for (const auto& v : xs) c += (v[i] - s.mu(i)) * (v[j] - s.mu(j));
      EXPECT_NEAR(s.cov(i, j), c / 29.0, 1e-14);
    }
  EXPECT_EQ(code_of([&] { fit_gaussian(std::vector<FeatureVector>{{1.0}}); }), ErrorCode::InsufficientSamples);
  EXPECT_EQ(code_of([&] { fit_gaussian(std::vector<FeatureVector>{{1.0}, {1.0, 2.0}}); }), ErrorCode::DimensionMismatch);
}

TEST(Fid, DiagonalClosedForm) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_index(16));
    std::vector<double> ma(d), va(d), mb(d), vb(d);
    GaussianStats a{Eigen::VectorXd(d), Eigen::MatrixXd::Zero(d, d)}, b{Eigen::VectorXd(d), Eigen::MatrixXd::Zero(d, d)};
    for (int i = 0; i < d; ++i) {
      a.mu(i) = ma[i] = rng.uniform01() * 4 - 2;
      b.mu(i) = mb[i] = rng.uniform01() * 4 - 2;
      a.cov(i, i) = va[i] = rng.uniform01() * 3;
      b.cov(i, i) = vb[i] = rng.uniform01() * 3;
    }
    EXPECT_NEAR(fid(a, b), oracles::fid_diagonal(ma, va, mb, vb), 1e-9);
    EXPECT_NEAR(fid(a, a), 0.0, 1e-9);
  }
}

TEST(Fid, GeneralCovariancesAreSymmetricAndNonNegative) {
  Rng rng(3);
  const auto x = random_vectors(rng, 40, 6);
  const auto y = random_vectors(rng, 40, 6, 0.3);
  const GaussianStats a = fit_gaussian(x), b = fit_gaussian(y);
  EXPECT_NEAR(fid(a, b), fid(b, a), 1e-9);
  EXPECT_GT(fid(a, b), 0.0);
  EXPECT_NEAR(fid(a, a), 0.0, 1e-9);
  // Same covariance, shifted mean: the distance is the squared mean shift.
  GaussianStats shifted = a;
  shifted.mu.array() += 0.5;
  EXPECT_NEAR(fid(a, shifted), 6 * 0.25, 1e-9);
}

TEST(Fid, RankDeficientCovarianceIsHandled) {
  // Fewer samples than dimensions: singular covariances.
  Rng rng(4);
  const GaussianStats a = fit_gaussian(random_vectors(rng, 4, 10));
  const GaussianStats b = fit_gaussian(random_vectors(rng, 4, 10));
  EXPECT_GE(fid(a, b), -1e-9);
  EXPECT_NEAR(fid(a, a), 0.0, 1e-9);
}

TEST(Fid, IndefiniteCovarianceIsNumericalFailure) {
  GaussianStats a{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  GaussianStats b = a;
  b.cov(1, 1) = -0.5;
  EXPECT_EQ(code_of([&] { fid(b, a); }), ErrorCode::NumericalFailure);
  GaussianStats c{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)};
  EXPECT_EQ(code_of([&] { fid(a, c); }), ErrorCode::DimensionMismatch);
}

TEST(Kid, MatchesBruteForce) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_vectors(rng, 12, 8);
    const auto y = random_vectors(rng, 15, 8, 0.2);
    EXPECT_NEAR(kid(x, y), oracles::kid_brute_force(x, y), 1e-10);
  }
  EXPECT_EQ(code_of([&] { kid(random_vectors(rng, 1, 3), random_vectors(rng, 4, 3)); }), ErrorCode::InsufficientSamples);
}

TEST(Kid, UnbiasedEstimateCentresOnZeroForSameDistribution) {
  Rng rng(6);
  const int trials = 400;
  double sum = 0.0, sq = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const double k = kid(random_vectors(rng, 20, 4), random_vectors(rng, 20, 4));
    sum += k;
    sq += k * k;
  }
  const double mean = sum / trials;
  const double se = std::sqrt((sq / trials - mean * mean) / (trials - 1));
  EXPECT_LT(std::abs(mean), 3.0 * se);
}

TEST(Iou, HandCases) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {1, 0, 2, 2}), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {2, 2, 2, 2}), 0.0);
}

TEST(AveragePrecision, HandCases) {
  const std::vector<GroundTruth> gts{{1, {0, 0, 10, 10}, 0}, {1, {20, 20, 10, 10}, 0}};
  const std::vector<Detection> perfect{{1, {0, 0, 10, 10}, 0.9}, {1, {20, 20, 10, 10}, 0.8}};
  EXPECT_NEAR(average_precision(perfect, gts, 0.5), 1.0, 1e-12);
  EXPECT_NEAR(average_precision_coco(perfect, gts), 1.0, 1e-12);
  EXPECT_NEAR(average_precision({}, gts, 0.5), 0.0, 1e-12);
  const std::vector<Detection> one{{1, {0, 0, 10, 10}, 0.9}};
  EXPECT_NEAR(average_precision(one, gts, 0.5), 51.0 / 101.0, 1e-12);
  // A false positive ranked first halves precision at every recall level.
  const std::vector<Detection> fp_first{{1, {50, 50, 5, 5}, 0.99}, {1, {0, 0, 10, 10}, 0.9}, {1, {20, 20, 10, 10}, 0.8}};
  // P at recall 0.5 is 1/2, at recall 1.0 is 2/3; interpolation lifts the first half to 2/3.
  EXPECT_NEAR(average_precision(fp_first, gts, 0.5), 2.0 / 3.0, 1e-12);
  // Wrong image id never matches.
  EXPECT_NEAR(average_precision(std::vector<Detection>{{2, {0, 0, 10, 10}, 0.9}}, gts, 0.5), 0.0, 1e-12);
  EXPECT_EQ(code_of([&] { average_precision(perfect, {}, 0.5); }), ErrorCode::NoGroundTruth);
}

TEST(AveragePrecision, DuplicateDetectionIsFalsePositive) {
  const std::vector<GroundTruth> gts{{1, {0, 0, 10, 10}, 0}};
  const std::vector<Detection> dets{{1, {0, 0, 10, 10}, 0.9}, {1, {0, 0, 10, 10}, 0.8}};
  EXPECT_NEAR(average_precision(dets, gts, 0.5), 1.0, 1e-12);
  const std::vector<Detection> reversed{{1, {0, 0, 10, 10}, 0.8}, {1, {1, 1, 10, 10}, 0.9}};
  EXPECT_NEAR(average_precision(reversed, gts, 0.5), 1.0, 1e-12);
  // IoU of the shifted box is 81/119 < 0.75: a false positive ranked first.
  EXPECT_NEAR(average_precision(reversed, gts, 0.75), 0.5, 1e-12);
}

TEST(AveragePrecision, SmallFilterIgnoresLargeObjects) {
  const std::vector<GroundTruth> gts{{1, {0, 0, 10, 10}, 0}, {1, {40, 40, 50, 50}, 0}};
  const std::vector<Detection> dets{{1, {40, 40, 50, 50}, 0.95}, {1, {0, 0, 10, 10}, 0.9}};
  EXPECT_NEAR(average_precision(dets, gts, 0.5, SizeFilter::Small), 1.0, 1e-12);
  const std::vector<GroundTruth> large{{1, {40, 40, 50, 50}, 0}};
  EXPECT_EQ(code_of([&] { average_precision(dets, large, 0.5, SizeFilter::Small); }), ErrorCode::NoGroundTruth);
}

TEST(AveragePrecision, MonotoneScoreTransformInvariance) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GroundTruth> gts;
    std::vector<Detection> dets;
    for (int k = 0; k < 6; ++k) {
      const BoundingBox b{static_cast<int>(rng.uniform_index(60)), static_cast<int>(rng.uniform_index(60)), 8, 8};
      gts.push_back({1, b, 0});
      if (rng.bernoulli(0.7)) dets.push_back({1, {b.x + static_cast<int>(rng.uniform_index(3)), b.y, 8, 8}, rng.uniform01()});
      if (rng.bernoulli(0.3)) dets.push_back({1, {static_cast<int>(rng.uniform_index(60)), 70, 8, 8}, rng.uniform01()});
    }
    std::vector<Detection> mapped = dets;
    for (auto& d : mapped) d.score = std::exp(3.0 * d.score) - 7.0;
    EXPECT_DOUBLE_EQ(average_precision_coco(dets, gts), average_precision_coco(mapped, gts));
  }
}

TEST(Embedders, ThumbnailIsDeterministicAndBounded) {
  Rng rng(8);
  const RasterImage img = fixtures::noisy_background(rng, 30, 20, 3);
  const auto e = default_embedder();
  const FeatureVector v = e->embed(img);
  EXPECT_EQ(v.size(), 256u);
  EXPECT_EQ(v, e->embed(img));
  for (double x : v) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(Embedders, ExternalProgramAndDimensionDrift) {
  fixtures::TempDir dir;
  Rng rng(9);
  const RasterImage img = fixtures::noisy_background(rng, 8, 8, 3);
  const auto ok = fixtures::write_script(dir / "e.py", fixtures::embedder_script(5));
  ExternalEmbedder e("python3 " + ok.string());
  const auto v = e.embed(img);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(e.embed(img), v);

  const auto drift = fixtures::write_script(dir / "d.py", fixtures::embedder_script(5, true));
  ExternalEmbedder d("python3 " + drift.string());
  d.embed(img);
  const ErrorCode c = code_of([&] { d.embed(img); });
  EXPECT_EQ(c, ErrorCode::DimensionDrift);
  EXPECT_EQ(exit_code_for(c), 4);

  ExternalEmbedder bad("while read l; do echo 1 two; done");
  EXPECT_EQ(code_of([&] { bad.embed(img); }), ErrorCode::ProtocolError);
}
