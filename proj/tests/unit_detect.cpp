#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "edgespec/edgespec.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace edgespec;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<std::vector<double>> random_pixels(std::mt19937_64& rng, std::size_t n, std::size_t bands) {
  std::vector<std::vector<double>> px(n);
  for (auto& p : px) p = testutil::random_values(rng, bands, -1.0, 2.0);
  return px;
}

oracle::Matrix to_oracle(const Mat<double>& m) {
  oracle::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

SceneStats stats_of(std::vector<double> mean, const oracle::Matrix& cov) {
  const auto b = static_cast<Eigen::Index>(mean.size());
  Mat<double> m(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) m(i, j) = cov[i][j];
  return SceneStats::from_moments(std::move(mean), m, 100);
}

double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

}  // namespace

// ---------------------------------------------------------------------------
// Scene statistics
// ---------------------------------------------------------------------------

TEST(SceneStats, TwoPointScene) {
  const auto cube = testutil::cube_from_pixels({{0.0, 0.0}, {2.0, 2.0}}, 2);
  const SceneStats s = compute_scene_stats(cube);
  EXPECT_EQ(s.mean, (Spectrum{1.0, 1.0}));
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) EXPECT_EQ(s.covariance(i, j), 1.0);
  EXPECT_GT(s.ridge, 0.0);
  const Mat<double> llt = s.factor * s.factor.transpose();
  EXPECT_NEAR(llt(0, 0), 1.0 + s.ridge, 1e-12);
  EXPECT_NEAR(llt(0, 1), 1.0, 1e-12);
}

TEST(SceneStats, ConstantSceneEngagesRidge) {
  const RasterCube cube(4, 4, 3, std::vector<float>(48, 0.25f));
  const SceneStats s = compute_scene_stats(cube);
  EXPECT_TRUE(s.covariance.isZero(0.0));
  EXPECT_GT(s.ridge, 0.0);
  const ScoreMap rx_map = detect_map(cube, DetectorKind::RX, nullptr, &s, Precision::Double);
  for (double v : rx_map.data) EXPECT_EQ(v, 0.0);
}

TEST(SceneStats, MatchesPairwiseCovarianceOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto px = random_pixels(rng, 50, 4);
    const SceneStats s = compute_scene_stats(testutil::cube_from_pixels(px, 10));
    const auto want = oracle::pairwise_covariance(px);
    const auto mu = oracle::mean(px);
    for (std::size_t a = 0; a < 4; ++a) {
      EXPECT_NEAR(s.mean[a], mu[a], 1e-12);
      for (std::size_t b = 0; b < 4; ++b) {
        EXPECT_LE(rel_err(s.covariance(a, b), want[a][b]), 1e-12);
        EXPECT_EQ(s.covariance(a, b), s.covariance(b, a));
      }
    }
    EXPECT_EQ(s.ridge, 0.0);
  }
}

TEST(SceneStats, MaskAndValidityRestrictPixels) {
  const BasicCube<double> cube(4, 1, 1, {1.0, 3.0, -9999.0, 100.0}, {}, -9999.0);
  const std::vector<std::uint8_t> mask{1, 1, 1, 0};
  const SceneStats s = compute_scene_stats(cube, mask);
  EXPECT_EQ(s.pixel_count, 2u);
  EXPECT_EQ(s.mean[0], 2.0);
  EXPECT_EQ(s.covariance(0, 0), 1.0);
  const BasicCube<double> tiny(1, 1, 1, {1.0});
  EXPECT_THROW(compute_scene_stats(tiny), DataError);
}

// ---------------------------------------------------------------------------
// SAM
// ---------------------------------------------------------------------------

TEST(Sam, AnalyticCases) {
  const std::vector<double> e1{1, 0}, e2{0, 1}, d{1, 1};
  EXPECT_EQ(sam(e1, e1), 0.0);
  EXPECT_NEAR(sam(e1, e2), kPi / 2, 1e-15);
  EXPECT_NEAR(sam(d, e1), kPi / 4, 1e-15);
  const std::vector<double> neg{-1, 0};
  EXPECT_NEAR(sam(e1, neg), kPi, 1e-15);
  const std::vector<double> zero{0, 0};
  EXPECT_THROW(sam(e1, zero), DataError);
  const std::vector<double> three{1, 2, 3};
  EXPECT_THROW(sam(e1, three), DataError);
}

TEST(Sam, SymmetryScaleInvarianceAndRange) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int i = 0; i < 500; ++i) {
    const auto x = testutil::random_values(rng, 1 + i % 8, -1.0, 1.0);
    const auto y = testutil::random_values(rng, x.size(), -1.0, 1.0);
    const double a = sam(x, y);
    EXPECT_EQ(a, sam(y, x));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, kPi);
    EXPECT_EQ(sam(x, x), 0.0);
    std::vector<double> ax(x), by(y), cx(x);
    const double sa = scale(rng), sb = scale(rng);
    for (auto& v : ax) v *= sa;
    for (auto& v : by) v *= sb;
    for (auto& v : cx) v *= sb;
    EXPECT_NEAR(sam(ax, by), a, 1e-12);
    EXPECT_NEAR(sam(x, cx), 0.0, 1e-12);
    EXPECT_NEAR(a, oracle::angle(x, y), 1e-7);
  }
}

// ---------------------------------------------------------------------------
// MF and RX point evaluation
// ---------------------------------------------------------------------------

TEST(MatchedFilterPoint, IdentityCovarianceWorkedCase) {
  const SceneStats s = stats_of({0.0, 0.0}, {{1.0, 0.0}, {0.0, 1.0}});
  EXPECT_EQ(s.ridge, 0.0);
  const std::vector<double> x{0.5, 3.0}, t{1.0, 0.0};
  EXPECT_NEAR(mf(x, t, s), 0.5, 1e-15);
}

TEST(MatchedFilterPoint, NormalisationAndLinearity) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const std::size_t bands = 2 + i % 5;
    const auto px = random_pixels(rng, 40, bands);
    const SceneStats s = compute_scene_stats(testutil::cube_from_pixels(px, 8));
    const auto t = testutil::random_values(rng, bands, 2.0, 3.0);
    EXPECT_NEAR(mf(t, t, s), 1.0, 1e-9);
    EXPECT_NEAR(mf(s.mean, t, s), 0.0, 1e-9);
    const auto x1 = testutil::random_values(rng, bands, -1.0, 2.0);
    const auto x2 = testutil::random_values(rng, bands, -1.0, 2.0);
    const double alpha = 0.3;
    std::vector<double> mix(bands);
    for (std::size_t b = 0; b < bands; ++b) mix[b] = alpha * x1[b] + (1 - alpha) * x2[b];
    EXPECT_NEAR(mf(mix, t, s), alpha * mf(x1, t, s) + (1 - alpha) * mf(x2, t, s), 1e-9);
    const double want = oracle::mf(x1, t, s.mean, to_oracle(s.covariance));
    EXPECT_LE(rel_err(mf(x1, t, s), want), 1e-9);
    const MatchedFilter<double> filter(s, t);
    EXPECT_LE(rel_err(filter(x1), want), 1e-9);
  }
}

TEST(MatchedFilterPoint, TargetAtMeanIsDataError) {
  const SceneStats s = stats_of({1.0, 2.0}, {{1.0, 0.0}, {0.0, 1.0}});
  const std::vector<double> x{0.0, 0.0};
  EXPECT_THROW(mf(x, s.mean, s), DataError);
}

TEST(RxPoint, WorkedCases) {
  const SceneStats diag = stats_of({0.0, 0.0}, {{4.0, 0.0}, {0.0, 1.0}});
  const std::vector<double> x{2.0, 1.0};
  EXPECT_NEAR(rx(x, diag), 2.0, 1e-15);
  EXPECT_EQ(rx(diag.mean, diag), 0.0);

  std::mt19937_64 rng(4);
  const SceneStats eye = stats_of({0.5, -0.25, 2.0}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  for (int i = 0; i < 100; ++i) {
    const auto y = testutil::random_values(rng, 3, -5.0, 5.0);
    double want = 0.0;
    for (std::size_t b = 0; b < 3; ++b) want += (y[b] - eye.mean[b]) * (y[b] - eye.mean[b]);
    EXPECT_NEAR(rx(y, eye), want, 1e-12 * std::max(1.0, want));
  }
}

TEST(RxPoint, MatchesExplicitInverseAndIsNonNegative) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const std::size_t bands = 2 + i % 5;
    const auto px = random_pixels(rng, 30, bands);
    const SceneStats s = compute_scene_stats(testutil::cube_from_pixels(px, 6));
    for (int k = 0; k < 5; ++k) {
      const auto x = testutil::random_values(rng, bands, -2.0, 3.0);
      const double got = rx(x, s);
      EXPECT_GT(got, 0.0);
      EXPECT_LE(rel_err(got, oracle::rx(x, s.mean, to_oracle(s.covariance))), 1e-9);
    }
    EXPECT_EQ(rx(s.mean, s), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Score maps
// ---------------------------------------------------------------------------

TEST(DetectMap, SamOfTargetEverywhereIsZero) {
  const Spectrum t{0.1, 0.4, 0.3, 0.8};
  std::vector<std::vector<double>> px(12, t);
  const auto cube = testutil::cube_from_pixels(px, 4);
  const TargetSpectrum target{"t", t, "test"};
  for (auto precision : {Precision::Single, Precision::Double}) {
    const ScoreMap m = detect_map(cube, DetectorKind::SAM, &target, nullptr, precision);
    for (double v : m.data) EXPECT_EQ(v, 0.0);
  }
}

TEST(DetectMap, SamZeroPixelIsFlaggedAndZeroTargetRejected) {
  const auto cube = testutil::cube_from_pixels({{0.0, 0.0}, {1.0, 0.0}}, 2);
  const TargetSpectrum t{"t", {1.0, 0.0}, "test"};
  const ScoreMap m = detect_map(cube, DetectorKind::SAM, &t);
  EXPECT_EQ(m.flagged, 1u);
  EXPECT_FLOAT_EQ(m.data[0], static_cast<float>(kPi));
  EXPECT_EQ(m.data[1], 0.0);
  const TargetSpectrum zero{"z", {0.0, 0.0}, "test"};
  EXPECT_THROW(detect_map(cube, DetectorKind::SAM, &zero), DataError);
}

TEST(DetectMap, TargetRequirements) {
  const auto cube = testutil::cube_from_pixels({{0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}}, 3);
  EXPECT_THROW(detect_map(cube, DetectorKind::MF), ConfigError);
  EXPECT_THROW(detect_map(cube, DetectorKind::SAM), ConfigError);
  const TargetSpectrum short_target{"s", {1.0}, "test"};
  EXPECT_THROW(detect_map(cube, DetectorKind::MF, &short_target), DataError);
  EXPECT_NO_THROW(detect_map(cube, DetectorKind::RX));
}

TEST(DetectMap, MapsAgreeWithPointEvaluation) {
  std::mt19937_64 rng(6);
  const auto px = random_pixels(rng, 64, 5);
  const auto cube = testutil::cube_from_pixels(px, 8);
  const SceneStats s = compute_scene_stats(cube);
  const TargetSpectrum t{"t", testutil::random_values(rng, 5, 1.0, 2.0), "test"};
  const ScoreMap mf_map = detect_map(cube, DetectorKind::MF, &t, &s, Precision::Double);
  const ScoreMap rx_map = detect_map(cube, DetectorKind::RX, nullptr, &s, Precision::Double);
  const ScoreMap sam_map = detect_map(cube, DetectorKind::SAM, &t, nullptr, Precision::Double);
  for (std::size_t p = 0; p < px.size(); ++p) {
    EXPECT_NEAR(mf_map.data[p], mf(px[p], t, s), 1e-12);
    EXPECT_NEAR(rx_map.data[p], rx(px[p], s), 1e-12);
    EXPECT_EQ(sam_map.data[p], sam(px[p], t.spectrum));
  }
  EXPECT_EQ(mf_map.kind, ScoreKind::MF);
  EXPECT_EQ(rx_map.kind, ScoreKind::RX);
}

TEST(DetectMap, PlantedVegetationStandsOutUnderMf) {
  const auto scene = synthetic::vegetation_scene(48, 48, 24, 15, 21);
  const ScoreMap m = detect_map(scene.cube, DetectorKind::MF, &scene.target);
  std::vector<double> background;
  std::vector<std::uint8_t> is_planted(m.size(), 0);
  for (auto p : scene.planted) is_planted[p] = 1;
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!is_planted[p]) background.push_back(m.data[p]);
  }
  const double p99 = oracle::quantile(background, 0.99);
  for (auto p : scene.planted) EXPECT_GT(m.data[p], p99);
}

TEST(DetectMap, SingleAndDoublePathsAgree) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5; ++i) {
    const RasterCube cube = synthetic::uniform_cube(32, 32, 6 + i, 100 + i);
    const TargetSpectrum t{"t", testutil::random_values(rng, cube.bands()), "test"};
    for (auto kind : {DetectorKind::SAM, DetectorKind::MF, DetectorKind::RX}) {
      const ErrorReport r = compare_paths(detect_map(cube, kind, &t, nullptr, Precision::Single),
                                          detect_map(cube, kind, &t, nullptr, Precision::Double));
      EXPECT_LT(r.mean_abs_error, 1e-5) << to_string(kind);
      EXPECT_LT(r.max_abs_error, 1e-3) << to_string(kind);
    }
  }
}

TEST(DetectorParams, BlobSizesAndHeader) {
  const RasterCube cube = synthetic::uniform_cube(8, 8, 48, 9);
  const SceneStats s = compute_scene_stats(cube);
  const TargetSpectrum t{"t", Spectrum(48, 0.5), "test"};
  const auto rx_blob = serialize_detector_params(DetectorKind::RX, nullptr, &s);
  EXPECT_EQ(rx_blob.size(), kParamHeaderBytes + 8 * (48 + 48 * 48));
  EXPECT_EQ(rx_blob.size(), 18832u);
  EXPECT_EQ(std::string(rx_blob.begin(), rx_blob.begin() + 4), "ESDP");
  EXPECT_EQ(serialize_detector_params(DetectorKind::SAM, &t, nullptr).size(), kParamHeaderBytes + 8 * 48);
  EXPECT_EQ(serialize_detector_params(DetectorKind::MF, &t, &s).size(), kParamHeaderBytes + 8 * (2 * 48 + 48 * 48));
  EXPECT_EQ(serialize_detector_params(DetectorKind::RX, nullptr, &s), rx_blob);
  EXPECT_THROW(serialize_detector_params(DetectorKind::MF, nullptr, &s), ConfigError);
}

// ---------------------------------------------------------------------------
// Segmentation metrics
// ---------------------------------------------------------------------------

TEST(SegMetrics, PerfectPrediction) {
  const BinaryMask m(3, 1, {1, 0, 1});
  const SegMetrics s = seg_metrics(m, m);
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_EQ(s.positive_iou, 1.0);
  EXPECT_EQ(s.negative_iou, 1.0);
}

TEST(SegMetrics, BothEmptyClassScoresOne) {
  const BinaryMask zeros(2, 2);
  const SegMetrics s = seg_metrics(zeros, zeros);
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_EQ(s.positive_iou, 1.0);
  EXPECT_EQ(s.negative_iou, 1.0);
}

TEST(SegMetrics, TwoByTwoWorkedCase) {
  const SegMetrics s = seg_metrics(BinaryMask(2, 2, {1, 1, 0, 0}), BinaryMask(2, 2, {1, 0, 1, 0}));
  EXPECT_EQ(s.confusion, (Confusion{1, 1, 1, 1}));
  EXPECT_EQ(s.accuracy, 0.5);
  EXPECT_EQ(s.positive_iou, 1.0 / 3.0);
  EXPECT_EQ(s.negative_iou, 1.0 / 3.0);
}

TEST(SegMetrics, MatchesCountingOracleAndLabelSwapSymmetry) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> dim(1, 300);
  std::bernoulli_distribution coin(0.3);
  for (int i = 0; i < 30; ++i) {
    const std::size_t w = dim(rng), h = dim(rng);
    std::vector<std::uint8_t> p(w * h), t(w * h), np(w * h), nt(w * h);
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = coin(rng);
      t[k] = coin(rng);
      np[k] = 1 - p[k];
      nt[k] = 1 - t[k];
    }
    const SegMetrics s = seg_metrics(BinaryMask(w, h, p), BinaryMask(w, h, t));
    const auto c = oracle::count(p, t);
    EXPECT_EQ(s.confusion, (Confusion{c.tp, c.fp, c.fn, c.tn}));
    const SegMetrics swapped = seg_metrics(BinaryMask(w, h, np), BinaryMask(w, h, nt));
    EXPECT_EQ(swapped.accuracy, s.accuracy);
    EXPECT_EQ(swapped.positive_iou, s.negative_iou);
    EXPECT_EQ(swapped.negative_iou, s.positive_iou);
  }
}

TEST(SegMetrics, DimensionMismatchIsDataError) {
  EXPECT_THROW(seg_metrics(BinaryMask(2, 2), BinaryMask(4, 1)), DataError);
}

// ---------------------------------------------------------------------------
// Path comparison
// ---------------------------------------------------------------------------

TEST(ComparePaths, IdenticalMapsHaveZeroError) {
  std::mt19937_64 rng(9);
  const ScoreMap a = testutil::score_map(testutil::random_values(rng, 100));
  const ErrorReport r = compare_paths(a, a);
  EXPECT_EQ(r.mean_abs_error, 0.0);
  EXPECT_EQ(r.max_abs_error, 0.0);
  EXPECT_EQ(r.counts.front(), 100u);
}

TEST(ComparePaths, ConstantOffset) {
  const std::vector<double> v(50, 0.25);
  std::vector<double> shifted(v);
  for (auto& x : shifted) x += 0.001;
  const ErrorReport r = compare_paths(testutil::score_map(v), testutil::score_map(shifted), 10);
  EXPECT_NEAR(r.max_abs_error, 0.001, 1e-15);
  EXPECT_EQ(r.mean_abs_error, r.max_abs_error);
  EXPECT_EQ(r.counts.back(), 50u);
  EXPECT_EQ(r.bin_edges.size(), 11u);
  const std::string text = render_histogram(r);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 11);
}

TEST(ComparePaths, KindOrShapeMismatchIsDataError) {
  ScoreMap a = testutil::score_map({1.0, 2.0});
  ScoreMap b = a;
  b.kind = ScoreKind::RX;
  EXPECT_THROW(compare_paths(a, b), DataError);
  EXPECT_THROW(compare_paths(a, testutil::score_map({1.0})), DataError);
}

// ---------------------------------------------------------------------------
// Bench harness
// ---------------------------------------------------------------------------

TEST(Bench, MedianOfRepetitionsAfterWarmup) {
  int calls = 0;
  const BenchRecord r = bench("App", "op", [&] { ++calls; }, 5, 42, "1x1");
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(r.repetitions, 5u);
  EXPECT_EQ(r.artifact_bytes, 42u);
  EXPECT_GE(r.single_input_seconds, 0.0);
  EXPECT_THROW(bench("App", "op", [] {}, 2, 0, ""), ConfigError);
}

TEST(Bench, TableLayout) {
  const std::vector<BenchRecord> rows{{"Vegetation", "SAM", 400, 0.01, "8x8x48", 3},
                                      {"Vegetation", "RX", 18832, 0.02, "8x8x48", 3},
                                      {"Mineral", "MF", 19216, 0.03, "8x8x48", 3}};
  const std::string table = render_bench_table(rows);
  std::istringstream in(table);
  std::string header, rule, line;
  std::getline(in, header);
  std::getline(in, rule);
  EXPECT_EQ(header.substr(0, header.find_last_not_of(' ') + 1),
            "Application | Model | Model Size | Execution Time (s)");
  std::vector<std::string> body;
  while (std::getline(in, line)) body.push_back(line);
  ASSERT_EQ(body.size(), 3u);
  EXPECT_EQ(body[0].rfind("Vegetation", 0), 0u);
  EXPECT_EQ(body[1].rfind(std::string(11, ' ') + " | SAM", 0), std::string::npos);
  EXPECT_EQ(body[1].rfind(std::string(11, ' ') + " | RX", 0), 0u);
  EXPECT_NE(body[1].find("18.4 KB"), std::string::npos);
  EXPECT_EQ(body[2].rfind("Mineral", 0), 0u);
}

TEST(Bench, FormatSize) {
  EXPECT_EQ(format_size(400), "400 B");
  EXPECT_EQ(format_size(18832), "18.4 KB");
  EXPECT_EQ(format_size(5u * 1024 * 1024), "5.0 MB");
}

TEST(Bench, DetectorRowsAndDeterministicSizes) {
  const auto scene = synthetic::mineral_scene(16, 16, 12, 3, 4);
  const auto a = bench_detectors(scene.cube, scene.target, "Mineral", 3);
  const auto b = bench_detectors(scene.cube, scene.target, "Mineral", 3);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].name, "SAM");
  EXPECT_EQ(a[1].name, "MF");
  EXPECT_EQ(a[2].name, "RX");
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].artifact_bytes, b[i].artifact_bytes);
    EXPECT_EQ(a[i].inputs_shape, "16x16x12");
  }
}
