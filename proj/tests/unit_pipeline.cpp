#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cli.hpp"
#include "edgespec/edgespec.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace edgespec;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "edgespec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<oracle::Box> sorted_oracle_boxes(const BinaryMask& m) {
  auto boxes = oracle::flood_fill_boxes(m.data, m.width, m.height);
  auto area = [](const oracle::Box& b) { return (b.x1 - b.x0 + 1) * (b.y1 - b.y0 + 1); };
  std::stable_sort(boxes.begin(), boxes.end(), [&](const oracle::Box& a, const oracle::Box& b) {
    if (area(a) != area(b)) return area(a) > area(b);
    return a.pixels > b.pixels;
  });
  return boxes;
}

PipelineConfig config_for(Application app) {
  PipelineConfig c;
  c.application = app;
  c.produced_at = "2026-01-01T00:00:00Z";
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Boxes
// ---------------------------------------------------------------------------

TEST(ConnectedBoxes, EmptyAndSinglePixel) {
  EXPECT_TRUE(connected_boxes(BinaryMask(8, 8), 16).empty());
  BinaryMask m(8, 8);
  m.data[4 * 8 + 3] = 1;
  EXPECT_EQ(connected_boxes(m, 16), (std::vector<Box>{{3, 4, 1, 1}}));
}

TEST(ConnectedBoxes, TwoBlobsMatchFloodFill) {
  BinaryMask m(10, 10);
  for (std::size_t y : {1u, 2u})
    for (std::size_t x : {1u, 2u}) m.data[y * 10 + x] = 1;
  for (std::size_t y : {6u, 7u})
    for (std::size_t x : {5u, 6u}) m.data[y * 10 + x] = 1;
  const auto boxes = connected_boxes(m, 16);
  ASSERT_EQ(boxes.size(), 2u);
  EXPECT_EQ(boxes[0], (Box{1, 1, 2, 2}));
  EXPECT_EQ(boxes[1], (Box{5, 6, 2, 2}));
  const auto want = sorted_oracle_boxes(m);
  ASSERT_EQ(want.size(), 2u);
  EXPECT_EQ(want[1].x0, 5u);
}

TEST(ConnectedBoxes, DiagonalPixelsAreSeparate) {
  const BinaryMask m(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(connected_boxes(m, 16).size(), 2u);
}

TEST(ConnectedBoxes, RandomMasksMatchFloodFill) {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution coin(0.35);
  for (int i = 0; i < 25; ++i) {
    const std::size_t w = 5 + i, h = 30 - i;
    BinaryMask m(w, h);
    for (auto& v : m.data) v = coin(rng);
    const auto got = connected_boxes(m, 1000000);
    const auto want = sorted_oracle_boxes(m);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      EXPECT_EQ(got[k], (Box{want[k].x0, want[k].y0, want[k].x1 - want[k].x0 + 1, want[k].y1 - want[k].y0 + 1}));
    }
    EXPECT_EQ(connected_boxes(m, 3).size(), std::min<std::size_t>(3, want.size()));
  }
}

// ---------------------------------------------------------------------------
// Summary message
// ---------------------------------------------------------------------------

TEST(Summary, MinimalMessageIsSmall) {
  SummaryMessage m;
  m.scene_id = "s";
  m.application = "clouds";
  m.produced_at = "2026-01-01T00:00:00Z";
  m.algorithm = "HOT(as-written)+Otsu";
  m.version = std::string(kVersion);
  const std::string text = serialize_summary(m);
  EXPECT_LT(text.size(), 512u);
  EXPECT_TRUE(nlohmann::json::accept(text));
  EXPECT_EQ(text.rfind("{\"scene_id\":", 0), 0u);
}

TEST(Summary, SixteenLargeBoxesFitTheCap) {
  SummaryMessage m;
  m.scene_id = std::string(64, 'x');
  m.application = "vegetation-sam";
  m.pixel_count = 4294967296ull;
  m.positive_count = 4294967295ull;
  m.positive_fraction = 0.1234567890123456789;
  m.threshold = -1.2345678901234567e-300;
  for (std::size_t i = 0; i < 16; ++i) {
    m.detection_boxes.push_back({65535 + i, 65535 + i, 65535, 65535});
  }
  m.produced_at = "2026-01-01T00:00:00Z";
  m.algorithm = "HOT(point-line)+Fixed";
  m.version = std::string(kVersion);
  EXPECT_LE(serialize_summary(m).size(), kMaxSummaryBytes);
}

TEST(Summary, RoundTripRecoversEveryField) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 50; ++i) {
    SummaryMessage m;
    m.scene_id = "scene-" + std::to_string(i) + "\"quoted\"";
    m.application = "mineral-rx";
    m.pixel_count = 1000 + i;
    m.positive_count = i;
    m.positive_fraction = static_cast<double>(i) / 1000.0;
    m.threshold = u(rng);
    for (int k = 0; k < i % 17; ++k) m.detection_boxes.push_back({std::size_t(k), std::size_t(2 * k), 1, 3});
    m.produced_at = "2026-10-15T12:00:00Z";
    m.algorithm = "RX+Otsu";
    m.version = std::string(kVersion);
    EXPECT_EQ(parse_summary(serialize_summary(m)), m);
  }
}

TEST(Summary, ParseAndEmitErrors) {
  EXPECT_THROW(parse_summary("{"), FormatError);
  EXPECT_THROW(parse_summary("{\"scene_id\": 3}"), FormatError);
  TempDir dir("sum");
  SummaryMessage m;
  m.scene_id = std::string(3000, 'x');
  EXPECT_THROW(emit_summary(m, dir / "s.json"), DataError);
  EXPECT_FALSE(fs::exists(dir / "s.json"));
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

TEST(Pipeline, CloudsLabelHazeQuadrant) {
  const RasterCube cube = synthetic::haze_scene(64, 64, 3);
  const PipelineResult r = run_pipeline(cube, config_for(Application::Clouds));
  EXPECT_NEAR(r.summary.positive_fraction, 0.25, 0.05);
  BinaryMask truth(64, 64);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) truth.data[y * 64 + x] = 1;
  EXPECT_GT(seg_metrics(r.mask, truth).positive_iou, 0.95);
  EXPECT_EQ(r.summary.positive_count, r.mask.positive_count());
  EXPECT_EQ(r.summary.algorithm, "HOT(as-written)+Otsu");
  EXPECT_TRUE(r.report["diagnostics"].contains("clear_sky_line"));
}

TEST(Pipeline, CloudsHoldUpOnLargerScenes) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const RasterCube cube = synthetic::haze_scene(128, 128, seed);
    const PipelineResult r = run_pipeline(cube, config_for(Application::Clouds));
    BinaryMask truth(128, 128);
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) truth.data[y * 128 + x] = 1;
    EXPECT_GT(seg_metrics(r.mask, truth).positive_iou, 0.95) << "seed " << seed;
  }
}

TEST(Pipeline, SurfaceWaterLabelsLeftHalf) {
  const RasterCube cube = synthetic::water_scene(40, 30, 4);
  const PipelineResult r = run_pipeline(cube, config_for(Application::SurfaceWater));
  for (std::size_t y = 0; y < 30; ++y)
    for (std::size_t x = 0; x < 40; ++x) EXPECT_EQ(r.mask.data[y * 40 + x], x < 20 ? 1 : 0);
  EXPECT_TRUE(r.report["diagnostics"].contains("stretch_quantiles"));
}

TEST(Pipeline, ThermalBandBounds) {
  const RasterCube cube = synthetic::hotspot_scene(32, 32, 5);
  PipelineConfig c = config_for(Application::Thermal);
  c.stretch_enabled = false;
  c.thermal_low = 0.9;
  const PipelineResult r = run_pipeline(cube, c);
  EXPECT_EQ(r.summary.positive_count, 18u);
  EXPECT_EQ(r.summary.detection_boxes.size(), 2u);
  EXPECT_EQ(r.summary.detection_boxes[0], (Box{8, 8, 3, 3}));
  EXPECT_EQ(r.summary.threshold, 0.9);
}

TEST(Pipeline, MatchedFilterFindsPlantedTargets) {
  const auto scene = synthetic::vegetation_scene(48, 48, 32, 10, 6);
  PipelineConfig c = config_for(Application::VegetationMF);
  c.target = scene.target;
  const PipelineResult r = run_pipeline(scene.cube, c);
  for (auto p : scene.planted) EXPECT_EQ(r.mask.data[p], 1);
  EXPECT_EQ(r.summary.positive_count, scene.planted.size());
}

TEST(Pipeline, MissingTargetFailsValidationBeforeWriting) {
  TempDir dir("val");
  const auto scene = synthetic::vegetation_scene(8, 8, 6, 2, 7);
  PipelineConfig c = config_for(Application::VegetationMF);
  c.output_dir = dir / "out";
  try {
    run_pipeline(scene.cube, c);
    FAIL() << "expected a configuration error";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "validate");
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Pipeline, FailedStageLeavesNoPartialOutputs) {
  TempDir dir("iso");
  fs::create_directories(dir / "out" / "summary.json");  // blocks the summary write
  PipelineConfig c = config_for(Application::SurfaceWater);
  c.output_dir = dir / "out";
  try {
    run_pipeline(synthetic::water_scene(16, 16, 8), c);
    FAIL() << "expected a write failure";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "write");
  }
  EXPECT_EQ(testutil::files_in(dir / "out"), (std::vector<std::string>{(dir / "out" / "summary.json").string()}));

  // A failing score stage never creates the directory.
  const RasterCube flat(4, 4, 4, std::vector<float>(64, 0.2f), synthetic::four_band_meta());
  PipelineConfig clouds = config_for(Application::Clouds);
  clouds.output_dir = dir / "clouds";
  try {
    run_pipeline(flat, clouds);
    FAIL() << "expected a data error";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "score");
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
  EXPECT_FALSE(fs::exists(dir / "clouds"));
}

TEST(Pipeline, RepeatedRunsAreBitIdentical) {
  TempDir dir("det");
  const auto scene = synthetic::mineral_scene(32, 32, 16, 6, 9);
  for (auto app : {Application::MineralSAM, Application::MineralMF, Application::MineralRX}) {
    PipelineConfig c = config_for(app);
    c.target = scene.target;
    c.output_dir = dir / "a";
    run_pipeline(scene.cube, c);
    c.output_dir = dir / "b";
    run_pipeline(scene.cube, c);
    for (const char* f : {PipelineOutputs::kMask, PipelineOutputs::kSummary, PipelineOutputs::kScores, "scores.bsq"}) {
      EXPECT_EQ(testutil::slurp(dir / "a" / f), testutil::slurp(dir / "b" / f)) << f;
    }
    auto ra = nlohmann::json::parse(testutil::slurp(dir / "a" / PipelineOutputs::kReport));
    auto rb = nlohmann::json::parse(testutil::slurp(dir / "b" / PipelineOutputs::kReport));
    ra.erase("timings_s");
    rb.erase("timings_s");
    EXPECT_EQ(ra, rb);
    EXPECT_LE(fs::file_size(dir / "a" / PipelineOutputs::kSummary), kMaxSummaryBytes);
  }
}

TEST(Pipeline, ApplicationNamesRoundTrip) {
  for (auto app : kAllApplications) EXPECT_EQ(parse_application(to_string(app)), app);
  EXPECT_FALSE(parse_application("fog").has_value());
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run_cli({"synth", "--kind", "water", "--width", "24", "--height", "16", "--out", path("water.json")}).code, 0);
    ASSERT_EQ(run_cli({"synth", "--kind", "vegetation", "--width", "20", "--height", "20", "--bands", "12", "--planted",
                   "5", "--out", path("veg.json"), "--library", path("lib.csv"), "--truth", path("veg.pgm")})
                  .code,
              0);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  TempDir dir_{"cli"};
};

TEST_F(Cli, LabelNdwiWritesScoresAndOptionalMask) {
  auto r = run_cli({"label", "ndwi", "--cube", path("water.json"), "--out", path("ndwi")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("ndwi.json")));
  EXPECT_FALSE(fs::exists(path("ndwi.pgm")));
  r = run_cli({"label", "ndwi", "--cube", path("water.json"), "--out", path("ndwi"), "--otsu"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_mask_pgm(path("ndwi.pgm")).positive_count(), 12u * 16u);
}

TEST_F(Cli, UnknownFlagIsUsageError) {
  const auto r = run_cli({"label", "ndwi", "--cube", path("water.json"), "--out", path("x"), "--bogus"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage:"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(fs::exists(path("x.json")));
}

TEST_F(Cli, MatchedFilterWithoutTargetNamesTheFlag) {
  const auto r = run_cli({"detect", "mf", "--cube", path("veg.json"), "--out", path("mf")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--target"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("mf.json")));
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run_cli({"stats", "--cube", path("missing.json")}).code, 2);
  testutil::write(path("bad.json"), "{}");
  EXPECT_EQ(run_cli({"stats", "--cube", path("bad.json")}).code, 2);
  // Vegetation cube has no Green/NIR roles.
  EXPECT_EQ(run_cli({"label", "ndwi", "--cube", path("veg.json"), "--out", path("n")}).code, 2);
  EXPECT_FALSE(fs::exists(path("n.json")));
}

TEST_F(Cli, JsonOutputIsPureJson) {
  const std::vector<std::vector<std::string>> commands{
      {"stretch", "--cube", path("water.json"), "--out", path("st.json")},
      {"label", "ndwi", "--cube", path("water.json"), "--out", path("nd"), "--otsu"},
      {"label", "threshold", "--cube", path("water.json"), "--out", path("th"), "--band", "NIR", "--low", "0.2"},
      {"stats", "--cube", path("veg.json")},
      {"detect", "rx", "--cube", path("veg.json"), "--out", path("rx"), "--otsu"},
      {"detect", "sam", "--cube", path("veg.json"), "--out", path("sam"), "--target", "vegetation", "--library",
       path("lib.csv"), "--precision", "double"},
      {"binarize", "--scores", path("rx.json"), "--out", path("rxb.pgm"), "--otsu"},
      {"eval", "--pred", path("rx.pgm"), "--truth", path("veg.pgm")},
      {"compare-paths", "--cube", path("veg.json"), "--detector", "mf", "--target", "vegetation", "--library",
       path("lib.csv")},
      {"bench", "--width", "12", "--height", "12", "--bands", "6", "--reps", "3"},
      {"pipeline", "run", "--cube", path("water.json"), "--app", "surface-water", "--out-dir", path("run")},
      {"summary", "--in", path("run/summary.json")},
  };
  for (auto args : commands) {
    args.push_back("--json");
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, 0) << args[0] << ": " << r.err;
    EXPECT_TRUE(nlohmann::json::accept(r.out)) << args[0] << ": " << r.out;
  }
}

TEST_F(Cli, EvalPrintsMetricRows) {
  ASSERT_EQ(run_cli({"detect", "mf", "--cube", path("veg.json"), "--out", path("mf"), "--target", "vegetation",
                 "--library", path("lib.csv"), "--otsu"})
                .code,
            0);
  const auto r = run_cli({"eval", "--pred", path("mf.pgm"), "--truth", path("veg.pgm")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Accuracy     | 1.0000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Positive IoU | 1.0000"), std::string::npos);
  EXPECT_NE(r.out.find("Negative IoU | 1.0000"), std::string::npos);
}

TEST_F(Cli, HelpListsFlagsWithDefaults) {
  const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> cases{
      {{"stretch"}, {"--v-min", "--q-high", "[0.99]"}},
      {{"label", "ndwi"}, {"--otsu", "--bins", "[256]"}},
      {{"label", "hot"}, {"--mode", "[as-written]"}},
      {{"label", "threshold"}, {"--band", "[NIR]", "--low", "--high"}},
      {{"stats"}, {"--cube"}},
      {{"detect", "sam"}, {"--target", "--library", "--precision", "[single]"}},
      {{"detect", "mf"}, {"--target", "[single]"}},
      {{"detect", "rx"}, {"--precision"}},
      {{"binarize"}, {"--polarity", "[above]"}},
      {{"eval"}, {"--pred", "--truth"}},
      {{"compare-paths"}, {"--detector", "--bins", "[20]"}},
      {{"bench"}, {"--reps", "[5]", "--width", "[128]", "--bands", "[48]"}},
      {{"pipeline", "run"}, {"--app", "--jobs", "[1]", "--max-boxes", "[16]", "--stretch", "[auto]"}},
      {{"summary"}, {"--in"}},
      {{"synth"}, {"--kind", "[haze]"}},
  };
  for (auto [args, needles] : cases) {
    args.push_back("--help");
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, 0) << args[0];
    for (const auto& n : needles) EXPECT_NE(r.out.find(n), std::string::npos) << args[0] << " missing " << n;
  }
}

TEST_F(Cli, PipelineValidatesEveryCubeBeforeWriting) {
  const auto r = run_cli({"pipeline", "run", "--cube", path("water.json"), "--cube", path("veg.json"), "--app", "clouds",
                      "--out-dir", path("multi")});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(path("multi")));
}

TEST_F(Cli, PipelineRunsScenesConcurrently) {
  ASSERT_EQ(run_cli({"synth", "--kind", "water", "--width", "24", "--height", "16", "--seed", "2", "--out",
                 path("water2.json")})
                .code,
            0);
  const auto r = run_cli({"pipeline", "run", "--cube", path("water.json"), "--cube", path("water2.json"), "--app",
                      "surface-water", "--out-dir", path("multi"), "--jobs", "2", "--produced-at", "T"});
  EXPECT_EQ(r.code, 0) << r.err;
  for (const char* scene : {"water", "water2"}) {
    const auto summary = read_summary(path(std::string("multi/") + scene + "/summary.json"));
    EXPECT_EQ(summary.scene_id, scene);
    EXPECT_EQ(summary.positive_count, 12u * 16u);
  }
}

TEST_F(Cli, MissingSubcommandIsUsageError) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"detect"}).code, 1);
  EXPECT_EQ(run_cli({"pipeline", "run", "--cube", path("veg.json"), "--app", "fog", "--out-dir", path("o")}).code, 1);
}
