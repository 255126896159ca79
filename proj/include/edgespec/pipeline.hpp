#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgespec/cube.hpp"
#include "edgespec/detectors.hpp"
#include "edgespec/error.hpp"
#include "edgespec/evaluation.hpp"
#include "edgespec/io.hpp"
#include "edgespec/labeling.hpp"
#include "edgespec/preprocess.hpp"
#include "edgespec/version.hpp"

namespace edgespec {

enum class Application {
  Clouds,
  SurfaceWater,
  Thermal,
  VegetationSAM,
  VegetationMF,
  VegetationRX,
  MineralSAM,
  MineralMF,
  MineralRX,
};

inline constexpr Application kAllApplications[] = {
    Application::Clouds,        Application::SurfaceWater, Application::Thermal,
    Application::VegetationSAM, Application::VegetationMF, Application::VegetationRX,
    Application::MineralSAM,    Application::MineralMF,    Application::MineralRX};

inline std::string_view to_string(Application app) {
  switch (app) {
    case Application::Clouds: return "clouds";
    case Application::SurfaceWater: return "surface-water";
    case Application::Thermal: return "thermal";
    case Application::VegetationSAM: return "vegetation-sam";
    case Application::VegetationMF: return "vegetation-mf";
    case Application::VegetationRX: return "vegetation-rx";
    case Application::MineralSAM: return "mineral-sam";
    case Application::MineralMF: return "mineral-mf";
    case Application::MineralRX: return "mineral-rx";
  }
  return "clouds";
}

inline std::optional<Application> parse_application(std::string_view text) {
  for (auto app : kAllApplications) {
    if (text == to_string(app)) return app;
  }
  return std::nullopt;
}

inline std::optional<DetectorKind> detector_of(Application app) {
  switch (app) {
    case Application::VegetationSAM:
    case Application::MineralSAM: return DetectorKind::SAM;
    case Application::VegetationMF:
    case Application::MineralMF: return DetectorKind::MF;
    case Application::VegetationRX:
    case Application::MineralRX: return DetectorKind::RX;
    default: return std::nullopt;
  }
}

struct PipelineConfig {
  Application application = Application::Clouds;
  std::string scene_id = "scene";

  StretchParams stretch;
  // Unset: stretch for SurfaceWater and Thermal only. The stretch clamps the
  // darkest 1% of Blue to v_min, which collapses the clear-sky subset, and
  // library targets for the spectral detectors are in reflectance units.
  std::optional<bool> stretch_enabled;

  std::optional<TargetSpectrum> target;    // SAM / MF applications
  std::optional<double> fixed_threshold;   // replaces Otsu when set
  std::size_t otsu_bins = 256;
  HotMode hot_mode = HotMode::AsWritten;
  Precision precision = Precision::Single;

  // Thermal application: label 1 where the band lies in [low, high].
  BandSelector thermal_band = BandRole::NIR;
  std::optional<double> thermal_low;
  std::optional<double> thermal_high;

  std::size_t max_boxes = 16;
  std::filesystem::path output_dir;         // empty: nothing is written
  std::optional<std::string> produced_at;   // fixed timestamp, else now (UTC)

  bool stretch_applied() const {
    return stretch_enabled.value_or(application == Application::SurfaceWater || application == Application::Thermal);
  }
};

struct Box {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  std::size_t area() const noexcept { return w * h; }
  bool operator==(const Box&) const = default;
};

struct SummaryMessage {
  std::string scene_id;
  std::string application;
  std::uint64_t pixel_count = 0;
  std::uint64_t positive_count = 0;
  double positive_fraction = 0.0;
  double threshold = 0.0;
  std::vector<Box> detection_boxes;
  std::string produced_at;
  std::string algorithm;
  std::string version;

  bool operator==(const SummaryMessage&) const = default;
};

inline constexpr std::size_t kMaxSummaryBytes = 2048;

// Bounding boxes of the 4-connected components of label-1 pixels, largest box
// area first (ties: more pixels first, then scan order of the component's
// first pixel), truncated to `max_boxes`.
inline std::vector<Box> connected_boxes(const BinaryMask& mask, std::size_t max_boxes) {
  struct Component {
    Box box;
    std::size_t pixels = 0;
    std::size_t first = 0;
  };
  const std::size_t w = mask.width;
  const std::size_t h = mask.height;
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<Component> components;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask.data[start] || seen[start]) continue;
    std::size_t x0 = start % w, x1 = x0, y0 = start / w, y1 = y0, count = 0;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++count;
      const std::size_t x = p % w, y = p / w;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      auto visit = [&](std::size_t q) {
        if (mask.data[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    components.push_back({Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1}, count, start});
  }
  std::stable_sort(components.begin(), components.end(), [](const Component& a, const Component& b) {
    if (a.box.area() != b.box.area()) return a.box.area() > b.box.area();
    if (a.pixels != b.pixels) return a.pixels > b.pixels;
    return a.first < b.first;
  });
  std::vector<Box> boxes;
  for (std::size_t i = 0; i < components.size() && i < max_boxes; ++i) boxes.push_back(components[i].box);
  return boxes;
}

// ---------------------------------------------------------------------------
// Summary message
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const SummaryMessage& m) {
  nlohmann::ordered_json j;
  j["scene_id"] = m.scene_id;
  j["application"] = m.application;
  j["pixel_count"] = m.pixel_count;
  j["positive_count"] = m.positive_count;
  j["positive_fraction"] = m.positive_fraction;
  j["threshold"] = m.threshold;
  auto boxes = nlohmann::ordered_json::array();
  for (const auto& b : m.detection_boxes) boxes.push_back({b.x, b.y, b.w, b.h});
  j["detection_boxes"] = boxes;
  j["produced_at"] = m.produced_at;
  j["algorithm"] = m.algorithm;
  j["version"] = m.version;
  return j;
}

// Canonical form: compact JSON, keys in declaration order, UTF-8.
inline std::string serialize_summary(const SummaryMessage& m) { return to_json(m).dump(); }

inline void validate_summary(const SummaryMessage& m) {
  if (m.positive_count > m.pixel_count) throw DataError("summary positive_count exceeds pixel_count");
}

inline SummaryMessage parse_summary(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SummaryMessage m;
    m.scene_id = j.at("scene_id").get<std::string>();
    m.application = j.at("application").get<std::string>();
    m.pixel_count = j.at("pixel_count").get<std::uint64_t>();
    m.positive_count = j.at("positive_count").get<std::uint64_t>();
    m.positive_fraction = j.at("positive_fraction").get<double>();
    m.threshold = j.at("threshold").get<double>();
    for (const auto& b : j.at("detection_boxes")) {
      if (!b.is_array() || b.size() != 4) throw FormatError("detection box must be [x, y, w, h]");
      m.detection_boxes.push_back(
          Box{b[0].get<std::size_t>(), b[1].get<std::size_t>(), b[2].get<std::size_t>(), b[3].get<std::size_t>()});
    }
    m.produced_at = j.at("produced_at").get<std::string>();
    m.algorithm = j.at("algorithm").get<std::string>();
    m.version = j.at("version").get<std::string>();
    validate_summary(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed summary message: ") + e.what());
  }
}

inline SummaryMessage read_summary(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return parse_summary(std::string_view(bytes.data(), bytes.size()));
}

// Writes the canonical serialization; refuses anything over kMaxSummaryBytes.
inline void emit_summary(const SummaryMessage& m, const std::filesystem::path& path) {
  validate_summary(m);
  const std::string text = serialize_summary(m);
  if (text.size() > kMaxSummaryBytes) {
    throw DataError("summary is " + std::to_string(text.size()) + " bytes, limit is " +
                    std::to_string(kMaxSummaryBytes) + "; reduce max_boxes");
  }
  detail::write_file_bytes(path, std::span<const char>(text.data(), text.size()));
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const Error& cause)
      : Error(cause.kind(), "pipeline stage '" + stage + "': " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct PipelineResult {
  BinaryMask mask;
  ScoreMap scores;
  SummaryMessage summary;
  nlohmann::ordered_json report;
};

struct PipelineOutputs {
  static constexpr const char* kMask = "mask.pgm";
  static constexpr const char* kScores = "scores.json";
  static constexpr const char* kSummary = "summary.json";
  static constexpr const char* kReport = "report.json";
};

inline nlohmann::ordered_json to_json(const ClearSkyLine& line) {
  return {{"m", line.m}, {"b", line.b}, {"n_fit_points", line.n_fit_points},
          {"fit_residual_rms", line.fit_residual_rms}};
}

inline nlohmann::ordered_json to_json(const OtsuResult& r) {
  return {{"threshold", r.threshold},   {"inter_class_variance", r.inter_class_variance},
          {"histogram_bins", r.histogram_bins}, {"split_bin", r.split_bin},
          {"score_min", r.score_min},   {"score_max", r.score_max},
          {"degenerate", r.degenerate}};
}

inline nlohmann::ordered_json to_json(const SceneStats& s) {
  return {{"pixel_count", s.pixel_count},
          {"bands", s.bands()},
          {"mean", s.mean},
          {"ridge", s.ridge},
          {"condition_estimate", s.condition_estimate()}};
}

inline nlohmann::ordered_json to_json(const StretchParams& p) {
  return {{"v_min", p.v_min}, {"v_max", p.v_max}, {"q_low_fraction", p.q_low_fraction},
          {"q_high_fraction", p.q_high_fraction}};
}

inline nlohmann::ordered_json config_echo(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["application"] = std::string(to_string(c.application));
  j["scene_id"] = c.scene_id;
  j["stretch_applied"] = c.stretch_applied();
  j["stretch"] = to_json(c.stretch);
  j["target"] = c.target ? nlohmann::ordered_json(c.target->label) : nlohmann::ordered_json();
  j["fixed_threshold"] = c.fixed_threshold ? nlohmann::ordered_json(*c.fixed_threshold) : nlohmann::ordered_json();
  j["otsu_bins"] = c.otsu_bins;
  j["hot_mode"] = std::string(to_string(c.hot_mode));
  j["precision"] = std::string(to_string(c.precision));
  if (const auto* role = std::get_if<BandRole>(&c.thermal_band)) {
    j["thermal_band"] = std::string(to_string(*role));
  } else {
    j["thermal_band"] = std::get<std::size_t>(c.thermal_band);
  }
  j["thermal_low"] = c.thermal_low ? nlohmann::ordered_json(*c.thermal_low) : nlohmann::ordered_json();
  j["thermal_high"] = c.thermal_high ? nlohmann::ordered_json(*c.thermal_high) : nlohmann::ordered_json();
  j["max_boxes"] = c.max_boxes;
  return j;
}

// Checks everything that can be checked before touching pixel data.
template <typename T>
void validate_config(const PipelineConfig& c, const BasicCube<T>& cube) {
  if (c.stretch_applied()) c.stretch.validate();
  if (c.otsu_bins < 2) throw ConfigError("otsu_bins must be at least 2");
  if (c.scene_id.empty()) throw ConfigError("scene_id must not be empty");
  switch (c.application) {
    case Application::Clouds:
      cube.band_index(BandRole::Blue);
      cube.band_index(BandRole::Red);
      break;
    case Application::SurfaceWater:
      cube.band_index(BandRole::Green);
      cube.band_index(BandRole::NIR);
      break;
    case Application::Thermal:
      cube.resolve(c.thermal_band);
      if (!c.thermal_low && !c.thermal_high) throw ConfigError("thermal application needs a low and/or high bound");
      if (c.thermal_low && c.thermal_high && *c.thermal_low > *c.thermal_high) {
        throw ConfigError("thermal low bound exceeds high bound");
      }
      break;
    default: {
      const DetectorKind kind = *detector_of(c.application);
      if (kind != DetectorKind::RX) {
        if (!c.target || c.target->label.empty()) {
          throw ConfigError(std::string(to_string(c.application)) + " needs a target spectrum");
        }
        if (c.target->spectrum.size() != cube.bands()) {
          throw ConfigError("target '" + c.target->label + "' has " + std::to_string(c.target->spectrum.size()) +
                            " values, scene has " + std::to_string(cube.bands()) + " bands");
        }
      }
      break;
    }
  }
}

namespace detail {

// Removes files created by a failed run (and the output directory when the
// run created it).
class OutputTransaction {
 public:
  explicit OutputTransaction(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    std::error_code ec;
    if (!std::filesystem::exists(dir_)) {
      if (!std::filesystem::create_directories(dir_, ec)) {
        throw IoError("cannot create output directory " + dir_.string());
      }
      created_dir_ = true;
    }
  }
  OutputTransaction(const OutputTransaction&) = delete;
  OutputTransaction& operator=(const OutputTransaction&) = delete;

  ~OutputTransaction() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) {
      if (std::filesystem::is_regular_file(f, ec)) std::filesystem::remove(f, ec);
    }
    if (created_dir_) std::filesystem::remove(dir_, ec);
  }

  std::filesystem::path track(const std::filesystem::path& file) {
    const auto path = dir_ / file;
    files_.push_back(path);
    return path;
  }
  void commit() { committed_ = true; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

}  // namespace detail

// stretch -> score (index, HOT, band value or spectral detector) ->
// threshold (Otsu, fixed or band bounds) -> mask -> summary -> outputs.
template <typename T>
PipelineResult run_pipeline(const BasicCube<T>& input, const PipelineConfig& config) {
  nlohmann::ordered_json timings;
  nlohmann::ordered_json diagnostics;
  std::string stage;
  auto clock = std::chrono::steady_clock::now();
  auto begin_stage = [&](std::string name) {
    const auto now = std::chrono::steady_clock::now();
    if (!stage.empty()) timings[stage] = std::chrono::duration<double>(now - clock).count();
    clock = now;
    stage = std::move(name);
  };

  try {
    begin_stage("validate");
    validate_config(config, input);

    begin_stage("stretch");
    std::optional<BasicCube<T>> stretched;
    std::vector<QuantilePair> quantiles;
    if (config.stretch_applied()) stretched = stretch_cube(input, config.stretch, &quantiles);
    const BasicCube<T>& cube = stretched ? *stretched : input;
    if (stretched) {
      auto q = nlohmann::ordered_json::array();
      for (const auto& qp : quantiles) q.push_back({qp.low, qp.high});
      diagnostics["stretch_quantiles"] = q;
    }

    begin_stage("score");
    ScoreMap scores;
    Polarity polarity = Polarity::AboveIsOne;
    std::string algorithm;
    const auto detector = detector_of(config.application);
    switch (config.application) {
      case Application::Clouds: {
        const ClearSkyLine line = fit_clear_sky_line(cube);
        diagnostics["clear_sky_line"] = to_json(line);
        scores = hot(cube, line, config.hot_mode);
        algorithm = "HOT(" + std::string(to_string(config.hot_mode)) + ")";
        break;
      }
      case Application::SurfaceWater:
        scores = ndwi(cube);
        algorithm = "NDWI";
        break;
      case Application::Thermal: {
        const auto band = cube.band(cube.resolve(config.thermal_band));
        scores = ScoreMap{cube.width(), cube.height(), std::vector<double>(band.begin(), band.end()),
                          ScoreKind::BandValue, cube.validity(), 0};
        for (std::size_t p = 0; p < scores.size(); ++p) {
          if (!scores.is_valid(p)) scores.data[p] = 0.0;
        }
        algorithm = "BandThreshold";
        break;
      }
      default: {
        std::optional<SceneStats> stats;
        if (*detector != DetectorKind::SAM) {
          stats = compute_scene_stats(cube);
          diagnostics["scene_stats"] = to_json(*stats);
        }
        scores = detect_map(cube, *detector, config.target ? &*config.target : nullptr, stats ? &*stats : nullptr,
                            config.precision);
        polarity = *detector == DetectorKind::SAM ? Polarity::BelowIsOne : Polarity::AboveIsOne;
        algorithm = std::string(to_string(*detector));
        break;
      }
    }
    diagnostics["score_flagged"] = scores.flagged;

    begin_stage("threshold");
    double threshold = 0.0;
    nlohmann::ordered_json threshold_info;
    BinaryMask mask;
    if (config.application == Application::Thermal) {
      mask = band_threshold_label(cube, config.thermal_band, config.thermal_low, config.thermal_high);
      threshold = config.thermal_low ? *config.thermal_low : *config.thermal_high;
      threshold_info = {{"method", "band-bounds"},
                        {"low", config.thermal_low ? nlohmann::ordered_json(*config.thermal_low) : nlohmann::ordered_json()},
                        {"high", config.thermal_high ? nlohmann::ordered_json(*config.thermal_high) : nlohmann::ordered_json()}};
    } else {
      if (config.fixed_threshold) {
        threshold = *config.fixed_threshold;
        threshold_info = {{"method", "fixed"}, {"value", threshold}};
        algorithm += "+Fixed";
      } else {
        const OtsuResult otsu = otsu_threshold(scores, config.otsu_bins);
        diagnostics["otsu"] = to_json(otsu);
        threshold = otsu.threshold;
        threshold_info = {{"method", "otsu"}, {"value", threshold}};
        algorithm += "+Otsu";
      }
      threshold_info["polarity"] = polarity == Polarity::AboveIsOne ? "above-is-one" : "below-is-one";
      begin_stage("mask");
      mask = binarize(scores, threshold, polarity);
    }

    begin_stage("summary");
    SummaryMessage summary;
    summary.scene_id = config.scene_id;
    summary.application = std::string(to_string(config.application));
    summary.pixel_count = mask.size();
    summary.positive_count = mask.positive_count();
    summary.positive_fraction =
        static_cast<double>(summary.positive_count) / static_cast<double>(summary.pixel_count);
    summary.threshold = threshold;
    summary.detection_boxes = connected_boxes(mask, config.max_boxes);
    summary.produced_at = config.produced_at.value_or(utc_timestamp());
    summary.algorithm = algorithm;
    summary.version = std::string(kVersion);
    if (serialize_summary(summary).size() > kMaxSummaryBytes) {
      throw DataError("summary exceeds " + std::to_string(kMaxSummaryBytes) + " bytes; reduce max_boxes");
    }

    nlohmann::ordered_json report;
    report["scene_id"] = config.scene_id;
    report["version"] = std::string(kVersion);
    report["config"] = config_echo(config);
    report["scene"] = {{"width", input.width()},
                       {"height", input.height()},
                       {"bands", input.bands()},
                       {"valid_pixels", input.valid_count()}};
    report["threshold"] = threshold_info;
    report["diagnostics"] = diagnostics;
    report["summary"] = to_json(summary);

    begin_stage("write");
    if (!config.output_dir.empty()) {
      detail::OutputTransaction tx(config.output_dir);
      write_mask_pgm(mask, tx.track(PipelineOutputs::kMask));
      const auto scores_header = tx.track(PipelineOutputs::kScores);
      tx.track(payload_path_for(scores_header).filename());
      save_score_map(scores, scores_header);
      emit_summary(summary, tx.track(PipelineOutputs::kSummary));
      begin_stage("done");
      report["timings_s"] = timings;
      const std::string text = report.dump(2) + "\n";
      detail::write_file_bytes(tx.track(PipelineOutputs::kReport), std::span<const char>(text.data(), text.size()));
      tx.commit();
    } else {
      begin_stage("done");
      report["timings_s"] = timings;
    }
    return PipelineResult{std::move(mask), std::move(scores), std::move(summary), std::move(report)};
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(stage, e);
  }
}

}  // namespace edgespec
