#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgespec/edgespec.hpp"

namespace edgespec::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

// Bad or inconsistent flags, detected before any output is written.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// <prefix>.json (+ .bsq payload) for score maps, <prefix>.pgm for masks.
struct OutputPrefix {
  fs::path base;

  explicit OutputPrefix(const std::string& out) : base(out) {
    if (base.extension() == ".json" || base.extension() == ".pgm") base.replace_extension();
  }
  fs::path header() const { return fs::path(base.string() + ".json"); }
  fs::path mask() const { return fs::path(base.string() + ".pgm"); }
};

inline BandSelector parse_band(const std::string& text) {
  if (auto role = parse_band_role(text)) return *role;
  std::size_t pos = 0;
  try {
    const auto index = std::stoull(text, &pos);
    if (pos == text.size()) return static_cast<std::size_t>(index);
  } catch (const std::exception&) {
  }
  throw UsageError("--band must be Blue, Green, Red, NIR, Other or a band index, got '" + text + "'");
}

inline void write_text(const fs::path& path, const std::string& text) {
  detail::write_file_bytes(path, std::span<const char>(text.data(), text.size()));
}

inline TargetSpectrum resolve_target(const std::string& library, const std::string& label, const RasterCube& cube) {
  const auto targets = load_spectral_library(library, cube.band_meta());
  return find_target(targets, label);
}

// All state for one invocation; options bind into these members.
struct Invocation {
  Invocation(std::ostream& o, std::ostream& e) : out(o), err(e) {}

  std::ostream& out;
  std::ostream& err;

  // shared
  std::string cube, out_path, target, library;
  bool json = false;
  bool otsu = false;
  std::size_t bins = 256;
  std::optional<double> threshold;

  // stretch
  double v_min = 0.0, v_max = 1.0, q_low = 0.01, q_high = 0.99;
  // hot
  std::string hot_mode = "as-written";
  // threshold labeling
  std::string band = "NIR";
  std::optional<double> low, high;
  // detect
  std::string precision = "single";
  // binarize
  std::string scores, polarity = "above";
  // eval
  std::string pred, truth;
  // compare-paths
  std::string path_a, path_b, detector;
  std::size_t error_bins = 20;
  // bench
  std::size_t reps = 5, width = 128, height = 128, bands = 48;
  std::uint64_t seed = 7;
  std::string application = "Vegetation";
  // pipeline
  std::vector<std::string> cubes;
  std::string app, out_dir, scene_id, stretch = "auto", produced_at;
  std::size_t max_boxes = 16, jobs = 1;
  // summary
  std::string in_path;
  // synth
  std::string kind = "haze", truth_out;
  std::size_t planted = 12;

  void emit_json(const ojson& j) const { out << j.dump(2) << '\n'; }
};

// ---------------------------------------------------------------------------

inline int cmd_stretch(Invocation& v) {
  const StretchParams params{v.v_min, v.v_max, v.q_low, v.q_high};
  try {
    params.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const RasterCube cube = load_cube(v.cube);
  std::vector<QuantilePair> q;
  const RasterCube stretched = stretch_cube(cube, params, &q);
  save_cube(stretched, v.out_path);
  ojson j;
  j["out"] = v.out_path;
  j["params"] = to_json(params);
  auto qs = ojson::array();
  for (const auto& p : q) qs.push_back({p.low, p.high});
  j["quantiles"] = qs;
  if (v.json) v.emit_json(j);
  else v.out << "stretched " << cube.bands() << " bands -> " << v.out_path << '\n';
  return kOk;
}

// Shared tail of label/detect: optional Otsu mask, score map, report.
inline int finish_scores(Invocation& v, const ScoreMap& scores, Polarity polarity, ojson j) {
  const OutputPrefix prefix(v.out_path);
  std::optional<BinaryMask> mask;
  if (v.otsu || v.threshold) {
    double t = 0.0;
    if (v.threshold) {
      t = *v.threshold;
      j["threshold"] = {{"method", "fixed"}, {"value", t}};
    } else {
      const OtsuResult r = otsu_threshold(scores, v.bins);
      t = r.threshold;
      j["otsu"] = to_json(r);
    }
    mask = binarize(scores, t, polarity);
  }
  save_score_map(scores, prefix.header());
  j["scores"] = prefix.header().string();
  j["flagged"] = scores.flagged;
  if (mask) {
    write_mask_pgm(*mask, prefix.mask());
    j["mask"] = prefix.mask().string();
    j["positive_count"] = mask->positive_count();
  }
  if (v.json) {
    v.emit_json(j);
  } else {
    v.out << "scores -> " << prefix.header().string() << '\n';
    if (mask) v.out << "mask -> " << prefix.mask().string() << " (" << mask->positive_count() << " positive)\n";
  }
  return kOk;
}

inline int cmd_ndwi(Invocation& v) {
  const RasterCube cube = load_cube(v.cube);
  ojson j;
  j["index"] = "NDWI";
  return finish_scores(v, ndwi(cube), Polarity::AboveIsOne, j);
}

inline int cmd_hot(Invocation& v) {
  const auto mode = parse_hot_mode(v.hot_mode);
  if (!mode) throw UsageError("--mode must be as-written or point-line");
  const RasterCube cube = load_cube(v.cube);
  const ClearSkyLine line = fit_clear_sky_line(cube);
  ojson j;
  j["index"] = "HOT";
  j["mode"] = v.hot_mode;
  j["clear_sky_line"] = to_json(line);
  return finish_scores(v, hot(cube, line, *mode), Polarity::AboveIsOne, j);
}

inline int cmd_threshold(Invocation& v) {
  if (!v.low && !v.high) throw UsageError("label threshold needs --low and/or --high");
  if (v.low && v.high && *v.low > *v.high) throw UsageError("--low must not exceed --high");
  const BandSelector band = parse_band(v.band);
  const RasterCube cube = load_cube(v.cube);
  const BinaryMask mask = band_threshold_label(cube, band, v.low, v.high);
  const OutputPrefix prefix(v.out_path);
  write_mask_pgm(mask, prefix.mask());
  ojson j;
  j["mask"] = prefix.mask().string();
  j["positive_count"] = mask.positive_count();
  j["pixel_count"] = mask.size();
  if (v.json) v.emit_json(j);
  else v.out << "mask -> " << prefix.mask().string() << " (" << mask.positive_count() << " positive)\n";
  return kOk;
}

inline ojson stats_json(const SceneStats& s) {
  ojson j = to_json(s);
  auto cov = ojson::array();
  for (Eigen::Index i = 0; i < s.covariance.rows(); ++i) {
    auto row = ojson::array();
    for (Eigen::Index k = 0; k < s.covariance.cols(); ++k) row.push_back(s.covariance(i, k));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  return j;
}

inline int cmd_stats(Invocation& v) {
  const RasterCube cube = load_cube(v.cube);
  const SceneStats stats = compute_scene_stats(cube);
  const ojson j = stats_json(stats);
  if (!v.out_path.empty()) write_text(v.out_path, j.dump(2) + "\n");
  if (v.json) {
    v.emit_json(j);
  } else {
    v.out << "pixels: " << stats.pixel_count << "  bands: " << stats.bands() << "  ridge: " << stats.ridge
          << "  condition: " << stats.condition_estimate() << '\n';
  }
  return kOk;
}

inline int cmd_detect(Invocation& v, DetectorKind kind) {
  const auto precision = parse_precision(v.precision);
  if (!precision) throw UsageError("--precision must be single or double");
  if (kind != DetectorKind::RX && v.target.empty()) {
    throw UsageError("--target is required for detect " + std::string(to_string(kind)));
  }
  if (!v.target.empty() && v.library.empty()) throw UsageError("--target requires --library");
  const RasterCube cube = load_cube(v.cube);
  std::optional<TargetSpectrum> target;
  if (!v.target.empty()) target = resolve_target(v.library, v.target, cube);
  std::optional<SceneStats> stats;
  ojson j;
  j["detector"] = std::string(to_string(kind));
  j["precision"] = v.precision;
  if (kind != DetectorKind::SAM) {
    stats = compute_scene_stats(cube);
    j["scene_stats"] = to_json(*stats);
  }
  if (target) j["target"] = target->label;
  const ScoreMap scores =
      detect_map(cube, kind, target ? &*target : nullptr, stats ? &*stats : nullptr, *precision);
  return finish_scores(v, scores, kind == DetectorKind::SAM ? Polarity::BelowIsOne : Polarity::AboveIsOne, j);
}

inline int cmd_binarize(Invocation& v) {
  if (v.otsu == v.threshold.has_value()) throw UsageError("binarize needs exactly one of --threshold or --otsu");
  if (v.polarity != "above" && v.polarity != "below") throw UsageError("--polarity must be above or below");
  const ScoreMap scores = load_score_map(v.scores);
  ojson j;
  double t = 0.0;
  if (v.threshold) {
    t = *v.threshold;
  } else {
    const OtsuResult r = otsu_threshold(scores, v.bins);
    j["otsu"] = to_json(r);
    t = r.threshold;
  }
  const BinaryMask mask = binarize(scores, t, v.polarity == "above" ? Polarity::AboveIsOne : Polarity::BelowIsOne);
  write_mask_pgm(mask, v.out_path);
  j["threshold"] = t;
  j["mask"] = v.out_path;
  j["positive_count"] = mask.positive_count();
  if (v.json) v.emit_json(j);
  else v.out << "mask -> " << v.out_path << " (" << mask.positive_count() << " positive, threshold " << t << ")\n";
  return kOk;
}

inline int cmd_eval(Invocation& v) {
  const BinaryMask pred = read_mask_pgm(v.pred);
  const BinaryMask truth = read_mask_pgm(v.truth);
  const SegMetrics m = seg_metrics(pred, truth);
  const ojson j = to_json(m);
  if (!v.out_path.empty()) write_text(v.out_path, j.dump(2) + "\n");
  if (v.json) {
    v.emit_json(j);
  } else {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", m.accuracy);
    v.out << "Accuracy     | " << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.4f", m.positive_iou);
    v.out << "Positive IoU | " << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.4f", m.negative_iou);
    v.out << "Negative IoU | " << buf << '\n';
  }
  return kOk;
}

inline int cmd_compare(Invocation& v) {
  const bool from_files = !v.path_a.empty() || !v.path_b.empty();
  const bool from_cube = !v.cube.empty();
  if (from_files == from_cube) throw UsageError("compare-paths needs either --a and --b, or --cube and --detector");
  if (from_files && (v.path_a.empty() || v.path_b.empty())) throw UsageError("compare-paths needs both --a and --b");
  ScoreMap a, b;
  ojson j;
  if (from_files) {
    a = load_score_map(v.path_a);
    b = load_score_map(v.path_b);
  } else {
    const auto kind = parse_detector(v.detector);
    if (!kind) throw UsageError("--detector must be sam, mf or rx");
    if (*kind != DetectorKind::RX && v.target.empty()) {
      throw UsageError("--target is required for " + std::string(to_string(*kind)));
    }
    if (!v.target.empty() && v.library.empty()) throw UsageError("--target requires --library");
    const RasterCube cube = load_cube(v.cube);
    std::optional<TargetSpectrum> target;
    if (!v.target.empty()) target = resolve_target(v.library, v.target, cube);
    std::optional<SceneStats> stats;
    if (*kind != DetectorKind::SAM) stats = compute_scene_stats(cube);
    const TargetSpectrum* tp = target ? &*target : nullptr;
    const SceneStats* sp = stats ? &*stats : nullptr;
    a = detect_map(cube, *kind, tp, sp, Precision::Single);
    b = detect_map(cube, *kind, tp, sp, Precision::Double);
    j["detector"] = std::string(to_string(*kind));
    j["paths"] = {"single", "double"};
  }
  const ErrorReport r = compare_paths(a, b, v.error_bins);
  const ojson rj = to_json(r);
  for (const auto& [key, value] : rj.items()) j[key] = value;
  if (!v.out_path.empty()) write_text(v.out_path, j.dump(2) + "\n");
  if (v.json) v.emit_json(j);
  else v.out << render_histogram(r);
  return kOk;
}

inline int cmd_bench(Invocation& v) {
  if (v.reps < 3) throw UsageError("--reps must be at least 3");
  if (!v.target.empty() && v.library.empty()) throw UsageError("--target requires --library");
  std::vector<BenchRecord> records;
  if (!v.cube.empty()) {
    const RasterCube cube = load_cube(v.cube);
    std::optional<TargetSpectrum> target;
    if (!v.target.empty()) {
      target = resolve_target(v.library, v.target, cube);
    } else {
      // Without a library, the first valid pixel stands in for the target.
      for (std::size_t p = 0; p < cube.pixel_count() && !target; ++p) {
        if (cube.is_valid(p)) target = TargetSpectrum{"pixel-" + std::to_string(p), cube.spectrum(p), v.cube};
      }
      if (!target) throw DataError("cube has no valid pixels");
    }
    records = bench_detectors(cube, *target, v.application, v.reps);
  } else {
    if (v.width < 1 || v.height < 1 || v.bands < 1) throw UsageError("bench dimensions must be positive");
    const std::size_t planted = v.width * v.height / 100 + 1;
    const auto veg = synthetic::vegetation_scene(v.width, v.height, v.bands, planted, v.seed);
    records = bench_detectors(veg.cube, veg.target, "Vegetation", v.reps);
    const auto min = synthetic::mineral_scene(v.width, v.height, v.bands, planted, v.seed + 1);
    for (auto& r : bench_detectors(min.cube, min.target, "Mineral", v.reps)) records.push_back(std::move(r));
  }
  auto rows = ojson::array();
  for (const auto& r : records) rows.push_back(to_json(r));
  ojson j;
  j["columns"] = bench_table_columns();
  j["rows"] = rows;
  if (!v.out_path.empty()) write_text(v.out_path, j.dump(2) + "\n");
  if (v.json) v.emit_json(j);
  else v.out << render_bench_table(records);
  return kOk;
}

inline int cmd_pipeline(Invocation& v) {
  const auto app = parse_application(v.app);
  if (!app) throw UsageError("unknown --app '" + v.app + "'");
  const auto detector = detector_of(*app);
  if (detector && *detector != DetectorKind::RX && v.target.empty()) {
    throw UsageError("--target is required for --app " + v.app);
  }
  if (!v.target.empty() && v.library.empty()) throw UsageError("--target requires --library");
  if (*app == Application::Thermal && !v.low && !v.high) throw UsageError("--app thermal needs --low and/or --high");
  if (v.cubes.size() > 1 && !v.scene_id.empty()) throw UsageError("--scene-id only applies to a single --cube");
  if (v.jobs < 1) throw UsageError("--jobs must be at least 1");
  const auto hot_mode = parse_hot_mode(v.hot_mode);
  if (!hot_mode) throw UsageError("--hot-mode must be as-written or point-line");
  const auto precision = parse_precision(v.precision);
  if (!precision) throw UsageError("--precision must be single or double");

  PipelineConfig base;
  base.application = *app;
  base.stretch = StretchParams{v.v_min, v.v_max, v.q_low, v.q_high};
  if (v.stretch == "on") base.stretch_enabled = true;
  else if (v.stretch == "off") base.stretch_enabled = false;
  base.fixed_threshold = v.threshold;
  base.otsu_bins = v.bins;
  base.hot_mode = *hot_mode;
  base.precision = *precision;
  base.thermal_band = parse_band(v.band);
  base.thermal_low = v.low;
  base.thermal_high = v.high;
  base.max_boxes = v.max_boxes;
  if (!v.produced_at.empty()) base.produced_at = v.produced_at;

  // Load and validate every scene before any output is written.
  struct Job {
    RasterCube cube;
    PipelineConfig config;
  };
  std::vector<Job> jobs;
  for (const auto& path : v.cubes) {
    RasterCube cube = load_cube(path);
    PipelineConfig config = base;
    config.scene_id = v.scene_id.empty() ? fs::path(path).stem().string() : v.scene_id;
    config.output_dir = v.cubes.size() == 1 ? fs::path(v.out_dir) : fs::path(v.out_dir) / config.scene_id;
    if (!v.target.empty()) config.target = resolve_target(v.library, v.target, cube);
    try {
      validate_config(config, cube);
    } catch (const ConfigError& e) {
      throw UsageError(path + ": " + e.what());
    }
    jobs.push_back(Job{std::move(cube), std::move(config)});
  }

  std::vector<std::optional<PipelineResult>> results(jobs.size());
  std::vector<std::string> failures(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_pipeline(jobs[i].cube, jobs[i].config);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(v.jobs, jobs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int code = kOk;
  auto rows = ojson::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!failures[i].empty()) {
      v.err << "error: " << v.cubes[i] << ": " << failures[i] << '\n';
      code = kData;
      continue;
    }
    const auto& r = *results[i];
    ojson row;
    row["scene_id"] = r.summary.scene_id;
    row["output_dir"] = jobs[i].config.output_dir.string();
    row["summary"] = to_json(r.summary);
    rows.push_back(row);
    if (!v.json) {
      v.out << r.summary.scene_id << ": " << r.summary.positive_count << "/" << r.summary.pixel_count
            << " positive (" << r.summary.algorithm << ", threshold " << r.summary.threshold << ") -> "
            << jobs[i].config.output_dir.string() << '\n';
    }
  }
  if (v.json) v.emit_json(ojson{{"runs", rows}});
  return code;
}

inline int cmd_summary(Invocation& v) {
  const SummaryMessage m = read_summary(v.in_path);
  const std::string canonical = serialize_summary(m);
  if (canonical.size() > kMaxSummaryBytes) throw DataError("summary exceeds " + std::to_string(kMaxSummaryBytes) + " bytes");
  if (v.json) {
    v.out << canonical << '\n';
    return kOk;
  }
  v.out << "scene      " << m.scene_id << '\n'
        << "application " << m.application << '\n'
        << "positive   " << m.positive_count << " / " << m.pixel_count << " (" << m.positive_fraction << ")\n"
        << "threshold  " << m.threshold << '\n'
        << "algorithm  " << m.algorithm << "  version " << m.version << '\n'
        << "produced   " << m.produced_at << '\n'
        << "boxes      " << m.detection_boxes.size() << '\n';
  for (const auto& b : m.detection_boxes) v.out << "  x=" << b.x << " y=" << b.y << " w=" << b.w << " h=" << b.h << '\n';
  v.out << "bytes      " << canonical.size() << '\n';
  return kOk;
}

inline int cmd_synth(Invocation& v) {
  if (v.width < 1 || v.height < 1 || v.bands < 1) throw UsageError("synth dimensions must be positive");
  std::optional<RasterCube> cube;
  std::optional<BinaryMask> truth;
  std::optional<TargetSpectrum> target;
  const std::size_t w = v.width, h = v.height;
  if (v.kind == "haze") {
    cube = synthetic::haze_scene(w, h, v.seed);
    truth = BinaryMask(w, h);
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t x = 0; x < w / 2; ++x) truth->data[y * w + x] = 1;
  } else if (v.kind == "water") {
    cube = synthetic::water_scene(w, h, v.seed);
    truth = BinaryMask(w, h);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w / 2; ++x) truth->data[y * w + x] = 1;
  } else if (v.kind == "hotspot") {
    cube = synthetic::hotspot_scene(w, h, v.seed);
  } else if (v.kind == "vegetation" || v.kind == "mineral") {
    auto scene = v.kind == "vegetation" ? synthetic::vegetation_scene(w, h, v.bands, v.planted, v.seed)
                                        : synthetic::mineral_scene(w, h, v.bands, v.planted, v.seed);
    truth = BinaryMask(w, h);
    for (auto p : scene.planted) truth->data[p] = 1;
    cube = std::move(scene.cube);
    target = std::move(scene.target);
  } else if (v.kind == "uniform") {
    cube = synthetic::uniform_cube(w, h, v.bands, v.seed);
  } else {
    throw UsageError("--kind must be haze, water, hotspot, vegetation, mineral or uniform");
  }
  save_cube(*cube, v.out_path);
  ojson j;
  j["cube"] = v.out_path;
  if (!v.truth_out.empty() && truth) {
    write_mask_pgm(*truth, v.truth_out);
    j["truth"] = v.truth_out;
  }
  if (!v.library.empty() && target) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "label,wavelength_nm,value\n";
    for (std::size_t b = 0; b < cube->bands(); ++b) {
      csv << target->label << ',' << *cube->band_meta()[b].wavelength_nm << ',' << target->spectrum[b] << '\n';
    }
    write_text(v.library, csv.str());
    j["library"] = v.library;
    j["target"] = target->label;
  }
  if (v.json) v.emit_json(j);
  else v.out << "cube -> " << v.out_path << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Invocation v(out, err);
  CLI::App app{"edgespec: onboard-style spectral analysis and automated labeling", "edgespec"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  auto add_cube = [&](CLI::App* c) { c->add_option("--cube", v.cube, "Input cube header (JSON)")->required(); };
  auto add_json = [&](CLI::App* c) { c->add_flag("--json", v.json, "Print machine-readable JSON on stdout"); };
  auto add_otsu = [&](CLI::App* c) {
    c->add_flag("--otsu", v.otsu, "Also write an Otsu-thresholded mask <out>.pgm");
    c->add_option("--threshold", v.threshold, "Fixed threshold for the mask instead of Otsu");
    c->add_option("--bins", v.bins, "Otsu histogram bins")->check(CLI::Range(2, 1 << 20));
  };

  auto* stretch = app.add_subcommand("stretch", "Per-band quantile stretch of a cube");
  add_cube(stretch);
  stretch->add_option("--out", v.out_path, "Output cube header")->required();
  stretch->add_option("--v-min", v.v_min, "Lower end of the output range");
  stretch->add_option("--v-max", v.v_max, "Upper end of the output range");
  stretch->add_option("--q-low", v.q_low, "Lower quantile fraction");
  stretch->add_option("--q-high", v.q_high, "Upper quantile fraction");
  add_json(stretch);

  auto* label = app.add_subcommand("label", "Automated labels: ndwi, hot, threshold");
  label->require_subcommand(1);
  auto* ndwi_cmd = label->add_subcommand("ndwi", "NDWI score map (+ Otsu water mask)");
  add_cube(ndwi_cmd);
  ndwi_cmd->add_option("--out", v.out_path, "Output prefix: <out>.json score map, <out>.pgm mask")->required();
  add_otsu(ndwi_cmd);
  add_json(ndwi_cmd);
  auto* hot_cmd = label->add_subcommand("hot", "Clear-sky line fit and HOT score map (+ Otsu cloud mask)");
  add_cube(hot_cmd);
  hot_cmd->add_option("--out", v.out_path, "Output prefix: <out>.json score map, <out>.pgm mask")->required();
  hot_cmd->add_option("--mode", v.hot_mode, "HOT formula: as-written or point-line");
  add_otsu(hot_cmd);
  add_json(hot_cmd);
  auto* thr_cmd = label->add_subcommand("threshold", "Band-threshold mask (thermal activity)");
  add_cube(thr_cmd);
  thr_cmd->add_option("--out", v.out_path, "Output prefix: <out>.pgm mask")->required();
  thr_cmd->add_option("--band", v.band, "Band role or index");
  thr_cmd->add_option("--low", v.low, "Inclusive lower bound");
  thr_cmd->add_option("--high", v.high, "Inclusive upper bound");
  add_json(thr_cmd);

  auto* stats_cmd = app.add_subcommand("stats", "Scene mean, covariance and factorization diagnostics");
  add_cube(stats_cmd);
  stats_cmd->add_option("--out", v.out_path, "Optional JSON output file");
  add_json(stats_cmd);

  auto* detect = app.add_subcommand("detect", "Spectral detector score maps: sam, mf, rx");
  detect->require_subcommand(1);
  std::vector<std::pair<CLI::App*, DetectorKind>> detect_cmds;
  for (auto kind : {DetectorKind::SAM, DetectorKind::MF, DetectorKind::RX}) {
    std::string name(to_string(kind));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    auto* c = detect->add_subcommand(name, std::string(to_string(kind)) + " score map");
    add_cube(c);
    c->add_option("--out", v.out_path, "Output prefix: <out>.json score map, <out>.pgm mask")->required();
    if (kind != DetectorKind::RX) c->add_option("--target", v.target, "Target label in the spectral library");
    if (kind != DetectorKind::RX) c->add_option("--library", v.library, "Spectral library CSV");
    c->add_option("--precision", v.precision, "Kernel precision: single or double");
    add_otsu(c);
    add_json(c);
    detect_cmds.emplace_back(c, kind);
  }

  auto* bin_cmd = app.add_subcommand("binarize", "Threshold a score map into a PGM mask");
  bin_cmd->add_option("--scores", v.scores, "Score map header")->required();
  bin_cmd->add_option("--out", v.out_path, "Output mask (PGM)")->required();
  bin_cmd->add_option("--threshold", v.threshold, "Fixed threshold");
  bin_cmd->add_flag("--otsu", v.otsu, "Use Otsu's threshold");
  bin_cmd->add_option("--bins", v.bins, "Otsu histogram bins")->check(CLI::Range(2, 1 << 20));
  bin_cmd->add_option("--polarity", v.polarity, "above: score > t is 1; below: score < t is 1");
  add_json(bin_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Accuracy and IoU of a predicted mask against a reference");
  eval_cmd->add_option("--pred", v.pred, "Predicted mask (PGM)")->required();
  eval_cmd->add_option("--truth", v.truth, "Reference mask (PGM)")->required();
  eval_cmd->add_option("--out", v.out_path, "Optional JSON output file");
  add_json(eval_cmd);

  auto* cmp_cmd = app.add_subcommand("compare-paths", "Error statistics between two score maps");
  cmp_cmd->add_option("--a", v.path_a, "First score map header");
  cmp_cmd->add_option("--b", v.path_b, "Second score map header");
  cmp_cmd->add_option("--cube", v.cube, "Cube to score in single and double precision");
  cmp_cmd->add_option("--detector", v.detector, "sam, mf or rx (with --cube)");
  cmp_cmd->add_option("--target", v.target, "Target label (with --cube, sam/mf)");
  cmp_cmd->add_option("--library", v.library, "Spectral library CSV");
  cmp_cmd->add_option("--bins", v.error_bins, "Error histogram bins")->check(CLI::Range(1, 1 << 20));
  cmp_cmd->add_option("--out", v.out_path, "Optional JSON output file");
  add_json(cmp_cmd);

  auto* bench_cmd = app.add_subcommand("bench", "Model size and single-input execution time of SAM/MF/RX");
  bench_cmd->add_option("--cube", v.cube, "Cube to benchmark (default: synthetic vegetation and mineral scenes)");
  bench_cmd->add_option("--target", v.target, "Target label in the spectral library");
  bench_cmd->add_option("--library", v.library, "Spectral library CSV");
  bench_cmd->add_option("--application", v.application, "Application column label (with --cube)");
  bench_cmd->add_option("--reps", v.reps, "Timed repetitions (median reported)");
  bench_cmd->add_option("--width", v.width, "Synthetic cube width");
  bench_cmd->add_option("--height", v.height, "Synthetic cube height");
  bench_cmd->add_option("--bands", v.bands, "Synthetic cube bands");
  bench_cmd->add_option("--seed", v.seed, "Synthetic cube seed");
  bench_cmd->add_option("--out", v.out_path, "Optional JSON output file");
  add_json(bench_cmd);

  auto* pipeline = app.add_subcommand("pipeline", "End-to-end scene processing");
  pipeline->require_subcommand(1);
  auto* run_cmd = pipeline->add_subcommand("run", "Scene -> mask, score map, summary message, report");
  run_cmd->add_option("--cube", v.cubes, "Input cube header(s)")->required();
  run_cmd->add_option("--app", v.app,
                      "clouds, surface-water, thermal, vegetation-sam|mf|rx, mineral-sam|mf|rx")->required();
  run_cmd->add_option("--out-dir", v.out_dir, "Output directory (one subdirectory per scene when several)")->required();
  run_cmd->add_option("--scene-id", v.scene_id, "Scene id (default: cube file stem)");
  run_cmd->add_option("--target", v.target, "Target label (SAM/MF applications)");
  run_cmd->add_option("--library", v.library, "Spectral library CSV");
  run_cmd->add_option("--threshold", v.threshold, "Fixed threshold instead of Otsu");
  run_cmd->add_option("--bins", v.bins, "Otsu histogram bins")->check(CLI::Range(2, 1 << 20));
  run_cmd->add_option("--hot-mode", v.hot_mode, "HOT formula: as-written or point-line");
  run_cmd->add_option("--precision", v.precision, "Detector kernel precision: single or double");
  run_cmd->add_option("--band", v.band, "Thermal band role or index");
  run_cmd->add_option("--low", v.low, "Thermal inclusive lower bound");
  run_cmd->add_option("--high", v.high, "Thermal inclusive upper bound");
  run_cmd->add_option("--stretch", v.stretch, "Quantile stretch: auto, on or off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  run_cmd->add_option("--v-min", v.v_min, "Stretch output lower end");
  run_cmd->add_option("--v-max", v.v_max, "Stretch output upper end");
  run_cmd->add_option("--q-low", v.q_low, "Stretch lower quantile fraction");
  run_cmd->add_option("--q-high", v.q_high, "Stretch upper quantile fraction");
  run_cmd->add_option("--max-boxes", v.max_boxes, "Detection boxes kept in the summary");
  run_cmd->add_option("--jobs", v.jobs, "Scenes processed concurrently");
  run_cmd->add_option("--produced-at", v.produced_at, "Fixed summary timestamp (default: now, UTC)");
  add_json(run_cmd);

  auto* summary_cmd = app.add_subcommand("summary", "Validate and print a summary message");
  summary_cmd->add_option("--in", v.in_path, "summary.json")->required();
  add_json(summary_cmd);

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic demo scene");
  synth_cmd->add_option("--kind", v.kind, "haze, water, hotspot, vegetation, mineral or uniform");
  synth_cmd->add_option("--out", v.out_path, "Output cube header")->required();
  synth_cmd->add_option("--truth", v.truth_out, "Optional reference mask (PGM)");
  synth_cmd->add_option("--library", v.library, "Optional spectral library CSV with the planted target");
  synth_cmd->add_option("--width", v.width, "Width");
  synth_cmd->add_option("--height", v.height, "Height");
  synth_cmd->add_option("--bands", v.bands, "Bands (vegetation, mineral, uniform)");
  synth_cmd->add_option("--planted", v.planted, "Planted target pixels (vegetation, mineral)");
  synth_cmd->add_option("--seed", v.seed, "Random seed");
  add_json(synth_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); sub;
         sub = sub->get_subcommands().empty() ? nullptr : sub->get_subcommands().front()) {
      failing = sub;
    }
    err << failing->help();
    return kUsage;
  }

  try {
    if (stretch->parsed()) return cmd_stretch(v);
    if (ndwi_cmd->parsed()) return cmd_ndwi(v);
    if (hot_cmd->parsed()) return cmd_hot(v);
    if (thr_cmd->parsed()) return cmd_threshold(v);
    if (stats_cmd->parsed()) return cmd_stats(v);
    for (auto& [c, kind] : detect_cmds) {
      if (c->parsed()) return cmd_detect(v, kind);
    }
    if (bin_cmd->parsed()) return cmd_binarize(v);
    if (eval_cmd->parsed()) return cmd_eval(v);
    if (cmp_cmd->parsed()) return cmd_compare(v);
    if (bench_cmd->parsed()) return cmd_bench(v);
    if (run_cmd->parsed()) return cmd_pipeline(v);
    if (summary_cmd->parsed()) return cmd_summary(v);
    if (synth_cmd->parsed()) return cmd_synth(v);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  err << app.help();
  return kUsage;
}

}  // namespace edgespec::cli
