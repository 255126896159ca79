#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgespec/cube.hpp"
#include "edgespec/error.hpp"

namespace edgespec {

// ---------------------------------------------------------------------------
// Segmentation metrics
// ---------------------------------------------------------------------------

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const Confusion&) const = default;
};

struct SegMetrics {
  double accuracy = 0.0;
  double positive_iou = 0.0;  // label 1
  double negative_iou = 0.0;  // label 0
  Confusion confusion;
};

// IoU of a class absent from both masks is 1.
inline SegMetrics seg_metrics(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.width != truth.width || pred.height != truth.height) {
    throw DataError("prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                    ", reference is " + std::to_string(truth.width) + "x" + std::to_string(truth.height));
  }
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data[i] != 0;
    const bool t = truth.data[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  SegMetrics m;
  m.confusion = c;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.positive_iou = ratio(c.tp, c.tp + c.fp + c.fn);
  m.negative_iou = ratio(c.tn, c.tn + c.fn + c.fp);
  return m;
}

inline nlohmann::ordered_json to_json(const SegMetrics& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["positive_iou"] = m.positive_iou;
  j["negative_iou"] = m.negative_iou;
  j["confusion"] = {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}};
  return j;
}

// ---------------------------------------------------------------------------
// Two-path comparison
// ---------------------------------------------------------------------------

struct ErrorReport {
  double mean_abs_error = 0.0;
  double max_abs_error = 0.0;
  std::vector<double> bin_edges;  // bins + 1 edges over [0, max_abs_error]
  std::vector<std::uint64_t> counts;
  std::uint64_t n = 0;
};

// Elementwise |a - b| over pixels valid in both maps.
inline ErrorReport compare_paths(const ScoreMap& a, const ScoreMap& b, std::size_t bins = 20) {
  if (a.width != b.width || a.height != b.height || a.size() != b.size()) {
    throw DataError("compared score maps differ in size");
  }
  if (a.kind != b.kind) {
    throw DataError("compared score maps differ in kind: " + std::string(to_string(a.kind)) + " vs " +
                    std::string(to_string(b.kind)));
  }
  if (bins < 1) throw ConfigError("error histogram needs at least one bin");

  std::vector<double> errors;
  errors.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.is_valid(i) && b.is_valid(i)) errors.push_back(std::abs(a.data[i] - b.data[i]));
  }
  ErrorReport r;
  r.n = errors.size();
  r.counts.assign(bins, 0);
  double sum = 0.0;
  for (double e : errors) {
    sum += e;
    r.max_abs_error = std::max(r.max_abs_error, e);
  }
  if (r.n > 0) r.mean_abs_error = sum / static_cast<double>(r.n);
  // Mean of values all equal to the max may round just above it.
  r.mean_abs_error = std::min(r.mean_abs_error, r.max_abs_error);

  const double width = r.max_abs_error / static_cast<double>(bins);
  for (std::size_t k = 0; k <= bins; ++k) r.bin_edges.push_back(static_cast<double>(k) * width);
  r.bin_edges.back() = r.max_abs_error;
  for (double e : errors) {
    const std::size_t k =
        width > 0.0 ? std::min(bins - 1, static_cast<std::size_t>(e / width)) : 0;
    ++r.counts[k];
  }
  return r;
}

inline nlohmann::ordered_json to_json(const ErrorReport& r) {
  nlohmann::ordered_json j;
  j["mean_abs_error"] = r.mean_abs_error;
  j["max_abs_error"] = r.max_abs_error;
  j["n"] = r.n;
  j["histogram"] = {{"bin_edges", r.bin_edges}, {"counts", r.counts}};
  return j;
}

// Text histogram, one line per bin: "[lo, hi)  count  ####".
inline std::string render_histogram(const ErrorReport& r, std::size_t bar_width = 40) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "n = %llu  mean |a-b| = %.3e  max |a-b| = %.3e\n",
                static_cast<unsigned long long>(r.n), r.mean_abs_error, r.max_abs_error);
  os << line;
  const std::uint64_t peak = r.counts.empty() ? 0 : *std::max_element(r.counts.begin(), r.counts.end());
  for (std::size_t k = 0; k < r.counts.size(); ++k) {
    const auto bar = peak == 0 ? 0 : static_cast<std::size_t>(r.counts[k] * bar_width / peak);
    std::snprintf(line, sizeof line, "[%.3e, %.3e%c %10llu  ", r.bin_edges[k], r.bin_edges[k + 1],
                  k + 1 == r.counts.size() ? ']' : ')', static_cast<unsigned long long>(r.counts[k]));
    os << line << std::string(bar, '#') << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

struct BenchRecord {
  std::string application;
  std::string name;
  std::uint64_t artifact_bytes = 0;
  double single_input_seconds = 0.0;  // median over repetitions
  std::string inputs_shape;
  std::size_t repetitions = 0;
};

// Runs `op` once to warm up, then `repetitions` timed runs; reports the
// median wall time.
inline BenchRecord bench(std::string application, std::string name, const std::function<void()>& op,
                         std::size_t repetitions, std::uint64_t artifact_bytes, std::string inputs_shape) {
  if (repetitions < 3) throw ConfigError("bench needs at least 3 repetitions");
  op();
  std::vector<double> times;
  times.reserve(repetitions);
  for (std::size_t i = 0; i < repetitions; ++i) {
    const auto start = std::chrono::steady_clock::now();
    op();
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(stop - start).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  const double median = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  return BenchRecord{std::move(application), std::move(name), artifact_bytes, median, std::move(inputs_shape),
                     repetitions};
}

// "3 B", "18.4 KB", "4.5 MB" (1 KB = 1024 bytes).
inline std::string format_size(std::uint64_t bytes) {
  char buf[32];
  if (bytes < 1024) {
    std::snprintf(buf, sizeof buf, "%llu B", static_cast<unsigned long long>(bytes));
  } else if (bytes < 1024ull * 1024) {
    std::snprintf(buf, sizeof buf, "%.1f KB", static_cast<double>(bytes) / 1024.0);
  } else {
    std::snprintf(buf, sizeof buf, "%.1f MB", static_cast<double>(bytes) / (1024.0 * 1024.0));
  }
  return buf;
}

inline const std::vector<std::string>& bench_table_columns() {
  static const std::vector<std::string> columns{"Application", "Model", "Model Size", "Execution Time (s)"};
  return columns;
}

// Aligned plain-text table, one row per (application, model); the application
// name is printed only on the first row of its group.
inline std::string render_bench_table(const std::vector<BenchRecord>& records) {
  const auto& header = bench_table_columns();
  std::vector<std::vector<std::string>> rows;
  std::string previous;
  for (const auto& r : records) {
    char t[32];
    std::snprintf(t, sizeof t, "%.4f", r.single_input_seconds);
    rows.push_back({r.application == previous ? "" : r.application, r.name, format_size(r.artifact_bytes), t});
    previous = r.application;
  }
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& row : rows) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) os << " | ";
      os << cells[c] << std::string(widths[c] - cells[c].size(), ' ');
    }
    os << '\n';
  };
  emit(header);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) os << "-+-";
    os << std::string(widths[c], '-');
  }
  os << '\n';
  for (const auto& row : rows) emit(row);
  return os.str();
}

inline nlohmann::ordered_json to_json(const BenchRecord& r) {
  nlohmann::ordered_json j;
  j["application"] = r.application;
  j["model"] = r.name;
  j["artifact_bytes"] = r.artifact_bytes;
  j["model_size"] = format_size(r.artifact_bytes);
  j["execution_time_s"] = r.single_input_seconds;
  j["inputs_shape"] = r.inputs_shape;
  j["repetitions"] = r.repetitions;
  return j;
}

}  // namespace edgespec
