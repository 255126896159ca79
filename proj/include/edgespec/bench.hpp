#pragma once

#include <string>
#include <vector>

#include "edgespec/cube.hpp"
#include "edgespec/detectors.hpp"
#include "edgespec/evaluation.hpp"

namespace edgespec {

// One row per detector: full-scene SAM, MF and RX score maps, scene
// statistics included in the timed MF/RX runs. Model size is the serialized
// parameter blob.
template <typename T>
std::vector<BenchRecord> bench_detectors(const BasicCube<T>& cube, const TargetSpectrum& target,
                                         const std::string& application, std::size_t repetitions,
                                         Precision precision = Precision::Single) {
  const std::string shape = std::to_string(cube.width()) + "x" + std::to_string(cube.height()) + "x" +
                            std::to_string(cube.bands());
  const SceneStats stats = compute_scene_stats(cube);
  std::vector<BenchRecord> records;
  for (auto kind : {DetectorKind::SAM, DetectorKind::MF, DetectorKind::RX}) {
    const auto blob = serialize_detector_params(kind, kind == DetectorKind::RX ? nullptr : &target,
                                                kind == DetectorKind::SAM ? nullptr : &stats);
    auto op = [&] {
      const ScoreMap scores = detect_map(cube, kind, &target, nullptr, precision);
      volatile double sink = scores.data.empty() ? 0.0 : scores.data.front();
      (void)sink;
    };
    records.push_back(bench(application, std::string(to_string(kind)), op, repetitions, blob.size(), shape));
  }
  return records;
}

}  // namespace edgespec
