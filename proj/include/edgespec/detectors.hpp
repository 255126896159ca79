#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "edgespec/cube.hpp"
#include "edgespec/error.hpp"

namespace edgespec {

template <typename W>
using Vec = Eigen::Matrix<W, Eigen::Dynamic, 1>;
template <typename W>
using Mat = Eigen::Matrix<W, Eigen::Dynamic, Eigen::Dynamic>;

// Scene mean and covariance together with a lower-triangular factor L of the
// (possibly ridge-regularised) covariance: L * L^T = covariance + ridge * I.
struct SceneStats {
  Spectrum mean;
  Mat<double> covariance;
  Mat<double> factor;
  double ridge = 0.0;
  std::size_t pixel_count = 0;

  std::size_t bands() const noexcept { return mean.size(); }

  // Squared ratio of the largest to the smallest factor pivot; a cheap lower
  // bound on the 2-norm condition number of the regularised covariance.
  double condition_estimate() const {
    const auto d = factor.diagonal();
    const double r = d.maxCoeff() / d.minCoeff();
    return r * r;
  }

  // Factorises `covariance`, adding a ridge when the plain factorisation fails.
  static SceneStats from_moments(Spectrum mean, Mat<double> covariance, std::size_t pixel_count);
};

namespace detail {

inline constexpr double kPivotTolerance = 1e-12;
inline constexpr double kRidgeStart = 1e-6;
inline constexpr double kRidgeLimit = 1e-2;

inline bool try_cholesky(const Mat<double>& a, double scale, Mat<double>& lower) {
  Eigen::LLT<Mat<double>> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  const double pivot = lower.diagonal().minCoeff();
  return pivot > 0.0 && pivot * pivot > kPivotTolerance * scale;
}

}  // namespace detail

// Ridge schedule: lambda = 1e-6 * trace/B, x10 per retry up to 1e-2 * trace/B.
// A zero-trace covariance (constant scene) uses a unit scale instead.
inline SceneStats SceneStats::from_moments(Spectrum mean, Mat<double> covariance, std::size_t pixel_count) {
  const auto bands = static_cast<Eigen::Index>(mean.size());
  if (covariance.rows() != bands || covariance.cols() != bands) {
    throw DataError("covariance shape does not match the mean spectrum");
  }
  SceneStats stats;
  stats.mean = std::move(mean);
  stats.covariance = std::move(covariance);
  stats.pixel_count = pixel_count;

  double scale = stats.covariance.trace() / static_cast<double>(bands);
  if (!(scale > 0.0)) scale = 1.0;
  if (detail::try_cholesky(stats.covariance, scale, stats.factor)) return stats;

  for (double level = detail::kRidgeStart; level <= detail::kRidgeLimit * (1.0 + 1e-9); level *= 10.0) {
    const double ridge = level * scale;
    Mat<double> regularised = stats.covariance;
    regularised.diagonal().array() += ridge;
    if (detail::try_cholesky(regularised, scale, stats.factor)) {
      stats.ridge = ridge;
      return stats;
    }
  }
  throw DataError("covariance is not positive definite even with the largest ridge");
}

// Mean and population (1/N) covariance over valid pixels, accumulated in
// double in pixel order. `mask`, when non-empty, further restricts the pixels
// used (1 = include).
template <typename T>
SceneStats compute_scene_stats(const BasicCube<T>& cube, std::span<const std::uint8_t> mask = {}) {
  if (!mask.empty() && mask.size() != cube.pixel_count()) throw DataError("stats mask does not match the scene");
  std::vector<std::size_t> pixels;
  pixels.reserve(cube.pixel_count());
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    if (cube.is_valid(p) && (mask.empty() || mask[p])) pixels.push_back(p);
  }
  const std::size_t n = pixels.size();
  if (n < 2) throw DataError("scene statistics need at least 2 valid pixels");
  const std::size_t bands = cube.bands();

  Spectrum mean(bands, 0.0);
  std::vector<std::vector<double>> dev(bands, std::vector<double>(n));
  for (std::size_t b = 0; b < bands; ++b) {
    const auto plane = cube.band(b);
    double sum = 0.0;
    for (auto p : pixels) sum += static_cast<double>(plane[p]);
    mean[b] = sum / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) dev[b][i] = static_cast<double>(plane[pixels[i]]) - mean[b];
  }

  const auto nb = static_cast<Eigen::Index>(bands);
  Mat<double> cov(nb, nb);
  for (std::size_t i = 0; i < bands; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += dev[i][k] * dev[j][k];
      const double c = sum / static_cast<double>(n);
      cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
    }
  }
  return SceneStats::from_moments(std::move(mean), std::move(cov), n);
}

// ---------------------------------------------------------------------------
// Detector kernels. W is the working precision of the per-pixel arithmetic.
// ---------------------------------------------------------------------------

// Spectral angle in [0, pi]. Evaluated as 2 * atan2(|x|y| - y|x||, |x|y| + y|x||),
// which equals arccos(x.y / (|x| |y|)) but stays accurate near 0 and pi.
template <typename W>
W spectral_angle(std::span<const W> x, std::span<const W> y) {
  if (x.size() != y.size()) throw DataError("SAM inputs differ in length");
  W xx = 0, yy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == W(0) || yy == W(0)) throw DataError("SAM is undefined for a zero-norm spectrum");
  const W nx = std::sqrt(xx);
  const W ny = std::sqrt(yy);
  W diff = 0, sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const W u = x[i] * ny;
    const W v = y[i] * nx;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  return W(2) * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

inline double sam(std::span<const double> x, std::span<const double> y) { return spectral_angle<double>(x, y); }

// Solves L z = (x - mu) for the whitened deviation z.
template <typename W>
class Whitener {
 public:
  explicit Whitener(const SceneStats& stats)
      : mean_(Eigen::Map<const Vec<double>>(stats.mean.data(), static_cast<Eigen::Index>(stats.mean.size()))
                  .template cast<W>()),
        lower_(stats.factor.template cast<W>()) {}

  std::size_t bands() const noexcept { return static_cast<std::size_t>(mean_.size()); }

  Vec<W> whiten(std::span<const W> x) const {
    if (x.size() != bands()) throw DataError("spectrum length does not match scene statistics");
    Vec<W> z = Eigen::Map<const Vec<W>>(x.data(), mean_.size()) - mean_;
    lower_.template triangularView<Eigen::Lower>().solveInPlace(z);
    return z;
  }

  const Vec<W>& mean() const noexcept { return mean_; }
  const Mat<W>& lower() const noexcept { return lower_; }

 private:
  Vec<W> mean_;
  Mat<W> lower_;
};

// (x - mu)^T Sigma^-1 (x - mu) = |L^-1 (x - mu)|^2
template <typename W>
class RxDetector {
 public:
  explicit RxDetector(const SceneStats& stats) : whitener_(stats) {}
  W operator()(std::span<const W> x) const { return whitener_.whiten(x).squaredNorm(); }

 private:
  Whitener<W> whitener_;
};

// (t - mu)^T Sigma^-1 (x - mu) / (t - mu)^T Sigma^-1 (t - mu)
//
// The filter vector w = Sigma^-1 (t - mu) / denom is formed once with a
// forward and a backward triangular solve, so each pixel costs one dot
// product.
template <typename W>
class MatchedFilter {
 public:
  MatchedFilter(const SceneStats& stats, std::span<const double> target) {
    if (target.size() != stats.bands()) throw DataError("target length does not match scene statistics");
    const Whitener<double> whitener(stats);
    Vec<double> zt = whitener.whiten(target);
    const double denom = zt.squaredNorm();
    if (!(denom > 0.0)) throw DataError("matched filter undefined: target equals the scene mean");
    stats.factor.triangularView<Eigen::Lower>().transpose().solveInPlace(zt);
    filter_ = (zt / denom).template cast<W>();
    mean_ = whitener.mean().template cast<W>();
  }

  W operator()(std::span<const W> x) const {
    if (x.size() != static_cast<std::size_t>(mean_.size())) throw DataError("spectrum length does not match filter");
    return filter_.dot(Eigen::Map<const Vec<W>>(x.data(), mean_.size()) - mean_);
  }

 private:
  Vec<W> filter_;
  Vec<W> mean_;
};

inline double rx(std::span<const double> x, const SceneStats& stats) { return RxDetector<double>(stats)(x); }

// Point evaluation with two independent triangular solves, numerator and
// denominator from the same whitened target.
inline double mf(std::span<const double> x, std::span<const double> target, const SceneStats& stats) {
  const Whitener<double> whitener(stats);
  const Vec<double> zt = whitener.whiten(target);
  const double denom = zt.squaredNorm();
  if (!(denom > 0.0)) throw DataError("matched filter undefined: target equals the scene mean");
  return zt.dot(whitener.whiten(x)) / denom;
}

inline double mf(std::span<const double> x, const TargetSpectrum& target, const SceneStats& stats) {
  return mf(x, std::span<const double>(target.spectrum), stats);
}

// ---------------------------------------------------------------------------
// Score maps
// ---------------------------------------------------------------------------

enum class DetectorKind { SAM, MF, RX };
enum class Precision { Single, Double };

inline std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::SAM: return "SAM";
    case DetectorKind::MF: return "MF";
    case DetectorKind::RX: return "RX";
  }
  return "RX";
}

inline std::optional<DetectorKind> parse_detector(std::string_view text) {
  if (text == "sam" || text == "SAM") return DetectorKind::SAM;
  if (text == "mf" || text == "MF") return DetectorKind::MF;
  if (text == "rx" || text == "RX") return DetectorKind::RX;
  return std::nullopt;
}

inline std::string_view to_string(Precision p) { return p == Precision::Single ? "single" : "double"; }

inline std::optional<Precision> parse_precision(std::string_view text) {
  if (text == "single") return Precision::Single;
  if (text == "double") return Precision::Double;
  return std::nullopt;
}

inline ScoreKind score_kind_of(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::SAM: return ScoreKind::SAM;
    case DetectorKind::MF: return ScoreKind::MF;
    case DetectorKind::RX: return ScoreKind::RX;
  }
  return ScoreKind::RX;
}

// Per-pixel detector output with the kernels running in precision W. MF and
// RX compute scene statistics from the cube when none are given. Zero-norm
// pixels under SAM score pi and are counted in ScoreMap::flagged.
template <typename W, typename T>
ScoreMap detect_map_as(const BasicCube<T>& cube, DetectorKind kind, const TargetSpectrum* target,
                       const SceneStats* stats) {
  if ((kind == DetectorKind::SAM || kind == DetectorKind::MF) && !target) {
    throw ConfigError(std::string(to_string(kind)) + " needs a target spectrum");
  }
  if (target && target->spectrum.size() != cube.bands()) {
    throw DataError("target '" + target->label + "' has " + std::to_string(target->spectrum.size()) +
                    " values, scene has " + std::to_string(cube.bands()) + " bands");
  }
  std::optional<SceneStats> own_stats;
  if (kind != DetectorKind::SAM && !stats) {
    own_stats = compute_scene_stats(cube);
    stats = &*own_stats;
  }
  if (stats && stats->bands() != cube.bands()) throw DataError("scene statistics do not match the scene's bands");

  ScoreMap out{cube.width(), cube.height(), std::vector<double>(cube.pixel_count(), 0.0), score_kind_of(kind),
               cube.validity(), 0};
  std::vector<W> pixel(cube.bands());
  auto for_each_pixel = [&](auto&& score) {
    for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
      if (!cube.is_valid(p)) continue;
      for (std::size_t b = 0; b < cube.bands(); ++b) pixel[b] = static_cast<W>(cube.band(b)[p]);
      out.data[p] = static_cast<double>(score(std::span<const W>(pixel)));
    }
  };

  switch (kind) {
    case DetectorKind::SAM: {
      std::vector<W> t(target->spectrum.begin(), target->spectrum.end());
      bool target_nonzero = false;
      for (auto v : t) target_nonzero = target_nonzero || v != W(0);
      if (!target_nonzero) throw DataError("SAM target '" + target->label + "' has zero norm");
      for_each_pixel([&](std::span<const W> x) -> W {
        for (auto v : x) {
          if (v != W(0)) return spectral_angle<W>(x, t);
        }
        ++out.flagged;
        return std::numbers::pi_v<W>;
      });
      break;
    }
    case DetectorKind::MF: {
      const MatchedFilter<W> filter(*stats, target->spectrum);
      for_each_pixel(filter);
      break;
    }
    case DetectorKind::RX: {
      const RxDetector<W> detector(*stats);
      for_each_pixel(detector);
      break;
    }
  }
  return out;
}

template <typename T>
ScoreMap detect_map(const BasicCube<T>& cube, DetectorKind kind, const TargetSpectrum* target = nullptr,
                    const SceneStats* stats = nullptr, Precision precision = Precision::Single) {
  if (precision == Precision::Single) return detect_map_as<float>(cube, kind, target, stats);
  return detect_map_as<double>(cube, kind, target, stats);
}

// ---------------------------------------------------------------------------
// Parameter blobs (what a detector would upload to the spacecraft)
// ---------------------------------------------------------------------------
//
// 16-byte header: "ESDP", u16 version, u16 detector kind, u32 bands,
// u32 number of f64 values; then little-endian f64 values:
//   SAM: target (B)
//   MF:  mean (B), covariance (B*B, row-major), target (B)
//   RX:  mean (B), covariance (B*B, row-major)

inline constexpr std::size_t kParamHeaderBytes = 16;

inline std::vector<std::uint8_t> serialize_detector_params(DetectorKind kind, const TargetSpectrum* target,
                                                           const SceneStats* stats) {
  std::vector<double> values;
  std::size_t bands = 0;
  if (kind != DetectorKind::SAM) {
    if (!stats) throw ConfigError(std::string(to_string(kind)) + " parameters need scene statistics");
    bands = stats->bands();
    values.insert(values.end(), stats->mean.begin(), stats->mean.end());
    for (Eigen::Index i = 0; i < stats->covariance.rows(); ++i) {
      for (Eigen::Index j = 0; j < stats->covariance.cols(); ++j) values.push_back(stats->covariance(i, j));
    }
  }
  if (kind != DetectorKind::RX) {
    if (!target) throw ConfigError(std::string(to_string(kind)) + " parameters need a target");
    if (bands != 0 && target->spectrum.size() != bands) throw DataError("target length does not match statistics");
    bands = target->spectrum.size();
    values.insert(values.end(), target->spectrum.begin(), target->spectrum.end());
  }

  std::vector<std::uint8_t> out;
  out.reserve(kParamHeaderBytes + 8 * values.size());
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
  };
  for (char c : std::string_view("ESDP")) out.push_back(static_cast<std::uint8_t>(c));
  put(1, 2);
  put(static_cast<std::uint64_t>(kind), 2);
  put(bands, 4);
  put(values.size(), 4);
  for (double v : values) put(std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

}  // namespace edgespec
