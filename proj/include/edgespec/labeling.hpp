#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "edgespec/cube.hpp"
#include "edgespec/error.hpp"

namespace edgespec {

// ---------------------------------------------------------------------------
// NDWI
// ---------------------------------------------------------------------------

// (Green - NIR) / (Green + NIR) per pixel. A zero denominator scores 0 and is
// counted in ScoreMap::flagged. Scores are clamped to [-1, 1], which only
// matters for negative reflectances.
template <typename T>
ScoreMap ndwi(const BasicCube<T>& cube) {
  const auto green = cube.band_by_role(BandRole::Green);
  const auto nir = cube.band_by_role(BandRole::NIR);
  ScoreMap out{cube.width(), cube.height(), std::vector<double>(cube.pixel_count(), 0.0), ScoreKind::NDWI,
               cube.validity(), 0};
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    if (!cube.is_valid(p)) continue;
    const double g = static_cast<double>(green[p]);
    const double n = static_cast<double>(nir[p]);
    const double denom = g + n;
    if (denom == 0.0) {
      ++out.flagged;
      continue;
    }
    out.data[p] = std::clamp((g - n) / denom, -1.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clear-sky line and HOT
// ---------------------------------------------------------------------------

struct ClearSkyLine {
  double m = 0.0;
  double b = 0.0;
  std::size_t n_fit_points = 0;
  double fit_residual_rms = 0.0;
};

struct ClearSkyOptions {
  double subset_fraction = 0.0015;  // darkest-Blue share of valid pixels
  std::size_t bins = 20;
  std::size_t points_per_bin = 20;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
};

// Ordinary least squares y = slope * x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2) throw DataError("line fit needs at least 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw DataError("line fit is vertical: all regressor values are identical");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss += r * r;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

// Red = m * Blue + b fitted to presumed clear pixels:
//   1. keep the darkest `subset_fraction` of valid pixels by Blue
//      (count = max(2, floor(fraction * valid)), ties to lower pixel index);
//   2. split them into `bins` equal-width Blue bins over the subset's range;
//   3. keep the `points_per_bin` highest-Red points of each bin (ties to
//      lower pixel index);
//   4. least-squares fit Red on Blue over the kept points.
template <typename T>
ClearSkyLine fit_clear_sky_line(const BasicCube<T>& cube, const ClearSkyOptions& opts = {}) {
  const auto blue = cube.band_by_role(BandRole::Blue);
  const auto red = cube.band_by_role(BandRole::Red);
  if (opts.bins < 1 || opts.points_per_bin < 1) throw ConfigError("clear-sky fit needs bins and points per bin >= 1");

  std::vector<std::size_t> pixels;
  pixels.reserve(cube.valid_count());
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    if (cube.is_valid(p)) pixels.push_back(p);
  }
  const auto wanted = static_cast<std::size_t>(std::floor(opts.subset_fraction * static_cast<double>(pixels.size())));
  const std::size_t count = std::max<std::size_t>(2, wanted);
  if (pixels.size() < count) {
    throw DataError("clear-sky fit needs at least 2 valid pixels, scene has " + std::to_string(pixels.size()));
  }

  auto darker = [&](std::size_t a, std::size_t c) {
    return blue[a] < blue[c] || (blue[a] == blue[c] && a < c);
  };
  std::nth_element(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(count - 1), pixels.end(), darker);
  pixels.resize(count);
  std::sort(pixels.begin(), pixels.end(), darker);

  const double b_lo = static_cast<double>(blue[pixels.front()]);
  const double b_hi = static_cast<double>(blue[pixels.back()]);
  if (b_lo == b_hi) throw DataError("clear-sky fit is vertical: selected pixels share one Blue value");

  std::vector<std::vector<std::size_t>> bins(opts.bins);
  for (auto p : pixels) {
    const double u = (static_cast<double>(blue[p]) - b_lo) / (b_hi - b_lo);
    const auto k = std::min(opts.bins - 1, static_cast<std::size_t>(u * static_cast<double>(opts.bins)));
    bins[k].push_back(p);
  }

  std::vector<double> xs, ys;
  auto brighter_red = [&](std::size_t a, std::size_t c) {
    return red[a] > red[c] || (red[a] == red[c] && a < c);
  };
  for (auto& members : bins) {
    const std::size_t keep = std::min(opts.points_per_bin, members.size());
    std::partial_sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(keep), members.end(),
                      brighter_red);
    for (std::size_t i = 0; i < keep; ++i) {
      xs.push_back(static_cast<double>(blue[members[i]]));
      ys.push_back(static_cast<double>(red[members[i]]));
    }
  }

  const LinearFit fit = fit_line(xs, ys);
  return ClearSkyLine{fit.slope, fit.intercept, xs.size(), fit.residual_rms};
}

enum class HotMode { AsWritten, PointLineDistance };

inline std::string_view to_string(HotMode mode) {
  return mode == HotMode::AsWritten ? "as-written" : "point-line";
}

inline std::optional<HotMode> parse_hot_mode(std::string_view text) {
  if (text == "as-written") return HotMode::AsWritten;
  if (text == "point-line") return HotMode::PointLineDistance;
  return std::nullopt;
}

// AsWritten:         |m * Blue - Red| + b / sqrt(1 + m^2)
// PointLineDistance: |m * Blue - Red + b| / sqrt(1 + m^2)
inline double hot_value(double blue, double red, const ClearSkyLine& line, HotMode mode) {
  const double norm = std::sqrt(1.0 + line.m * line.m);
  if (mode == HotMode::AsWritten) return std::abs(line.m * blue - red) + line.b / norm;
  return std::abs(line.m * blue - red + line.b) / norm;
}

template <typename T>
ScoreMap hot(const BasicCube<T>& cube, const ClearSkyLine& line, HotMode mode = HotMode::AsWritten) {
  const auto blue = cube.band_by_role(BandRole::Blue);
  const auto red = cube.band_by_role(BandRole::Red);
  ScoreMap out{cube.width(), cube.height(), std::vector<double>(cube.pixel_count(), 0.0), ScoreKind::HOT,
               cube.validity(), 0};
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    if (cube.is_valid(p)) out.data[p] = hot_value(static_cast<double>(blue[p]), static_cast<double>(red[p]), line, mode);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Otsu
// ---------------------------------------------------------------------------

struct OtsuResult {
  double threshold = 0.0;
  double inter_class_variance = 0.0;
  std::size_t histogram_bins = 0;
  std::size_t split_bin = 0;  // first bin of the upper class
  double score_min = 0.0;
  double score_max = 0.0;
  bool degenerate = false;
};

// Histogram bin of `s` for `bins` equal-width bins over [lo, hi]; hi lands in
// the last bin.
inline std::size_t otsu_bin(double s, double lo, double hi, std::size_t bins) {
  const double u = (s - lo) / (hi - lo);
  return std::min(bins - 1, static_cast<std::size_t>(u * static_cast<double>(bins)));
}

// Between-class variance of a split in bin-index units:
//   (s0 * n1 - s1 * n0)^2 / (N^2 * n0 * n1)
// where n_i are class counts and s_i sums of bin indices.
inline double otsu_split_variance(double n0, double s0, double n1, double s1) {
  const double n = n0 + n1;
  const double d = s0 * n1 - s1 * n0;
  return (d * d) / (n * n * n0 * n1);
}

namespace detail {

__extension__ typedef unsigned __int128 U128;

// |s0 * n1 - s1 * n0| < (bins - 1) * N^2 must fit in 64 bits.
inline bool fits_exact_otsu(std::uint64_t n, std::size_t bins) {
  if (n == 0 || n > (1ull << 31)) return false;
  const U128 bound = static_cast<U128>(bins) * n * n;
  return bound < (static_cast<U128>(1) << 64);
}

// a * b < c * d for 128x64-bit products, compared as 192-bit integers.
inline bool mul_less(U128 a, std::uint64_t b, U128 c, std::uint64_t d) {
  auto wide = [](U128 x, std::uint64_t y, U128& high, U128& low) {
    const U128 lo = static_cast<std::uint64_t>(x) * static_cast<U128>(y);
    const U128 hi = static_cast<std::uint64_t>(x >> 64) * static_cast<U128>(y);
    low = static_cast<std::uint64_t>(lo) | (static_cast<U128>(static_cast<std::uint64_t>(hi + (lo >> 64))) << 64);
    high = (hi + (lo >> 64)) >> 64;
  };
  U128 ah, al, ch, cl;
  wide(a, b, ah, al);
  wide(c, d, ch, cl);
  return ah < ch || (ah == ch && al < cl);
}

}  // namespace detail

// Threshold maximising the between-class variance of an equal-width histogram
// over the valid scores. The threshold is the lower edge of the upper class's
// first bin; among equal variances the lowest edge wins.
inline OtsuResult otsu_threshold(const ScoreMap& scores, std::size_t bins = 256) {
  if (bins < 2) throw ConfigError("Otsu needs at least 2 histogram bins");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores.is_valid(i)) continue;
    const double s = scores.data[i];
    if (!std::isfinite(s)) throw DataError("Otsu input contains a non-finite score");
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    ++n_valid;
  }
  if (n_valid == 0) throw DataError("Otsu needs at least one valid score");

  OtsuResult result;
  result.histogram_bins = bins;
  result.score_min = lo;
  result.score_max = hi;
  if (lo == hi) {
    result.threshold = lo;
    result.degenerate = true;
    return result;
  }

  std::vector<std::uint64_t> hist(bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.is_valid(i)) ++hist[otsu_bin(scores.data[i], lo, hi, bins)];
  }
  std::uint64_t total_sum = 0;
  for (std::size_t k = 0; k < bins; ++k) total_sum += k * hist[k];

  // Splits are ranked by d^2 / (n0 * n1) with d = s0 * n1 - s1 * n0, compared
  // by exact cross-multiplication whenever |d| fits in 64 bits.
  const bool exact = detail::fits_exact_otsu(n_valid, bins);
  std::uint64_t n0 = 0, s0 = 0;
  double best = -1.0;
  detail::U128 best_d2 = 0;
  std::uint64_t best_p = 1;
  for (std::size_t k = 1; k < bins; ++k) {
    n0 += hist[k - 1];
    s0 += (k - 1) * hist[k - 1];
    const std::uint64_t n1 = n_valid - n0;
    if (n0 == 0 || n1 == 0) continue;
    const std::uint64_t s1 = total_sum - s0;
    const double v = otsu_split_variance(static_cast<double>(n0), static_cast<double>(s0), static_cast<double>(n1),
                                         static_cast<double>(s1));
    bool better = v > best;
    if (exact) {
      const detail::U128 a = static_cast<detail::U128>(s0) * n1;
      const detail::U128 c = static_cast<detail::U128>(s1) * n0;
      const detail::U128 d = a > c ? a - c : c - a;
      const detail::U128 d2 = d * d;
      const std::uint64_t p = n0 * n1;
      better = best < 0.0 || detail::mul_less(best_d2, p, d2, best_p);
      if (better) {
        best_d2 = d2;
        best_p = p;
      }
    }
    if (better) {
      best = v;
      result.split_bin = k;
    }
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  result.threshold = lo + static_cast<double>(result.split_bin) * width;
  result.inter_class_variance = best * width * width;
  return result;
}

// ---------------------------------------------------------------------------
// Binary labels
// ---------------------------------------------------------------------------

enum class Polarity { AboveIsOne, BelowIsOne };

// Strict comparison; invalid pixels are labeled 0.
inline BinaryMask binarize(const ScoreMap& scores, double threshold, Polarity polarity) {
  BinaryMask mask(scores.width, scores.height);
  if (scores.size() != mask.size()) throw FormatError("score map size does not match its dimensions");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores.is_valid(i)) continue;
    const double s = scores.data[i];
    mask.data[i] = (polarity == Polarity::AboveIsOne ? s > threshold : s < threshold) ? 1 : 0;
  }
  return mask;
}

// Label 1 where the band value lies in [low, high]; a missing bound leaves
// that side open.
template <typename T>
BinaryMask band_threshold_label(const BasicCube<T>& cube, const BandSelector& band, std::optional<double> low,
                                std::optional<double> high) {
  if (!low && !high) throw ConfigError("band threshold needs at least one bound");
  if (low && high && *low > *high) throw ConfigError("band threshold low bound exceeds high bound");
  const auto plane = cube.band(cube.resolve(band));
  BinaryMask mask(cube.width(), cube.height());
  for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
    if (!cube.is_valid(p)) continue;
    const double v = static_cast<double>(plane[p]);
    const bool inside = (!low || v >= *low) && (!high || v <= *high);
    mask.data[p] = inside ? 1 : 0;
  }
  return mask;
}

}  // namespace edgespec
