#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "edgespec/cube.hpp"
#include "edgespec/error.hpp"

namespace edgespec {

struct StretchParams {
  double v_min = 0.0;
  double v_max = 1.0;
  double q_low_fraction = 0.01;
  double q_high_fraction = 0.99;

  void validate() const {
    if (!(v_min < v_max)) throw ConfigError("stretch requires v_min < v_max");
    if (!(q_low_fraction >= 0.0 && q_low_fraction < q_high_fraction && q_high_fraction <= 1.0)) {
      throw ConfigError("stretch requires 0 <= q_low < q_high <= 1");
    }
  }
};

struct QuantilePair {
  double low = 0.0;
  double high = 0.0;
};

namespace detail {

// Linear interpolation between closest order statistics (Hyndman-Fan type 7)
// on an unsorted buffer; partially reorders `values`.
inline double select_quantile(std::vector<double>& values, double fraction) {
  const double h = static_cast<double>(values.size() - 1) * fraction;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double x_lo = values[lo];
  if (lo + 1 >= values.size()) return x_lo;
  const double x_hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return x_lo + (h - static_cast<double>(lo)) * (x_hi - x_lo);
}

}  // namespace detail

// Quantiles over the valid pixels of one plane. `validity` may be empty
// (all valid) or hold one 0/1 flag per pixel.
template <typename T>
QuantilePair band_quantiles(std::span<const T> plane, std::span<const std::uint8_t> validity,
                            double low_fraction, double high_fraction) {
  if (!validity.empty() && validity.size() != plane.size()) {
    throw DataError("validity mask does not match plane size");
  }
  std::vector<double> values;
  values.reserve(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    if (validity.empty() || validity[i]) values.push_back(static_cast<double>(plane[i]));
  }
  if (values.empty()) throw DataError("quantiles need at least one valid pixel");
  QuantilePair q;
  q.low = detail::select_quantile(values, low_fraction);
  q.high = detail::select_quantile(values, high_fraction);
  return q;
}

template <typename T>
QuantilePair band_quantiles(std::span<const T> plane, double low_fraction = 0.01,
                            double high_fraction = 0.99) {
  return band_quantiles(plane, std::span<const std::uint8_t>{}, low_fraction, high_fraction);
}

// min[max(v_min + (v_max - v_min) / (q_high - q_low) * (p - q_low), v_min), v_max]
//
// Evaluated as lerp(v_min, v_max, t) with t = (p - q_low) / (q_high - q_low),
// which keeps p = q_low -> v_min and p = q_high -> v_max exact and the map
// monotone under rounding. A degenerate band (q_high == q_low) maps to v_min.
inline double stretch_value(double p, const StretchParams& params, double q_low, double q_high) {
  if (!(q_high > q_low)) return params.v_min;
  const double t = (p - q_low) / (q_high - q_low);
  const double v = std::lerp(params.v_min, params.v_max, t);
  return std::min(std::max(v, params.v_min), params.v_max);
}

template <typename T>
std::vector<T> stretch_band(std::span<const T> plane, const StretchParams& params, double q_low, double q_high) {
  params.validate();
  if (q_high < q_low) throw DataError("stretch requires q_low <= q_high");
  std::vector<T> out(plane.size());
  for (std::size_t i = 0; i < plane.size(); ++i) {
    out[i] = static_cast<T>(stretch_value(static_cast<double>(plane[i]), params, q_low, q_high));
  }
  return out;
}

// Per-band stretch with each band's own quantiles over valid pixels. Invalid
// pixels keep their original samples.
template <typename T>
BasicCube<T> stretch_cube(const BasicCube<T>& cube, const StretchParams& params,
                          std::vector<QuantilePair>* quantiles_out = nullptr) {
  params.validate();
  std::vector<T> data(cube.data().begin(), cube.data().end());
  const std::size_t n = cube.pixel_count();
  const std::span<const std::uint8_t> validity(cube.validity());
  if (quantiles_out) quantiles_out->clear();
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    const auto plane = cube.band(b);
    const QuantilePair q = band_quantiles(plane, validity, params.q_low_fraction, params.q_high_fraction);
    if (quantiles_out) quantiles_out->push_back(q);
    for (std::size_t p = 0; p < n; ++p) {
      if (!cube.is_valid(p)) continue;
      data[b * n + p] = static_cast<T>(stretch_value(static_cast<double>(plane[p]), params, q.low, q.high));
    }
  }
  return cube.with_data(std::move(data));
}

}  // namespace edgespec
