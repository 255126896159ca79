#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "edgespec/cube.hpp"

namespace edgespec::synthetic {

// Band centres spread evenly over the VNIR instrument range.
inline std::vector<BandMeta> vnir_bands(std::size_t bands, double first_nm = 440.0, double last_nm = 884.0) {
  std::vector<BandMeta> meta;
  for (std::size_t b = 0; b < bands; ++b) {
    const double wl = bands == 1 ? first_nm : first_nm + (last_nm - first_nm) * static_cast<double>(b) /
                                                            static_cast<double>(bands - 1);
    meta.push_back({"b" + std::to_string(b), BandRole::Other, wl});
  }
  return meta;
}

inline std::vector<BandMeta> four_band_meta() {
  return {{"blue", BandRole::Blue, 490.0},
          {"green", BandRole::Green, 560.0},
          {"red", BandRole::Red, 665.0},
          {"nir", BandRole::NIR, 842.0}};
}

// Reference material spectra evaluated at wavelength `nm`.
inline double vegetation_reflectance(double nm) {
  const double green_peak = 0.05 * std::exp(-0.5 * std::pow((nm - 550.0) / 25.0, 2.0));
  const double red_edge = 0.42 / (1.0 + std::exp(-(nm - 715.0) / 12.0));
  return 0.04 + green_peak + red_edge;
}

inline double soil_reflectance(double nm) { return 0.08 + 0.22 * (nm - 440.0) / 444.0; }

inline double water_reflectance(double nm) { return std::max(0.005, 0.09 - 0.1 * (nm - 440.0) / 444.0); }

inline double mineral_reflectance(double nm) {
  // Broad ferric-iron absorption near 870 nm on a bright continuum.
  return 0.35 + 0.1 * (nm - 440.0) / 444.0 - 0.12 * std::exp(-0.5 * std::pow((nm - 860.0) / 40.0, 2.0));
}

// Independent uniform samples in [lo, hi).
inline RasterCube uniform_cube(std::size_t width, std::size_t height, std::size_t bands, std::uint64_t seed,
                               double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<float> data(width * height * bands);
  for (auto& v : data) v = static_cast<float>(u(rng));
  return RasterCube(width, height, bands, std::move(data), vnir_bands(bands));
}

struct TargetScene {
  RasterCube cube;
  TargetSpectrum target;
  std::vector<std::size_t> planted;  // pixel indices holding the target
};

// Soil/water mixtures with a few pixels replaced by `target_fn` plus noise.
template <typename Fn>
TargetScene planted_target_scene(std::size_t width, std::size_t height, std::size_t bands, std::size_t n_planted,
                                 std::uint64_t seed, Fn target_fn, std::string label) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mix(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.004);
  const auto meta = vnir_bands(bands);
  const std::size_t n = width * height;
  std::vector<float> data(n * bands);
  for (std::size_t p = 0; p < n; ++p) {
    const double a = mix(rng);
    const double gain = 0.8 + 0.4 * mix(rng);
    for (std::size_t b = 0; b < bands; ++b) {
      const double nm = *meta[b].wavelength_nm;
      const double v = gain * (a * soil_reflectance(nm) + (1.0 - a) * water_reflectance(nm)) + noise(rng);
      data[b * n + p] = static_cast<float>(v);
    }
  }
  Spectrum target(bands);
  for (std::size_t b = 0; b < bands; ++b) target[b] = target_fn(*meta[b].wavelength_nm);

  std::vector<std::size_t> planted;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (planted.size() < std::min(n_planted, n)) {
    const std::size_t p = pick(rng);
    if (std::find(planted.begin(), planted.end(), p) != planted.end()) continue;
    planted.push_back(p);
    for (std::size_t b = 0; b < bands; ++b) data[b * n + p] = static_cast<float>(target[b] + noise(rng));
  }
  std::sort(planted.begin(), planted.end());
  return TargetScene{RasterCube(width, height, bands, std::move(data), meta),
                     TargetSpectrum{std::move(label), std::move(target), "synthetic"}, std::move(planted)};
}

inline TargetScene vegetation_scene(std::size_t width, std::size_t height, std::size_t bands, std::size_t n_planted,
                                    std::uint64_t seed) {
  return planted_target_scene(width, height, bands, n_planted, seed, vegetation_reflectance, "vegetation");
}

inline TargetScene mineral_scene(std::size_t width, std::size_t height, std::size_t bands, std::size_t n_planted,
                                 std::uint64_t seed) {
  return planted_target_scene(width, height, bands, n_planted, seed, mineral_reflectance, "hematite-like");
}

// Four-band (Blue, Green, Red, NIR) land scene whose top-left quadrant is
// covered by haze that brightens Blue much more than Red, with a gradient in
// haze thickness across the quadrant.
inline RasterCube haze_scene(std::size_t width, std::size_t height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> surface(0.03, 0.30), dark(0.0, 0.1);
  std::bernoulli_distribution shadow(0.05);
  std::normal_distribution<double> noise(0.0, 0.0005);
  const std::size_t n = width * height;
  std::vector<float> data(4 * n);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t p = y * width + x;
      // A small share of shadow/water pixels spreads the dark end of the
      // clear-sky line well beyond the noise.
      const double r = shadow(rng) ? dark(rng) : surface(rng);
      double blue = 0.05 + 0.5 * r + noise(rng);
      double green = 0.03 + 0.8 * r + noise(rng);
      double red = r + noise(rng);
      double nir = 0.2 + 0.5 * r + noise(rng);
      if (x < width / 2 && y < height / 2) {
        const double haze = 0.25 + 0.15 * static_cast<double>(x + y) / static_cast<double>(width / 2 + height / 2);
        blue += haze;
        green += 0.6 * haze;
        red += 0.4 * haze;
        nir += 0.3 * haze;
      }
      data[p] = static_cast<float>(blue);
      data[n + p] = static_cast<float>(green);
      data[2 * n + p] = static_cast<float>(red);
      data[3 * n + p] = static_cast<float>(nir);
    }
  }
  return RasterCube(width, height, 4, std::move(data), four_band_meta());
}

// Four-band scene with turbid open water (Green > NIR) in the left half and
// vegetated land (NIR > Green) in the right half. Water is the brighter of
// the two in Green so the split survives a per-band stretch.
inline RasterCube water_scene(std::size_t width, std::size_t height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.005);
  const std::size_t n = width * height;
  std::vector<float> data(4 * n);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t p = y * width + x;
      const bool water = x < width / 2;
      data[p] = static_cast<float>((water ? 0.08 : 0.05) + noise(rng));
      data[n + p] = static_cast<float>((water ? 0.11 : 0.06) + noise(rng));
      data[2 * n + p] = static_cast<float>((water ? 0.05 : 0.06) + noise(rng));
      data[3 * n + p] = static_cast<float>((water ? 0.02 : 0.35) + noise(rng));
    }
  }
  return RasterCube(width, height, 4, std::move(data), four_band_meta());
}

// Four-band scene with a few saturated NIR hot spots standing in for thermal
// anomalies.
inline RasterCube hotspot_scene(std::size_t width, std::size_t height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> surface(0.05, 0.35);
  const std::size_t n = width * height;
  std::vector<float> data(4 * n);
  for (std::size_t p = 0; p < n; ++p) {
    const double r = surface(rng);
    data[p] = static_cast<float>(0.05 + 0.4 * r);
    data[n + p] = static_cast<float>(0.04 + 0.6 * r);
    data[2 * n + p] = static_cast<float>(r);
    data[3 * n + p] = static_cast<float>(0.2 + 0.5 * r);
  }
  const std::size_t spots[][2] = {{width / 4, height / 4}, {3 * width / 4, height / 2}};
  for (const auto& s : spots) {
    for (std::size_t dy = 0; dy < 3 && s[1] + dy < height; ++dy) {
      for (std::size_t dx = 0; dx < 3 && s[0] + dx < width; ++dx) {
        const std::size_t p = (s[1] + dy) * width + s[0] + dx;
        data[2 * n + p] = 0.9f;
        data[3 * n + p] = 0.98f;
      }
    }
  }
  return RasterCube(width, height, 4, std::move(data), four_band_meta());
}

}  // namespace edgespec::synthetic
