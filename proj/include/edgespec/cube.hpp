#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "edgespec/error.hpp"

namespace edgespec {

enum class BandRole { Blue, Green, Red, NIR, Other };

inline std::string_view to_string(BandRole role) {
  switch (role) {
    case BandRole::Blue: return "Blue";
    case BandRole::Green: return "Green";
    case BandRole::Red: return "Red";
    case BandRole::NIR: return "NIR";
    case BandRole::Other: return "Other";
  }
  return "Other";
}

inline std::optional<BandRole> parse_band_role(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "blue") return BandRole::Blue;
  if (lower == "green") return BandRole::Green;
  if (lower == "red") return BandRole::Red;
  if (lower == "nir") return BandRole::NIR;
  if (lower == "other") return BandRole::Other;
  return std::nullopt;
}

struct BandMeta {
  std::string name;
  BandRole role = BandRole::Other;
  std::optional<double> wavelength_nm;

  bool operator==(const BandMeta&) const = default;
};

// A band is addressed either by its semantic role or by its index.
using BandSelector = std::variant<BandRole, std::size_t>;

using Spectrum = std::vector<double>;

struct TargetSpectrum {
  std::string label;
  Spectrum spectrum;
  std::string source;
};

// Width x height x bands samples in band-sequential order:
//   data[b * width * height + y * width + x]
//
// Pixels can be marked invalid (swath edges, declared nodata); invalid pixels
// keep whatever sample values they carry but are excluded from statistics,
// quantiles and fits. Every sample of a valid pixel is finite.
template <typename T>
class BasicCube {
 public:
  using value_type = T;

  BasicCube(std::size_t width, std::size_t height, std::size_t bands, std::vector<T> data,
            std::vector<BandMeta> meta = {}, std::optional<double> nodata = std::nullopt,
            std::vector<std::uint8_t> validity = {})
      : width_(width),
        height_(height),
        bands_(bands),
        data_(std::move(data)),
        meta_(std::move(meta)),
        nodata_(nodata),
        validity_(std::move(validity)) {
    if (width_ < 1 || height_ < 1 || bands_ < 1) {
      throw FormatError("cube dimensions must be at least 1x1x1");
    }
    if (data_.size() != width_ * height_ * bands_) {
      throw FormatError("cube sample count " + std::to_string(data_.size()) + " does not match " +
                        std::to_string(width_) + "x" + std::to_string(height_) + "x" +
                        std::to_string(bands_));
    }
    if (meta_.empty()) {
      for (std::size_t b = 0; b < bands_; ++b) meta_.push_back({"band_" + std::to_string(b), BandRole::Other, std::nullopt});
    }
    if (meta_.size() != bands_) throw FormatError("band metadata count does not match band count");
    validate_meta();
    if (validity_.empty() && nodata_) derive_validity();
    if (!validity_.empty() && validity_.size() != pixel_count()) {
      throw FormatError("validity mask size does not match pixel count");
    }
    check_finite();
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t bands() const noexcept { return bands_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }

  std::span<const T> data() const noexcept { return data_; }
  const std::vector<BandMeta>& band_meta() const noexcept { return meta_; }
  std::optional<double> nodata() const noexcept { return nodata_; }

  // Empty when every pixel is valid.
  const std::vector<std::uint8_t>& validity() const noexcept { return validity_; }
  bool has_invalid() const noexcept { return !validity_.empty(); }
  bool is_valid(std::size_t pixel) const noexcept {
    return validity_.empty() || validity_[pixel] != 0;
  }
  std::size_t valid_count() const noexcept {
    if (validity_.empty()) return pixel_count();
    return static_cast<std::size_t>(std::count(validity_.begin(), validity_.end(), 1));
  }

  std::span<const T> band(std::size_t b) const {
    if (b >= bands_) throw ConfigError("band index " + std::to_string(b) + " out of range");
    return std::span<const T>(data_).subspan(b * pixel_count(), pixel_count());
  }

  T at(std::size_t x, std::size_t y, std::size_t b) const {
    return data_[b * pixel_count() + y * width_ + x];
  }

  template <typename W = double>
  std::vector<W> spectrum(std::size_t pixel) const {
    std::vector<W> out(bands_);
    for (std::size_t b = 0; b < bands_; ++b) out[b] = static_cast<W>(data_[b * pixel_count() + pixel]);
    return out;
  }

  std::size_t band_index(BandRole role) const {
    std::optional<std::size_t> found;
    for (std::size_t b = 0; b < bands_; ++b) {
      if (meta_[b].role != role) continue;
      if (found) throw ConfigError("band role " + std::string(to_string(role)) + " is duplicated");
      found = b;
    }
    if (!found) throw ConfigError("band role " + std::string(to_string(role)) + " is absent");
    return *found;
  }

  std::size_t resolve(const BandSelector& sel) const {
    if (const auto* role = std::get_if<BandRole>(&sel)) return band_index(*role);
    const std::size_t index = std::get<std::size_t>(sel);
    if (index >= bands_) throw ConfigError("band index " + std::to_string(index) + " out of range");
    return index;
  }

  // View of the single band carrying `role`; no copy.
  std::span<const T> band_by_role(BandRole role) const { return band(band_index(role)); }

  // Same geometry, metadata and validity with new samples.
  template <typename U = T>
  BasicCube<U> with_data(std::vector<U> data) const {
    return BasicCube<U>(width_, height_, bands_, std::move(data), meta_, nodata_, validity_);
  }

  bool operator==(const BasicCube&) const = default;

 private:
  void validate_meta() const {
    for (std::size_t i = 0; i < meta_.size(); ++i) {
      if (const auto& wl = meta_[i].wavelength_nm; wl && !(*wl > 300.0 && *wl < 3000.0)) {
        throw FormatError("band " + meta_[i].name + " wavelength outside (300, 3000) nm");
      }
      if (meta_[i].role == BandRole::Other) continue;
      for (std::size_t j = i + 1; j < meta_.size(); ++j) {
        if (meta_[j].role == meta_[i].role) {
          throw FormatError("band role " + std::string(to_string(meta_[i].role)) +
                            " assigned to more than one band");
        }
      }
    }
  }

  void derive_validity() {
    validity_.assign(pixel_count(), 1);
    const double nd = *nodata_;
    bool any_invalid = false;
    for (std::size_t b = 0; b < bands_; ++b) {
      for (std::size_t p = 0; p < pixel_count(); ++p) {
        const double v = static_cast<double>(data_[b * pixel_count() + p]);
        if (v == nd || !std::isfinite(v)) {
          validity_[p] = 0;
          any_invalid = true;
        }
      }
    }
    if (!any_invalid) validity_.clear();
  }

  void check_finite() const {
    for (std::size_t b = 0; b < bands_; ++b) {
      for (std::size_t p = 0; p < pixel_count(); ++p) {
        if (is_valid(p) && !std::isfinite(static_cast<double>(data_[b * pixel_count() + p]))) {
          throw DataError("non-finite sample at pixel " + std::to_string(p) + ", band " +
                          std::to_string(b) + " and no nodata value declared");
        }
      }
    }
  }

  std::size_t width_;
  std::size_t height_;
  std::size_t bands_;
  std::vector<T> data_;
  std::vector<BandMeta> meta_;
  std::optional<double> nodata_;
  std::vector<std::uint8_t> validity_;
};

using RasterCube = BasicCube<float>;

enum class ScoreKind { NDWI, HOT, SAM, MF, RX, BandValue };

inline std::string_view to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::NDWI: return "NDWI";
    case ScoreKind::HOT: return "HOT";
    case ScoreKind::SAM: return "SAM";
    case ScoreKind::MF: return "MF";
    case ScoreKind::RX: return "RX";
    case ScoreKind::BandValue: return "BandValue";
  }
  return "BandValue";
}

inline std::optional<ScoreKind> parse_score_kind(std::string_view text) {
  for (auto k : {ScoreKind::NDWI, ScoreKind::HOT, ScoreKind::SAM, ScoreKind::MF, ScoreKind::RX,
                 ScoreKind::BandValue}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

// Per-pixel detector or index output. Invalid pixels hold 0 and are skipped by
// thresholding; `flagged` counts valid pixels whose score was set by
// convention (zero NDWI denominator, zero-norm SAM pixel).
struct ScoreMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;
  ScoreKind kind = ScoreKind::BandValue;
  std::vector<std::uint8_t> validity;
  std::size_t flagged = 0;

  std::size_t size() const noexcept { return data.size(); }
  bool is_valid(std::size_t i) const noexcept { return validity.empty() || validity[i] != 0; }

  bool operator==(const ScoreMap&) const = default;
};

struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h, std::vector<std::uint8_t> labels = {})
      : width(w), height(h), data(std::move(labels)) {
    if (data.empty()) data.assign(w * h, 0);
    if (data.size() != w * h) throw FormatError("mask size does not match its dimensions");
    for (auto v : data) {
      if (v > 1) throw FormatError("mask labels must be 0 or 1");
    }
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t positive_count() const noexcept {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1));
  }

  bool operator==(const BinaryMask&) const = default;
};

}  // namespace edgespec
