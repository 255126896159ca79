#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgespec/cube.hpp"
#include "edgespec/error.hpp"

namespace edgespec {

namespace fs = std::filesystem;

// Cube header (JSON) + raw payload:
//   {"width":W, "height":H, "bands":B, "dtype":"f32", "interleave":"bsq",
//    "byte_order":"little", "payload":"scene.bsq", "nodata":-9999,
//    "bands_meta":[{"name":"b0","role":"Blue","wavelength_nm":490}, ...]}
// The payload is W*H*B little-endian IEEE-754 binary32 samples, band after
// band, rows top to bottom within a band.

// Sentinel written for invalid pixels of score maps.
inline constexpr double kScoreNodata = -9999.0;

namespace detail {

inline std::vector<char> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

inline void write_file_bytes(const fs::path& path, std::span<const char> bytes) {
  if (path.empty()) throw IoError("empty output path");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("error writing " + path.string());
}

inline void append_le32(std::vector<char>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline float read_le32(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

template <typename J>
const J& require_field(const J& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("cube header missing field '") + key + "'");
  return j.at(key);
}

inline std::size_t require_dim(const nlohmann::json& j, const char* key) {
  const auto& v = require_field(j, key);
  if (!v.is_number_integer() || v.get<long long>() < 1) {
    throw FormatError(std::string("cube header field '") + key + "' must be a positive integer");
  }
  return v.get<std::size_t>();
}

inline void require_string(const nlohmann::json& j, const char* key, const char* expected) {
  const auto& v = require_field(j, key);
  if (!v.is_string() || v.get<std::string>() != expected) {
    throw FormatError(std::string("cube header field '") + key + "' must be \"" + expected + "\"");
  }
}

inline std::string trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  for (auto& f : fields) f = trim(f);
  return fields;
}

}  // namespace detail

inline RasterCube load_cube(const fs::path& header_path) {
  if (!fs::exists(header_path)) throw IoError("cube header not found: " + header_path.string());
  const auto text = detail::read_file_bytes(header_path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed cube header " + header_path.string() + ": " + e.what());
  }
  if (!header.is_object()) throw FormatError("cube header must be a JSON object");

  const std::size_t width = detail::require_dim(header, "width");
  const std::size_t height = detail::require_dim(header, "height");
  const std::size_t bands = detail::require_dim(header, "bands");
  detail::require_string(header, "dtype", "f32");
  detail::require_string(header, "interleave", "bsq");
  detail::require_string(header, "byte_order", "little");
  const auto& payload_field = detail::require_field(header, "payload");
  if (!payload_field.is_string() || payload_field.get<std::string>().empty()) {
    throw FormatError("cube header field 'payload' must be a non-empty string");
  }

  std::optional<double> nodata;
  if (header.contains("nodata") && !header["nodata"].is_null()) {
    if (!header["nodata"].is_number()) throw FormatError("cube header 'nodata' must be a number");
    nodata = header["nodata"].get<double>();
  }

  std::vector<BandMeta> meta;
  if (header.contains("bands_meta")) {
    const auto& list = header["bands_meta"];
    if (!list.is_array() || list.size() != bands) {
      throw FormatError("cube header 'bands_meta' must list exactly one entry per band");
    }
    for (std::size_t b = 0; b < bands; ++b) {
      const auto& entry = list[b];
      if (!entry.is_object()) throw FormatError("bands_meta entries must be objects");
      BandMeta m;
      if (entry.contains("name") && !entry["name"].is_string()) throw FormatError("band name must be a string");
      m.name = entry.value("name", "band_" + std::to_string(b));
      if (entry.contains("role") && !entry["role"].is_null()) {
        if (!entry["role"].is_string()) throw FormatError("band role must be a string");
        const auto role = parse_band_role(entry["role"].get<std::string>());
        if (!role) throw FormatError("unknown band role '" + entry["role"].get<std::string>() + "'");
        m.role = *role;
      }
      if (entry.contains("wavelength_nm") && !entry["wavelength_nm"].is_null()) {
        if (!entry["wavelength_nm"].is_number()) throw FormatError("wavelength_nm must be a number");
        m.wavelength_nm = entry["wavelength_nm"].get<double>();
      }
      meta.push_back(std::move(m));
    }
  }

  fs::path payload = payload_field.get<std::string>();
  if (payload.is_relative()) payload = header_path.parent_path() / payload;
  if (!fs::exists(payload)) throw IoError("cube payload not found: " + payload.string());
  const auto bytes = detail::read_file_bytes(payload);
  const std::size_t expected = width * height * bands * 4;
  if (bytes.size() != expected) {
    throw FormatError("payload " + payload.string() + " holds " + std::to_string(bytes.size()) +
                      " bytes, header requires " + std::to_string(expected));
  }
  std::vector<float> data(width * height * bands);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = detail::read_le32(bytes.data() + 4 * i);
  return RasterCube(width, height, bands, std::move(data), std::move(meta), nodata);
}

inline fs::path payload_path_for(const fs::path& header_path) {
  fs::path p = header_path;
  p.replace_extension(".bsq");
  if (p == header_path) p += ".raw";
  return p;
}

// Writes <header_path> and a payload next to it named <stem>.bsq.
inline void save_cube(const RasterCube& cube, const fs::path& header_path) {
  if (header_path.empty() || header_path.filename().empty()) throw IoError("empty output path");
  const fs::path payload = payload_path_for(header_path);

  std::vector<char> bytes;
  bytes.reserve(cube.data().size() * 4);
  for (float v : cube.data()) detail::append_le32(bytes, v);

  nlohmann::ordered_json header;
  header["width"] = cube.width();
  header["height"] = cube.height();
  header["bands"] = cube.bands();
  header["dtype"] = "f32";
  header["interleave"] = "bsq";
  header["byte_order"] = "little";
  header["payload"] = payload.filename().string();
  if (cube.nodata()) header["nodata"] = *cube.nodata();
  auto meta = nlohmann::ordered_json::array();
  for (const auto& m : cube.band_meta()) {
    nlohmann::ordered_json entry;
    entry["name"] = m.name;
    entry["role"] = std::string(to_string(m.role));
    if (m.wavelength_nm) entry["wavelength_nm"] = *m.wavelength_nm;
    meta.push_back(entry);
  }
  header["bands_meta"] = meta;

  detail::write_file_bytes(payload, bytes);
  const std::string text = header.dump(2) + "\n";
  detail::write_file_bytes(header_path, std::span<const char>(text.data(), text.size()));
}

// Score maps travel as single-band cubes; the band name carries the score kind
// and invalid pixels are written as kScoreNodata.
inline RasterCube score_map_to_cube(const ScoreMap& scores) {
  std::vector<float> data(scores.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = scores.is_valid(i) ? static_cast<float>(scores.data[i]) : static_cast<float>(kScoreNodata);
  }
  std::optional<double> nodata;
  if (!scores.validity.empty()) nodata = kScoreNodata;
  return RasterCube(scores.width, scores.height, 1, std::move(data),
                    {BandMeta{std::string(to_string(scores.kind)), BandRole::Other, std::nullopt}}, nodata, scores.validity);
}

inline void save_score_map(const ScoreMap& scores, const fs::path& header_path) {
  save_cube(score_map_to_cube(scores), header_path);
}

inline ScoreMap load_score_map(const fs::path& header_path) {
  const RasterCube cube = load_cube(header_path);
  if (cube.bands() != 1) throw FormatError("score map must be a single-band cube");
  ScoreMap out;
  out.width = cube.width();
  out.height = cube.height();
  out.kind = parse_score_kind(cube.band_meta()[0].name).value_or(ScoreKind::BandValue);
  out.validity = cube.validity();
  out.data.resize(cube.pixel_count());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = cube.is_valid(i) ? static_cast<double>(cube.data()[i]) : 0.0;
  }
  return out;
}

// Binary PGM (P5): label 0 -> 0, label 1 -> 255.
inline void write_mask_pgm(const BinaryMask& mask, const fs::path& path) {
  std::string header = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  std::vector<char> bytes(header.begin(), header.end());
  for (auto v : mask.data) bytes.push_back(static_cast<char>(v ? 255 : 0));
  detail::write_file_bytes(path, bytes);
}

inline BinaryMask read_mask_pgm(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("mask not found: " + path.string());
  const auto bytes = detail::read_file_bytes(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) tok += bytes[pos++];
    return tok;
  };
  if (next_token() != "P5") throw FormatError(path.string() + " is not a binary PGM (P5)");
  const auto w = detail::parse_double(next_token());
  const auto h = detail::parse_double(next_token());
  const auto maxval = detail::parse_double(next_token());
  if (!w || !h || !maxval || *w < 1 || *h < 1 || *maxval != 255.0) {
    throw FormatError(path.string() + ": unsupported PGM header (need 8-bit, maxval 255)");
  }
  ++pos;  // single whitespace after maxval
  const auto width = static_cast<std::size_t>(*w);
  const auto height = static_cast<std::size_t>(*h);
  if (bytes.size() < pos || bytes.size() - pos != width * height) {
    throw FormatError(path.string() + ": pixel data length does not match header");
  }
  std::vector<std::uint8_t> labels(width * height);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto v = static_cast<unsigned char>(bytes[pos + i]);
    if (v != 0 && v != 255) throw FormatError(path.string() + ": mask pixels must be 0 or 255");
    labels[i] = v ? 1 : 0;
  }
  return BinaryMask(width, height, std::move(labels));
}

// Long-form spectral library: header `label,wavelength_nm,value`, one row per
// band sample. Targets keep the order in which their labels first appear.
//
// With a non-empty band grid whose bands all carry wavelengths, targets that
// carry wavelengths are linearly interpolated onto the grid; grid bands
// outside a target's wavelength span are an error. Otherwise the target must
// already have one value per band.
inline std::vector<TargetSpectrum> load_spectral_library(const fs::path& csv_path,
                                                         std::span<const BandMeta> grid = {}) {
  if (!fs::exists(csv_path)) throw IoError("spectral library not found: " + csv_path.string());
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path.string());

  std::string line;
  if (!std::getline(in, line)) throw FormatError("spectral library " + csv_path.string() + " is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto columns = detail::split_csv(line);
  if (columns != std::vector<std::string>{"label", "wavelength_nm", "value"}) {
    throw FormatError("spectral library header must be exactly 'label,wavelength_nm,value'");
  }

  struct Record {
    std::vector<std::optional<double>> wavelengths;
    std::vector<double> values;
  };
  std::vector<std::string> order;
  std::map<std::string, Record> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    const std::string where = csv_path.string() + ":" + std::to_string(line_no);
    if (f.size() != 3) throw FormatError(where + ": expected 3 columns");
    if (f[0].empty()) throw FormatError(where + ": empty label");
    const auto value = detail::parse_double(f[2]);
    if (!value) throw FormatError(where + ": non-numeric reflectance '" + f[2] + "'");
    if (!std::isfinite(*value)) throw DataError(where + ": non-finite reflectance");
    std::optional<double> wl;
    if (!f[1].empty()) {
      wl = detail::parse_double(f[1]);
      if (!wl || !std::isfinite(*wl)) throw FormatError(where + ": bad wavelength '" + f[1] + "'");
    }
    auto [it, inserted] = records.try_emplace(f[0]);
    if (inserted) order.push_back(f[0]);
    it->second.wavelengths.push_back(wl);
    it->second.values.push_back(*value);
  }
  if (order.empty()) throw FormatError("spectral library " + csv_path.string() + " has no records");

  const bool grid_has_wavelengths =
      !grid.empty() && std::all_of(grid.begin(), grid.end(), [](const BandMeta& m) { return m.wavelength_nm.has_value(); });

  std::vector<TargetSpectrum> out;
  for (const auto& label : order) {
    const Record& rec = records.at(label);
    const auto n_wl = std::count_if(rec.wavelengths.begin(), rec.wavelengths.end(),
                                    [](const auto& w) { return w.has_value(); });
    if (n_wl != 0 && static_cast<std::size_t>(n_wl) != rec.wavelengths.size()) {
      throw FormatError("target '" + label + "' mixes rows with and without wavelengths");
    }
    Spectrum values = rec.values;
    std::vector<double> wls;
    if (n_wl != 0) {
      std::vector<std::size_t> idx(values.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return *rec.wavelengths[a] < *rec.wavelengths[b]; });
      Spectrum sorted;
      for (auto i : idx) {
        wls.push_back(*rec.wavelengths[i]);
        sorted.push_back(rec.values[i]);
      }
      for (std::size_t i = 1; i < wls.size(); ++i) {
        if (wls[i] == wls[i - 1]) throw FormatError("target '" + label + "' repeats a wavelength");
      }
      values = std::move(sorted);
    }

    if (grid_has_wavelengths && !wls.empty()) {
      Spectrum resampled;
      for (const auto& band : grid) {
        const double w = *band.wavelength_nm;
        if (w < wls.front() || w > wls.back()) {
          throw DataError("target '" + label + "' does not cover band " + band.name + " at " +
                          std::to_string(w) + " nm");
        }
        const auto hi = static_cast<std::size_t>(std::lower_bound(wls.begin(), wls.end(), w) - wls.begin());
        if (wls[hi] == w) {
          resampled.push_back(values[hi]);
        } else {
          const double t = (w - wls[hi - 1]) / (wls[hi] - wls[hi - 1]);
          resampled.push_back(values[hi - 1] + t * (values[hi] - values[hi - 1]));
        }
      }
      values = std::move(resampled);
    } else if (!grid.empty() && values.size() != grid.size()) {
      throw DataError("target '" + label + "' has " + std::to_string(values.size()) +
                      " values but the scene has " + std::to_string(grid.size()) + " bands");
    }
    out.push_back(TargetSpectrum{label, std::move(values), csv_path.string()});
  }
  return out;
}

inline const TargetSpectrum& find_target(const std::vector<TargetSpectrum>& library, std::string_view label) {
  for (const auto& t : library) {
    if (t.label == label) return t;
  }
  throw ConfigError("target '" + std::string(label) + "' not found in spectral library");
}

}  // namespace edgespec
