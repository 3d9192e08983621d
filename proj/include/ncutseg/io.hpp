#pragma once

// File formats at the engine boundary:
//   TCFT  - patch-feature tensors (little-endian, 64-byte header, float32 payload)
//   PGM   - binary portable graymap masks (P5, maxval 255)
//   PPM   - binary portable pixmap reference images (P6, maxval 255)
//   JSONL - one detection record per line

#include <zlib.h>

#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ncutseg/error.hpp"
#include "ncutseg/types.hpp"

namespace ncutseg {

namespace tcft {

inline constexpr std::string_view kMagic = "TCFT0001";
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 64;

// Header byte offsets.
inline constexpr std::size_t kOffVersion = 8;
inline constexpr std::size_t kOffFrames = 12;
inline constexpr std::size_t kOffRows = 16;
inline constexpr std::size_t kOffCols = 20;
inline constexpr std::size_t kOffDim = 24;
inline constexpr std::size_t kOffPatch = 28;
inline constexpr std::size_t kOffHeight = 32;
inline constexpr std::size_t kOffWidth = 36;
inline constexpr std::size_t kOffKind = 40;
inline constexpr std::size_t kOffReserved = 44;  // 16 zero bytes
inline constexpr std::size_t kOffChecksum = 60;  // CRC-32 of bytes [0, 60)

}  // namespace tcft

namespace detail {

inline void put_u32(std::span<unsigned char> buf, std::size_t off, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) buf[off + b] = static_cast<unsigned char>((v >> (8 * b)) & 0xFFu);
}

inline std::uint32_t get_u32(std::span<const unsigned char> buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(buf[off + b]) << (8 * b);
  return v;
}

inline std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

inline std::uint32_t checked_u32(std::size_t v, const char* field) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw ValidationError(std::string(field) + " does not fit the TCFT header");
  }
  return static_cast<std::uint32_t>(v);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

/// Serializes a grid into the TCFT byte layout.
inline std::vector<unsigned char> encode_feature_tensor(const FeatureGrid& grid) {
  validate(grid);
  std::vector<unsigned char> bytes(tcft::kHeaderSize + grid.values.size() * 4, 0);
  std::span<unsigned char> buf(bytes);
  std::memcpy(bytes.data(), tcft::kMagic.data(), tcft::kMagic.size());
  detail::put_u32(buf, tcft::kOffVersion, tcft::kVersion);
  detail::put_u32(buf, tcft::kOffFrames, detail::checked_u32(grid.geometry.frames, "frames"));
  detail::put_u32(buf, tcft::kOffRows, detail::checked_u32(grid.geometry.rows, "rows"));
  detail::put_u32(buf, tcft::kOffCols, detail::checked_u32(grid.geometry.cols, "cols"));
  detail::put_u32(buf, tcft::kOffDim, detail::checked_u32(grid.dim, "dim"));
  detail::put_u32(buf, tcft::kOffPatch, grid.patch_size);
  detail::put_u32(buf, tcft::kOffHeight, grid.image_height);
  detail::put_u32(buf, tcft::kOffWidth, grid.image_width);
  detail::put_u32(buf, tcft::kOffKind, static_cast<std::uint32_t>(grid.kind));
  detail::put_u32(buf, tcft::kOffChecksum, detail::crc32_of(buf.first(tcft::kOffChecksum)));
  std::size_t off = tcft::kHeaderSize;
  for (float v : grid.values) {
    detail::put_u32(buf, off, std::bit_cast<std::uint32_t>(v));
    off += 4;
  }
  return bytes;
}

/// Parses and validates TCFT bytes.
inline FeatureGrid decode_feature_tensor(std::span<const unsigned char> bytes) {
  if (bytes.size() < tcft::kMagic.size() ||
      std::memcmp(bytes.data(), tcft::kMagic.data(), tcft::kMagic.size()) != 0) {
    throw FormatError("missing TCFT0001 magic");
  }
  if (bytes.size() < tcft::kHeaderSize) throw CorruptionError("truncated header");
  if (detail::get_u32(bytes, tcft::kOffChecksum) != detail::crc32_of(bytes.first(tcft::kOffChecksum))) {
    throw CorruptionError("header checksum mismatch");
  }
  if (detail::get_u32(bytes, tcft::kOffVersion) != tcft::kVersion) throw FormatError("unsupported version");
  for (std::size_t i = tcft::kOffReserved; i < tcft::kOffChecksum; ++i) {
    if (bytes[i] != 0) throw CorruptionError("reserved header bytes are not zero");
  }
  const std::uint32_t kind = detail::get_u32(bytes, tcft::kOffKind);
  if (kind > 1) throw CorruptionError("unknown feature kind " + std::to_string(kind));

  FeatureGrid grid;
  grid.geometry = {detail::get_u32(bytes, tcft::kOffFrames), detail::get_u32(bytes, tcft::kOffRows),
                   detail::get_u32(bytes, tcft::kOffCols)};
  grid.dim = detail::get_u32(bytes, tcft::kOffDim);
  grid.patch_size = detail::get_u32(bytes, tcft::kOffPatch);
  grid.image_height = detail::get_u32(bytes, tcft::kOffHeight);
  grid.image_width = detail::get_u32(bytes, tcft::kOffWidth);
  grid.kind = static_cast<FeatureKind>(kind);

  // 32-bit fields multiply to at most 2^128; guard the product step by step.
  const unsigned __int128 count = static_cast<unsigned __int128>(grid.geometry.frames) * grid.geometry.rows *
                                  grid.geometry.cols * grid.dim;
  const std::size_t payload = bytes.size() - tcft::kHeaderSize;
  if (payload % 4 != 0 || count != payload / 4) {
    throw CorruptionError("header promises " + std::to_string(static_cast<unsigned long long>(count)) +
                          " floats but payload holds " + std::to_string(payload / 4) +
                          (payload % 4 ? " and a partial value" : ""));
  }
  if (grid.patch_size == 0 || grid.geometry.rows != grid.image_height / grid.patch_size ||
      grid.geometry.cols != grid.image_width / grid.patch_size) {
    throw CorruptionError("patch grid inconsistent with image size and patch size");
  }
  grid.values.resize(payload / 4);
  std::size_t off = tcft::kHeaderSize;
  for (float& v : grid.values) {
    v = std::bit_cast<float>(detail::get_u32(bytes, off));
    off += 4;
  }
  validate(grid);
  return grid;
}

inline FeatureGrid read_feature_tensor(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_feature_tensor(bytes);
}

inline void write_feature_tensor(const FeatureGrid& grid, const std::filesystem::path& path) {
  const auto bytes = encode_feature_tensor(grid);
  detail::write_file(path, bytes);
}

// ---------------------------------------------------------------------------
// Portable anymap (PGM / PPM)

namespace detail {

struct PnmHeader {
  std::string magic;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(std::span<const unsigned char> bytes, const std::string& name) {
  PnmHeader h;
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_number = [&]() -> std::size_t {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("malformed PNM header in " + name);
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 30)) throw FormatError("PNM dimension too large in " + name);
      ++pos;
    }
    return v;
  };
  if (bytes.size() < 2) throw FormatError("truncated PNM file " + name);
  h.magic.assign(reinterpret_cast<const char*>(bytes.data()), 2);
  pos = 2;
  h.width = read_number();
  h.height = read_number();
  h.maxval = read_number();
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PNM header in " + name);
  h.data_offset = pos + 1;
  if (h.maxval == 0 || h.maxval > 255) throw FormatError("only 8-bit PNM supported: " + name);
  return h;
}

inline std::vector<unsigned char> pnm_bytes(const char* magic, std::size_t width, std::size_t height,
                                             std::span<const unsigned char> data) {
  const std::string header = std::string(magic) + "\n" + std::to_string(width) + " " +
                             std::to_string(height) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), data.begin(), data.end());
  return bytes;
}

}  // namespace detail

/// Soft values map to bytes by round-half-up of v * 255.
inline std::uint8_t mask_byte(double v) { return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5)); }

inline std::vector<unsigned char> encode_mask(const PixelMask& mask) {
  validate(mask);
  std::vector<unsigned char> data(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask_byte(mask.values[i]);
  return detail::pnm_bytes("P5", mask.width, mask.height, data);
}

inline void write_mask(const PixelMask& mask, const std::filesystem::path& path) {
  detail::write_file(path, encode_mask(mask));
}

inline PixelMask read_mask(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const auto h = detail::parse_pnm_header(bytes, path.string());
  if (h.magic != "P5") throw FormatError("expected binary graymap (P5): " + path.string());
  if (bytes.size() - h.data_offset != h.width * h.height) {
    throw CorruptionError("graymap payload size mismatch: " + path.string());
  }
  PixelMask mask(h.height, h.width);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask.values[i] = static_cast<double>(bytes[h.data_offset + i]) / static_cast<double>(h.maxval);
  }
  return mask;
}

inline void write_image(const RgbImage& image, const std::filesystem::path& path) {
  if (image.pixels.size() != image.height * image.width * 3) throw ValidationError("image buffer size mismatch");
  detail::write_file(path, detail::pnm_bytes("P6", image.width, image.height, image.pixels));
}

inline RgbImage read_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const auto h = detail::parse_pnm_header(bytes, path.string());
  if (h.magic != "P6") throw FormatError("expected binary pixmap (P6): " + path.string());
  if (bytes.size() - h.data_offset != h.width * h.height * 3) {
    throw CorruptionError("pixmap payload size mismatch: " + path.string());
  }
  RgbImage image(h.height, h.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const unsigned v = bytes[h.data_offset + i];
    image.pixels[i] = static_cast<std::uint8_t>(h.maxval == 255 ? v : (v * 255 + h.maxval / 2) / h.maxval);
  }
  return image;
}

// ---------------------------------------------------------------------------
// Detection records

inline std::string detection_line(const Detection& det) {
  nlohmann::ordered_json j;
  j["id"] = det.id;
  j["x_min"] = det.box.x_min;
  j["y_min"] = det.box.y_min;
  j["x_max"] = det.box.x_max;
  j["y_max"] = det.box.y_max;
  j["score"] = det.score;
  return j.dump();
}

inline void write_detections(std::span<const Detection> detections, const std::filesystem::path& path) {
  std::string text;
  for (const auto& det : detections) {
    validate(det.box);
    text += detection_line(det);
    text += '\n';
  }
  detail::write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

inline std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Detection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Detection det;
      det.id = j.at("id").get<std::string>();
      det.box = {j.at("x_min").get<std::int64_t>(), j.at("y_min").get<std::int64_t>(),
                 j.at("x_max").get<std::int64_t>(), j.at("y_max").get<std::int64_t>()};
      det.score = j.contains("score") ? j.at("score").get<double>() : 0.0;
      validate(det.box);
      out.push_back(std::move(det));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ncutseg
