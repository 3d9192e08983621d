#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ncutseg/error.hpp"

namespace ncutseg {

enum class FeatureKind : std::uint32_t { rgb = 0, flow = 1 };

inline const char* to_string(FeatureKind kind) {
  return kind == FeatureKind::rgb ? "rgb-features" : "flow-features";
}

/// Shape of a patch grid stack: T frames of rows x cols patches.
struct GridGeometry {
  std::size_t frames = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t frame_size() const { return rows * cols; }
  std::size_t nodes() const { return frames * rows * cols; }
  bool operator==(const GridGeometry&) const = default;
};

/// Patch-feature tensor. Values are laid out (frame, row, col, dim), row-major.
struct FeatureGrid {
  GridGeometry geometry;
  std::size_t dim = 0;
  std::uint32_t patch_size = 0;
  std::uint32_t image_height = 0;
  std::uint32_t image_width = 0;
  FeatureKind kind = FeatureKind::rgb;
  std::vector<float> values;

  std::size_t nodes() const { return geometry.nodes(); }

  std::span<const float> feature(std::size_t node) const {
    return {values.data() + node * dim, dim};
  }
  std::span<float> feature(std::size_t node) { return {values.data() + node * dim, dim}; }
};

/// Throws ValidationError unless every FeatureGrid invariant holds.
inline void validate(const FeatureGrid& grid) {
  const auto& g = grid.geometry;
  if (grid.dim == 0) throw ValidationError("feature dimension must be positive");
  if (g.frames == 0) throw ValidationError("feature grid must have at least one frame");
  if (grid.patch_size == 0) throw ValidationError("patch size must be positive");
  if (g.rows != grid.image_height / grid.patch_size || g.cols != grid.image_width / grid.patch_size) {
    throw ValidationError("patch grid " + std::to_string(g.rows) + "x" + std::to_string(g.cols) +
                          " does not match image " + std::to_string(grid.image_height) + "x" +
                          std::to_string(grid.image_width) + " at patch size " +
                          std::to_string(grid.patch_size));
  }
  if (g.rows == 0 || g.cols == 0) throw ValidationError("image smaller than one patch");
  if (grid.values.size() != grid.nodes() * grid.dim) {
    throw ValidationError("feature payload holds " + std::to_string(grid.values.size()) +
                          " values, expected " + std::to_string(grid.nodes() * grid.dim));
  }
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    bool nonzero = false;
    for (float v : grid.feature(i)) {
      if (!std::isfinite(v)) throw ValidationError("non-finite feature value at node " + std::to_string(i));
      nonzero = nonzero || v != 0.0f;
    }
    if (!nonzero) throw ValidationError("all-zero feature vector at node " + std::to_string(i));
  }
}

/// Copy of frames [first, first + count).
inline FeatureGrid slice_frames(const FeatureGrid& grid, std::size_t first, std::size_t count) {
  if (first + count > grid.geometry.frames || count == 0) {
    throw ValidationError("frame slice out of range");
  }
  FeatureGrid out = grid;
  out.geometry.frames = count;
  const std::size_t stride = grid.geometry.frame_size() * grid.dim;
  out.values.assign(grid.values.begin() + static_cast<std::ptrdiff_t>(first * stride),
                    grid.values.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
  return out;
}

/// Binary mask over a patch grid stack, one byte per node (0 or 1).
struct PatchMask {
  GridGeometry geometry;
  std::vector<std::uint8_t> values;

  PatchMask() = default;
  explicit PatchMask(GridGeometry geom) : geometry(geom), values(geom.nodes(), 0) {}

  std::uint8_t at(std::size_t frame, std::size_t row, std::size_t col) const {
    return values[(frame * geometry.rows + row) * geometry.cols + col];
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v != 0;
    return n;
  }
  bool operator==(const PatchMask&) const = default;
};

/// Soft or binary pixel mask, values in [0, 1], row-major.
struct PixelMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  PixelMask() = default;
  PixelMask(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const PixelMask&) const = default;
};

inline void validate(const PixelMask& mask) {
  if (mask.values.size() != mask.height * mask.width) throw ValidationError("mask size does not match dims");
  for (double v : mask.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("mask value outside [0,1]");
  }
}

/// 8-bit interleaved RGB image.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}
};

/// Axis-aligned box in pixels; max edges are exclusive.
struct DetectionBox {
  std::int64_t x_min = 0;
  std::int64_t y_min = 0;
  std::int64_t x_max = 0;
  std::int64_t y_max = 0;

  std::int64_t width() const { return x_max - x_min; }
  std::int64_t height() const { return y_max - y_min; }
  std::int64_t area() const { return width() * height(); }
  bool operator==(const DetectionBox&) const = default;
};

inline void validate(const DetectionBox& box) {
  if (box.x_min >= box.x_max || box.y_min >= box.y_max) throw ValidationError("degenerate detection box");
  if (box.x_min < 0 || box.y_min < 0) throw ValidationError("detection box has negative coordinates");
}

inline void validate(const DetectionBox& box, std::size_t image_width, std::size_t image_height) {
  validate(box);
  if (box.x_max > static_cast<std::int64_t>(image_width) || box.y_max > static_cast<std::int64_t>(image_height)) {
    throw ValidationError("detection box exceeds image bounds");
  }
}

struct Detection {
  std::string id;
  DetectionBox box;
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

}  // namespace ncutseg
