#pragma once

// Edge-aware refinement of coarse masks with a bilateral-space quadratic solver.
//
// Pixels are hard-splatted to the nearest vertex of a 5-D grid over
// (x/ss, y/ss, Y/sl, U/sc, V/sc). On the vertices we minimize
//
//   F(y) = lambda * y^T L y + sum_i c_i (y[v(i)] - t_i)^2
//
// where L = diag(A 1) - A is the Laplacian of the bistochastized blur A = Dn B Dn and
// B sums a [1,2,1]/4 stencil along each grid axis. The output is slice(y) clamped to [0,1].

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ncutseg/error.hpp"
#include "ncutseg/types.hpp"

namespace ncutseg {

struct BilateralParams {
  double sigma_spatial = 16.0;
  double sigma_luma = 16.0;
  double sigma_chroma = 8.0;
  double lambda_smooth = 1.0;
  double cg_tol = 1e-5;
  int cg_max_iter = 25;
  int bistochastic_iterations = 10;
};

inline void validate(const BilateralParams& p) {
  if (!(p.sigma_spatial > 0 && p.sigma_luma > 0 && p.sigma_chroma > 0)) {
    throw ValidationError("bilateral sigmas must be positive");
  }
  if (!(p.lambda_smooth >= 0)) throw ValidationError("lambda_smooth must be non-negative");
  if (!(p.cg_tol > 0) || p.cg_max_iter <= 0) throw ValidationError("invalid CG settings");
}

inline constexpr double kConfidenceInside = 0.999;
inline constexpr double kConfidenceOutside = 0.001;

class BilateralGrid {
 public:
  static constexpr int kDims = 5;
  static constexpr std::int64_t kMaxCoord = 1 << 12;

  BilateralGrid(const RgbImage& reference, const BilateralParams& params) {
    validate(params);
    if (reference.pixels.size() != reference.height * reference.width * 3) {
      throw ValidationError("reference image buffer size mismatch");
    }
    const std::size_t npix = reference.height * reference.width;
    assignment_.resize(npix);
    std::unordered_map<std::uint64_t, std::uint32_t> index;
    std::vector<std::array<std::int64_t, kDims>> coords;
    for (std::size_t r = 0; r < reference.height; ++r) {
      for (std::size_t c = 0; c < reference.width; ++c) {
        const std::size_t p = r * reference.width + c;
        const double red = reference.pixels[3 * p], green = reference.pixels[3 * p + 1],
                     blue = reference.pixels[3 * p + 2];
        // BT.601 full-range YUV.
        const double luma = 0.299 * red + 0.587 * green + 0.114 * blue;
        const double u = -0.168736 * red - 0.331264 * green + 0.5 * blue + 128.0;
        const double v = 0.5 * red - 0.418688 * green - 0.081312 * blue + 128.0;
        const std::array<std::int64_t, kDims> key{
            std::llround(static_cast<double>(c) / params.sigma_spatial),
            std::llround(static_cast<double>(r) / params.sigma_spatial), std::llround(luma / params.sigma_luma),
            std::llround(u / params.sigma_chroma), std::llround(v / params.sigma_chroma)};
        std::uint64_t packed = 0;
        for (auto k : key) {
          if (k < 0 || k >= kMaxCoord) throw ValidationError("bilateral grid coordinate out of range; raise sigmas");
          packed = (packed << 12) | static_cast<std::uint64_t>(k);
        }
        auto [it, inserted] = index.try_emplace(packed, static_cast<std::uint32_t>(coords.size()));
        if (inserted) coords.push_back(key);
        assignment_[p] = it->second;
      }
    }
    const std::size_t nv = coords.size();
    neighbors_.assign(nv, {});
    for (std::size_t vtx = 0; vtx < nv; ++vtx) {
      for (int d = 0; d < kDims; ++d) {
        for (int s = 0; s < 2; ++s) {
          auto key = coords[vtx];
          key[static_cast<std::size_t>(d)] += s == 0 ? -1 : 1;
          std::int32_t found = -1;
          bool valid = true;
          std::uint64_t packed = 0;
          for (auto k : key) {
            if (k < 0 || k >= kMaxCoord) valid = false;
            packed = (packed << 12) | static_cast<std::uint64_t>(k & (kMaxCoord - 1));
          }
          if (valid) {
            if (auto it = index.find(packed); it != index.end()) found = static_cast<std::int32_t>(it->second);
          }
          neighbors_[vtx][static_cast<std::size_t>(2 * d + s)] = found;
        }
      }
    }
    counts_ = splat(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(npix)));
  }

  std::size_t pixels() const { return assignment_.size(); }
  std::size_t vertices() const { return neighbors_.size(); }
  std::uint32_t vertex_of(std::size_t pixel) const { return assignment_[pixel]; }
  const Eigen::VectorXd& counts() const { return counts_; }

  /// Sums pixel values into their vertices.
  Eigen::VectorXd splat(const Eigen::VectorXd& pixel_values) const {
    if (static_cast<std::size_t>(pixel_values.size()) != pixels()) throw ValidationError("splat size mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vertices()));
    for (std::size_t p = 0; p < pixels(); ++p) out[assignment_[p]] += pixel_values[static_cast<Eigen::Index>(p)];
    return out;
  }

  /// Reads each pixel's vertex value; the adjoint of splat.
  Eigen::VectorXd slice(const Eigen::VectorXd& vertex_values) const {
    if (static_cast<std::size_t>(vertex_values.size()) != vertices()) throw ValidationError("slice size mismatch");
    Eigen::VectorXd out(static_cast<Eigen::Index>(pixels()));
    for (std::size_t p = 0; p < pixels(); ++p) out[static_cast<Eigen::Index>(p)] = vertex_values[assignment_[p]];
    return out;
  }

  /// Sum over axes of the [1,2,1]/4 stencil; symmetric.
  Eigen::VectorXd blur(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = (0.5 * kDims) * v;
    for (std::size_t vtx = 0; vtx < vertices(); ++vtx) {
      double acc = 0.0;
      for (auto nb : neighbors_[vtx]) {
        if (nb >= 0) acc += v[nb];
      }
      out[static_cast<Eigen::Index>(vtx)] += 0.25 * acc;
    }
    return out;
  }

  /// Diagonal of the blur operator.
  static constexpr double blur_center() { return 0.5 * kDims; }

 private:
  std::vector<std::uint32_t> assignment_;
  std::vector<std::array<std::int32_t, 2 * kDims>> neighbors_;
  Eigen::VectorXd counts_;
};

/// The vertex-space quadratic problem for one (reference, target, confidence) triple.
class BilateralProblem {
 public:
  BilateralProblem(const BilateralGrid& grid, const PixelMask& target, const PixelMask& confidence,
                   const BilateralParams& params)
      : grid_(grid), lambda_(params.lambda_smooth) {
    if (target.size() != grid.pixels() || confidence.size() != grid.pixels()) {
      throw ValidationError("target/confidence dims do not match the reference image");
    }
    const Eigen::Map<const Eigen::VectorXd> t(target.values.data(), static_cast<Eigen::Index>(target.size()));
    const Eigen::Map<const Eigen::VectorXd> c(confidence.values.data(), static_cast<Eigen::Index>(confidence.size()));
    data_weight_ = grid.splat(c);
    rhs_ = grid.splat(c.cwiseProduct(t));
    constant_ = (c.array() * t.array().square()).sum();

    // Bistochastize: scale n so that Dn B Dn has row sums close to the vertex counts.
    const Eigen::VectorXd& m = grid.counts();
    scale_ = Eigen::VectorXd::Ones(m.size());
    for (int it = 0; it < params.bistochastic_iterations; ++it) {
      scale_ = (scale_.cwiseProduct(m).array() / grid.blur(scale_).array()).sqrt().matrix();
    }
    row_sums_ = scale_.cwiseProduct(grid.blur(scale_));
  }

  std::size_t size() const { return grid_.vertices(); }

  /// A y with A = Dn B Dn.
  Eigen::VectorXd affinity(const Eigen::VectorXd& y) const { return scale_.cwiseProduct(grid_.blur(scale_.cwiseProduct(y))); }

  /// (lambda L + diag(data weight)) y.
  Eigen::VectorXd apply(const Eigen::VectorXd& y) const {
    Eigen::VectorXd out = data_weight_.cwiseProduct(y);
    if (lambda_ != 0.0) out += lambda_ * (row_sums_.cwiseProduct(y) - affinity(y));
    return out;
  }

  Eigen::VectorXd diagonal() const {
    const Eigen::VectorXd self = BilateralGrid::blur_center() * scale_.cwiseAbs2();
    return data_weight_ + lambda_ * (row_sums_ - self);
  }

  const Eigen::VectorXd& rhs() const { return rhs_; }

  /// F(y); equals the pixel objective of slice(y).
  double objective(const Eigen::VectorXd& y) const {
    const double smooth = lambda_ == 0.0 ? 0.0 : y.dot(row_sums_.cwiseProduct(y) - affinity(y));
    return lambda_ * smooth + y.dot(data_weight_.cwiseProduct(y)) - 2.0 * rhs_.dot(y) + constant_;
  }

  /// Confidence-weighted mean of the target per vertex.
  Eigen::VectorXd initial_guess() const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(rhs_.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (data_weight_[i] > 0) y[i] = rhs_[i] / data_weight_[i];
    }
    return y;
  }

 private:
  const BilateralGrid& grid_;
  double lambda_;
  Eigen::VectorXd data_weight_;
  Eigen::VectorXd rhs_;
  Eigen::VectorXd scale_;
  Eigen::VectorXd row_sums_;
  double constant_ = 0.0;
};

struct SolveTrace {
  int iterations = 0;
  double residual = 0.0;           // relative, |b - A y| / |b|
  std::vector<double> objective;   // F before the first step and after every step
};

/// Jacobi-preconditioned conjugate gradient from the initial guess.
inline Eigen::VectorXd solve_bilateral(const BilateralProblem& problem, const BilateralParams& params,
                                       SolveTrace* trace = nullptr) {
  const Eigen::VectorXd& b = problem.rhs();
  Eigen::VectorXd y = problem.initial_guess();
  SolveTrace local;
  SolveTrace& tr = trace ? *trace : local;
  tr = {};
  tr.objective.push_back(problem.objective(y));
  const double bnorm = b.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());

  const Eigen::VectorXd diag = problem.diagonal();
  Eigen::VectorXd inv_diag(diag.size());
  for (Eigen::Index i = 0; i < diag.size(); ++i) inv_diag[i] = diag[i] > 0 ? 1.0 / diag[i] : 1.0;

  Eigen::VectorXd r = b - problem.apply(y);
  tr.residual = r.norm() / bnorm;
  if (tr.residual <= params.cg_tol) return y;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= params.cg_max_iter; ++it) {
    const Eigen::VectorXd ap = problem.apply(p);
    const double pap = p.dot(ap);
    if (pap <= 0.0) break;
    const double alpha = rz / pap;
    y += alpha * p;
    r -= alpha * ap;
    tr.iterations = it;
    tr.residual = r.norm() / bnorm;
    tr.objective.push_back(problem.objective(y));
    if (tr.residual <= params.cg_tol) return y;
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  throw ConvergenceError("bilateral CG did not reach tolerance in " + std::to_string(params.cg_max_iter) +
                             " iterations",
                         tr.residual);
}

/// Refined soft mask in [0, 1]. With lambda = 0 the data term alone is minimized by the target itself.
inline PixelMask bilateral_refine(const RgbImage& reference, const PixelMask& target, const PixelMask& confidence,
                                  const BilateralParams& params, SolveTrace* trace = nullptr) {
  validate(params);
  if (target.height != reference.height || target.width != reference.width || confidence.height != reference.height ||
      confidence.width != reference.width) {
    throw ValidationError("reference, target and confidence must share dimensions");
  }
  PixelMask out(target.height, target.width);
  if (params.lambda_smooth == 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = std::clamp(target.values[i], 0.0, 1.0);
    return out;
  }
  const BilateralGrid grid(reference, params);
  const BilateralProblem problem(grid, target, confidence, params);
  const Eigen::VectorXd pixels = grid.slice(solve_bilateral(problem, params, trace));
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = std::clamp(pixels[static_cast<Eigen::Index>(i)], 0.0, 1.0);
  return out;
}

/// Default confidence: high inside the coarse mask, low outside.
inline PixelMask mask_confidence(const PixelMask& coarse) {
  PixelMask c(coarse.height, coarse.width);
  for (std::size_t i = 0; i < c.size(); ++i) c.values[i] = coarse.values[i] >= 0.5 ? kConfidenceInside : kConfidenceOutside;
  return c;
}

namespace detail {

inline void check_upsample_geometry(const GridGeometry& g, std::size_t frame, std::uint32_t patch_size,
                                    std::size_t image_height, std::size_t image_width) {
  if (patch_size == 0 || frame >= g.frames || g.rows != image_height / patch_size || g.cols != image_width / patch_size ||
      g.rows == 0 || g.cols == 0) {
    throw ValidationError("patch grid geometry inconsistent with image size");
  }
}

}  // namespace detail

/// Nearest-patch expansion of one frame to pixels; remainder rows/cols reuse the last patch.
inline PixelMask upsample_patch_mask(const PatchMask& mask, std::size_t frame, std::uint32_t patch_size,
                                     std::size_t image_height, std::size_t image_width) {
  const auto& g = mask.geometry;
  detail::check_upsample_geometry(g, frame, patch_size, image_height, image_width);
  PixelMask out(image_height, image_width);
  for (std::size_t r = 0; r < image_height; ++r) {
    const std::size_t pr = std::min<std::size_t>(r / patch_size, g.rows - 1);
    for (std::size_t c = 0; c < image_width; ++c) {
      const std::size_t pc = std::min<std::size_t>(c / patch_size, g.cols - 1);
      out(r, c) = mask.at(frame, pr, pc) ? 1.0 : 0.0;
    }
  }
  return out;
}

/// Patch-level soft map (one value per patch of `frame`) expanded the same way.
inline PixelMask upsample_patch_values(std::span<const double> values, const GridGeometry& g, std::size_t frame,
                                       std::uint32_t patch_size, std::size_t image_height, std::size_t image_width) {
  detail::check_upsample_geometry(g, frame, patch_size, image_height, image_width);
  if (values.size() != g.nodes()) throw ValidationError("patch value count does not match grid");
  PixelMask out(image_height, image_width);
  for (std::size_t r = 0; r < image_height; ++r) {
    const std::size_t pr = std::min<std::size_t>(r / patch_size, g.rows - 1);
    for (std::size_t c = 0; c < image_width; ++c) {
      const std::size_t pc = std::min<std::size_t>(c / patch_size, g.cols - 1);
      out(r, c) = values[(frame * g.rows + pr) * g.cols + pc];
    }
  }
  return out;
}

inline PixelMask binarize(const PixelMask& soft, double threshold) {
  PixelMask out(soft.height, soft.width);
  for (std::size_t i = 0; i < soft.size(); ++i) out.values[i] = soft.values[i] >= threshold ? 1.0 : 0.0;
  return out;
}

/// Interface for edge-aware refiners.
class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual PixelMask refine(const RgbImage& reference, const PixelMask& target, const PixelMask& confidence) const = 0;
};

class BilateralRefiner final : public Refiner {
 public:
  explicit BilateralRefiner(BilateralParams params) : params_(params) { validate(params_); }
  PixelMask refine(const RgbImage& reference, const PixelMask& target, const PixelMask& confidence) const override {
    return bilateral_refine(reference, target, confidence, params_);
  }

 private:
  BilateralParams params_;
};

}  // namespace ncutseg
