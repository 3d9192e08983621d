#pragma once

// Patch affinity graph. The dense similarity matrix is never materialized:
//
//   E = eps * J + (1 - eps) * B
//
// where J is all-ones and B is the 0/1 adjacency of pairs whose (fused) cosine
// similarity reaches tau, self-pairs included. B is stored as sorted CSR rows.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ncutseg/error.hpp"
#include "ncutseg/types.hpp"

namespace ncutseg {

enum class Fusion { average, min, max };

inline constexpr double kImageTau = 0.2;
inline constexpr double kVideoTau = 0.3;
inline constexpr double kDefaultEps = 1e-5;

struct GraphConfig {
  double tau = kImageTau;
  double eps = kDefaultEps;
  Fusion fusion = Fusion::average;
  unsigned threads = 0;  // 0: hardware concurrency
  std::size_t block_rows = 256;
};

inline void validate(const GraphConfig& cfg) {
  if (!(cfg.tau >= -1.0 && cfg.tau <= 1.0)) throw ValidationError("tau must lie in [-1, 1]");
  if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) throw ValidationError("eps must lie in (0, 1)");
  if (cfg.block_rows == 0) throw ValidationError("block_rows must be positive");
}

class AffinityGraph {
 public:
  using Index = std::uint32_t;

  AffinityGraph() = default;

  /// `row_ptr` has n+1 entries; each row of `cols` must be sorted and contain its own index.
  AffinityGraph(GridGeometry geometry, double eps, std::vector<std::size_t> row_ptr, std::vector<Index> cols)
      : geometry_(geometry), eps_(eps), row_ptr_(std::move(row_ptr)), cols_(std::move(cols)) {
    const std::size_t n = geometry_.nodes();
    if (row_ptr_.size() != n + 1 || row_ptr_.back() != cols_.size()) {
      throw ValidationError("adjacency does not match node count");
    }
    degrees_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      degrees_[static_cast<Eigen::Index>(i)] =
          eps_ * static_cast<double>(n) + (1.0 - eps_) * static_cast<double>(row_count(i));
    }
  }

  std::size_t size() const { return geometry_.nodes(); }
  double eps() const { return eps_; }
  const GridGeometry& geometry() const { return geometry_; }
  const Eigen::VectorXd& degrees() const { return degrees_; }

  std::span<const Index> row(std::size_t i) const {
    return {cols_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::size_t row_count(std::size_t i) const { return row_ptr_[i + 1] - row_ptr_[i]; }
  std::size_t nnz() const { return cols_.size(); }

  bool above_tau(std::size_t i, std::size_t j) const {
    const auto r = row(i);
    return std::binary_search(r.begin(), r.end(), static_cast<Index>(j));
  }

  /// Entry E_ij of the implied dense matrix.
  double weight(std::size_t i, std::size_t j) const { return above_tau(i, j) ? 1.0 : eps_; }

 private:
  GridGeometry geometry_;
  double eps_ = kDefaultEps;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Index> cols_;
  Eigen::VectorXd degrees_;
};

/// a.b / (|a| |b|).
template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ValidationError("cosine similarity of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += static_cast<double>(a[k]) * static_cast<double>(b[k]);
    na += static_cast<double>(a[k]) * static_cast<double>(a[k]);
    nb += static_cast<double>(b[k]) * static_cast<double>(b[k]);
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  return cosine_similarity<double>(a, b);
}

inline Eigen::VectorXd degree_vector(const AffinityGraph& graph) { return graph.degrees(); }

namespace detail {

/// Columns are the L2-normalized node features.
inline Eigen::MatrixXd unit_features(const FeatureGrid& grid) {
  Eigen::MatrixXd u(static_cast<Eigen::Index>(grid.dim), static_cast<Eigen::Index>(grid.nodes()));
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    const auto f = grid.feature(i);
    double norm = 0.0;
    for (float v : f) norm += static_cast<double>(v) * static_cast<double>(v);
    if (norm == 0.0) throw DomainError("zero feature vector at node " + std::to_string(i));
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < grid.dim; ++k) {
      u(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = static_cast<double>(f[k]) / norm;
    }
  }
  return u;
}

inline double fuse(double s_rgb, double s_flow, Fusion fusion) {
  switch (fusion) {
    case Fusion::average: return (s_rgb + s_flow) / 2.0;
    case Fusion::min: return std::min(s_rgb, s_flow);
    case Fusion::max: return std::max(s_rgb, s_flow);
  }
  return s_rgb;
}

/// Thresholds the upper triangle block by block and mirrors it into CSR.
/// `second` is null for image graphs. Pair (i, j) with i < j is evaluated exactly once, so
/// B is symmetric bit-for-bit.
inline AffinityGraph threshold_graph(GridGeometry geometry, const Eigen::MatrixXd& first,
                                     const Eigen::MatrixXd* second, const GraphConfig& cfg) {
  validate(cfg);
  const std::size_t n = static_cast<std::size_t>(first.cols());
  if (n > std::numeric_limits<AffinityGraph::Index>::max()) throw SizeError("too many nodes");
  const std::size_t block = cfg.block_rows;
  const std::size_t nblocks = (n + block - 1) / block;
  std::vector<std::vector<std::pair<AffinityGraph::Index, AffinityGraph::Index>>> pairs(nblocks);

  auto work = [&](std::size_t b) {
    const auto r0 = static_cast<Eigen::Index>(b * block);
    const auto rn = static_cast<Eigen::Index>(std::min(block, n - b * block));
    const auto width = static_cast<Eigen::Index>(n) - r0;
    const Eigen::MatrixXd s1 = first.middleCols(r0, rn).transpose() * first.rightCols(width);
    Eigen::MatrixXd s2;
    if (second != nullptr) s2 = second->middleCols(r0, rn).transpose() * second->rightCols(width);
    auto& out = pairs[b];
    for (Eigen::Index i = 0; i < rn; ++i) {
      // Column offset i is the diagonal; start after it.
      for (Eigen::Index j = i + 1; j < width; ++j) {
        const double s = second ? fuse(s1(i, j), s2(i, j), cfg.fusion) : s1(i, j);
        if (s >= cfg.tau) {
          out.emplace_back(static_cast<AffinityGraph::Index>(r0 + i), static_cast<AffinityGraph::Index>(r0 + j));
        }
      }
    }
  };

  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, nblocks));
  if (threads <= 1) {
    for (std::size_t b = 0; b < nblocks; ++b) work(b);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t b = t; b < nblocks; b += threads) work(b);
      });
    }
  }

  std::vector<std::size_t> row_ptr(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) row_ptr[i + 1] = 1;  // self-pair
  for (const auto& blk : pairs) {
    for (auto [i, j] : blk) {
      ++row_ptr[i + 1];
      ++row_ptr[j + 1];
    }
  }
  for (std::size_t i = 0; i < n; ++i) row_ptr[i + 1] += row_ptr[i];
  std::vector<AffinityGraph::Index> cols(row_ptr[n]);
  std::vector<std::size_t> fill(row_ptr.begin(), row_ptr.end() - 1);
  for (std::size_t i = 0; i < n; ++i) cols[fill[i]++] = static_cast<AffinityGraph::Index>(i);
  for (const auto& blk : pairs) {
    for (auto [i, j] : blk) {
      cols[fill[i]++] = j;
      cols[fill[j]++] = i;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]),
              cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]));
  }
  return AffinityGraph(geometry, cfg.eps, std::move(row_ptr), std::move(cols));
}

}  // namespace detail

/// Single-frame graph: B_ij = [cos(v_i, v_j) >= tau].
inline AffinityGraph build_image_graph(const FeatureGrid& features, const GraphConfig& cfg) {
  if (features.geometry.frames != 1) throw ValidationError("image graph needs a single-frame feature grid");
  const Eigen::MatrixXd u = detail::unit_features(features);
  return detail::threshold_graph(features.geometry, u, nullptr, cfg);
}

/// One graph over every frame of a clip; appearance and motion similarities are fused per
/// `cfg.fusion` before thresholding.
inline AffinityGraph build_video_graph(const FeatureGrid& rgb, const FeatureGrid& flow, const GraphConfig& cfg) {
  if (!(rgb.geometry == flow.geometry)) throw ValidationError("rgb and flow feature grids differ in geometry");
  if (rgb.geometry.frames == 0) throw ValidationError("video has no frames");
  const Eigen::MatrixXd u_rgb = detail::unit_features(rgb);
  const Eigen::MatrixXd u_flow = detail::unit_features(flow);
  return detail::threshold_graph(rgb.geometry, u_rgb, &u_flow, cfg);
}

}  // namespace ncutseg
