#pragma once

// Synthetic inputs with known answers.

#include <algorithm>
#include <array>
#include <span>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ncutseg/graph.hpp"
#include "ncutseg/types.hpp"

namespace ncutseg::testing {

/// Half-open patch rectangle [r0, r1) x [c0, c1).
struct Rect {
  std::size_t r0 = 0, c0 = 0, r1 = 0, c1 = 0;
  bool contains(std::size_t r, std::size_t c) const { return r >= r0 && r < r1 && c >= c0 && c < c1; }
  std::size_t area() const { return (r1 - r0) * (c1 - c0); }
};

inline FeatureGrid empty_grid(std::size_t frames, std::size_t rows, std::size_t cols, std::size_t dim,
                              std::uint32_t patch, FeatureKind kind = FeatureKind::rgb) {
  FeatureGrid g;
  g.geometry = {frames, rows, cols};
  g.dim = dim;
  g.patch_size = patch;
  g.image_height = static_cast<std::uint32_t>(rows * patch);
  g.image_width = static_cast<std::uint32_t>(cols * patch);
  g.kind = kind;
  g.values.assign(frames * rows * cols * dim, 0.0f);
  return g;
}

/// Unit vector along `axis` plus a perturbation of norm <= `noise` in axes >= `first_noise_axis`.
inline void write_feature(std::span<float> out, std::size_t axis, double noise, std::size_t first_noise_axis,
                          std::mt19937_64& rng) {
  std::fill(out.begin(), out.end(), 0.0f);
  out[axis] = 1.0f;
  const std::size_t extra = out.size() - first_noise_axis;
  if (extra == 0 || noise == 0.0) return;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> v(extra);
  double norm = 0.0;
  for (auto& x : v) {
    x = normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  const double scale = noise * unit(rng) / (norm > 0 ? norm : 1.0);
  for (std::size_t k = 0; k < extra; ++k) out[first_noise_axis + k] = static_cast<float>(v[k] * scale);
}

/// Object block along axis 0, background along axis 1, noise of norm <= 0.1 in the remaining
/// axes. Within-block cosine >= 0.98, cross-block cosine <= 0.01.
inline FeatureGrid planted_grid(std::size_t rows, std::size_t cols, const Rect& block, std::mt19937_64& rng,
                                std::uint32_t patch = 16, std::size_t dim = 8, double noise = 0.1) {
  FeatureGrid g = empty_grid(1, rows, cols, dim, patch);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      write_feature(g.feature(r * cols + c), block.contains(r, c) ? 0 : 1, noise, 2, rng);
    }
  }
  return g;
}

/// Features drawn around `clusters` random centers.
inline FeatureGrid random_grid(std::size_t frames, std::size_t rows, std::size_t cols, std::size_t dim,
                               std::size_t clusters, double spread, std::mt19937_64& rng, std::uint32_t patch = 8) {
  FeatureGrid g = empty_grid(frames, rows, cols, dim, patch);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> centers(clusters, std::vector<double>(dim));
  for (auto& c : centers) {
    for (auto& x : c) x = normal(rng);
  }
  std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
  for (std::size_t i = 0; i < g.nodes(); ++i) {
    const auto& c = centers[pick(rng)];
    auto f = g.feature(i);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        f[k] = static_cast<float>(c[k] + spread * normal(rng));
        norm += static_cast<double>(f[k]) * f[k];
      }
    } while (norm == 0.0);
  }
  return g;
}

struct MovingSquareVideo {
  FeatureGrid rgb;
  FeatureGrid flow;
  std::vector<Rect> squares;  // one per frame
};

/// A side x side square drifting across the grid. Appearance separates square/background on
/// axes 0/1; motion on axes 2/3 (moving vs static flow rendering).
inline MovingSquareVideo moving_square(std::size_t frames, std::size_t rows, std::size_t cols, std::size_t side,
                                       std::mt19937_64& rng, std::uint32_t patch = 8, std::size_t dim = 8) {
  MovingSquareVideo v;
  v.rgb = empty_grid(frames, rows, cols, dim, patch, FeatureKind::rgb);
  v.flow = empty_grid(frames, rows, cols, dim, patch, FeatureKind::flow);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t span_r = rows - side + 1, span_c = cols - side + 1;
    const std::size_t r0 = (t / 3) % span_r;
    const std::size_t c0 = t % span_c;
    const Rect sq{r0, c0, r0 + side, c0 + side};
    v.squares.push_back(sq);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t node = (t * rows + r) * cols + c;
        const bool in = sq.contains(r, c);
        write_feature(v.rgb.feature(node), in ? 0 : 1, 0.1, 4, rng);
        write_feature(v.flow.feature(node), in ? 2 : 3, 0.1, 4, rng);
      }
    }
  }
  return v;
}

inline PatchMask rect_mask(const GridGeometry& g, std::size_t frame, const Rect& rect) {
  PatchMask m(g);
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) m.values[(frame * g.rows + r) * g.cols + c] = rect.contains(r, c);
  }
  return m;
}

/// Reference picture: the block is painted `fg`, everything else `bg`.
inline RgbImage block_image(const FeatureGrid& grid, const Rect& block, std::array<std::uint8_t, 3> fg,
                            std::array<std::uint8_t, 3> bg) {
  RgbImage img(grid.image_height, grid.image_width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const bool in = block.contains(y / grid.patch_size, x / grid.patch_size);
      for (int ch = 0; ch < 3; ++ch) img.pixels[(y * img.width + x) * 3 + ch] = in ? fg[ch] : bg[ch];
    }
  }
  return img;
}

/// Uniformly random placement of a block covering less than half the grid.
inline Rect random_block(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> h(1, rows / 2), w(1, cols / 2);
  const std::size_t bh = h(rng), bw = w(rng);
  std::uniform_int_distribution<std::size_t> r(0, rows - bh), c(0, cols - bw);
  const std::size_t r0 = r(rng), c0 = c(rng);
  return {r0, c0, r0 + bh, c0 + bw};
}

/// Graph from an explicit symmetric 0/1 adjacency; the diagonal is forced on.
inline AffinityGraph graph_from_adjacency(const std::vector<std::vector<int>>& adj, double eps) {
  const std::size_t n = adj.size();
  std::vector<std::size_t> row_ptr{0};
  std::vector<AffinityGraph::Index> cols;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || adj[i][j]) cols.push_back(static_cast<AffinityGraph::Index>(j));
    }
    row_ptr.push_back(cols.size());
  }
  return AffinityGraph(GridGeometry{1, 1, n}, eps, std::move(row_ptr), std::move(cols));
}

/// Erdos-Renyi style symmetric adjacency with edge probability p.
inline std::vector<std::vector<int>> random_adjacency(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<std::vector<int>> adj(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    adj[i][i] = 1;
    for (std::size_t j = i + 1; j < n; ++j) adj[i][j] = adj[j][i] = coin(rng);
  }
  return adj;
}

/// Disjoint cliques of the given sizes, in node order.
inline std::vector<std::vector<int>> cliques(std::initializer_list<std::size_t> sizes) {
  std::size_t n = 0;
  for (auto s : sizes) n += s;
  std::vector<std::vector<int>> adj(n, std::vector<int>(n, 0));
  std::size_t start = 0;
  for (auto s : sizes) {
    for (std::size_t i = start; i < start + s; ++i) {
      for (std::size_t j = start; j < start + s; ++j) adj[i][j] = 1;
    }
    start += s;
  }
  return adj;
}

/// A random graph for solver tests: either thresholded clustered features or a random adjacency.
inline AffinityGraph random_graph(std::size_t n, std::mt19937_64& rng, double eps = kDefaultEps) {
  std::uniform_int_distribution<int> flavor(0, 1);
  if (flavor(rng) == 0) {
    std::uniform_int_distribution<std::size_t> k(2, 5);
    std::uniform_real_distribution<double> spread(0.3, 1.2);
    const FeatureGrid f = random_grid(1, 1, n, 16, k(rng), spread(rng), rng);
    GraphConfig cfg;
    cfg.eps = eps;
    cfg.threads = 1;
    return build_image_graph(f, cfg);
  }
  std::uniform_real_distribution<double> p(0.05, 0.6);
  return graph_from_adjacency(random_adjacency(n, p(rng), rng), eps);
}

}  // namespace ncutseg::testing
