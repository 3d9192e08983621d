#pragma once

// From a continuous eigenvector to one foreground object:
//   bipartition -> foreground side (holds max |y|) -> connected component -> box.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "ncutseg/error.hpp"
#include "ncutseg/graph.hpp"
#include "ncutseg/types.hpp"

namespace ncutseg {

enum class BipartitionStrategy { mean, kmeans, em, energy };

inline const char* to_string(BipartitionStrategy s) {
  switch (s) {
    case BipartitionStrategy::mean: return "mean";
    case BipartitionStrategy::kmeans: return "kmeans";
    case BipartitionStrategy::em: return "em";
    case BipartitionStrategy::energy: return "energy";
  }
  return "?";
}

/// Label 0 is part A (low eigenvector values), label 1 is part B.
struct Bipartition {
  std::vector<std::uint8_t> labels;
  BipartitionStrategy strategy = BipartitionStrategy::mean;
  double threshold = std::numeric_limits<double>::quiet_NaN();  // y <= threshold -> A, where meaningful
  std::vector<double> params;  // em: mean0, mean1, var0, var1, weight0, weight1, iterations

  std::size_t count(std::uint8_t label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }
};

inline constexpr std::size_t kEnergyCap = 20000;
inline constexpr int kEmMaxIterations = 500;

namespace detail {

inline void require_split(const Bipartition& part) {
  if (part.labels.size() > 1 && (part.count(0) == 0 || part.count(1) == 0)) {
    throw DomainError("degenerate partition: one side is empty");
  }
}

inline void require_spread(const Eigen::VectorXd& y) {
  if (y.size() < 2) throw DomainError("bipartition needs at least two nodes");
  if (y.maxCoeff() == y.minCoeff()) throw DomainError("degenerate partition: all eigenvector values are equal");
}

inline Bipartition threshold_split(const Eigen::VectorXd& y, double threshold, BipartitionStrategy s) {
  Bipartition part;
  part.strategy = s;
  part.threshold = threshold;
  part.labels.resize(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) part.labels[static_cast<std::size_t>(i)] = y[i] > threshold ? 1 : 0;
  require_split(part);
  return part;
}

/// Integer tallies that fully determine the Ncut energy of a split.
struct CutTally {
  std::uint64_t size_a = 0;
  std::uint64_t size_b = 0;
  std::uint64_t cut = 0;     // ordered pairs (i in A, j in B) with B_ij = 1
  std::uint64_t rows_a = 0;  // sum of B row counts over A
  std::uint64_t rows_b = 0;
};

inline double energy_from_tally(const CutTally& t, double eps, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double cross = eps * static_cast<double>(t.size_a) * static_cast<double>(t.size_b) +
                       (1.0 - eps) * static_cast<double>(t.cut);
  const double vol_a = eps * nn * static_cast<double>(t.size_a) + (1.0 - eps) * static_cast<double>(t.rows_a);
  const double vol_b = eps * nn * static_cast<double>(t.size_b) + (1.0 - eps) * static_cast<double>(t.rows_b);
  return cross / vol_a + cross / vol_b;
}

}  // namespace detail

/// Ncut energy C(A,B)/C(A,V) + C(A,B)/C(B,V), evaluated in O(nnz(B) + n).
inline double ncut_energy(const AffinityGraph& graph, const Bipartition& part) {
  const std::size_t n = graph.size();
  if (part.labels.size() != n) throw ValidationError("partition size does not match graph");
  detail::CutTally t;
  for (std::size_t i = 0; i < n; ++i) {
    const bool in_a = part.labels[i] == 0;
    (in_a ? t.size_a : t.size_b) += 1;
    (in_a ? t.rows_a : t.rows_b) += graph.row_count(i);
    if (in_a) {
      for (auto j : graph.row(i)) t.cut += part.labels[j] != 0;
    }
  }
  if (t.size_a == 0 || t.size_b == 0) throw DomainError("Ncut energy needs two nonempty parts");
  return detail::energy_from_tally(t, graph.eps(), n);
}

/// A = {i : y_i <= mean(y)}.
inline Bipartition bipartition_mean(const Eigen::VectorXd& y) {
  detail::require_spread(y);
  return detail::threshold_split(y, y.mean(), BipartitionStrategy::mean);
}

/// Globally optimal two-cluster 1-D k-means: the best contiguous split of the sorted values.
inline Bipartition bipartition_kmeans(const Eigen::VectorXd& y) {
  detail::require_spread(y);
  std::vector<double> v(y.data(), y.data() + y.size());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();

  // Welford running SSE of the prefix [0, k) and suffix [k, n).
  auto running_sse = [](auto first, auto last) {
    std::vector<double> out{0.0};
    double mean = 0.0, m2 = 0.0;
    std::size_t count = 0;
    for (auto it = first; it != last; ++it) {
      ++count;
      const double delta = *it - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (*it - mean);
      out.push_back(m2);
    }
    return out;
  };
  const auto left = running_sse(v.begin(), v.end());
  const auto right = running_sse(v.rbegin(), v.rend());

  std::size_t best_k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < n; ++k) {
    if (v[k - 1] == v[k]) continue;
    const double sse = left[k] + right[n - k];
    if (sse < best) {
      best = sse;
      best_k = k;
    }
  }
  auto part = detail::threshold_split(y, v[best_k - 1], BipartitionStrategy::kmeans);
  part.params = {best};
  return part;
}

/// Two-component 1-D Gaussian mixture fitted by EM, seeded from the k-means split.
inline Bipartition bipartition_em(const Eigen::VectorXd& y, int max_iterations = kEmMaxIterations,
                                  double rel_tol = 1e-10) {
  const Bipartition seed = bipartition_kmeans(y);
  const Eigen::Index n = y.size();
  const double total_var = (y.array() - y.mean()).square().mean();
  const double var_floor = std::max(1e-10 * total_var, std::numeric_limits<double>::min());

  double mu[2] = {0, 0}, var[2] = {0, 0}, w[2] = {0, 0};
  for (int c = 0; c < 2; ++c) {
    double cnt = 0, sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (seed.labels[static_cast<std::size_t>(i)] == c) {
        cnt += 1;
        sum += y[i];
      }
    }
    mu[c] = sum / cnt;
    double ss = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (seed.labels[static_cast<std::size_t>(i)] == c) ss += (y[i] - mu[c]) * (y[i] - mu[c]);
    }
    var[c] = std::max(ss / cnt, var_floor);
    w[c] = cnt / static_cast<double>(n);
  }

  Eigen::VectorXd resp(n);  // responsibility of component 1
  double prev_ll = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  for (; it < max_iterations; ++it) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double logp[2];
      for (int c = 0; c < 2; ++c) {
        const double d = y[i] - mu[c];
        logp[c] = std::log(w[c]) - 0.5 * std::log(2.0 * std::numbers::pi * var[c]) - 0.5 * d * d / var[c];
      }
      const double hi = std::max(logp[0], logp[1]);
      const double lse = hi + std::log(std::exp(logp[0] - hi) + std::exp(logp[1] - hi));
      resp[i] = std::exp(logp[1] - lse);
      ll += lse;
    }
    if (std::abs(ll - prev_ll) <= rel_tol * std::max(1.0, std::abs(ll))) {
      converged = true;
      break;
    }
    prev_ll = ll;
    for (int c = 0; c < 2; ++c) {
      const Eigen::ArrayXd r = c == 1 ? resp.array().eval() : (1.0 - resp.array()).eval();
      const double nk = r.sum();
      if (nk <= 0.0) throw DomainError("degenerate partition: EM component collapsed");
      mu[c] = (r * y.array()).sum() / nk;
      var[c] = std::max((r * (y.array() - mu[c]).square()).sum() / nk, var_floor);
      w[c] = nk / static_cast<double>(n);
    }
  }
  if (!converged) {
    throw ConvergenceError("EM did not converge in " + std::to_string(max_iterations) + " iterations",
                           std::abs(prev_ll));
  }

  const int high = mu[1] >= mu[0] ? 1 : 0;
  Bipartition part;
  part.strategy = BipartitionStrategy::em;
  part.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r_high = high == 1 ? resp[i] : 1.0 - resp[i];
    part.labels[static_cast<std::size_t>(i)] = r_high > 0.5 ? 1 : 0;
  }
  part.params = {mu[1 - high], mu[high], var[1 - high], var[high], w[1 - high], w[high], static_cast<double>(it)};
  detail::require_split(part);
  return part;
}

/// Searches every threshold between consecutive distinct sorted values for the lowest Ncut energy.
inline Bipartition bipartition_energy(const AffinityGraph& graph, const Eigen::VectorXd& y,
                                      std::size_t cap = kEnergyCap) {
  const std::size_t n = graph.size();
  if (static_cast<std::size_t>(y.size()) != n) throw ValidationError("eigenvector length does not match graph");
  if (n > cap) throw SizeError("energy search over " + std::to_string(n) + " nodes exceeds cap " + std::to_string(cap));
  detail::require_spread(y);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[static_cast<Eigen::Index>(a)] < y[static_cast<Eigen::Index>(b)]; });

  std::vector<std::uint8_t> in_a(n, 0);
  detail::CutTally t;
  t.size_b = n;
  t.rows_b = graph.nnz();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::size_t u = order[k];
    for (auto j : graph.row(u)) {
      if (j == u) continue;
      if (in_a[j]) {
        --t.cut;
      } else {
        ++t.cut;
      }
    }
    in_a[u] = 1;
    t.size_a += 1;
    t.size_b -= 1;
    t.rows_a += graph.row_count(u);
    t.rows_b -= graph.row_count(u);
    if (y[static_cast<Eigen::Index>(u)] == y[static_cast<Eigen::Index>(order[k + 1])]) continue;
    const double e = detail::energy_from_tally(t, graph.eps(), n);
    if (e < best) {
      best = e;
      best_k = k;
    }
  }
  auto part = detail::threshold_split(y, y[static_cast<Eigen::Index>(order[best_k])], BipartitionStrategy::energy);
  part.params = {best};
  return part;
}

inline Bipartition bipartition(BipartitionStrategy strategy, const AffinityGraph& graph, const Eigen::VectorXd& y) {
  switch (strategy) {
    case BipartitionStrategy::mean: return bipartition_mean(y);
    case BipartitionStrategy::kmeans: return bipartition_kmeans(y);
    case BipartitionStrategy::em: return bipartition_em(y);
    case BipartitionStrategy::energy: return bipartition_energy(graph, y);
  }
  throw ValidationError("unknown bipartition strategy");
}

/// Index of max |y|; the lowest index wins ties.
inline std::size_t vmax_index(const Eigen::VectorXd& y) {
  std::size_t arg = 0;
  for (Eigen::Index i = 1; i < y.size(); ++i) {
    if (std::abs(y[i]) > std::abs(y[static_cast<Eigen::Index>(arg)])) arg = static_cast<std::size_t>(i);
  }
  return arg;
}

/// Label of the part holding the entry of maximum magnitude.
inline std::uint8_t determine_foreground(const Bipartition& part, const Eigen::VectorXd& y) {
  if (part.labels.size() != static_cast<std::size_t>(y.size()) || y.size() == 0) {
    throw ValidationError("partition and eigenvector sizes differ");
  }
  return part.labels[vmax_index(y)];
}

enum class SelectionMode { image, video };

struct ObjectSelection {
  std::uint8_t foreground_label = 0;
  std::size_t vmax_index = 0;
  PatchMask patch_mask;
  std::vector<std::int32_t> components;  // 0 background, else component id (unique across frames)
  std::int32_t component_count = 0;
};

/// 4-connected components of `mask`, labeled frame by frame with a union-find two-pass scan.
/// Labels are consecutive from 1 in raster order of first appearance.
inline std::vector<std::int32_t> label_components(const PatchMask& mask, std::int32_t* count = nullptr) {
  const auto& g = mask.geometry;
  std::vector<std::int32_t> provisional(g.nodes(), 0);
  std::vector<std::int32_t> parent{0};
  auto find = [&](std::int32_t a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  auto unite = [&](std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  };
  for (std::size_t f = 0; f < g.frames; ++f) {
    for (std::size_t r = 0; r < g.rows; ++r) {
      for (std::size_t c = 0; c < g.cols; ++c) {
        const std::size_t i = (f * g.rows + r) * g.cols + c;
        if (!mask.values[i]) continue;
        const std::int32_t up = r > 0 ? provisional[i - g.cols] : 0;
        const std::int32_t left = c > 0 ? provisional[i - 1] : 0;
        if (up == 0 && left == 0) {
          const auto label = static_cast<std::int32_t>(parent.size());
          parent.push_back(label);
          provisional[i] = label;
        } else if (up != 0 && left != 0) {
          provisional[i] = std::min(up, left);
          unite(up, left);
        } else {
          provisional[i] = std::max(up, left);
        }
      }
    }
  }
  std::vector<std::int32_t> remap(parent.size(), 0);
  std::int32_t next = 0;
  for (auto& label : provisional) {
    if (label == 0) continue;
    const auto root = static_cast<std::size_t>(find(label));
    if (remap[root] == 0) remap[root] = ++next;
    label = remap[root];
  }
  if (count) *count = next;
  return provisional;
}

/// Image mode keeps the component containing `vmax`; video mode keeps the whole foreground.
inline ObjectSelection select_object(const PatchMask& foreground, std::size_t vmax, SelectionMode mode) {
  if (vmax >= foreground.values.size() || !foreground.values[vmax]) {
    throw DomainError("vmax node is not part of the foreground");
  }
  ObjectSelection sel;
  sel.vmax_index = vmax;
  sel.components = label_components(foreground, &sel.component_count);
  if (mode == SelectionMode::video) {
    sel.patch_mask = foreground;
    return sel;
  }
  sel.patch_mask = PatchMask(foreground.geometry);
  const std::int32_t keep = sel.components[vmax];
  for (std::size_t i = 0; i < sel.components.size(); ++i) sel.patch_mask.values[i] = sel.components[i] == keep;
  return sel;
}

/// Foreground side of `part` as a patch mask.
inline PatchMask foreground_mask(const GridGeometry& geometry, const Bipartition& part, std::uint8_t label) {
  if (part.labels.size() != geometry.nodes()) throw ValidationError("partition size does not match grid");
  PatchMask mask(geometry);
  for (std::size_t i = 0; i < part.labels.size(); ++i) mask.values[i] = part.labels[i] == label;
  return mask;
}

/// Bipartition -> foreground -> selection in one call.
inline ObjectSelection extract_object(const GridGeometry& geometry, const Bipartition& part, const Eigen::VectorXd& y,
                                      SelectionMode mode) {
  const std::uint8_t fg = determine_foreground(part, y);
  auto sel = select_object(foreground_mask(geometry, part, fg), vmax_index(y), mode);
  sel.foreground_label = fg;
  return sel;
}

/// Tight pixel box around the foreground patches of one frame, clipped to the image.
inline DetectionBox mask_to_bbox(const PatchMask& mask, std::size_t frame, std::uint32_t patch_size,
                                 std::size_t image_height, std::size_t image_width) {
  const auto& g = mask.geometry;
  if (frame >= g.frames) throw ValidationError("frame index out of range");
  std::size_t rmin = g.rows, rmax = 0, cmin = g.cols, cmax = 0;
  bool any = false;
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t c = 0; c < g.cols; ++c) {
      if (!mask.at(frame, r, c)) continue;
      any = true;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
    }
  }
  if (!any) throw DomainError("bounding box of an empty mask");
  const auto k = static_cast<std::int64_t>(patch_size);
  DetectionBox box;
  box.x_min = k * static_cast<std::int64_t>(cmin);
  box.y_min = k * static_cast<std::int64_t>(rmin);
  box.x_max = std::min(k * static_cast<std::int64_t>(cmax + 1), static_cast<std::int64_t>(image_width));
  box.y_max = std::min(k * static_cast<std::int64_t>(rmax + 1), static_cast<std::int64_t>(image_height));
  return box;
}

}  // namespace ncutseg
