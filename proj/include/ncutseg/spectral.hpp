#pragma once

// Relaxed normalized cut: the second smallest eigenpair of (D - E) y = lambda D y.
//
// Both solvers work on the symmetric form  N = D^{-1/2} (D - E) D^{-1/2}  and map
// back with y = D^{-1/2} z. The trivial pair is lambda = 0, z0 = D^{1/2} 1.
//
// The Lanczos path never forms E; it iterates on M = D^{-1/2} E D^{-1/2} = I - N,
// restricted to the complement of z0, and targets the largest eigenvalue of M there.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>

#include "ncutseg/error.hpp"
#include "ncutseg/graph.hpp"

namespace ncutseg {

enum class SolverKind { dense, lanczos };

inline const char* to_string(SolverKind kind) { return kind == SolverKind::dense ? "dense" : "lanczos"; }

struct CutSolution {
  Eigen::VectorXd eigenvector;  // unit norm, largest-magnitude entry positive
  double eigenvalue = 0.0;
  SolverKind solver = SolverKind::lanczos;
  std::size_t iterations = 0;  // operator applications
  double residual = 0.0;       // |(D-E)y - lambda D y| / |D y|
  double gap = std::numeric_limits<double>::quiet_NaN();  // lambda_2 - lambda_1 (Ritz estimate for Lanczos)
  bool degenerate_gap = false;
};

inline constexpr std::size_t kDenseCap = 4096;
inline constexpr double kDegenerateGap = 1e-8;

struct LanczosOptions {
  double tol = 1e-7;
  std::size_t max_iter = 0;     // 0: 10 sqrt(n) + 200
  std::size_t basis_size = 64;  // Krylov vectors held before a thick restart
  std::size_t keep = 16;        // Ritz vectors retained across a restart
  double degenerate_gap = kDegenerateGap;
};

inline std::size_t default_max_iter(std::size_t n) {
  return static_cast<std::size_t>(10.0 * std::sqrt(static_cast<double>(n))) + 200;
}

/// E x = eps (sum x) 1 + (1 - eps) B x, in O(nnz(B) + n).
inline Eigen::VectorXd affinity_matvec(const AffinityGraph& graph, const Eigen::VectorXd& x) {
  const std::size_t n = graph.size();
  if (static_cast<std::size_t>(x.size()) != n) {
    throw ValidationError("matvec length " + std::to_string(x.size()) + " != node count " + std::to_string(n));
  }
  const double eps = graph.eps();
  const double dense_part = eps * x.sum();
  Eigen::VectorXd y(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (auto j : graph.row(i)) acc += x[j];
    y[static_cast<Eigen::Index>(i)] = dense_part + (1.0 - eps) * acc;
  }
  return y;
}

/// y^T (D - E) y, evaluated as (1/2) sum_ij E_ij (y_i - y_j)^2 so it is never negative.
inline double laplacian_quadratic_form(const AffinityGraph& graph, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(graph.size());
  const double mean = y.mean();
  const double spread = (y.array() - mean).square().sum();
  double sparse = 0.0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const double yi = y[static_cast<Eigen::Index>(i)];
    for (auto j : graph.row(i)) {
      if (j > i) {
        const double diff = yi - y[j];
        sparse += diff * diff;
      }
    }
  }
  return graph.eps() * n * spread + (1.0 - graph.eps()) * sparse;
}

inline double rayleigh_quotient(const AffinityGraph& graph, const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != graph.size()) throw ValidationError("vector length mismatch");
  const double denom = (graph.degrees().array() * y.array().square()).sum();
  if (denom == 0.0) throw DomainError("Rayleigh quotient of a zero vector");
  return laplacian_quadratic_form(graph, y) / denom;
}

inline double generalized_residual(const AffinityGraph& graph, const Eigen::VectorXd& y, double lambda) {
  const Eigen::VectorXd dy = graph.degrees().cwiseProduct(y);
  const Eigen::VectorXd r = dy - affinity_matvec(graph, y) - lambda * dy;
  return r.norm() / dy.norm();
}

/// Unit norm; the entry of largest magnitude (lowest index on ties) becomes positive.
inline void canonicalize_sign(Eigen::VectorXd& v) {
  const double norm = v.norm();
  if (norm == 0.0) return;
  v /= norm;
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) v = -v;
}

struct DenseSpectrum {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // column k is y_k (unit norm, canonical sign)
};

/// Full generalized spectrum by dense symmetric eigendecomposition.
inline DenseSpectrum dense_generalized_eigensolve(const AffinityGraph& graph, std::size_t cap = kDenseCap) {
  const std::size_t n = graph.size();
  if (n > cap) throw SizeError("dense solve of " + std::to_string(n) + " nodes exceeds cap " + std::to_string(cap));
  if (n == 0) throw DomainError("empty graph");
  const auto ni = static_cast<Eigen::Index>(n);
  const double eps = graph.eps();
  Eigen::MatrixXd e = Eigen::MatrixXd::Constant(ni, ni, eps);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto j : graph.row(i)) e(static_cast<Eigen::Index>(i), j) = eps + (1.0 - eps);
  }
  const Eigen::VectorXd s = graph.degrees().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd normalized = -(s.asDiagonal() * e * s.asDiagonal());
  normalized.diagonal().array() += 1.0;
  normalized = 0.5 * (normalized + normalized.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normalized);
  if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", 0.0);
  DenseSpectrum out;
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = s.asDiagonal() * es.eigenvectors();
  for (Eigen::Index k = 0; k < ni; ++k) {
    Eigen::VectorXd col = out.eigenvectors.col(k);
    canonicalize_sign(col);
    out.eigenvectors.col(k) = col;
  }
  return out;
}

/// Second eigenpair taken from the dense spectrum.
inline CutSolution dense_second_eigenvector(const AffinityGraph& graph, std::size_t cap = kDenseCap) {
  if (graph.size() < 2) throw DomainError("cut needs at least two nodes");
  const DenseSpectrum spec = dense_generalized_eigensolve(graph, cap);
  CutSolution sol;
  sol.solver = SolverKind::dense;
  sol.eigenvector = spec.eigenvectors.col(1);
  sol.eigenvalue = std::max(0.0, spec.eigenvalues[1]);
  sol.residual = generalized_residual(graph, sol.eigenvector, sol.eigenvalue);
  if (graph.size() > 2) {
    sol.gap = spec.eigenvalues[2] - spec.eigenvalues[1];
    sol.degenerate_gap = sol.gap < kDegenerateGap;
  }
  return sol;
}

/// Matrix-free second eigenvector: thick-restart Lanczos with full reorthogonalization,
/// deflating the trivial vector D^{1/2} 1 exactly.
inline CutSolution second_eigenvector(const AffinityGraph& graph, const LanczosOptions& opt = {}) {
  using Eigen::Index;
  const std::size_t n = graph.size();
  if (n < 2) throw DomainError("cut needs at least two nodes");
  const Eigen::VectorXd& deg = graph.degrees();
  if (deg.minCoeff() <= 0.0) throw DomainError("graph has a node with zero degree");
  if (!(opt.tol > 0.0)) throw ValidationError("Lanczos tolerance must be positive");

  const Index ni = static_cast<Index>(n);
  const Eigen::VectorXd inv_sqrt = deg.cwiseSqrt().cwiseInverse();
  const Eigen::VectorXd z0 = deg.cwiseSqrt().normalized();
  const Index dim = ni - 1;  // dimension of the deflated space
  const Index m = std::clamp<Index>(static_cast<Index>(opt.basis_size), 2, std::max<Index>(dim, 2));
  const Index basis = std::min(m, dim);
  const Index keep = std::clamp<Index>(static_cast<Index>(opt.keep), 1, std::max<Index>(basis - 1, 1));
  const std::size_t max_iter = opt.max_iter ? opt.max_iter : default_max_iter(n);
  constexpr double kBreakdown = 1e-12;

  auto apply = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return inv_sqrt.cwiseProduct(affinity_matvec(graph, inv_sqrt.cwiseProduct(z)));
  };

  Eigen::MatrixXd v(ni, basis + 1);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(basis, basis);
  std::mt19937_64 rng(n);
  std::normal_distribution<double> normal;

  // Fills column `col` with a random unit vector orthogonal to z0 and columns [0, col).
  auto random_column = [&](Index col) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::VectorXd w(ni);
      for (Index i = 0; i < ni; ++i) w[i] = normal(rng);
      for (int pass = 0; pass < 2; ++pass) {
        w -= z0.dot(w) * z0;
        if (col > 0) w -= v.leftCols(col) * (v.leftCols(col).transpose() * w);
      }
      const double norm = w.norm();
      if (norm > 1e-8) {
        v.col(col) = w / norm;
        return;
      }
    }
    throw ConvergenceError("could not extend Krylov basis", std::numeric_limits<double>::infinity());
  };

  random_column(0);
  Index cur = 0;
  std::size_t matvecs = 0;
  const double spread = std::sqrt(deg.minCoeff() / deg.maxCoeff());
  double inner_tol = 0.5 * opt.tol * spread;
  double best_residual = std::numeric_limits<double>::infinity();

  while (true) {
    const Index j = cur;
    Eigen::VectorXd w = apply(v.col(j));
    ++matvecs;
    Eigen::VectorXd coeff = Eigen::VectorXd::Zero(j + 1);
    for (int pass = 0; pass < 2; ++pass) {
      w -= z0.dot(w) * z0;
      const Eigen::VectorXd c = v.leftCols(j + 1).transpose() * w;
      w -= v.leftCols(j + 1) * c;
      coeff += c;
    }
    h.block(0, j, j + 1, 1) = coeff;
    h.block(j, 0, 1, j + 1) = coeff.transpose();
    double beta = w.norm();
    const Index size = j + 1;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h.topLeftCorner(size, size));
    const Eigen::VectorXd ritz = es.eigenvalues();
    const Eigen::VectorXd s = es.eigenvectors().col(size - 1);
    const double estimate = std::abs(beta * s[size - 1]);
    const bool exhausted = size == dim;

    if (size >= std::min<Index>(2, dim) && (estimate <= inner_tol || exhausted)) {
      Eigen::VectorXd y = inv_sqrt.cwiseProduct(v.leftCols(size) * s);
      canonicalize_sign(y);
      CutSolution sol;
      sol.solver = SolverKind::lanczos;
      sol.eigenvalue = rayleigh_quotient(graph, y);
      sol.residual = generalized_residual(graph, y, sol.eigenvalue);
      sol.iterations = matvecs;
      best_residual = std::min(best_residual, sol.residual);
      if (sol.residual <= opt.tol || exhausted) {
        if (sol.residual > opt.tol) {
          throw ConvergenceError("Lanczos basis exhausted above tolerance", sol.residual);
        }
        if (size >= 2) {
          sol.gap = ritz[size - 1] - ritz[size - 2];
          sol.degenerate_gap = sol.gap < opt.degenerate_gap;
        }
        sol.eigenvector = std::move(y);
        return sol;
      }
      inner_tol *= 0.1;
    }
    if (matvecs >= max_iter) {
      if (!std::isfinite(best_residual)) {
        Eigen::VectorXd y = inv_sqrt.cwiseProduct(v.leftCols(size) * s);
        best_residual = generalized_residual(graph, y, rayleigh_quotient(graph, y));
      }
      throw ConvergenceError("Lanczos did not converge in " + std::to_string(max_iter) + " iterations",
                             best_residual);
    }

    if (beta <= kBreakdown) {
      // Invariant subspace found; continue in a fresh direction.
      random_column(size);
      beta = 0.0;
    } else {
      v.col(size) = w / beta;
    }

    if (size < basis) {
      h(size, j) = beta;
      h(j, size) = beta;
      cur = size;
    } else {
      const Eigen::MatrixXd kept = es.eigenvectors().rightCols(keep);
      const Eigen::MatrixXd rotated = v.leftCols(basis) * kept;
      v.leftCols(keep) = rotated;
      v.col(keep) = v.col(basis);
      h.setZero();
      for (Index i = 0; i < keep; ++i) {
        h(i, i) = ritz[basis - keep + i];
        h(keep, i) = h(i, keep) = beta * kept(basis - 1, i);
      }
      cur = keep;
    }
  }
}

/// Dispatches to the dense or Lanczos solver.
inline CutSolution solve_cut(const AffinityGraph& graph, SolverKind kind, const LanczosOptions& opt = {}) {
  return kind == SolverKind::dense ? dense_second_eigenvector(graph) : second_eigenvector(graph, opt);
}

}  // namespace ncutseg
