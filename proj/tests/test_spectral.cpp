#include <gtest/gtest.h>

#include <random>

#include "ncutseg/partition.hpp"
#include "ncutseg/spectral.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ncutseg;
namespace t = ncutseg::testing;

namespace {

Eigen::VectorXd random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(static_cast<Eigen::Index>(n));
  for (auto& v : x) v = normal(rng);
  return x;
}

}  // namespace

TEST(Matvec, CompleteGraphWithoutEps) {
  const auto g = t::graph_from_adjacency(t::cliques({3}), 0.0);
  const Eigen::VectorXd y = affinity_matvec(g, Eigen::VectorXd::Ones(3));
  EXPECT_EQ(y, Eigen::VectorXd::Constant(3, 3.0));
}

TEST(Matvec, IdentityWithoutEps) {
  const auto g = t::graph_from_adjacency(t::cliques({1, 1, 1, 1}), 0.0);
  std::mt19937_64 rng(1);
  const Eigen::VectorXd x = random_vector(4, rng);
  EXPECT_EQ(affinity_matvec(g, x), x);
}

TEST(Matvec, MatchesDenseOnRandomGraphs) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = t::random_graph(32, rng);
    const Eigen::VectorXd x = random_vector(32, rng);
    const Eigen::VectorXd ref = t::dense_affinity(g) * x;
    EXPECT_LE((affinity_matvec(g, x) - ref).norm(), 1e-10 * ref.norm());
  }
}

TEST(Matvec, LengthMismatchRejected) {
  const auto g = t::graph_from_adjacency(t::cliques({3}), 1e-5);
  EXPECT_THROW(affinity_matvec(g, Eigen::VectorXd::Ones(2)), ValidationError);
}

TEST(DenseSolve, TrivialEigenpair) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = t::random_graph(4 + trial * 5, rng);
    const DenseSpectrum s = dense_generalized_eigensolve(g);
    EXPECT_NEAR(s.eigenvalues[0], 0.0, 1e-10);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(s.eigenvectors.rows()).normalized();
    EXPECT_GE(t::abs_cos(s.eigenvectors.col(0), ones), 1 - 1e-10);
    for (Eigen::Index k = 1; k < s.eigenvalues.size(); ++k) EXPECT_LE(s.eigenvalues[k - 1], s.eigenvalues[k]);
  }
}

TEST(DenseSolve, DisjointCliquesHaveDoubleZero) {
  const auto g = t::graph_from_adjacency(t::cliques({3, 3}), 0.0);
  const DenseSpectrum s = dense_generalized_eigensolve(g);
  EXPECT_NEAR(s.eigenvalues[0], 0.0, 1e-12);
  EXPECT_NEAR(s.eigenvalues[1], 0.0, 1e-12);
  EXPECT_GT(s.eigenvalues[2], 0.5);
  // Any vector in the null space is constant per block.
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd y = s.eigenvectors.col(k);
    EXPECT_NEAR(y[0], y[1], 1e-10);
    EXPECT_NEAR(y[1], y[2], 1e-10);
    EXPECT_NEAR(y[3], y[4], 1e-10);
    EXPECT_NEAR(y[4], y[5], 1e-10);
  }
}

TEST(DenseSolve, SizeCapEnforced) {
  const auto g = t::graph_from_adjacency(t::cliques({5}), 1e-5);
  EXPECT_THROW(dense_generalized_eigensolve(g, 4), SizeError);
}

TEST(DenseSolve, PlantedSixNodeFixture) {
  std::mt19937_64 rng(5);
  const FeatureGrid f = t::planted_grid(1, 6, t::Rect{0, 0, 1, 3}, rng, 1, 6);
  GraphConfig cfg;
  cfg.threads = 1;
  const auto g = build_image_graph(f, cfg);
  const CutSolution dense = dense_second_eigenvector(g);
  // Two triangles joined only by eps edges: the cut eigenvalue is tiny, the next is ~1.
  EXPECT_LT(dense.eigenvalue, 1e-4);
  EXPECT_FALSE(dense.degenerate_gap);
  for (int i = 1; i < 3; ++i) EXPECT_NEAR(dense.eigenvector[i], dense.eigenvector[0], 1e-9);
  EXPECT_LT(dense.eigenvector[0] * dense.eigenvector[3], 0.0);
  const CutSolution lz = second_eigenvector(g);
  EXPECT_GE(t::abs_cos(lz.eigenvector, dense.eigenvector), 1 - 1e-6);
  EXPECT_NEAR(lz.eigenvalue, dense.eigenvalue, 1e-9);
}

TEST(Lanczos, TwoNodeClosedForm) {
  const auto g = t::graph_from_adjacency(t::cliques({2}), 1e-5);
  // E = ones, D = 2I: (D - E) y = lambda D y has lambda in {0, 1}.
  for (SolverKind kind : {SolverKind::lanczos, SolverKind::dense}) {
    const CutSolution s = solve_cut(g, kind);
    EXPECT_NEAR(s.eigenvalue, 1.0, 1e-9);
    EXPECT_NEAR(s.eigenvector[0], 0.7071, 1e-4);
    EXPECT_NEAR(s.eigenvector[1], -0.7071, 1e-4);
    EXPECT_FALSE(s.degenerate_gap);
  }
  const auto ortho = t::graph_from_adjacency(t::cliques({1, 1}), 1e-5);
  // E = [[1, e], [e, 1]], D = (1 + e) I: lambda = 2e / (1 + e).
  const CutSolution s = second_eigenvector(ortho);
  EXPECT_NEAR(s.eigenvalue, 2e-5 / (1 + 1e-5), 1e-12);
}

TEST(Lanczos, PlantedBlocksSeparatedBySign) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const t::Rect block = t::random_block(8, 9, rng);
    const FeatureGrid f = t::planted_grid(8, 9, block, rng);
    GraphConfig cfg;
    cfg.threads = 1;
    const auto g = build_image_graph(f, cfg);
    const CutSolution s = second_eigenvector(g);
    const double ref_sign = s.eigenvector[static_cast<Eigen::Index>(block.r0 * 9 + block.c0)] > 0 ? 1 : -1;
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 0; c < 9; ++c) {
        const double v = s.eigenvector[static_cast<Eigen::Index>(r * 9 + c)] * ref_sign;
        if (block.contains(r, c)) EXPECT_GT(v, 0); else EXPECT_LT(v, 0);
      }
    }
  }
}

TEST(Lanczos, CompleteGraphIsFlaggedNotFatal) {
  std::mt19937_64 rng(7);
  FeatureGrid f = t::empty_grid(1, 5, 5, 4, 16);
  for (std::size_t i = 0; i < f.nodes(); ++i) f.feature(i)[0] = 1.0f;
  GraphConfig cfg;
  cfg.threads = 1;
  const auto g = build_image_graph(f, cfg);
  EXPECT_EQ(g.nnz(), 25u * 25u);
  const CutSolution s = second_eigenvector(g);
  EXPECT_TRUE(s.degenerate_gap);
  EXPECT_NEAR(s.eigenvalue, 1.0, 1e-9);
  EXPECT_NEAR(s.eigenvector.norm(), 1.0, 1e-12);
  EXPECT_NEAR(s.eigenvector.dot(g.degrees()), 0.0, 1e-9);
  EXPECT_TRUE(dense_second_eigenvector(g).degenerate_gap);
}

TEST(Lanczos, ConvergenceErrorCarriesResidual) {
  std::mt19937_64 rng(8);
  const auto g = t::random_graph(150, rng);
  LanczosOptions opt;
  opt.max_iter = 3;
  opt.tol = 1e-14;
  try {
    second_eigenvector(g, opt);
    FAIL() << "expected a convergence error";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.best_residual(), 0.0);
    EXPECT_TRUE(std::isfinite(e.best_residual()));
    EXPECT_EQ(e.kind(), ErrorKind::convergence);
  }
}

TEST(Lanczos, RestartsSmallBasisStillConverge) {
  std::mt19937_64 rng(9);
  const auto g = t::random_graph(180, rng);
  LanczosOptions opt;
  opt.basis_size = 8;
  opt.keep = 3;
  opt.max_iter = 5000;
  const CutSolution a = second_eigenvector(g, opt);
  const CutSolution d = dense_second_eigenvector(g);
  if (!d.degenerate_gap) EXPECT_GE(t::abs_cos(a.eigenvector, d.eigenvector), 1 - 1e-6);
}

TEST(Lanczos, SolutionInvariants) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    std::uniform_int_distribution<std::size_t> n(4, 120);
    const auto g = t::random_graph(n(rng), rng);
    const CutSolution s = second_eigenvector(g);
    const Eigen::VectorXd& y = s.eigenvector;
    EXPECT_NEAR(y.norm(), 1.0, 1e-12);
    // Largest-magnitude entry is positive.
    Eigen::Index arg;
    y.cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(y[arg], 0.0);
    // D-orthogonal to the trivial vector.
    const Eigen::VectorXd sd = g.degrees().cwiseSqrt();
    EXPECT_LE(std::abs(y.dot(g.degrees())), 1e-6 * sd.cwiseProduct(y).norm() * sd.norm());
    // Eigenpair residual.
    EXPECT_LE(generalized_residual(g, y, s.eigenvalue), LanczosOptions{}.tol);
    EXPECT_LE(s.residual, LanczosOptions{}.tol);
    EXPECT_NEAR(rayleigh_quotient(g, y), s.eigenvalue, 1e-12);
  }
}

TEST(Lanczos, Deterministic) {
  std::mt19937_64 rng(11);
  const auto g = t::random_graph(90, rng);
  const CutSolution a = second_eigenvector(g), b = second_eigenvector(g);
  EXPECT_EQ(a.eigenvector, b.eigenvector);
  EXPECT_EQ(a.eigenvalue, b.eigenvalue);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Rayleigh, Examples) {
  std::mt19937_64 rng(12);
  const auto g = t::random_graph(20, rng);
  EXPECT_NEAR(rayleigh_quotient(g, Eigen::VectorXd::Ones(20)), 0.0, 1e-15);

  const CutSolution s = second_eigenvector(g);
  EXPECT_NEAR(rayleigh_quotient(g, s.eigenvector), s.eigenvalue, 1e-10);

  const auto cl = t::graph_from_adjacency(t::cliques({3, 3}), 0.0);
  Eigen::VectorXd y(6);
  y << 1, 1, 1, -1, -1, -1;
  EXPECT_NEAR(y.dot(cl.degrees()), 0.0, 1e-15);
  EXPECT_NEAR(rayleigh_quotient(cl, y), 0.0, 1e-15);

  EXPECT_THROW(rayleigh_quotient(g, Eigen::VectorXd::Zero(20)), DomainError);
}

TEST(Rayleigh, AgreesWithDenseQuadraticForm) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = t::random_graph(10 + trial, rng);
    const Eigen::MatrixXd e = t::dense_affinity(g);
    const Eigen::MatrixXd d = e.rowwise().sum().asDiagonal();
    const Eigen::VectorXd y = random_vector(g.size(), rng);
    const double ref = y.dot((d - e) * y) / y.dot(d * y);
    EXPECT_NEAR(rayleigh_quotient(g, y), ref, 1e-10 * std::max(1.0, std::abs(ref)));
  }
}

TEST(Rayleigh, NonNegativeAndScaleInvariant) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> scale(-50, 50);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = t::random_graph(5 + trial % 40, rng);
    const Eigen::VectorXd y = random_vector(g.size(), rng);
    const double q = rayleigh_quotient(g, y);
    EXPECT_GE(q, -1e-10);
    double c = scale(rng);
    if (c == 0.0) c = 1.5;
    EXPECT_NEAR(rayleigh_quotient(g, c * y), q, 1e-12 * std::max(1.0, q));
  }
}

TEST(Sign, CanonicalizationRule) {
  Eigen::VectorXd v(3);
  v << 0.5, -2.0, 1.0;
  canonicalize_sign(v);
  EXPECT_GT(v[1], 0);
  EXPECT_NEAR(v.norm(), 1.0, 1e-15);
  Eigen::VectorXd tie(2);
  tie << -1.0, 1.0;
  canonicalize_sign(tie);
  EXPECT_GT(tie[0], 0);
}
