#include "infill/fem.hpp"
#include "infill/preset.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace infill;

namespace {

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

// Hexahedron stiffness assembled in physical coordinates with an n^3 rule.
Eigen::MatrixXd oracle_stiffness(double E, double nu, double h, int n) {
  const double lam = E * nu / ((1 + nu) * (1 - 2 * nu));
  const double mu = E / (2 * (1 + nu));
  std::vector<double> gx, gw;
  gauss_legendre(n, gx, gw);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(24, 24);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        const double p[3] = {0.5 * h * (gx[a] + 1), 0.5 * h * (gx[b] + 1), 0.5 * h * (gx[c] + 1)};
        const double wt = gw[a] * gw[b] * gw[c] * h * h * h / 8.0;
        // grad[node][axis]
        double grad[8][3];
        for (int m = 0; m < 8; ++m) {
          double f[3], df[3];
          for (int ax = 0; ax < 3; ++ax) {
            const double t = p[ax] / h;
            f[ax] = kHexCorners[m][ax] ? t : 1 - t;
            df[ax] = (kHexCorners[m][ax] ? 1.0 : -1.0) / h;
          }
          grad[m][0] = df[0] * f[1] * f[2];
          grad[m][1] = f[0] * df[1] * f[2];
          grad[m][2] = f[0] * f[1] * df[2];
        }
        // energy density: lam (div u)^2 + 2 mu eps:eps, bilinear form per DOF pair
        for (int m = 0; m < 8; ++m)
          for (int i = 0; i < 3; ++i)
            for (int q = 0; q < 8; ++q)
              for (int j = 0; j < 3; ++j) {
                double v = lam * grad[m][i] * grad[q][j];
                v += mu * grad[m][j] * grad[q][i];
                if (i == j) {
                  for (int k = 0; k < 3; ++k) v += mu * grad[m][k] * grad[q][k];
                }
                K(3 * m + i, 3 * q + j) += wt * v;
              }
      }
  return K;
}

// Dense K~ = Z K Z + (I - Z) assembled element by element.
Eigen::MatrixXd dense_operator(const FemProblem& p) {
  const std::size_t n = p.num_dofs();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t e = 0; e < p.grid.num_elements(); ++e) {
    if (p.modulus[e] == 0.0) continue;
    const auto nodes = p.grid.element_nodes(e);
    for (int r = 0; r < 24; ++r)
      for (int c = 0; c < 24; ++c)
        K(3 * nodes[r / 3] + r % 3, 3 * nodes[c / 3] + c % 3) += p.modulus[e] * p.Ke.K(r, c);
  }
  for (std::size_t d = 0; d < n; ++d) {
    if (!p.dof_fixed[d]) continue;
    K.row(d).setZero();
    K.col(d).setZero();
    K(d, d) = 1.0;
  }
  return K;
}

VoxelDomain cantilever_block(int nx, int ny, int nz) {
  auto d = make_block_domain(nx, ny, nz, 1.0);
  d = apply_fixation(d, RegionSelector::box(Vec3(-0.1, -0.1, -0.1), Vec3(0.1, ny + 0.1, nz + 0.1)));
  d = apply_load(d, RegionSelector::box(Vec3(nx - 0.1, -0.1, -0.1), Vec3(nx + 0.1, ny + 0.1, 0.1)),
                 Vec3(0.0, 0.0, -1.0));
  return d;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

double rel_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(Simp, ModulusExamples) {
  EXPECT_DOUBLE_EQ(simp_modulus(1.0, 3.0, 1e-9, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(simp_modulus(0.0, 3.0, 1e-9, 1.0), 1e-9);
  EXPECT_NEAR(simp_modulus(0.5, 3.0, 1e-9, 1.0), 0.125 + 0.875e-9, 1e-16);
}

TEST(ElementStiffness, MatchesHighOrderQuadrature) {
  for (double nu : {0.0, 0.3, 0.45}) {
    for (double h : {1.0, 0.37}) {
      const auto Ke = generic_element_stiffness(1.0, nu, h);
      const Eigen::MatrixXd ref = oracle_stiffness(1.0, nu, h, 10);
      const double err = (Eigen::MatrixXd(Ke.K) - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff();
      EXPECT_LE(err, 1e-9) << "nu=" << nu << " h=" << h;
    }
  }
}

TEST(ElementStiffness, SymmetricWithRigidBodyNullspace) {
  const auto Ke = generic_element_stiffness(1.0, 0.3, 1.0);
  EXPECT_LE((Ke.K - Ke.K.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  const double scale = Ke.K.cwiseAbs().maxCoeff();
  Eigen::Matrix<double, 24, 6> R = Eigen::Matrix<double, 24, 6>::Zero();
  for (int a = 0; a < 8; ++a) {
    const Vec3 x(kHexCorners[a][0], kHexCorners[a][1], kHexCorners[a][2]);
    for (int c = 0; c < 3; ++c) R(3 * a + c, c) = 1.0;
    for (int c = 0; c < 3; ++c) {
      Vec3 axis = Vec3::Zero();
      axis[c] = 1.0;
      const Vec3 v = axis.cross(x);
      for (int q = 0; q < 3; ++q) R(3 * a + q, 3 + c) = v[q];
    }
  }
  EXPECT_LE((Ke.K * R).cwiseAbs().maxCoeff(), 1e-10 * scale);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(Ke.K));
  const auto& ev = es.eigenvalues();
  for (int i = 0; i < 6; ++i) EXPECT_LE(std::abs(ev[i]), 1e-10 * scale);
  EXPECT_GT(ev[6], 1e-3 * scale);
}

TEST(ElementStiffness, RejectsInvalidPoisson) {
  EXPECT_THROW(generic_element_stiffness(1.0, 0.5, 1.0), ConfigError);
  EXPECT_THROW(generic_element_stiffness(1.0, -1.0, 1.0), ConfigError);
  EXPECT_THROW(generic_element_stiffness(1.0, 0.3, 0.0), ConfigError);
}

TEST(Operator, ZeroInZeroOut) {
  const auto d = cantilever_block(3, 2, 2);
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
  std::vector<double> u(p.num_dofs(), 0.0), y(p.num_dofs(), 1.0);
  apply_operator(p, u, y);
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Operator, SingleElementMatchesDenseProduct) {
  auto d = make_block_domain(1, 1, 1, 1.0);
  const auto p = make_problem(d, {2.5}, Material{});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  Eigen::VectorXd u(24);
  for (int i = 0; i < 24; ++i) u[i] = U(rng);
  // node order of the single element equals the lexicographic node order up to a permutation
  const auto nodes = p.grid.element_nodes(0);
  std::vector<double> ug(24), y(24);
  for (int a = 0; a < 8; ++a)
    for (int c = 0; c < 3; ++c) ug[3 * nodes[a] + c] = u[3 * a + c];
  apply_operator(p, ug, y);
  const Eigen::VectorXd ref = 2.5 * Eigen::MatrixXd(p.Ke.K) * u;
  for (int a = 0; a < 8; ++a)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(y[3 * nodes[a] + c], ref[3 * a + c], 1e-12);
}

TEST(Operator, MatchesDenseAssemblyLinearAndSymmetric) {
  auto d = cantilever_block(4, 3, 3);
  d.labels[d.grid.element(2, 1, 1)] = Label::Void;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(-1, 1), R(0.05, 1.0);
  std::vector<double> rho(d.grid.num_elements());
  for (auto& r : rho) r = R(rng);
  const auto p = make_problem(d, element_moduli(d, rho, Material{2.0, 0.3}), Material{2.0, 0.3});
  const Eigen::MatrixXd K = dense_operator(p);
  const std::size_t n = p.num_dofs();
  Eigen::VectorXd u(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = U(rng);
    v[i] = U(rng);
  }
  std::vector<double> Ku(n), Kv(n), Kuv(n), Kref(n);
  apply_operator(p, to_std(u), Ku);
  apply_operator(p, to_std(v), Kv);
  apply_operator(p, to_std(2.0 * u - 3.0 * v), Kuv);
  apply_operator_reference(p, to_std(u), Kref);
  const Eigen::VectorXd dense = K * u;
  EXPECT_LE(rel_norm_diff(Ku, to_std(dense)), 1e-13);
  EXPECT_LE(rel_norm_diff(Kref, Ku), 1e-14);
  double lin = 0.0, nrm = 0.0, vKu = 0.0, uKv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    lin = std::max(lin, std::abs(Kuv[i] - (2.0 * Ku[i] - 3.0 * Kv[i])));
    nrm = std::max(nrm, std::abs(Kuv[i]));
    vKu += v[i] * Ku[i];
    uKv += u[i] * Kv[i];
  }
  EXPECT_LE(lin, 1e-12 * nrm);
  EXPECT_NEAR(vKu, uKv, 1e-12 * std::abs(vKu));
}

TEST(Multigrid, LevelDimensionsHalve) {
  auto d = make_block_domain(8, 8, 8, 1.0);
  d = apply_fixation(d, RegionSelector::box(Vec3(-0.1, -0.1, -0.1), Vec3(0.1, 8.1, 8.1)));
  const auto p = make_problem(d, std::vector<double>(512, 1.0), Material{});
  const auto H = build_hierarchy(p, 3);
  ASSERT_EQ(H.depth(), 3u);
  EXPECT_EQ(H.levels[0].grid.nx, 8);
  EXPECT_EQ(H.levels[1].grid.nx, 4);
  EXPECT_EQ(H.levels[2].grid.nx, 2);
  EXPECT_EQ(H.levels[2].grid.nz, 2);
}

TEST(Multigrid, DepthClampsOnTinyGrids) {
  set_quiet(true);
  auto d = make_block_domain(2, 2, 2, 1.0);
  d = apply_fixation(d, RegionSelector::box(Vec3(-0.1, -0.1, -0.1), Vec3(0.1, 2.1, 2.1)));
  const auto p = make_problem(d, std::vector<double>(8, 1.0), Material{});
  const auto H = build_hierarchy(p, 5);
  set_quiet(false);
  EXPECT_LE(H.depth(), 2u);
}

namespace {

// Dense trilinear prolongation between node lattices, fine index f and coarse index c
// related by x_f = 2 x_c.
Eigen::MatrixXd dense_prolongation(const Grid& fg, const Grid& cg) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(3 * fg.num_nodes(), 3 * cg.num_nodes());
  for (std::size_t n = 0; n < fg.num_nodes(); ++n) {
    const auto f = fg.node_ijk(n);
    for (std::size_t m = 0; m < cg.num_nodes(); ++m) {
      const auto c = cg.node_ijk(m);
      double w = 1.0;
      for (int a = 0; a < 3; ++a) w *= std::max(0.0, 1.0 - std::abs(0.5 * f[a] - c[a]));
      if (w == 0.0) continue;
      for (int q = 0; q < 3; ++q) P(3 * n + q, 3 * m + q) = w;
    }
  }
  return P;
}

Eigen::MatrixXd galerkin_oracle(const Eigen::MatrixXd& Kfine, const std::vector<std::uint8_t>& fixed,
                                const Eigen::MatrixXd& P) {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Identity(Kfine.rows(), Kfine.cols());
  for (std::size_t d = 0; d < fixed.size(); ++d)
    if (fixed[d]) Z(d, d) = 0.0;
  Eigen::MatrixXd A = P.transpose() * Z * Kfine * Z * P;
  for (Eigen::Index d = 0; d < A.rows(); ++d) {
    if (A(d, d) == 0.0) {
      A.row(d).setZero();
      A.col(d).setZero();
      A(d, d) = 1.0;
    }
  }
  return A;
}

}  // namespace

TEST(Multigrid, TwoLevelGalerkinMatchesExplicitProduct) {
  for (int odd = 0; odd < 2; ++odd) {
    auto d = cantilever_block(4 + odd, 4, 3 + odd);
    std::mt19937_64 rng(11 + odd);
    std::uniform_real_distribution<double> R(0.1, 1.0);
    std::vector<double> rho(d.grid.num_elements());
    for (auto& r : rho) r = R(rng);
    d.labels[d.grid.element(1, 2, 1)] = Label::Void;
    const auto p = make_problem(d, element_moduli(d, rho, Material{}), Material{});
    const auto H = build_hierarchy(p, 2);
    ASSERT_EQ(H.depth(), 2u);
    const Eigen::MatrixXd P = dense_prolongation(p.grid, H.levels[1].grid);
    const Eigen::MatrixXd ref = galerkin_oracle(dense_operator(p), p.dof_fixed, P);
    const Eigen::MatrixXd got = H.coarsest_dense();
    EXPECT_LE((got - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff()) << "odd=" << odd;
    EXPECT_LE((got - got.transpose()).cwiseAbs().maxCoeff(), 1e-14 * ref.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(got);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Multigrid, ThreeLevelGalerkinMatchesExplicitProduct) {
  auto d = cantilever_block(8, 4, 4);
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
  const auto H = build_hierarchy(p, 3);
  ASSERT_EQ(H.depth(), 3u);
  const Eigen::MatrixXd P1 = dense_prolongation(p.grid, H.levels[1].grid);
  const Eigen::MatrixXd P2 = dense_prolongation(H.levels[1].grid, H.levels[2].grid);
  Eigen::MatrixXd A1 = galerkin_oracle(dense_operator(p), p.dof_fixed, P1);
  std::vector<std::uint8_t> f1(A1.rows(), 0);
  for (Eigen::Index i = 0; i < A1.rows(); ++i) f1[i] = A1(i, i) == 1.0 && A1.row(i).cwiseAbs().sum() == 1.0;
  const Eigen::MatrixXd ref = galerkin_oracle(A1, f1, P2);
  const Eigen::MatrixXd got = H.coarsest_dense();
  EXPECT_LE((got - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
}

TEST(Solver, ZeroForceGivesZeroIterations) {
  const auto d = cantilever_block(4, 2, 2);
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
  const std::vector<double> f(p.num_dofs(), 0.0);
  const auto r = solve(p, f, SolverConfig{});
  EXPECT_EQ(r.iterations, 0);
  EXPECT_TRUE(r.converged);
  for (double v : r.u) EXPECT_EQ(v, 0.0);
}

TEST(Solver, RejectsBadInputs) {
  const auto d = cantilever_block(2, 2, 2);
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
  std::vector<double> f(p.num_dofs(), 0.0);
  SolverConfig bad;
  bad.rel_tol = 0.0;
  EXPECT_THROW(solve(p, f, bad), ConfigError);
  f[5] = std::nan("");
  EXPECT_THROW(solve(p, f, SolverConfig{}), ConfigError);
  EXPECT_THROW(solve(p, std::vector<double>(3, 0.0), SolverConfig{}), ConfigError);
}

TEST(Solver, MatchesDenseDirectSolveOnRandomProblems) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(2, 6), face(0, 5), cnt(1, 6);
  std::uniform_real_distribution<double> U(-1, 1), R(0.1, 1.0);
  for (int trial = 0; trial < 24; ++trial) {
    const int nx = dim(rng), ny = dim(rng), nz = dim(rng);
    auto d = make_block_domain(nx, ny, nz, 1.0);
    const int fc = face(rng);
    const int ax = fc / 2;
    const double ext[3] = {double(nx), double(ny), double(nz)};
    Vec3 lo(-0.1, -0.1, -0.1), hi(nx + 0.1, ny + 0.1, nz + 0.1);
    if (fc % 2 == 0)
      hi[ax] = 0.1;
    else
      lo[ax] = ext[ax] - 0.1;
    d = apply_fixation(d, RegionSelector::box(lo, hi));
    const int nloads = cnt(rng);
    for (int l = 0; l < nloads; ++l) {
      const Vec3 c(std::round((U(rng) + 1) * 0.5 * nx), std::round((U(rng) + 1) * 0.5 * ny),
                   std::round((U(rng) + 1) * 0.5 * nz));
      const auto sel = RegionSelector::sphere(c, 0.6);
      if (select_boundary_nodes(d, sel).empty()) continue;
      bool all_fixed = true;
      for (auto n : select_boundary_nodes(d, sel)) all_fixed = all_fixed && d.fixed.count(n);
      if (all_fixed) continue;
      d = apply_load(d, sel, Vec3(U(rng), U(rng), U(rng)));
    }
    std::vector<double> rho(d.grid.num_elements());
    for (auto& r : rho) r = R(rng);
    const auto p = make_problem(d, element_moduli(d, rho, Material{}), Material{});
    const auto f = force_vector(d, p);
    SolverConfig cfg;
    cfg.rel_tol = 1e-8;
    cfg.coarsest_max_dofs = 60;
    const auto res = solve(p, f, cfg);
    ASSERT_TRUE(res.converged) << "trial " << trial;
    const Eigen::MatrixXd K = dense_operator(p);
    const Eigen::VectorXd fe = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
    const Eigen::VectorXd ref = K.ldlt().solve(fe);
    bool any = false;
    for (double v : f) any = any || v != 0.0;
    if (!any) continue;
    EXPECT_LE(rel_norm_diff(res.u, to_std(ref)), 1e-6) << "trial " << trial;
  }
}

TEST(Solver, AxialBarElongation) {
  // nu = 0 leaves the clamped root without lateral restraint; the end traction is
  // lumped consistently (face-sharing weights), so the uniform-strain state is exact
  const int L = 16, W = 4;
  auto d = make_block_domain(L, W, W, 1.0);
  d = apply_fixation(d, RegionSelector::box(Vec3(-0.1, -0.1, -0.1), Vec3(0.1, W + 0.1, W + 0.1)));
  const double F = 1.0;
  for (int k = 0; k <= W; ++k)
    for (int j = 0; j <= W; ++j) {
      const double wj = (j == 0 || j == W) ? 0.5 : 1.0;
      const double wk = (k == 0 || k == W) ? 0.5 : 1.0;
      d.loads[d.grid.node(L, j, k)] = Vec3(F * wj * wk / (W * W), 0.0, 0.0);
    }
  const Material mat{1.0, 0.0};
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), mat.E0), mat);
  const auto f = force_vector(d, p);
  SolverConfig cfg;
  cfg.rel_tol = 1e-10;
  const auto res = solve(p, f, cfg);
  ASSERT_TRUE(res.converged);
  double tip = 0.0;
  for (const auto& [n, load] : d.loads) tip += res.u[3 * n];
  tip /= static_cast<double>(d.loads.size());
  const double expected = F * L / (mat.E0 * W * W);
  EXPECT_NEAR(tip, expected, 0.01 * expected);
}

TEST(Solver, ComplianceIdentityAndModulusScaling) {
  const auto d = cantilever_block(8, 4, 4);
  const auto p1 = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{1.0, 0.3});
  const auto p2 = make_problem(d, std::vector<double>(d.grid.num_elements(), 2.0), Material{2.0, 0.3});
  const auto f = force_vector(d, p1);
  SolverConfig cfg;
  cfg.rel_tol = 1e-10;
  const auto r1 = solve(p1, f, cfg);
  const auto r2 = solve(p2, f, cfg);
  const auto c1 = compliance(p1, r1.u, f);
  const auto c2 = compliance(p2, r2.u, f);
  EXPECT_NEAR(c1.compliance, c1.energy_sum, 1e-6 * c1.compliance);
  EXPECT_NEAR(c2.compliance, 0.5 * c1.compliance, 1e-6 * c1.compliance);
  EXPECT_GT(c1.compliance, 0.0);
}

TEST(Solver, ResultIndependentOfThreadCount) {
  const auto d = cantilever_block(9, 5, 5);
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
  const auto f = force_vector(d, p);
  set_worker_threads(1);
  const auto a = solve(p, f, SolverConfig{});
  set_worker_threads(4);
  const auto b = solve(p, f, SolverConfig{});
  set_worker_threads(0);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.u, b.u);
}

TEST(Solver, ResidualDecreasesOverWindows) {
  const auto d = cantilever_block(24, 12, 12);
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
  const auto f = force_vector(d, p);
  SolverConfig cfg;
  cfg.rel_tol = 1e-9;
  const auto r = solve(p, f, cfg);
  ASSERT_TRUE(r.converged);
  const auto& h = r.residual_history;
  for (std::size_t i = 5; i < h.size(); ++i) EXPECT_LT(h[i], h[i - 5]) << "iteration " << i;
}

TEST(Solver, WarmStartFromSolutionNeedsNoIterations) {
  const auto d = cantilever_block(8, 4, 4);
  const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
  const auto f = force_vector(d, p);
  SolverConfig cfg;
  cfg.rel_tol = 1e-8;
  const auto H = build_hierarchy(p, 0);
  const auto a = solve(p, H, f, cfg);
  cfg.rel_tol = 1e-6;
  const auto b = solve(p, H, f, cfg, a.u);
  EXPECT_EQ(b.iterations, 0);
}

TEST(Multigrid, VCycleContractsError) {
  for (int n : {8, 16, 32}) {
    const auto d = cantilever_block(n, n, n);
    const auto p = make_problem(d, std::vector<double>(d.grid.num_elements(), 1.0), Material{});
    const auto f = force_vector(d, p);
    SolverConfig cfg;
    cfg.rel_tol = 1e-12;
    const auto H = build_hierarchy(p, 0);
    const auto exact = solve(p, H, f, cfg).u;
    const std::size_t N = p.num_dofs();
    std::vector<double> x(N, 0.0), Ax(N), r(N), z(N);
    auto err = [&] {
      double s = 0;
      for (std::size_t i = 0; i < N; ++i) s += (x[i] - exact[i]) * (x[i] - exact[i]);
      return std::sqrt(s);
    };
    double e0 = err();
    const int cycles = 5;
    for (int c = 0; c < cycles; ++c) {
      apply_operator(p, x, Ax);
      for (std::size_t i = 0; i < N; ++i) r[i] = f[i] - Ax[i];
      vcycle(p, H, cfg, r, z);
      for (std::size_t i = 0; i < N; ++i) x[i] += z[i];
    }
    const double factor = std::pow(err() / e0, 1.0 / cycles);
    EXPECT_LE(factor, 0.5) << "n=" << n;
  }
}

TEST(FloatVolume, RoundTripAndValidation) {
  Grid g;
  g.nx = 3;
  g.ny = 2;
  g.nz = 2;
  g.spacing = 0.5;
  g.origin = Vec3(1, 2, 3);
  std::vector<double> vals(g.num_elements());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.25 * i;
  const auto path = (std::filesystem::temp_directory_path() / "infill_vol.f32").string();
  write_float_volume(path, element_volume(g, vals));
  const auto v = read_float_volume(path);
  EXPECT_EQ(v.nx, 3);
  EXPECT_EQ(v.channels, 1);
  EXPECT_FLOAT_EQ(v.spacing, 0.5f);
  EXPECT_FLOAT_EQ(v.origin.z(), 3.0f);
  for (std::size_t i = 0; i < vals.size(); ++i) EXPECT_FLOAT_EQ(v.data[i], static_cast<float>(vals[i]));
  std::vector<double> nodal(3 * g.num_nodes(), 1.0);
  write_float_volume(path, nodal_volume(g, nodal));
  EXPECT_EQ(read_float_volume(path).nx, 4);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put('x');
  }
  EXPECT_THROW(read_float_volume(path), ConfigError);
  EXPECT_THROW(element_volume(g, std::vector<double>(5)), ConfigError);
}

TEST(Multigrid, CoarseLevelsWithSharedFreeDofsStayFactorizable) {
  // coarse nodes around a thin curved boundary can share a single free fine dof
  const auto p = sphere_preset(16);
  const auto prob =
      make_problem(p.domain, element_moduli(p.domain, std::vector<double>(p.domain.labels.size(), 1.0), p.material),
                   p.material);
  const auto f = force_vector(p.domain, prob);
  for (int levels : {2, 3, 0}) {
    SolverConfig s;
    s.rel_tol = 1e-10;
    s.levels = levels;
    const auto r = solve(prob, f, s);
    EXPECT_TRUE(r.converged) << levels;
  }
}
