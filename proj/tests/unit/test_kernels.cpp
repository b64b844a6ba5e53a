#include "infill/kernels.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace infill;
namespace k = infill::kernels;

namespace {

Grid odd_grid() {
  Grid g;
  g.nx = 7;
  g.ny = 5;
  g.nz = 6;
  return g;
}

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> U(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = U(rng);
  return v;
}

std::vector<double> symmetric24(std::mt19937_64& rng) {
  auto a = random_vec(576, rng);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < r; ++c) a[24 * r + c] = a[24 * c + r];
  return a;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0, s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
    s = std::max(s, std::abs(a[i]));
  }
  return m / std::max(s, 1e-300);
}

}  // namespace

TEST(Kernels, UniformStiffnessSerialMatchesParallel) {
  std::mt19937_64 rng(1);
  const Grid g = odd_grid();
  const auto K = symmetric24(rng);
  auto E = random_vec(g.num_elements(), rng, 0.0, 2.0);
  for (std::size_t e = 0; e < E.size(); e += 5) E[e] = 0.0;
  const auto u = random_vec(3 * g.num_nodes(), rng);
  std::vector<double> ys(u.size(), 0.0), yp(u.size(), 0.0);
  k::serial::apply_uniform_stiffness(g, K, E, u, ys);
  k::parallel::apply_uniform_stiffness(g, K, E, u, yp);
  EXPECT_LE(max_rel_diff(ys, yp), 1e-14);
}

TEST(Kernels, ParallelResultIndependentOfThreadCount) {
  std::mt19937_64 rng(2);
  const Grid g = odd_grid();
  const auto K = symmetric24(rng);
  const auto E = random_vec(g.num_elements(), rng, 0.1, 1.0);
  const auto u = random_vec(3 * g.num_nodes(), rng);
  std::vector<double> y1(u.size(), 0.0), y3(u.size(), 0.0);
  set_worker_threads(1);
  k::parallel::apply_uniform_stiffness(g, K, E, u, y1);
  set_worker_threads(3);
  k::parallel::apply_uniform_stiffness(g, K, E, u, y3);
  set_worker_threads(0);
  EXPECT_EQ(y1, y3);
}

TEST(Kernels, ElementMatricesSerialMatchesParallel) {
  std::mt19937_64 rng(3);
  const Grid g = odd_grid();
  std::vector<double> mats;
  for (std::size_t e = 0; e < g.num_elements(); ++e) {
    const auto m = symmetric24(rng);
    mats.insert(mats.end(), m.begin(), m.end());
  }
  std::vector<std::uint8_t> active(g.num_elements(), 1);
  active[3] = active[17] = 0;
  const auto u = random_vec(3 * g.num_nodes(), rng);
  std::vector<double> ys(u.size(), 0.0), yp(u.size(), 0.0);
  k::serial::apply_element_matrices(g, mats, active, u, ys);
  k::parallel::apply_element_matrices(g, mats, active, u, yp);
  EXPECT_LE(max_rel_diff(ys, yp), 1e-14);
}

TEST(Kernels, ElementEnergySerialMatchesParallel) {
  std::mt19937_64 rng(4);
  const Grid g = odd_grid();
  const auto K = symmetric24(rng);
  std::vector<std::uint8_t> mask(g.num_elements(), 1);
  mask[0] = 0;
  const auto u = random_vec(3 * g.num_nodes(), rng);
  std::vector<double> a(g.num_elements()), b(g.num_elements());
  k::serial::element_energy(g, K, mask, u, a);
  k::parallel::element_energy(g, K, mask, u, b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0], 0.0);
}

TEST(Kernels, StencilAverageAndTransposeAreAdjoint) {
  std::mt19937_64 rng(5);
  const Grid g = odd_grid();
  const auto st = k::conic_stencil(2.3);
  std::vector<std::uint8_t> mask(g.num_elements(), 1);
  for (std::size_t e = 0; e < mask.size(); e += 7) mask[e] = 0;
  auto x = random_vec(g.num_elements(), rng);
  auto y = random_vec(g.num_elements(), rng);
  for (std::size_t e = 0; e < mask.size(); ++e)
    if (!mask[e]) x[e] = y[e] = 0.0;
  std::vector<double> Ax(x.size()), Aty(x.size()), Ax_p(x.size()), Aty_p(x.size());
  k::serial::stencil_average(g, st, mask, x, Ax);
  k::serial::stencil_average_transpose(g, st, mask, y, Aty);
  k::parallel::stencil_average(g, st, mask, x, Ax_p);
  k::parallel::stencil_average_transpose(g, st, mask, y, Aty_p);
  double lhs = 0, rhs = 0;
  for (std::size_t e = 0; e < x.size(); ++e) {
    lhs += y[e] * Ax[e];
    rhs += x[e] * Aty[e];
  }
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::abs(lhs));
  EXPECT_LE(max_rel_diff(Ax, Ax_p), 1e-15);
  EXPECT_LE(max_rel_diff(Aty, Aty_p), 1e-14);
}

TEST(Kernels, Stencils) {
  const auto ball = k::ball_stencil(1.0);
  EXPECT_EQ(ball.offsets.size(), 7u);
  EXPECT_EQ(k::ball_stencil(0.5).offsets.size(), 1u);
  const auto cone = k::conic_stencil(0.8);
  ASSERT_EQ(cone.offsets.size(), 1u);
  EXPECT_EQ(k::conic_stencil(1.5).offsets.size(), 19u);
}
