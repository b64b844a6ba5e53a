#include "infill/porous.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace infill;

namespace {

VoxelDomain cantilever(int nx, int ny, int nz) {
  auto d = make_block_domain(nx, ny, nz, 1.0);
  d = apply_fixation(d, RegionSelector::box(Vec3(-0.1, -0.1, -0.1), Vec3(0.1, ny + 0.1, nz + 0.1)));
  d = apply_load(d, RegionSelector::box(Vec3(nx - 0.1, -0.1, -0.1), Vec3(nx + 0.1, ny + 0.1, 0.1)),
                 Vec3(0.0, 0.0, -1.0));
  return d;
}

}  // namespace

TEST(LocalFraction, UniformAndSelfOnly) {
  const auto d = cantilever(6, 5, 4);
  DesignContext ctx(d, DesignConfig{});
  const std::vector<double> half(d.labels.size(), 0.5);
  for (double v : local_fraction(ctx, kernels::ball_stencil(2.5), half)) EXPECT_NEAR(v, 0.5, 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<double> x(d.labels.size());
  for (auto& v : x) v = U(rng);
  EXPECT_EQ(local_fraction(ctx, kernels::ball_stencil(0.7), x), x);
}

TEST(LocalFraction, SingleSolidElementMatchesEnumeration) {
  auto d = cantilever(7, 7, 7);
  d.labels[d.grid.element(4, 3, 3)] = Label::Void;
  DesignContext ctx(d, DesignConfig{});
  const auto c = d.grid.element(3, 3, 3);
  std::vector<double> x(d.labels.size(), 0.0);
  x[c] = 1.0;
  const auto f = local_fraction(ctx, kernels::ball_stencil(2.0), x);
  for (std::size_t e = 0; e < x.size(); ++e) {
    if (!d.is_material(e)) continue;
    std::size_t count = 0;
    bool has = false;
    for (std::size_t m = 0; m < x.size(); ++m) {
      if (!d.is_material(m)) continue;
      if ((d.grid.element_center(e) - d.grid.element_center(m)).norm() <= 2.0 + 1e-12) {
        ++count;
        has = has || m == c;
      }
    }
    EXPECT_NEAR(f[e], has ? 1.0 / count : 0.0, 1e-15);
  }
}

TEST(Aggregate, AtBoundAndLargeExponent) {
  const std::vector<double> f(27, 0.4);
  const std::vector<std::uint8_t> mask(27, 1);
  EXPECT_NEAR(aggregate_constraint(f, mask, 0.4, 16).value, 0.0, 1e-14);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 50; ++t) {
    for (std::size_t n : {8u, 27u}) {
      std::vector<double> r(n);
      for (auto& v : r) v = U(rng);
      const std::vector<std::uint8_t> m(n, 1);
      const auto a = aggregate_constraint(r, m, 0.5, 256);
      const double mx = *std::max_element(r.begin(), r.end());
      EXPECT_LE(a.pmean, mx * (1 + 1e-14));
      // p-mean of n values is at least max * n^(-1/p)
      EXPECT_GE(a.pmean, mx * std::pow(double(n), -1.0 / 256) * (1 - 1e-14));
      if (n == 8) EXPECT_LE(std::abs(a.value - (mx / 0.5 - 1.0)), 0.01 * mx / 0.5);
    }
  }
}

TEST(Aggregate, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.4, 0.6);
  std::vector<double> f(27);
  for (auto& v : f) v = U(rng);
  std::vector<std::uint8_t> mask(27, 1);
  mask[4] = 0;
  const auto a = aggregate_constraint(f, mask, 0.45, 16, 1.3);
  for (std::size_t e = 0; e < 27; ++e) {
    auto fp = f, fm = f;
    fp[e] += 1e-6;
    fm[e] -= 1e-6;
    const double fd = (aggregate_constraint(fp, mask, 0.45, 16, 1.3).value -
                       aggregate_constraint(fm, mask, 0.45, 16, 1.3).value) / 2e-6;
    if (!mask[e]) {
      EXPECT_EQ(a.gradient[e], 0.0);
      continue;
    }
    EXPECT_NEAR(a.gradient[e], fd, 1e-4 * std::abs(fd) + 1e-12);
  }
}

TEST(Mma, TwoVariableQuadratic) {
  Mma mma(2);
  std::vector<double> x = {1.0, 0.9};
  const std::vector<double> lo = {0, 0}, hi = {1, 1};
  int it = 0;
  for (; it < 50; ++it) {
    const std::vector<double> df = {2 * x[0], 2 * x[1]};
    const double g = 1.0 - x[0] - x[1];
    const std::vector<double> dg = {-1.0, -1.0};
    const auto xn = mma.update(x, df, g, dg, lo, hi, 1.0);
    for (int j = 0; j < 2; ++j) {
      EXPECT_LT(mma.lower()[j], x[j]);
      EXPECT_GT(mma.upper()[j], x[j]);
    }
    const double step = std::max(std::abs(xn[0] - x[0]), std::abs(xn[1] - x[1]));
    x = xn;
    if (step < 1e-6) break;
  }
  EXPECT_LE(it, 50);
  EXPECT_NEAR(x[0], 0.5, 1e-3);
  EXPECT_NEAR(x[1], 0.5, 1e-3);
}

TEST(Mma, StationaryPointIsKeptAndMoveLimitHolds) {
  Mma mma(5);
  const std::vector<double> x = {0.1, 0.3, 0.5, 0.7, 0.9}, zero(5, 0.0), lo(5, 0.0), hi(5, 1.0);
  const auto same = mma.update(x, zero, -0.5, zero, lo, hi, 0.2);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(same[j], x[j], 1e-12);
  Mma m2(5);
  const std::vector<double> df = {-5, 3, -1, 8, -2}, dg = {1, 1, 1, 1, 1};
  const auto xn = m2.update(x, df, 0.3, dg, lo, hi, 0.05);
  for (int j = 0; j < 5; ++j) {
    EXPECT_LE(std::abs(xn[j] - x[j]), 0.05 + 1e-12);
    EXPECT_GE(xn[j], 0.0);
    EXPECT_LE(xn[j], 1.0);
  }
}

TEST(RunPorous, RespectsLocalBoundAndFillsSpace) {
  const auto d = cantilever(24, 12, 12);
  PorousConfig cfg;
  cfg.local_bound = 0.4;
  cfg.local_radius = 3.0;
  cfg.max_iters = 80;
  const auto r = run_porous(d, cfg);
  DesignContext ctx(d, cfg);
  const auto f = local_fraction(ctx, kernels::ball_stencil(cfg.local_radius), r.density.projected);
  const double mx = *std::max_element(f.begin(), f.end());
  EXPECT_LE(mx, cfg.local_bound + 0.02);
  EXPECT_LE(r.volume, cfg.local_bound + 0.02);
  EXPECT_GE(space_filling_fraction(d, r.density.projected, 4), 0.9);
  EXPECT_EQ(r.strategy, "porous");
  EXPECT_FALSE(r.history.empty());
  EXPECT_LT(r.compliance, r.history.front().compliance);
}

TEST(RunPorous, RejectsBadConfig) {
  const auto d = cantilever(4, 2, 2);
  PorousConfig cfg;
  cfg.local_bound = 1.0;
  EXPECT_THROW(run_porous(d, cfg), ConfigError);
  cfg.local_bound = 0.5;
  cfg.local_radius = 0.5;
  EXPECT_THROW(run_porous(d, cfg), ConfigError);
}

TEST(Calibration, MatchesTargetVolume) {
  const auto d = cantilever(12, 6, 6);
  PorousConfig cfg;
  cfg.local_radius = 2.0;
  cfg.max_iters = 25;
  const auto c = calibrate_local_bound(d, cfg, 0.3, 0.02, 10);
  EXPECT_NEAR(c.design.volume, 0.3, 0.02 * 0.3);
  EXPECT_GE(c.runs, 1);
}

TEST(SpaceFilling, Census) {
  const auto d = make_block_domain(16, 8, 8, 1.0);
  std::vector<double> x(d.labels.size(), 0.0);
  EXPECT_EQ(space_filling_fraction(d, x, 8), 0.0);
  x[d.grid.element(1, 1, 1)] = 1.0;
  EXPECT_DOUBLE_EQ(space_filling_fraction(d, x, 8), 0.5);
}
