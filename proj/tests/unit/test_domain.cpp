#include "infill/domain.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace infill;

namespace {

std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

VoxelDomain solid_block(int n) { return make_block_domain(n, n, n, 1.0); }

}  // namespace

TEST(Voxelize, UnitCubeGivesFourCubedMaterial) {
  const auto d = voxelize_mesh(make_box_mesh(Vec3::Zero(), Vec3::Ones()), 4);
  EXPECT_EQ(d.grid.nx, 6);
  EXPECT_EQ(d.grid.ny, 6);
  EXPECT_EQ(d.grid.nz, 6);
  EXPECT_DOUBLE_EQ(d.grid.spacing, 0.25);
  EXPECT_EQ(d.num_material(), 64u);
  // padding layer is void
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 6; ++i) {
      EXPECT_EQ(d.labels[d.grid.element(i, j, 0)], Label::Void);
      EXPECT_EQ(d.labels[d.grid.element(i, j, 5)], Label::Void);
    }
  EXPECT_EQ(d.count(Label::Boundary), 64u - 8u);
}

TEST(Voxelize, SphereVolumeWithinFivePercent) {
  const auto s = make_icosphere(Vec3::Constant(0.5), 0.5, 3);
  const auto d = voxelize_mesh(s, 32);
  const double expect = std::numbers::pi / 6.0 * 32 * 32 * 32;  // ~17157
  EXPECT_NEAR(static_cast<double>(d.num_material()), expect, 0.05 * expect);
}

TEST(Voxelize, VolumeErrorShrinksWithResolution) {
  const auto s = make_icosphere(Vec3::Zero(), 1.0, 3);
  const double vol = s.volume();
  double prev = std::numeric_limits<double>::infinity();
  for (int res : {8, 16, 32}) {
    const auto d = voxelize_mesh(s, res);
    const double h = d.grid.spacing;
    const double err = std::abs(d.num_material() * h * h * h - vol);
    EXPECT_LE(err, 0.5 * prev) << "res " << res;
    prev = err;
  }
}

TEST(Voxelize, OpenMeshAndCapAreRejected) {
  auto box = make_box_mesh(Vec3::Zero(), Vec3::Ones());
  EXPECT_THROW(voxelize_mesh(box, 2), ConfigError);
  EXPECT_THROW(voxelize_mesh(box, 64, 1000), ConfigError);
  box.triangles.pop_back();
  EXPECT_THROW(voxelize_mesh(box, 8), ConfigError);
}

TEST(VoxelModel, LoadSmallSolidAndRejectEmpty) {
  Grid g;
  g.nx = g.ny = g.nz = 2;
  write_voxel_file(tmp("infill_solid.vox"), g, std::vector<std::uint8_t>(8, 1));
  const auto d = load_voxel_model(tmp("infill_solid.vox"));
  EXPECT_EQ(d.num_material(), 8u);
  EXPECT_EQ(d.count(Label::Boundary), 8u);

  write_voxel_file(tmp("infill_void.vox"), g, std::vector<std::uint8_t>(8, 0));
  try {
    load_voxel_model(tmp("infill_void.vox"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("empty domain"), std::string::npos);
  }
}

TEST(VoxelModel, SizeMismatchRejected) {
  Grid g;
  g.nx = g.ny = g.nz = 2;
  write_voxel_file(tmp("infill_ok.vox"), g, std::vector<std::uint8_t>(8, 1));
  {
    std::ofstream app(tmp("infill_ok.vox"), std::ios::binary | std::ios::app);
    app.put(1);
  }
  EXPECT_THROW(load_voxel_model(tmp("infill_ok.vox")), ConfigError);
}

TEST(VoxelModel, ExportImportRoundTrip) {
  auto d = make_block_domain(5, 4, 3, 0.5, true);
  d = mark_passive(d, PassiveMode::AllBoundary);
  save_voxel_model(d, tmp("infill_rt.vox"));
  const auto back = load_voxel_model(tmp("infill_rt.vox"));
  EXPECT_TRUE(back.grid.same_shape(d.grid));
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_FLOAT_EQ(static_cast<float>(back.grid.spacing), 0.5f);
}

TEST(Boundary, BlockCounts) {
  auto d3 = solid_block(3);
  EXPECT_EQ(d3.count(Label::Boundary), 26u);
  EXPECT_EQ(d3.count(Label::Solid), 1u);
  EXPECT_EQ(d3.labels[d3.grid.element(1, 1, 1)], Label::Solid);
  EXPECT_EQ(solid_block(1).count(Label::Boundary), 1u);
  // 5^3 - 3^3 by enumeration of the outer shell
  std::size_t shell = 0;
  for (int k = 0; k < 5; ++k)
    for (int j = 0; j < 5; ++j)
      for (int i = 0; i < 5; ++i) shell += (i == 0 || j == 0 || k == 0 || i == 4 || j == 4 || k == 4);
  EXPECT_EQ(shell, 98u);
  EXPECT_EQ(solid_block(5).count(Label::Boundary), shell);
}

TEST(Boundary, Idempotent) {
  const auto d = voxelize_mesh(make_icosphere(Vec3::Zero(), 1.0, 2), 12);
  EXPECT_EQ(classify_boundary(d).labels, d.labels);
}

TEST(Dilate, IdentityFullAndMonotone) {
  const auto d = solid_block(5);
  EXPECT_EQ(dilate(d, Label::Boundary, 0).labels, d.labels);
  EXPECT_EQ(dilate(d, Label::Boundary, 1).count(Label::Boundary), 124u);
  EXPECT_EQ(dilate(d, Label::Boundary, 2).count(Label::Boundary), 125u);
  const auto s = voxelize_mesh(make_icosphere(Vec3::Zero(), 1.0, 2), 16);
  const auto grown = dilate(s, Label::Boundary, 2);
  for (std::size_t e = 0; e < s.labels.size(); ++e) {
    if (s.labels[e] == Label::Boundary) EXPECT_EQ(grown.labels[e], Label::Boundary);
    if (s.labels[e] == Label::Void) EXPECT_EQ(grown.labels[e], Label::Void);
  }
  EXPECT_GT(grown.count(Label::Boundary), s.count(Label::Boundary));
}

TEST(Fixation, BottomFaceBoxSelectsAllBottomNodes) {
  const auto d = make_block_domain(4, 3, 2, 1.0);
  const auto f = apply_fixation(d, RegionSelector::box(Vec3(-1, -1, -0.1), Vec3(10, 10, 0.1)));
  EXPECT_EQ(f.fixed.size(), 5u * 4u);
  for (auto n : f.fixed) EXPECT_EQ(f.grid.node_ijk(n)[2], 0);
}

TEST(Fixation, ZeroRadiusSphereIsEmptySelection) {
  const auto d = make_block_domain(2, 2, 2, 1.0);
  try {
    apply_fixation(d, RegionSelector::sphere(Vec3::Zero(), 0.0));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("sphere:"), std::string::npos);
  }
}

TEST(Fixation, OverlappingSelectorsUnion) {
  const auto d = make_block_domain(4, 4, 4, 1.0);
  const auto a = RegionSelector::box(Vec3(-1, -1, -1), Vec3(2, 5, 0.1));
  const auto b = RegionSelector::box(Vec3(1, -1, -1), Vec3(5, 5, 0.1));
  const auto f = apply_fixation(apply_fixation(d, a), b);
  EXPECT_EQ(f.fixed.size(), 25u);
  const auto twice = apply_fixation(f, a);
  EXPECT_EQ(twice.fixed, f.fixed);
}

TEST(Load, EqualSplitConservationAndAccumulation) {
  const auto d = make_block_domain(1, 1, 1, 1.0);
  const auto top = RegionSelector::box(Vec3(-1, -1, 0.9), Vec3(2, 2, 1.1));
  const auto l = apply_load(d, top, Vec3(0, 0, -1));
  ASSERT_EQ(l.loads.size(), 4u);
  Vec3 sum = Vec3::Zero();
  for (const auto& [n, f] : l.loads) {
    EXPECT_EQ(f, Vec3(0, 0, -0.25));
    sum += f;
  }
  EXPECT_LE((sum - Vec3(0, 0, -1)).norm(), 1e-12);

  const auto big = make_block_domain(7, 5, 3, 0.3);
  const auto face = RegionSelector::box(Vec3(2.0, -1, -1), Vec3(3, 3, 3));
  const Vec3 force(0.3, -1.7, 2.9);
  const auto lb = apply_load(big, face, force);
  Vec3 total = Vec3::Zero();
  for (const auto& [n, f] : lb.loads) total += f;
  EXPECT_LE((total - force).norm(), 1e-12);
  const auto cancel = apply_load(lb, face, -force);
  for (const auto& [n, f] : cancel.loads) EXPECT_LE(f.norm(), 1e-15);
}

TEST(Load, RejectsEmptyAndAllFixedIgnoresZero) {
  const auto d = make_block_domain(2, 2, 2, 1.0);
  EXPECT_THROW(apply_load(d, RegionSelector::box(Vec3(5, 5, 5), Vec3(6, 6, 6)), Vec3(0, 0, 1)), ConfigError);
  const auto bottom = RegionSelector::box(Vec3(-1, -1, -0.1), Vec3(3, 3, 0.1));
  const auto fixed = apply_fixation(d, bottom);
  EXPECT_THROW(apply_load(fixed, bottom, Vec3(0, 0, 1)), ConfigError);
  set_quiet(true);
  EXPECT_TRUE(apply_load(d, bottom, Vec3::Zero()).loads.empty());
  set_quiet(false);
}

TEST(Passive, Modes) {
  EXPECT_EQ(mark_passive(solid_block(3), PassiveMode::AllBoundary).count(Label::Passive), 26u);
  EXPECT_EQ(mark_passive(solid_block(3), PassiveMode::LoadedAndFixed).count(Label::Passive), 0u);
  auto d = make_block_domain(8, 6, 6, 1.0);
  d = apply_fixation(d, RegionSelector::box(Vec3(-0.1, -1, -1), Vec3(0.1, 7, 7)));
  d = apply_load(d, RegionSelector::box(Vec3(7.9, -1, -1), Vec3(8.1, 7, 0.1)), Vec3(0, 0, -1));
  const auto p0 = mark_passive(d, PassiveMode::LoadedAndFixed, 0);
  const auto p1 = mark_passive(d, PassiveMode::LoadedAndFixed, 1);
  EXPECT_GT(p0.count(Label::Passive), 0u);
  EXPECT_GT(p1.count(Label::Passive), p0.count(Label::Passive));
  for (std::size_t e = 0; e < d.labels.size(); ++e)
    if (p0.labels[e] == Label::Passive) EXPECT_EQ(p1.labels[e], Label::Passive);
}

TEST(Domain, ConditionedNodesTouchMaterial) {
  auto d = voxelize_mesh(make_icosphere(Vec3::Zero(), 1.0, 2), 10);
  d = apply_fixation(d, RegionSelector::box(Vec3(-2, -2, -2), Vec3(2, 2, -0.6)));
  d = apply_load(d, RegionSelector::sphere(Vec3(0, 0, 1), 0.5), Vec3(0, 0, -1));
  const auto mat = d.material_nodes();
  for (auto n : d.fixed) EXPECT_TRUE(mat[n]);
  for (const auto& [n, f] : d.loads) EXPECT_TRUE(mat[n]);
}

TEST(Domain, SurfaceMeshOfBlockIsClosedAndEnclosesVolume) {
  const auto d = make_block_domain(3, 2, 2, 0.5, true);
  const auto m = surface_mesh(d);
  EXPECT_TRUE(non_manifold_edges(m).empty());
  EXPECT_NEAR(m.volume(), 3 * 2 * 2 * 0.125, 1e-12);
}

TEST(Selector, ParseRoundTrip) {
  const auto s = RegionSelector::parse("box:0,0,0,1,2,3");
  EXPECT_TRUE(s.contains(Vec3(1, 2, 3)));
  EXPECT_EQ(RegionSelector::parse(s.to_string()).to_string(), s.to_string());
  EXPECT_THROW(RegionSelector::parse("box:1,1,1,0,0,0"), ConfigError);
  EXPECT_THROW(RegionSelector::parse("cone:1,2"), ConfigError);
}
