#pragma once

#include "infill/common.hpp"
#include "infill/mesh.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace infill {

enum class Label : std::uint8_t { Void = 0, Solid = 1, Boundary = 2, Passive = 3 };

/// Axis-aligned box or sphere used to pick boundary nodes for fixations and loads.
class RegionSelector {
 public:
  struct Box {
    Vec3 lo, hi;
  };
  struct Sphere {
    Vec3 center;
    double radius;
  };

  static RegionSelector box(const Vec3& lo, const Vec3& hi);
  static RegionSelector sphere(const Vec3& center, double radius);
  /// Parses "box:x0,y0,z0,x1,y1,z1" or "sphere:cx,cy,cz,r".
  static RegionSelector parse(const std::string& text);

  bool contains(const Vec3& p, double tol = 0.0) const;
  std::string to_string() const;
  const std::variant<Box, Sphere>& shape() const { return shape_; }

 private:
  explicit RegionSelector(std::variant<Box, Sphere> s) : shape_(s) {}
  std::variant<Box, Sphere> shape_;
};

/// The voxelized design domain with boundary conditions (a "preset" without material).
struct VoxelDomain {
  Grid grid;
  std::vector<Label> labels;
  std::set<std::size_t> fixed;          // node indices, all 3 DOFs clamped
  std::map<std::size_t, Vec3> loads;    // node index -> force

  std::size_t count(Label l) const;
  std::size_t num_material() const { return labels.size() - count(Label::Void); }
  bool is_material(std::size_t e) const { return labels[e] != Label::Void; }
  /// true for nodes touching at least one non-void element
  std::vector<std::uint8_t> material_nodes() const;
  /// true for nodes of Boundary or Passive elements
  std::vector<std::uint8_t> boundary_nodes() const;
};

inline constexpr std::size_t kDefaultElementCap = 64'000'000;

/// Solid block of nx*ny*nz elements with boundary classified; `padding` adds a void layer.
VoxelDomain make_block_domain(int nx, int ny, int nz, double spacing, bool padding = false);

/// Centroid voxelization of a closed mesh: `resolution` elements along the longest
/// bounding-box axis, one void layer of padding on every side.
VoxelDomain voxelize_mesh(const TriMesh& mesh, int resolution, std::size_t element_cap = kDefaultElementCap);

/// Solid elements with a void (or out-of-grid) 26-neighbour become Boundary.
VoxelDomain classify_boundary(VoxelDomain domain);

/// Grows the set labelled `label` (Boundary or Passive) by 26-adjacency. Boundary
/// grows into Solid only; Passive grows into Solid and Boundary.
VoxelDomain dilate(VoxelDomain domain, Label label, int iterations);

VoxelDomain apply_fixation(VoxelDomain domain, const RegionSelector& selector);

/// Splits `total_force` equally over the selected boundary nodes; loads accumulate.
VoxelDomain apply_load(VoxelDomain domain, const RegionSelector& selector, const Vec3& total_force);

enum class PassiveMode { AllBoundary, LoadedAndFixed };
VoxelDomain mark_passive(VoxelDomain domain, PassiveMode mode, int extra_dilation = 0);

/// Nodes of boundary elements lying in the selector (sorted).
std::vector<std::size_t> select_boundary_nodes(const VoxelDomain& domain, const RegionSelector& selector);

/// Outer faces of the non-void elements as a triangle mesh (outward oriented).
TriMesh surface_mesh(const VoxelDomain& domain);

/// SGLDVOX1 label volume. read accepts a second u8 channel (material fields) and
/// returns it through `second_channel` when non-null.
void write_voxel_file(const std::string& path, const Grid& grid, const std::vector<std::uint8_t>& labels,
                      const std::vector<std::uint8_t>* second_channel = nullptr);
Grid read_voxel_file(const std::string& path, std::vector<std::uint8_t>& labels,
                     std::vector<std::uint8_t>* second_channel = nullptr);

/// Loads a raw voxel model: labels verbatim, Boundary recomputed, boundary conditions empty.
VoxelDomain load_voxel_model(const std::string& path);
void save_voxel_model(const VoxelDomain& domain, const std::string& path);

}  // namespace infill
