#pragma once

#include "infill/common.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace infill {

/// Closed triangle mesh describing a design domain boundary.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  Vec3 bbox_min() const;
  Vec3 bbox_max() const;
  /// Signed enclosed volume (positive for outward-oriented meshes).
  double volume() const;
};

/// Undirected edges not shared by exactly two triangles. Empty for a closed mesh.
std::vector<std::pair<int, int>> non_manifold_edges(const TriMesh& mesh);

/// Throws ConfigError listing offending edges when the mesh is not edge-manifold,
/// or when a triangle references a vertex out of range.
void require_closed(const TriMesh& mesh);

/// Generalized winding number of `p` with respect to the mesh (1 inside, 0 outside,
/// 0.5 on the surface for a closed, outward oriented mesh).
double winding_number(const TriMesh& mesh, const Vec3& p);

/// Batched winding numbers, parallel over query points.
std::vector<double> winding_numbers(const TriMesh& mesh, std::span<const Vec3> points);

/// Parameter t in [0,1] of the first intersection of segment a->b with the mesh,
/// measured from `a`; nullopt when the segment does not hit any triangle.
std::optional<double> first_hit(const TriMesh& mesh, const Vec3& a, const Vec3& b);

TriMesh make_box_mesh(const Vec3& lo, const Vec3& hi);
/// Icosphere with 20 * 4^subdivisions triangles, outward oriented.
TriMesh make_icosphere(const Vec3& center, double radius, int subdivisions);

/// Reads ASCII or binary STL (detected from content) or OBJ (by extension).
/// Coincident STL vertices are welded exactly.
TriMesh read_mesh(const std::string& path);
void write_obj(const TriMesh& mesh, const std::string& path);
void write_stl_ascii(const TriMesh& mesh, const std::string& path);

}  // namespace infill
