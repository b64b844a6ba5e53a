#pragma once

#include "infill/common.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace infill {

namespace predicates {

/// Sign of det[b - a; c - a; d - a]: +1 when (a, b, c, d) is right-handed.
/// Exact for all double inputs (floating-point filter, rational fallback).
int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);
/// +1 when e lies strictly inside the circumsphere of the positively oriented
/// tetrahedron (a, b, c, d), 0 on it, -1 outside. Exact.
int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e);

/// Number of predicate calls that needed the exact fallback (process-wide).
std::uint64_t exact_fallbacks();

}  // namespace predicates

/// Finite tetrahedra over a point set. Every tet is positively oriented;
/// neighbors[t][k] is the tet across the face opposite vertex k, or -1.
struct DelaunayComplex {
  std::vector<Vec3> points;
  std::vector<std::array<int, 4>> tets;
  std::vector<std::array<int, 4>> neighbors;
  std::vector<std::uint8_t> kept;  // restriction mask; empty means every tet is kept
  bool perturbed = false;

  std::size_t size() const { return tets.size(); }
  bool is_kept(std::size_t t) const { return kept.empty() || kept[t]; }
  std::size_t kept_count() const;
  double kept_volume() const;
  double tet_volume(std::size_t t) const;
  Vec3 circumcenter(std::size_t t) const;
  Vec3 centroid(std::size_t t) const;
  /// Faces shared by two tets of the complex.
  std::size_t interior_faces() const;
};

/// Incremental Bowyer-Watson tetrahedralization with a symbolic vertex at infinity
/// closing the convex hull. Duplicate points are skipped (index kept, no tets).
class Delaunay {
 public:
  static constexpr int kInfinite = -1;

  /// Inserts `points` in order. Input with no 4 affinely independent points is
  /// perturbed deterministically (with a warning); fewer than 4 points throws ConfigError.
  explicit Delaunay(std::vector<Vec3> points);

  /// Inserts one more point; returns false for an exact duplicate.
  bool insert(const Vec3& p);

  const std::vector<Vec3>& points() const { return points_; }
  DelaunayComplex complex() const;
  bool perturbed() const { return perturbed_; }

 private:
  struct Cell {
    std::array<int, 4> v;
    std::array<int, 4> n;
    bool alive;
  };

  bool is_ghost(int c) const;
  int ghost_slot(int c) const;
  bool in_conflict(int c, const Vec3& p);
  int locate(const Vec3& p);
  int new_cell(const std::array<int, 4>& v);
  void init(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3);
  bool insert_index(int idx);

  std::vector<Vec3> points_;
  std::vector<Cell> cells_;
  std::vector<int> free_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::int8_t> verdict_;
  std::uint32_t epoch_ = 0;
  int last_ = 0;
  std::uint64_t walk_state_ = 0x9E3779B97F4A7C15ull;
  std::vector<std::uint8_t> inserted_;
  bool perturbed_ = false;
};

/// Convenience wrapper: tetrahedralization of all points.
DelaunayComplex delaunay(const std::vector<Vec3>& points);

/// Brute force: indices of tets whose circumsphere strictly contains another point.
std::vector<std::size_t> empty_sphere_violations(const DelaunayComplex& complex);

}  // namespace infill
