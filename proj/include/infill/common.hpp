#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace infill {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Invalid input, bad configuration or a violated precondition (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to converge or produced an unusable state (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes a warning line to stderr. Tests can silence warnings with set_quiet().
void warn(const std::string& msg);
void set_quiet(bool quiet);

/// Number of worker threads for parallel kernels; honours SGLD_THREADS.
int worker_threads();
void set_worker_threads(int n);

/// Structured hexahedral grid geometry shared by every field in the project.
///
/// Elements are indexed i + nx*(j + ny*k); nodes are indexed over the
/// (nx+1)(ny+1)(nz+1) lattice in the same lexicographic order.
struct Grid {
  int nx = 0, ny = 0, nz = 0;
  double spacing = 1.0;
  Vec3 origin = Vec3::Zero();

  std::size_t num_elements() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }
  std::size_t num_nodes() const {
    return static_cast<std::size_t>(nx + 1) * (ny + 1) * (nz + 1);
  }
  std::size_t element(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (j + static_cast<std::size_t>(ny) * k);
  }
  std::size_t node(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx + 1) * (j + static_cast<std::size_t>(ny + 1) * k);
  }
  std::array<int, 3> element_ijk(std::size_t e) const {
    const int i = static_cast<int>(e % nx);
    const int j = static_cast<int>((e / nx) % ny);
    const int k = static_cast<int>(e / (static_cast<std::size_t>(nx) * ny));
    return {i, j, k};
  }
  std::array<int, 3> node_ijk(std::size_t n) const {
    const int i = static_cast<int>(n % (nx + 1));
    const int j = static_cast<int>((n / (nx + 1)) % (ny + 1));
    const int k = static_cast<int>(n / (static_cast<std::size_t>(nx + 1) * (ny + 1)));
    return {i, j, k};
  }
  bool contains_element(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < nx && j < ny && k < nz;
  }
  Vec3 node_position(std::size_t n) const {
    const auto [i, j, k] = node_ijk(n);
    return origin + spacing * Vec3(i, j, k);
  }
  Vec3 element_center(std::size_t e) const {
    const auto [i, j, k] = element_ijk(e);
    return origin + spacing * Vec3(i + 0.5, j + 0.5, k + 0.5);
  }
  /// The 8 node indices of an element in hexahedron order:
  /// (0,0,0) (1,0,0) (1,1,0) (0,1,0) (0,0,1) (1,0,1) (1,1,1) (0,1,1).
  std::array<std::size_t, 8> element_nodes(std::size_t e) const;

  bool same_shape(const Grid& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
};

/// Local hexahedron node offsets matching Grid::element_nodes.
inline constexpr std::array<std::array<int, 3>, 8> kHexCorners = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

inline std::array<std::size_t, 8> Grid::element_nodes(std::size_t e) const {
  const auto [i, j, k] = element_ijk(e);
  std::array<std::size_t, 8> out{};
  for (int c = 0; c < 8; ++c) {
    out[c] = node(i + kHexCorners[c][0], j + kHexCorners[c][1], k + kHexCorners[c][2]);
  }
  return out;
}

/// Per-element scalar field on a Grid.
using ScalarField = std::vector<double>;

}  // namespace infill
