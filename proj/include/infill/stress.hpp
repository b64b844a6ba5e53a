#pragma once

#include "infill/fem.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace infill {

/// Symmetric stress tensor in Voigt order (xx, yy, zz, xy, yz, zx).
using Tensor6 = std::array<double, 6>;

Mat3 to_matrix(const Tensor6& s);
Tensor6 from_matrix(const Mat3& m);

/// Element-centre stresses, 6 interleaved components per element; zero in absent elements.
struct StressField {
  Grid grid;
  std::vector<double> values;
  std::vector<std::uint8_t> present;

  Tensor6 at(std::size_t e) const {
    Tensor6 t;
    for (int c = 0; c < 6; ++c) t[c] = values[6 * e + c];
    return t;
  }
};

/// sigma = D(E_e) B(centre) u_e with each element's own modulus.
StressField element_stress(const FemProblem& problem, std::span<const double> u);

double von_mises(const Tensor6& s);
std::vector<double> von_mises(const StressField& field);

enum class Ordering { Signed, AbsoluteValue };

/// Eigen-decomposition sorted descending by value (Signed) or by magnitude
/// (AbsoluteValue). Directions are unit length with their first non-zero
/// component positive.
struct Principal {
  std::array<double, 3> values{};
  std::array<Vec3, 3> dirs{};
  /// min pairwise gap / max |value| below the threshold
  bool degenerate = false;
  /// per direction: its value is within the threshold of another value
  std::array<bool, 3> branch_degenerate{};
};

inline constexpr double kDegenerateGap = 1e-4;

Principal principal(const Tensor6& s, Ordering ordering);

/// Trilinear interpolation between element centres. Absent neighbours are
/// dropped with renormalised weights; returns nullopt outside the material.
std::optional<Tensor6> interpolate_tensor(const StressField& field, const Vec3& p);

/// Empirical CDF rank in [0, 1]: rank / (N - 1) with ties sharing their mean rank.
/// A constant field (including N = 1) maps to 0.5.
std::vector<double> icdf_normalize(std::span<const double> values);

}  // namespace infill
