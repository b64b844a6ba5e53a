#pragma once

#include "infill/common.hpp"
#include "infill/domain.hpp"
#include "infill/graph.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace infill {

/// Binary per-element occupancy on a domain grid with its provenance.
/// Invariants (after voxelize_graph): Passive elements are 1, Void elements are 0.
struct MaterialField {
  Grid grid;
  std::vector<std::uint8_t> occupied;
  std::string strategy;
  std::map<std::string, double> parameters;

  std::size_t count() const;
  std::vector<double> densities() const { return {occupied.begin(), occupied.end()}; }
};

/// Occupied elements over non-void elements.
double volume_fraction(const MaterialField& field, const VoxelDomain& domain);
/// Fraction of non-void elements that are Passive (the smallest achievable design volume).
double passive_fraction(const VoxelDomain& domain);

/// Elements whose box the segment a-b intersects, ascending (parametric DDA traversal of
/// the part inside the grid). A zero-length segment yields its containing element.
std::vector<std::size_t> voxelize_edge(const Vec3& a, const Vec3& b, const Grid& grid);

/// Brute-force reference: every element whose closed box meets the segment.
std::vector<std::size_t> voxelize_edge_reference(const Vec3& a, const Vec3& b, const Grid& grid);

/// Adds `layers` rings of 26-neighbours to the mask, never entering Void elements.
void thicken(std::vector<std::uint8_t>& mask, int layers, const VoxelDomain& domain);

/// Union of DDA-voxelized and thickened edges (and isolated nodes), clipped to non-void,
/// united with the Passive shell. The DDA set is layer 0.
MaterialField voxelize_graph(const EdgeGraph& graph, const VoxelDomain& domain, int thickness_layers,
                             const std::string& strategy = "graph");

struct BudgetStep {
  double parameter;
  double volume;
};

struct BudgetMatch {
  MaterialField field;
  double parameter = 0.0;
  double volume = 0.0;
  std::vector<BudgetStep> trace;
  bool converged = false;   // |volume - target| <= tolerance
  bool bracketed = true;    // target lies between the volumes at the parameter bounds
  bool monotone = true;     // volumes in the trace are monotone in the parameter
};

struct BudgetConfig {
  double target = 0.3;
  double tolerance = 0.02;   // absolute volume-fraction tolerance
  int max_iterations = 12;   // bisection steps after the two bracket evaluations
  double lo = 0.0, hi = 1.0;
  bool log_scale = false;    // bisect in log(parameter)
};

using FieldGenerator = std::function<MaterialField(double)>;

/// Dichotomy on a generator parameter until the design volume fraction is within tolerance
/// of the target. Returns the best iterate; throws ConfigError when the target is below
/// the passive-shell fraction.
BudgetMatch match_budget(const FieldGenerator& generator, const VoxelDomain& domain, const BudgetConfig& config);

struct Resolution {
  std::array<int, 3> dims{};
  double voxels_per_edge = 0.0;  // achieved median thickness in elements
  bool capped = false;
};

/// Grid dimensions for a bounding box such that the median edge thickness spans at
/// least `min_voxels` elements, limited to `element_cap` elements (warning when capped).
/// Node thickness hints are used when present, `default_thickness` otherwise.
Resolution auto_resolution(const EdgeGraph& graph, const Vec3& bbox_min, const Vec3& bbox_max, double default_thickness,
                           double min_voxels = 4.0, std::size_t element_cap = kDefaultElementCap);

/// Throws ConfigError when nx*ny*nz exceeds the cap.
void require_within_cap(int nx, int ny, int nz, std::size_t element_cap = kDefaultElementCap);

/// SGLDVOX1 with labels {0,1} and the Passive mask as second channel.
void write_material_field(const std::string& path, const MaterialField& field, const VoxelDomain& domain);

}  // namespace infill
