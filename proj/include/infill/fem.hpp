#pragma once

#include "infill/common.hpp"
#include "infill/domain.hpp"

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <vector>

namespace infill {

struct Material {
  double E0 = 1.0;
  double nu = 0.3;
};

struct SimpParams {
  double penalty = 3.0;
  double Emin_ratio = 1e-9;  // Emin = Emin_ratio * E0
};

/// E = Emin + rho^p (E0 - Emin)
double simp_modulus(double rho, double p, double Emin, double E0);

using Matrix24 = Eigen::Matrix<double, 24, 24, Eigen::RowMajor>;
using Matrix6x24 = Eigen::Matrix<double, 6, 24>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Stiffness of the 8-node trilinear hexahedron per unit Young's modulus.
struct ElementStiffness {
  Matrix24 K;
  double E0 = 1.0;
  double nu = 0.3;
  double h = 1.0;
};

ElementStiffness generic_element_stiffness(double E0, double nu, double h);

/// Isotropic elasticity matrix, Voigt order (xx, yy, zz, xy, yz, zx), engineering shear strains.
Matrix6 elasticity_matrix(double E, double nu);
/// Strain-displacement matrix of the cube element at natural coordinates in [-1, 1]^3.
Matrix6x24 strain_displacement(double xi, double eta, double zeta, double h);

/// Everything the matrix-free operator needs: grid, per-element modulus (0 marks an
/// absent element) and the constrained-DOF mask (fixed nodes plus nodes touching no
/// element). Constrained rows and columns act as identity.
struct FemProblem {
  Grid grid;
  ElementStiffness Ke;
  std::vector<double> modulus;
  std::vector<std::uint8_t> dof_fixed;

  std::size_t num_dofs() const { return 3 * grid.num_nodes(); }
};

/// Per-element SIMP moduli for a density field; void elements get 0.
std::vector<double> element_moduli(const VoxelDomain& domain, std::span<const double> densities, const Material& mat,
                                   const SimpParams& simp = {});

FemProblem make_problem(const VoxelDomain& domain, std::vector<double> modulus, const Material& mat);

/// Global nodal force vector of the domain's loads with constrained DOFs zeroed.
std::vector<double> force_vector(const VoxelDomain& domain, const FemProblem& problem);

/// y = K u with identity rows/columns at constrained DOFs (parallel kernel).
void apply_operator(const FemProblem& problem, std::span<const double> u, std::span<double> y);
/// Same product computed with the serial reference kernel.
void apply_operator_reference(const FemProblem& problem, std::span<const double> u, std::span<double> y);

struct SolverConfig {
  double rel_tol = 1e-3;
  int max_cg_iters = 1000;
  int levels = 0;               // 0 = choose from coarsest_max_dofs
  int smoother_sweeps = 2;      // pre and post
  double jacobi_damping = 0.6;
  std::size_t coarsest_max_dofs = 4000;
};

/// One level of the geometric multigrid hierarchy. Level 0 is matrix-free; coarser
/// levels hold one Galerkin 24x24 matrix per element.
struct MultigridLevel {
  Grid grid;
  std::vector<double> matrices;          // 576 per element, levels > 0
  std::vector<std::uint8_t> active;      // element has a non-zero matrix
  std::vector<std::uint8_t> dof_fixed;
  std::vector<double> inv_diag;
};

class CoarseSolver;

struct MultigridHierarchy {
  std::vector<MultigridLevel> levels;
  std::shared_ptr<CoarseSolver> coarse;

  std::size_t depth() const { return levels.size(); }
  /// Level `l` operator (l > 0) applied to u.
  void apply_level(std::size_t l, std::span<const double> u, std::span<double> y) const;
  /// Trilinear prolongation from level l+1 to level l (constrained fine DOFs zeroed).
  void prolongate(std::size_t l, std::span<const double> coarse, std::span<double> fine) const;
  /// Transpose of prolongate.
  void restrict_to(std::size_t l, std::span<const double> fine, std::span<double> coarse) const;
  /// Dense copy of the coarsest-level matrix (for inspection and tests).
  Eigen::MatrixXd coarsest_dense() const;
};

/// Builds `levels` levels (0 = automatic), halving every dimension per level
/// (rounding up); clamps with a warning when a dimension would drop below 2.
MultigridHierarchy build_hierarchy(const FemProblem& problem, int levels, std::size_t coarsest_max_dofs = 4000);

struct SolveResult {
  std::vector<double> u;
  int iterations = 0;
  std::vector<double> residual_history;  // relative residual after each iteration
  bool converged = false;
  double final_residual = 0.0;
};

/// Multigrid-preconditioned conjugate gradients, one V-cycle per iteration.
SolveResult solve(const FemProblem& problem, const MultigridHierarchy& hierarchy, std::span<const double> f,
                  const SolverConfig& config, std::span<const double> initial_guess = {});
SolveResult solve(const FemProblem& problem, std::span<const double> f, const SolverConfig& config);

/// Applies one V-cycle: returns approximately K^-1 r.
void vcycle(const FemProblem& problem, const MultigridHierarchy& hierarchy, const SolverConfig& config,
            std::span<const double> r, std::span<double> z);

struct ComplianceResult {
  double compliance = 0.0;               // f . u
  std::vector<double> unit_energy;       // u_e^T K_e0 u_e per element (0 for absent ones)
  double energy_sum = 0.0;               // sum_e modulus_e * unit_energy_e
};

ComplianceResult compliance(const FemProblem& problem, std::span<const double> u, std::span<const double> f);

/// SGLDF32 volume: dims, channel count, spacing, origin and float payload.
struct FloatVolume {
  int nx = 0, ny = 0, nz = 0, channels = 1;
  double spacing = 1.0;
  Vec3 origin = Vec3::Zero();
  std::vector<float> data;
};

void write_float_volume(const std::string& path, const FloatVolume& vol);
FloatVolume read_float_volume(const std::string& path);
/// Element-centred scalar or multi-channel field as a volume.
FloatVolume element_volume(const Grid& grid, std::span<const double> values, int channels = 1);
/// Nodal 3-vector field (displacement, force) as a volume over the node lattice.
FloatVolume nodal_volume(const Grid& grid, std::span<const double> values);

}  // namespace infill
