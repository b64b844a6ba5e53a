#pragma once

#include "infill/fem.hpp"
#include "infill/kernels.hpp"

#include <functional>
#include <string>
#include <vector>

namespace infill {

/// Heaviside continuation: beta starts at `initial`, doubles every `period`
/// iterations (and early when the design stalls) until it reaches `max`.
struct BetaSchedule {
  double initial = 1.0;
  int period = 40;
  double max = 64.0;
};

/// Settings shared by the global (optimality criteria) and local-volume (MMA) loops.
struct DesignConfig {
  double filter_radius = 1.5;   // element units
  double eta = 0.5;
  BetaSchedule beta;
  double move = 0.2;
  int max_iters = 100;
  double change_tol = 0.01;
  Material material;
  SimpParams simp;
  SolverConfig solver;
  int snapshot_every = 10;      // 0 disables snapshots
  std::string snapshot_dir;     // empty disables snapshots
};

struct TopOptConfig : DesignConfig {
  double volume_fraction = 0.3;
};

/// Design variables with their filtered and projected images. Entries of void
/// elements stay 0; passive elements are pinned to 1.
struct DensityField {
  Grid grid;
  std::vector<double> rho, filtered, projected;
};

/// Fixed data of one optimisation: domain, masks, filter stencil, element stiffness.
struct DesignContext {
  const VoxelDomain* domain = nullptr;
  std::vector<std::uint8_t> material;  // non-void
  std::vector<std::uint8_t> passive;
  std::size_t num_material = 0;
  kernels::Stencil filter;
  ElementStiffness Ke;
  std::vector<double> force;
  std::vector<std::uint8_t> dof_fixed;

  DesignContext(const VoxelDomain& domain, const DesignConfig& config);
};

/// Normalised conic-weight average over non-void neighbours.
std::vector<double> density_filter(const DesignContext& ctx, std::span<const double> rho);
/// Transpose of density_filter applied to a gradient.
std::vector<double> density_filter_transpose(const DesignContext& ctx, std::span<const double> grad);

double heaviside(double x, double beta, double eta);
double heaviside_derivative(double x, double beta, double eta);

/// rho -> filtered -> projected, passives set to 1 and void to 0.
void project_design(const DesignContext& ctx, DensityField& field, double beta, double eta);

/// Mean projected density over non-void elements (the global volume fraction).
double volume_fraction(const DesignContext& ctx, std::span<const double> projected);

std::vector<double> design_moduli(const DesignContext& ctx, std::span<const double> projected,
                                  const DesignConfig& config);
FemProblem design_problem(const DesignContext& ctx, std::span<const double> projected, const DesignConfig& config);

struct Sensitivities {
  std::vector<double> compliance;  // dc/drho
  std::vector<double> volume;      // d(sum of projected)/drho
};

/// Chains dc/dprojected and dV/dprojected through projection and filter to the
/// design variables. `unit_energy` is u_e^T Ke u_e. Passive and void entries are 0.
Sensitivities compliance_sensitivity(const DesignContext& ctx, const DensityField& field,
                                     std::span<const double> unit_energy, double beta, const DesignConfig& config);

/// Optimality-criteria update with move limits; the multiplier is bisected in
/// log space until the projected volume (at `beta`) meets `target`.
std::vector<double> oc_update(const DesignContext& ctx, std::span<const double> rho, std::span<const double> dc,
                              std::span<const double> dv, double target, double move, double beta, double eta);

struct IterationRecord {
  int iteration = 0;
  double compliance = 0.0;
  double volume = 0.0;
  double change = 0.0;
  double beta = 1.0;
  int solver_iterations = 0;
  double constraint = 0.0;  // aggregated local constraint (porous only)
  double max_local = 0.0;   // max local fraction (porous only)
};

struct DesignResult {
  std::string strategy;
  DensityField density;
  std::vector<IterationRecord> history;
  std::vector<double> displacement;
  double compliance = 0.0;
  double volume = 0.0;
  int iterations = 0;
  std::vector<std::string> snapshots;
};

/// Called after every iteration (progress display, cancellation by throwing).
using IterationCallback = std::function<void(const IterationRecord&)>;

DesignResult run_topopt(const VoxelDomain& domain, const TopOptConfig& config, const IterationCallback& on_iter = {});

/// Compliance of the design with every non-void element at projected density `rho`.
double uniform_design_compliance(const VoxelDomain& domain, double rho, const DesignConfig& config);

/// Writes the projected densities as an SGLDF32 volume.
void write_density_snapshot(const std::string& path, const DensityField& field);

}  // namespace infill
