#pragma once

#include "infill/topopt.hpp"

#include <span>
#include <vector>

namespace infill {

struct PorousConfig : DesignConfig {
  double local_bound = 0.5;    // upper bound on every neighbourhood's material fraction
  double local_radius = 6.0;   // neighbourhood radius, element units
  double aggregation = 16.0;   // p-mean exponent
  /// Rescale the p-mean by the previous max / p-mean ratio so the aggregated
  /// constraint tracks the true maximum.
  bool adaptive_scaling = true;
};

/// f_e = sum of projected densities over non-void elements within the radius / their count.
std::vector<double> local_fraction(const DesignContext& ctx, const kernels::Stencil& ball,
                                   std::span<const double> projected);
std::vector<double> local_fraction_transpose(const DesignContext& ctx, const kernels::Stencil& ball,
                                             std::span<const double> grad);

struct AggregatedConstraint {
  double value = 0.0;          // scale * pmean / bound - 1
  double pmean = 0.0;
  double max = 0.0;
  std::vector<double> gradient;  // d value / d f (0 outside the mask)
};

/// p-mean of f over masked entries turned into a single constraint value <= 0.
AggregatedConstraint aggregate_constraint(std::span<const double> f, std::span<const std::uint8_t> mask, double bound,
                                          double p, double scale = 1.0);

/// Method of moving asymptotes for one inequality constraint, following the
/// classic formulation with an elastic variable (c = 1000, d = 1).
class Mma {
 public:
  explicit Mma(std::size_t n, double asymptote_init = 0.5, double shrink = 0.7, double grow = 1.2);

  /// One design update. g <= 0 is feasible; dg, df0 are gradients. Variables
  /// stay inside [xmin, xmax] and within `move` of x.
  std::vector<double> update(std::span<const double> x, std::span<const double> df0, double g,
                             std::span<const double> dg, std::span<const double> xmin, std::span<const double> xmax,
                             double move);

  int iteration() const { return iter_; }
  const std::vector<double>& lower() const { return low_; }
  const std::vector<double>& upper() const { return upp_; }
  double last_kkt_residual() const { return kkt_; }

 private:
  std::size_t n_;
  double init_, shrink_, grow_;
  int iter_ = 0;
  std::vector<double> low_, upp_, xold1_, xold2_;
  double kkt_ = 0.0;
};

DesignResult run_porous(const VoxelDomain& domain, const PorousConfig& config, const IterationCallback& on_iter = {});

struct Calibration {
  double local_bound = 0.0;
  DesignResult design;
  int runs = 0;
};

/// Bisects the local bound until the final global volume is within `rel_tol` of `target`.
Calibration calibrate_local_bound(const VoxelDomain& domain, PorousConfig config, double target, double rel_tol = 0.02,
                                  int max_runs = 8);

/// Fraction of cubic sub-blocks (side `block` elements) holding any element with projected density > 0.5,
/// counted over sub-blocks that contain non-void elements.
double space_filling_fraction(const VoxelDomain& domain, std::span<const double> projected, int block = 8);

}  // namespace infill
