#include "infill/topopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace infill {

DesignContext::DesignContext(const VoxelDomain& d, const DesignConfig& config) : domain(&d) {
  if (!(config.filter_radius >= 1.0)) throw ConfigError("filter radius must be at least 1 element");
  if (!(config.eta > 0.0 && config.eta < 1.0)) throw ConfigError("projection threshold eta must lie in (0, 1)");
  if (!(config.move > 0.0 && config.move <= 1.0)) throw ConfigError("move limit must lie in (0, 1]");
  if (config.max_iters < 0) throw ConfigError("max_iters must be non-negative");
  if (d.loads.empty()) throw ConfigError("design domain has no loads");
  if (d.fixed.empty()) throw ConfigError("design domain has no fixations");
  const std::size_t n = d.labels.size();
  material.assign(n, 0);
  passive.assign(n, 0);
  for (std::size_t e = 0; e < n; ++e) {
    material[e] = d.is_material(e);
    passive[e] = d.labels[e] == Label::Passive;
    num_material += material[e];
  }
  if (num_material == 0) throw ConfigError("design domain has no material elements");
  filter = kernels::conic_stencil(config.filter_radius);
  Ke = generic_element_stiffness(config.material.E0, config.material.nu, d.grid.spacing);
  const auto probe = make_problem(d, element_moduli(d, std::vector<double>(n, 1.0), config.material, config.simp),
                                  config.material);
  dof_fixed = probe.dof_fixed;
  force = force_vector(d, probe);
}

std::vector<double> density_filter(const DesignContext& ctx, std::span<const double> rho) {
  std::vector<double> out(rho.size());
  kernels::parallel::stencil_average(ctx.domain->grid, ctx.filter, ctx.material, rho, out);
  return out;
}

std::vector<double> density_filter_transpose(const DesignContext& ctx, std::span<const double> grad) {
  std::vector<double> out(grad.size());
  kernels::parallel::stencil_average_transpose(ctx.domain->grid, ctx.filter, ctx.material, grad, out);
  return out;
}

double heaviside(double x, double beta, double eta) {
  const double a = std::tanh(beta * eta);
  return (a + std::tanh(beta * (x - eta))) / (a + std::tanh(beta * (1.0 - eta)));
}

double heaviside_derivative(double x, double beta, double eta) {
  const double t = std::tanh(beta * (x - eta));
  return beta * (1.0 - t * t) / (std::tanh(beta * eta) + std::tanh(beta * (1.0 - eta)));
}

void project_design(const DesignContext& ctx, DensityField& field, double beta, double eta) {
  field.grid = ctx.domain->grid;
  field.filtered = density_filter(ctx, field.rho);
  field.projected.assign(field.rho.size(), 0.0);
  for (std::size_t e = 0; e < field.rho.size(); ++e) {
    if (!ctx.material[e]) continue;
    field.projected[e] = ctx.passive[e] ? 1.0 : heaviside(field.filtered[e], beta, eta);
  }
}

double volume_fraction(const DesignContext& ctx, std::span<const double> projected) {
  double s = 0.0;
  for (std::size_t e = 0; e < projected.size(); ++e)
    if (ctx.material[e]) s += projected[e];
  return s / static_cast<double>(ctx.num_material);
}

std::vector<double> design_moduli(const DesignContext& ctx, std::span<const double> projected,
                                  const DesignConfig& config) {
  std::vector<double> E(projected.size(), 0.0);
  const double Emin = config.simp.Emin_ratio * config.material.E0;
  for (std::size_t e = 0; e < E.size(); ++e) {
    if (!ctx.material[e]) continue;
    E[e] = simp_modulus(std::clamp(projected[e], 0.0, 1.0), config.simp.penalty, Emin, config.material.E0);
  }
  return E;
}

FemProblem design_problem(const DesignContext& ctx, std::span<const double> projected, const DesignConfig& config) {
  FemProblem p;
  p.grid = ctx.domain->grid;
  p.Ke = ctx.Ke;
  p.modulus = design_moduli(ctx, projected, config);
  p.dof_fixed = ctx.dof_fixed;
  return p;
}

Sensitivities compliance_sensitivity(const DesignContext& ctx, const DensityField& field,
                                     std::span<const double> unit_energy, double beta, const DesignConfig& config) {
  const std::size_t n = field.rho.size();
  const double p = config.simp.penalty;
  const double dE = config.material.E0 * (1.0 - config.simp.Emin_ratio);
  std::vector<double> dc(n, 0.0), dv(n, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    if (!ctx.material[e] || ctx.passive[e]) continue;
    const double dH = heaviside_derivative(field.filtered[e], beta, config.eta);
    const double rb = std::clamp(field.projected[e], 0.0, 1.0);
    dc[e] = -p * std::pow(rb, p - 1.0) * dE * unit_energy[e] * dH;
    dv[e] = dH;
  }
  Sensitivities s;
  s.compliance = density_filter_transpose(ctx, dc);
  s.volume = density_filter_transpose(ctx, dv);
  for (std::size_t e = 0; e < n; ++e) {
    if (!ctx.material[e] || ctx.passive[e]) s.compliance[e] = s.volume[e] = 0.0;
  }
  return s;
}

std::vector<double> oc_update(const DesignContext& ctx, std::span<const double> rho, std::span<const double> dc,
                              std::span<const double> dv, double target, double move, double beta, double eta) {
  if (!(target > 0.0 && target < 1.0)) throw ConfigError("volume fraction must lie in (0, 1)");
  const std::size_t n = rho.size();
  std::vector<double> out(rho.begin(), rho.end());
  DensityField trial;
  auto evaluate = [&](double log_lambda) {
    const double lambda = std::exp(log_lambda);
    for (std::size_t e = 0; e < n; ++e) {
      if (!ctx.material[e]) {
        out[e] = 0.0;
        continue;
      }
      if (ctx.passive[e]) {
        out[e] = 1.0;
        continue;
      }
      const double c = std::max(-dc[e], 1e-12);
      const double v = std::max(dv[e], 1e-30);
      const double cand = rho[e] * std::sqrt(c / (lambda * v));
      out[e] = std::clamp(cand, std::max(0.0, rho[e] - move), std::min(1.0, rho[e] + move));
    }
    trial.rho = out;
    project_design(ctx, trial, beta, eta);
    return volume_fraction(ctx, trial.projected);
  };
  double lo = std::log(1e-40), hi = std::log(1e40);
  const double vlo = evaluate(lo), vhi = evaluate(hi);
  if (!(vlo >= target && vhi <= target)) {
    std::ostringstream msg;
    msg << "optimality-criteria bisection cannot bracket volume " << target << ": lambda in [1e-40, 1e40] gives "
        << "volume in [" << vhi << ", " << vlo << "]";
    throw NumericalError(msg.str());
  }
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = evaluate(mid);
    if (std::abs(v - target) <= 1e-7 * target) return out;
    if (v > target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13) break;
  }
  // the volume can jump where many elements hit a bound at once; take the feasible side
  evaluate(hi);
  return out;
}

namespace {

struct Evaluation {
  FemProblem problem;
  SolveResult solution;
  ComplianceResult energy;
};

Evaluation evaluate_design(const DesignContext& ctx, const DensityField& field, const DesignConfig& config,
                           std::span<const double> warm, int iteration) {
  Evaluation ev;
  ev.problem = design_problem(ctx, field.projected, config);
  try {
    const auto H = build_hierarchy(ev.problem, config.solver.levels, config.solver.coarsest_max_dofs);
    ev.solution = solve(ev.problem, H, ctx.force, config.solver, warm);
  } catch (const NumericalError& err) {
    throw NumericalError("iteration " + std::to_string(iteration) + ": " + err.what());
  }
  if (!ev.solution.converged) {
    warn("iteration " + std::to_string(iteration) + ": solver stopped at relative residual " +
         std::to_string(ev.solution.final_residual));
  }
  ev.energy = compliance(ev.problem, ev.solution.u, ctx.force);
  return ev;
}

}  // namespace

void write_density_snapshot(const std::string& path, const DensityField& field) {
  write_float_volume(path, element_volume(field.grid, field.projected));
}

DesignResult run_topopt(const VoxelDomain& domain, const TopOptConfig& config, const IterationCallback& on_iter) {
  if (!(config.volume_fraction > 0.0 && config.volume_fraction < 1.0)) {
    throw ConfigError("volume fraction must lie in (0, 1)");
  }
  DesignContext ctx(domain, config);
  std::size_t passive = 0;
  for (auto p : ctx.passive) passive += p;
  const double shell = static_cast<double>(passive) / static_cast<double>(ctx.num_material);
  if (config.volume_fraction < shell) {
    std::ostringstream os;
    os << "volume fraction " << config.volume_fraction << " is below the passive fraction; minimum achievable is "
       << shell;
    throw ConfigError(os.str());
  }
  DesignResult res;
  res.strategy = "topopt";
  DensityField& field = res.density;
  field.grid = domain.grid;
  field.rho.assign(domain.labels.size(), 0.0);
  for (std::size_t e = 0; e < field.rho.size(); ++e) {
    if (ctx.material[e]) field.rho[e] = ctx.passive[e] ? 1.0 : config.volume_fraction;
  }
  double beta = config.beta.initial;
  int since_beta = 0;
  bool stalled = false;
  std::vector<double> warm;
  if (!config.snapshot_dir.empty()) std::filesystem::create_directories(config.snapshot_dir);

  for (int it = 1; it <= config.max_iters; ++it) {
    project_design(ctx, field, beta, config.eta);
    const auto ev = evaluate_design(ctx, field, config, warm, it);
    warm = ev.solution.u;
    IterationRecord rec;
    rec.iteration = it;
    rec.compliance = ev.energy.compliance;
    rec.volume = volume_fraction(ctx, field.projected);
    rec.beta = beta;
    rec.solver_iterations = ev.solution.iterations;
    const auto sens = compliance_sensitivity(ctx, field, ev.energy.unit_energy, beta, config);

    ++since_beta;
    if (beta < config.beta.max && (since_beta >= config.beta.period || stalled)) {
      beta = std::min(2.0 * beta, config.beta.max);
      since_beta = 0;
    }
    auto next = oc_update(ctx, field.rho, sens.compliance, sens.volume, config.volume_fraction, config.move, beta,
                          config.eta);
    double change = 0.0;
    for (std::size_t e = 0; e < next.size(); ++e) change = std::max(change, std::abs(next[e] - field.rho[e]));
    rec.change = change;
    field.rho = std::move(next);
    res.history.push_back(rec);
    res.iterations = it;
    if (on_iter) on_iter(rec);
    if (!config.snapshot_dir.empty() && config.snapshot_every > 0 && it % config.snapshot_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "topopt_iter%04d.f32", it);
      const auto path = (std::filesystem::path(config.snapshot_dir) / name).string();
      DensityField snap = field;
      project_design(ctx, snap, beta, config.eta);
      write_density_snapshot(path, snap);
      res.snapshots.push_back(path);
    }
    stalled = change < config.change_tol;
    if (stalled && beta >= config.beta.max) break;
  }
  project_design(ctx, field, beta, config.eta);
  const auto ev = evaluate_design(ctx, field, config, warm, res.iterations + 1);
  res.displacement = ev.solution.u;
  res.compliance = ev.energy.compliance;
  res.volume = volume_fraction(ctx, field.projected);
  return res;
}

double uniform_design_compliance(const VoxelDomain& domain, double rho, const DesignConfig& config) {
  const auto E = element_moduli(domain, std::vector<double>(domain.labels.size(), rho), config.material, config.simp);
  const auto p = make_problem(domain, E, config.material);
  const auto f = force_vector(domain, p);
  const auto sol = solve(p, f, config.solver);
  return compliance(p, sol.u, f).compliance;
}

}  // namespace infill
