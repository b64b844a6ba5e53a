#include "infill/porous.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace infill {

std::vector<double> local_fraction(const DesignContext& ctx, const kernels::Stencil& ball,
                                   std::span<const double> projected) {
  std::vector<double> out(projected.size());
  kernels::parallel::stencil_average(ctx.domain->grid, ball, ctx.material, projected, out);
  return out;
}

std::vector<double> local_fraction_transpose(const DesignContext& ctx, const kernels::Stencil& ball,
                                             std::span<const double> grad) {
  std::vector<double> out(grad.size());
  kernels::parallel::stencil_average_transpose(ctx.domain->grid, ball, ctx.material, grad, out);
  return out;
}

AggregatedConstraint aggregate_constraint(std::span<const double> f, std::span<const std::uint8_t> mask, double bound,
                                          double p, double scale) {
  if (!(bound > 0.0 && bound < 1.0)) throw ConfigError("local volume bound must lie in (0, 1)");
  if (!(p >= 1.0)) throw ConfigError("aggregation exponent must be at least 1");
  AggregatedConstraint out;
  out.gradient.assign(f.size(), 0.0);
  std::size_t n = 0;
  for (std::size_t e = 0; e < f.size(); ++e) {
    if (!mask[e]) continue;
    ++n;
    out.max = std::max(out.max, f[e]);
  }
  if (n == 0) throw ConfigError("constraint aggregation over an empty set");
  if (out.max <= 0.0) {
    out.value = -1.0;
    return out;
  }
  // normalise by the max so large exponents do not underflow
  double s = 0.0;
  for (std::size_t e = 0; e < f.size(); ++e)
    if (mask[e]) s += std::pow(std::max(f[e], 0.0) / out.max, p);
  const double mean = s / static_cast<double>(n);
  out.pmean = out.max * std::pow(mean, 1.0 / p);
  out.value = scale * out.pmean / bound - 1.0;
  const double k = scale / bound / static_cast<double>(n) * std::pow(mean, 1.0 / p - 1.0);
  for (std::size_t e = 0; e < f.size(); ++e) {
    if (mask[e]) out.gradient[e] = k * std::pow(std::max(f[e], 0.0) / out.max, p - 1.0);
  }
  return out;
}

// ---------------------------------------------------------------- MMA

Mma::Mma(std::size_t n, double asymptote_init, double shrink, double grow)
    : n_(n), init_(asymptote_init), shrink_(shrink), grow_(grow), low_(n), upp_(n), xold1_(n), xold2_(n) {}

std::vector<double> Mma::update(std::span<const double> x, std::span<const double> df0, double g,
                                std::span<const double> dg, std::span<const double> xmin,
                                std::span<const double> xmax, double move) {
  constexpr double kAlbefa = 0.1, kRaa0 = 1e-5, kC = 1000.0, kD = 1.0;
  if (x.size() != n_ || df0.size() != n_ || dg.size() != n_) throw ConfigError("MMA vector sizes do not match");
  ++iter_;
  for (std::size_t j = 0; j < n_; ++j) {
    const double range = xmax[j] - xmin[j];
    if (iter_ <= 2) {
      low_[j] = x[j] - init_ * range;
      upp_[j] = x[j] + init_ * range;
    } else {
      const double z = (x[j] - xold1_[j]) * (xold1_[j] - xold2_[j]);
      const double factor = z < 0.0 ? shrink_ : (z > 0.0 ? grow_ : 1.0);
      low_[j] = x[j] - factor * (xold1_[j] - low_[j]);
      upp_[j] = x[j] + factor * (upp_[j] - xold1_[j]);
      const double r = std::max(range, 1e-5);
      low_[j] = std::clamp(low_[j], x[j] - 10.0 * r, x[j] - 0.01 * r);
      upp_[j] = std::clamp(upp_[j], x[j] + 0.01 * r, x[j] + 10.0 * r);
    }
    if (!(low_[j] < x[j] && x[j] < upp_[j])) throw NumericalError("MMA iterate left its asymptotes");
  }
  std::vector<double> alpha(n_), beta(n_), p0(n_), q0(n_), p1(n_), q1(n_);
  double b = -g;
  for (std::size_t j = 0; j < n_; ++j) {
    const double r = std::max(xmax[j] - xmin[j], 1e-5);
    alpha[j] = std::max({low_[j] + kAlbefa * (x[j] - low_[j]), x[j] - move, xmin[j]});
    beta[j] = std::min({upp_[j] - kAlbefa * (upp_[j] - x[j]), x[j] + move, xmax[j]});
    const double ux = upp_[j] - x[j], xl = x[j] - low_[j];
    const double ux2 = ux * ux, xl2 = xl * xl;
    const double pos0 = std::max(df0[j], 0.0), neg0 = std::max(-df0[j], 0.0);
    p0[j] = ux2 * (1.001 * pos0 + 0.001 * neg0 + kRaa0 / r);
    q0[j] = xl2 * (0.001 * pos0 + 1.001 * neg0 + kRaa0 / r);
    const double pos1 = std::max(dg[j], 0.0), neg1 = std::max(-dg[j], 0.0);
    p1[j] = ux2 * (1.001 * pos1 + 0.001 * neg1 + kRaa0 / r);
    q1[j] = xl2 * (0.001 * pos1 + 1.001 * neg1 + kRaa0 / r);
    b += p1[j] / ux + q1[j] / xl;
  }
  std::vector<double> xn(n_);
  auto primal = [&](double lambda) {
    for (std::size_t j = 0; j < n_; ++j) {
      const double sp = std::sqrt(p0[j] + lambda * p1[j]);
      const double sq = std::sqrt(q0[j] + lambda * q1[j]);
      xn[j] = std::clamp((sq * upp_[j] + sp * low_[j]) / (sp + sq), alpha[j], beta[j]);
    }
  };
  // derivative of the dual function: approximated constraint minus elastic slack
  auto dual_slope = [&](double lambda) {
    primal(lambda);
    double s = -b;
    for (std::size_t j = 0; j < n_; ++j) s += p1[j] / (upp_[j] - xn[j]) + q1[j] / (xn[j] - low_[j]);
    return s - std::max(0.0, (lambda - kC) / kD);
  };
  double lambda = 0.0;
  const double h0 = dual_slope(0.0);
  if (h0 > 0.0) {
    double lo = 0.0, hi = 1.0;
    while (dual_slope(hi) > 0.0) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e12) throw NumericalError("MMA dual multiplier diverged");
    }
    const double scale = std::max(1.0, std::abs(b));
    double h = 0.0;
    for (int it = 0; it < 200; ++it) {
      lambda = 0.5 * (lo + hi);
      h = dual_slope(lambda);
      if (std::abs(h) <= 1e-9 * scale || hi - lo <= 1e-15 * std::max(1.0, hi)) break;
      if (h > 0.0)
        lo = lambda;
      else
        hi = lambda;
    }
    kkt_ = std::abs(h) / scale;
    if (kkt_ > 1e-6) {
      std::ostringstream msg;
      msg << "MMA dual bisection did not converge (relative residual " << kkt_ << ")";
      throw NumericalError(msg.str());
    }
    primal(lambda);
  } else {
    kkt_ = 0.0;
  }
  xold2_ = xold1_;
  xold1_.assign(x.begin(), x.end());
  return xn;
}

// ---------------------------------------------------------------- loop

namespace {

void check_config(const PorousConfig& c) {
  if (!(c.local_bound > 0.0 && c.local_bound < 1.0)) throw ConfigError("local volume bound must lie in (0, 1)");
  if (!(c.local_radius >= 1.0)) throw ConfigError("local radius must be at least 1 element");
  if (!(c.aggregation >= 1.0)) throw ConfigError("aggregation exponent must be at least 1");
}

}  // namespace

DesignResult run_porous(const VoxelDomain& domain, const PorousConfig& config, const IterationCallback& on_iter) {
  check_config(config);
  DesignContext ctx(domain, config);
  const auto ball = kernels::ball_stencil(config.local_radius);
  DesignResult res;
  res.strategy = "porous";
  DensityField& field = res.density;
  field.grid = domain.grid;
  field.rho.assign(domain.labels.size(), 0.0);
  std::vector<std::size_t> vars;
  for (std::size_t e = 0; e < field.rho.size(); ++e) {
    if (!ctx.material[e]) continue;
    field.rho[e] = ctx.passive[e] ? 1.0 : config.local_bound;
    if (!ctx.passive[e]) vars.push_back(e);
  }
  if (vars.empty()) throw ConfigError("design domain has no free design elements");
  Mma mma(vars.size());
  const std::vector<double> xmin(vars.size(), 0.0), xmax(vars.size(), 1.0);
  double beta = config.beta.initial;
  int since_beta = 0;
  bool stalled = false;
  double c0 = 0.0, scale = 1.0;
  std::vector<double> warm;
  if (!config.snapshot_dir.empty()) std::filesystem::create_directories(config.snapshot_dir);

  auto evaluate = [&](int it) {
    FemProblem p = design_problem(ctx, field.projected, config);
    SolveResult sol;
    try {
      const auto H = build_hierarchy(p, config.solver.levels, config.solver.coarsest_max_dofs);
      sol = solve(p, H, ctx.force, config.solver, warm);
    } catch (const NumericalError& err) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + err.what());
    }
    warm = sol.u;
    return std::make_pair(sol, compliance(p, sol.u, ctx.force));
  };

  for (int it = 1; it <= config.max_iters; ++it) {
    project_design(ctx, field, beta, config.eta);
    const auto [sol, energy] = evaluate(it);
    if (it == 1) c0 = energy.compliance;
    const auto sens = compliance_sensitivity(ctx, field, energy.unit_energy, beta, config);

    const auto f = local_fraction(ctx, ball, field.projected);
    const auto probe = aggregate_constraint(f, ctx.material, config.local_bound, config.aggregation);
    if (config.adaptive_scaling && probe.pmean > 0.0) {
      const double ratio = probe.max / probe.pmean;
      scale = it == 1 ? ratio : 0.5 * scale + 0.5 * ratio;
    }
    const auto agg = aggregate_constraint(f, ctx.material, config.local_bound, config.aggregation, scale);
    // chain d g / d f through the neighbourhood average, the projection and the filter
    auto dg_bar = local_fraction_transpose(ctx, ball, agg.gradient);
    for (std::size_t e = 0; e < dg_bar.size(); ++e) {
      dg_bar[e] = (ctx.material[e] && !ctx.passive[e])
                      ? dg_bar[e] * heaviside_derivative(field.filtered[e], beta, config.eta)
                      : 0.0;
    }
    const auto dg_rho = density_filter_transpose(ctx, dg_bar);

    IterationRecord rec;
    rec.iteration = it;
    rec.compliance = energy.compliance;
    rec.volume = volume_fraction(ctx, field.projected);
    rec.beta = beta;
    rec.solver_iterations = sol.iterations;
    rec.constraint = agg.value;
    rec.max_local = agg.max;

    std::vector<double> x(vars.size()), df0(vars.size()), dg(vars.size());
    for (std::size_t j = 0; j < vars.size(); ++j) {
      x[j] = std::clamp(field.rho[vars[j]], 0.0, 1.0);
      df0[j] = sens.compliance[vars[j]] / c0;
      dg[j] = dg_rho[vars[j]];
    }
    const auto xn = mma.update(x, df0, agg.value, dg, xmin, xmax, config.move);
    double change = 0.0;
    for (std::size_t j = 0; j < vars.size(); ++j) {
      change = std::max(change, std::abs(xn[j] - x[j]));
      field.rho[vars[j]] = xn[j];
    }
    rec.change = change;
    res.history.push_back(rec);
    res.iterations = it;
    if (on_iter) on_iter(rec);

    ++since_beta;
    if (beta < config.beta.max && (since_beta >= config.beta.period || stalled)) {
      beta = std::min(2.0 * beta, config.beta.max);
      since_beta = 0;
    }
    if (!config.snapshot_dir.empty() && config.snapshot_every > 0 && it % config.snapshot_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "porous_iter%04d.f32", it);
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
  const auto [sol, energy] = evaluate(res.iterations + 1);
  res.displacement = sol.u;
  res.compliance = energy.compliance;
  res.volume = volume_fraction(ctx, field.projected);
  return res;
}

Calibration calibrate_local_bound(const VoxelDomain& domain, PorousConfig config, double target, double rel_tol,
                                  int max_runs) {
  if (!(target > 0.0 && target < 1.0)) throw ConfigError("target volume fraction must lie in (0, 1)");
  double lo = 0.02, hi = 0.98;
  Calibration best;
  double best_err = std::numeric_limits<double>::infinity();
  config.local_bound = std::clamp(target, lo, hi);
  for (int run = 1; run <= max_runs; ++run) {
    auto design = run_porous(domain, config);
    const double volume = design.volume;
    const double err = std::abs(volume - target) / target;
    if (err < best_err) {
      best_err = err;
      best.local_bound = config.local_bound;
      best.design = std::move(design);
    }
    best.runs = run;
    if (best_err <= rel_tol) return best;
    // the final volume grows with the local bound
    if (volume < target)
      lo = config.local_bound;
    else
      hi = config.local_bound;
    config.local_bound = 0.5 * (lo + hi);
  }
  warn("local bound calibration stopped at relative volume error " + std::to_string(best_err));
  return best;
}

double space_filling_fraction(const VoxelDomain& domain, std::span<const double> projected, int block) {
  const Grid& g = domain.grid;
  const int bx = (g.nx + block - 1) / block, by = (g.ny + block - 1) / block, bz = (g.nz + block - 1) / block;
  std::vector<std::uint8_t> has_domain(static_cast<std::size_t>(bx) * by * bz, 0), has_solid(has_domain.size(), 0);
  for (std::size_t e = 0; e < projected.size(); ++e) {
    if (!domain.is_material(e)) continue;
    const auto [i, j, k] = g.element_ijk(e);
    const std::size_t b = i / block + static_cast<std::size_t>(bx) * (j / block + static_cast<std::size_t>(by) * (k / block));
    has_domain[b] = 1;
    if (projected[e] > 0.5) has_solid[b] = 1;
  }
  std::size_t total = 0, filled = 0;
  for (std::size_t b = 0; b < has_domain.size(); ++b) {
    total += has_domain[b];
    filled += has_domain[b] && has_solid[b];
  }
  return total ? static_cast<double>(filled) / static_cast<double>(total) : 0.0;
}

}  // namespace infill
