#include "infill/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace infill {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string field_hash(std::span<const double> values) {
  return sha256_hex(std::string(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double)));
}

// ------------------------------------------------------------------ report

json DesignReport::to_json() const {
  json j;
  j["strategy"] = strategy;
  j["parameters"] = parameters;
  j["preset"] = preset;
  j["preset_hash"] = preset_hash;
  j["volume_fraction"] = volume_fraction;
  j["compliance"] = compliance;
  j["compliance_history"] = compliance_history;
  j["solver"] = {{"iterations", solver.iterations},
                 {"residual", solver.residual},
                 {"verified_residual", solver.verified_residual},
                 {"converged", solver.converged}};
  j["load_case"] = {{"euler_degrees", {euler_degrees.x(), euler_degrees.y(), euler_degrees.z()}}};
  if (deviation) {
    j["deviation"] = {{"mean", deviation->mean},
                      {"p90", deviation->p90},
                      {"compared", deviation->compared},
                      {"degenerate", deviation->degenerate}};
  }
  j["exports"] = exports;
  j["design_hash"] = design_hash;
  j["wall_s"] = wall_s;
  j["hash"] = hash();
  return j;
}

std::string DesignReport::hash() const {
  DesignReport r = *this;
  r.wall_s = 0.0;
  r.exports.clear();
  json j;
  j["strategy"] = r.strategy;
  j["parameters"] = r.parameters;
  j["preset_hash"] = r.preset_hash;
  j["volume_fraction"] = r.volume_fraction;
  j["compliance"] = r.compliance;
  j["compliance_history"] = r.compliance_history;
  j["solver"] = {r.solver.iterations, r.solver.residual, r.solver.verified_residual, r.solver.converged};
  j["euler"] = {r.euler_degrees.x(), r.euler_degrees.y(), r.euler_degrees.z()};
  if (r.deviation) j["deviation"] = {r.deviation->mean, r.deviation->p90, r.deviation->compared, r.deviation->degenerate};
  j["design_hash"] = r.design_hash;
  return sha256_hex(j.dump());
}

DesignReport DesignReport::from_json(const json& j) {
  DesignReport r;
  try {
    r.strategy = j.at("strategy").get<std::string>();
    r.parameters = j.value("parameters", std::map<std::string, double>{});
    r.preset = j.at("preset").get<std::string>();
    r.preset_hash = j.at("preset_hash").get<std::string>();
    r.volume_fraction = j.at("volume_fraction").get<double>();
    r.compliance = j.at("compliance").get<double>();
    r.compliance_history = j.value("compliance_history", std::vector<double>{});
    const auto& s = j.at("solver");
    r.solver = {s.at("iterations").get<int>(), s.at("residual").get<double>(), s.at("verified_residual").get<double>(),
                s.at("converged").get<bool>()};
    const auto e = j.at("load_case").at("euler_degrees").get<std::array<double, 3>>();
    r.euler_degrees = Vec3(e[0], e[1], e[2]);
    if (j.contains("deviation")) {
      const auto& d = j["deviation"];
      r.deviation = DeviationStats{d.at("mean").get<double>(), d.at("p90").get<double>(),
                                   d.at("compared").get<std::size_t>(), d.at("degenerate").get<std::size_t>()};
    }
    r.exports = j.value("exports", std::map<std::string, std::string>{});
    r.design_hash = j.value("design_hash", std::string());
    r.wall_s = j.value("wall_s", 0.0);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed report: ") + ex.what());
  }
  return r;
}

void write_report(const DesignReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << report.to_json().dump(1) << '\n';
}

DesignReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report " + path);
  try {
    return DesignReport::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// -------------------------------------------------------------- evaluation

Evaluation evaluate_design(std::span<const double> densities, const Preset& preset, const SolverConfig& solver,
                           const std::string& strategy, const SimpParams& simp) {
  const auto t0 = std::chrono::steady_clock::now();
  const VoxelDomain& d = preset.domain;
  if (densities.size() != d.grid.num_elements()) throw ConfigError("design does not match the preset grid");
  if (d.loads.empty()) throw ConfigError("preset '" + preset.name + "' has no loads");

  auto problem = make_problem(d, element_moduli(d, densities, preset.material, simp), preset.material);
  const auto f = force_vector(d, problem);
  auto sol = solve(problem, f, solver);
  if (!sol.converged) {
    std::ostringstream os;
    os << "solver did not reach rel_tol " << solver.rel_tol << " in " << sol.iterations << " iterations (residual "
       << sol.final_residual << ")";
    throw NumericalError(os.str());
  }
  std::vector<double> Ku(f.size(), 0.0);
  apply_operator(problem, sol.u, Ku);
  double rr = 0.0, ff = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    rr += (Ku[i] - f[i]) * (Ku[i] - f[i]);
    ff += f[i] * f[i];
  }

  Evaluation ev;
  ev.occupied.assign(densities.size(), 0);
  for (std::size_t e = 0; e < densities.size(); ++e) ev.occupied[e] = d.is_material(e) && densities[e] > 0.5;
  ev.stress = element_stress(problem, sol.u);
  for (std::size_t e = 0; e < densities.size(); ++e) {
    if (ev.occupied[e]) continue;
    ev.stress.present[e] = 0;
    std::fill_n(ev.stress.values.begin() + 6 * e, 6, 0.0);
  }
  ev.von_mises = von_mises(ev.stress);

  DesignReport& r = ev.report;
  r.strategy = strategy;
  r.preset = preset.name;
  r.preset_hash = preset.hash();
  double vol = 0.0;
  for (std::size_t e = 0; e < densities.size(); ++e)
    if (d.is_material(e)) vol += densities[e];
  r.volume_fraction = vol / static_cast<double>(d.num_material());
  r.compliance = compliance(problem, sol.u, f).compliance;
  r.solver = {sol.iterations, sol.final_residual, std::sqrt(rr / ff), sol.converged};
  r.design_hash = field_hash(densities);
  ev.displacement = std::move(sol.u);
  r.wall_s = seconds_since(t0);
  return ev;
}

Evaluation evaluate_design(const MaterialField& field, const Preset& preset, const SolverConfig& solver) {
  if (!field.grid.same_shape(preset.domain.grid)) throw ConfigError("material field does not match the preset grid");
  auto ev = evaluate_design(field.densities(), preset, solver, field.strategy);
  ev.report.parameters = field.parameters;
  return ev;
}

Evaluation evaluate_design(const DensityField& field, const Preset& preset, const SolverConfig& solver,
                           const std::string& strategy) {
  if (!field.grid.same_shape(preset.domain.grid)) throw ConfigError("density field does not match the preset grid");
  return evaluate_design(field.projected, preset, solver, strategy);
}

Evaluation variable_load(std::span<const double> densities, const Preset& preset, const Vec3& euler_degrees,
                         const SolverConfig& solver, const std::string& strategy) {
  const auto rotated = rotate_loads(preset, euler_degrees);
  auto ev = evaluate_design(densities, rotated, solver, strategy);
  ev.report.preset_hash = preset.hash();
  ev.report.euler_degrees = euler_degrees;
  return ev;
}

// --------------------------------------------------------------- deviation

namespace {

// Dominant direction under magnitude ordering, or nullopt when it is not determined.
std::optional<Vec3> dominant_direction(const Tensor6& s) {
  const auto p = principal(s, Ordering::AbsoluteValue);
  const double top = std::abs(p.values[0]);
  if (top == 0.0 || p.branch_degenerate[0]) return std::nullopt;
  // +lambda and -lambda tie in magnitude without being a repeated eigenvalue
  if (top - std::abs(p.values[1]) <= kDegenerateGap * top) return std::nullopt;
  return p.dirs[0];
}

}  // namespace

DeviationField deviation_field(const StressField& a, const StressField& b, std::span<const std::uint8_t> mask) {
  if (!a.grid.same_shape(b.grid) || mask.size() != a.grid.num_elements())
    throw ConfigError("deviation: stress fields and mask must share one grid");
  const std::size_t n = a.grid.num_elements();
  DeviationField out;
  out.grid = a.grid;
  out.values.assign(n, 0.0);
  out.degenerate.assign(n, 0);
  std::vector<double> compared;
  for (std::size_t e = 0; e < n; ++e) {
    if (!mask[e] || !a.present[e] || !b.present[e]) continue;
    const auto va = dominant_direction(a.at(e));
    const auto vb = dominant_direction(b.at(e));
    if (!va || !vb) {
      out.degenerate[e] = 1;
      ++out.stats.degenerate;
      continue;
    }
    // 1 - |a.b| written as |a - sb|^2 / 2 for unit vectors: exactly 0 for identical directions
    const double sgn = va->dot(*vb) < 0.0 ? -1.0 : 1.0;
    out.values[e] = std::clamp(0.5 * (*va - sgn * *vb).squaredNorm(), 0.0, 1.0);
    compared.push_back(out.values[e]);
  }
  out.stats.compared = compared.size();
  if (!compared.empty()) {
    double sum = 0.0;
    for (double v : compared) sum += v;
    out.stats.mean = sum / static_cast<double>(compared.size());
    const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(compared.size()))) - 1;
    std::nth_element(compared.begin(), compared.begin() + static_cast<std::ptrdiff_t>(rank), compared.end());
    out.stats.p90 = compared[rank];
  }
  return out;
}

// -------------------------------------------------------------- comparison

std::vector<ComparisonRow> compare_designs(const std::vector<DesignReport>& reports) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : reports) {
    if (r.preset_hash != reports.front().preset_hash)
      throw ConfigError("cannot compare reports of different presets ('" + reports.front().preset + "' and '" +
                        r.preset + "')");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rows.push_back({r.strategy, r.volume_fraction, r.compliance, r.deviation ? r.deviation->mean : nan,
                    r.deviation ? r.deviation->p90 : nan, r.solver.iterations, r.wall_s});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ComparisonRow& x, const ComparisonRow& y) { return x.compliance < y.compliance; });
  return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "strategy,vf,compliance,dev_mean,dev_p90,solve_iters,wall_s\n";
  auto num = [&](double v) -> std::ostream& {
    if (std::isnan(v)) return os;
    return os << v;
  };
  for (const auto& r : rows) {
    os << r.strategy << ',';
    num(r.vf) << ',';
    num(r.compliance) << ',';
    num(r.dev_mean) << ',';
    num(r.dev_p90) << ',';
    os << r.solve_iters << ',';
    num(r.wall_s) << '\n';
  }
  return os.str();
}

}  // namespace infill
