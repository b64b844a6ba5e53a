#pragma once

#include "infill/preset.hpp"
#include "infill/rasterize.hpp"
#include "infill/stress.hpp"
#include "infill/topopt.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace infill {

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;           // solver's final relative residual
  double verified_residual = 0.0;  // ||K u - f|| / ||f|| from one extra operator application
  bool converged = false;
};

struct DeviationStats {
  double mean = 0.0;
  double p90 = 0.0;
  std::size_t compared = 0;
  std::size_t degenerate = 0;
};

struct DesignReport {
  std::string strategy;
  std::map<std::string, double> parameters;
  std::string preset;
  std::string preset_hash;   // of the unrotated preset, so load cases of one preset compare
  double volume_fraction = 0.0;
  double compliance = 0.0;
  std::vector<double> compliance_history;
  SolveStats solver;
  Vec3 euler_degrees = Vec3::Zero();
  std::optional<DeviationStats> deviation;
  std::map<std::string, std::string> exports;
  std::string design_hash;   // of the evaluated element densities
  double wall_s = 0.0;

  /// Canonical JSON including the reproducibility hash.
  nlohmann::json to_json() const;
  /// SHA-256 over the canonical JSON without timings, export paths and the hash itself.
  std::string hash() const;
  static DesignReport from_json(const nlohmann::json& j);
};

void write_report(const DesignReport& report, const std::string& path);
DesignReport read_report(const std::string& path);

struct Evaluation {
  DesignReport report;
  std::vector<double> displacement;
  StressField stress;
  ScalarField von_mises;               // 0 outside occupied elements
  std::vector<std::uint8_t> occupied;  // density > 0.5
};

/// One SIMP solve of the element densities under the preset's loads: compliance f.u,
/// element stresses and von Mises on occupied elements. Throws NumericalError when the
/// solver does not reach its tolerance.
Evaluation evaluate_design(std::span<const double> densities, const Preset& preset, const SolverConfig& solver,
                           const std::string& strategy = "design", const SimpParams& simp = {});
Evaluation evaluate_design(const MaterialField& field, const Preset& preset, const SolverConfig& solver);
Evaluation evaluate_design(const DensityField& field, const Preset& preset, const SolverConfig& solver,
                           const std::string& strategy);

/// Re-evaluates the design with every nodal force rotated (Rz Ry Rx, degrees).
Evaluation variable_load(std::span<const double> densities, const Preset& preset, const Vec3& euler_degrees,
                         const SolverConfig& solver, const std::string& strategy = "design");

/// Per-element 1 - |cos| between dominant (largest magnitude) principal directions.
struct DeviationField {
  Grid grid;
  std::vector<double> values;            // 0 where not compared
  std::vector<std::uint8_t> degenerate;  // either dominant direction undetermined
  DeviationStats stats;
};

DeviationField deviation_field(const StressField& a, const StressField& b, std::span<const std::uint8_t> mask);

/// Rows sorted ascending by compliance; throws ConfigError on reports of different presets.
struct ComparisonRow {
  std::string strategy;
  double vf, compliance, dev_mean, dev_p90;
  int solve_iters;
  double wall_s;
};
std::vector<ComparisonRow> compare_designs(const std::vector<DesignReport>& reports);
/// CSV with header strategy,vf,compliance,dev_mean,dev_p90,solve_iters,wall_s.
std::string comparison_csv(const std::vector<ComparisonRow>& rows);

/// Digest of a density vector (bitwise).
std::string field_hash(std::span<const double> values);

}  // namespace infill
