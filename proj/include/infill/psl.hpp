#pragma once

#include "infill/common.hpp"
#include "infill/domain.hpp"
#include "infill/graph.hpp"
#include "infill/rasterize.hpp"
#include "infill/stress.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace infill {

enum class Branch { Major = 0, Medium = 1, Minor = 2 };
enum class StopReason { Boundary, Degenerate, AngleLimit, MaxLength, Proximity };

const char* to_string(Branch b);
const char* to_string(StopReason r);

/// One traced principal stress line. Consecutive points are one step apart;
/// `stop_reason` is the more severe of the two end reasons.
struct PSL {
  std::vector<Vec3> points;
  Branch branch = Branch::Major;
  StopReason stop_reason = StopReason::Boundary;
  StopReason stop_backward = StopReason::Boundary;
  StopReason stop_forward = StopReason::Boundary;
};

struct PslConfig {
  double step = 0.5;             // element units
  double angle_limit = 30.0;     // degrees per step
  double merge_distance = 4.0;   // epsilon, element units
  double seed_spacing = 1.0;     // element units
  int max_points = 4000;
  std::vector<Branch> branches{Branch::Major, Branch::Minor};
};

/// Continuous tensor field for tracing: `sample` returns nullopt outside the solid;
/// `degenerate_at` (optional) adds flags beyond the sampled tensor's own eigen-gap.
struct PslField {
  std::function<std::optional<Tensor6>(const Vec3&)> sample;
  std::function<bool(const Vec3&, Branch)> degenerate_at;
  double spacing = 1.0;  // world length of one element unit
};

/// Trilinear tensor field on the domain's material; points in an element whose own
/// tensor is degenerate for the branch are flagged too. `stress` must outlive the result.
PslField psl_field(const StressField& stress, const VoxelDomain& domain);

/// Per-element degenerate flags of a branch (true also for absent elements).
std::vector<std::uint8_t> degenerate_elements(const StressField& stress, Branch branch);

/// Bidirectional RK4 trace from `seed`; `blocked` (optional) ends a direction with
/// Proximity. Throws ConfigError when the seed lies outside the solid.
PSL trace_psl(const Vec3& seed, Branch branch, const PslField& field, const PslConfig& config,
              const std::function<bool(const Vec3&)>& blocked = {});

struct PslSet {
  std::vector<PSL> lines;
  std::size_t seeds_total = 0;
  std::size_t seeds_consumed = 0;
  std::size_t discarded = 0;  // AngleLimit or single-point traces
};

/// Seeds on a regular lattice over the material, consumed in lattice order. A trace
/// stops where it comes within epsilon/2 of an accepted line of the same branch, so
/// same-branch lines stay epsilon/2 apart; seeds within epsilon of accepted points are removed.
PslSet build_psl_set(const PslField& field, const VoxelDomain& domain, const PslConfig& config);

/// Polylines as graph segments.
EdgeGraph psl_graph(const std::vector<PSL>& lines);

struct PslInfill {
  PslSet set;
  EdgeGraph graph;
  BudgetMatch budget;
};

/// Matches the volume budget by dichotomy on epsilon (smaller epsilon, denser set).
/// Throws ConfigError when even the densest set stays below the target.
PslInfill psl_infill(const PslField& field, const VoxelDomain& domain, const PslConfig& config, int thickness_layers,
                     double target, double tolerance = 0.02);

/// OBJ polylines: `v` records and one chained `l` record per line.
void write_psl_obj(const std::vector<PSL>& lines, const std::string& path);

}  // namespace infill
