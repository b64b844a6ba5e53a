#include "infill/psl.hpp"

#include "infill/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace infill {

const char* to_string(Branch b) {
  switch (b) {
    case Branch::Major: return "major";
    case Branch::Medium: return "medium";
    case Branch::Minor: return "minor";
  }
  return "?";
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Boundary: return "boundary";
    case StopReason::Degenerate: return "degenerate";
    case StopReason::AngleLimit: return "angle_limit";
    case StopReason::MaxLength: return "max_length";
    case StopReason::Proximity: return "proximity";
  }
  return "?";
}

namespace {

int severity(StopReason r) {
  switch (r) {
    case StopReason::AngleLimit: return 4;
    case StopReason::Degenerate: return 3;
    case StopReason::Proximity: return 2;
    case StopReason::MaxLength: return 1;
    case StopReason::Boundary: return 0;
  }
  return 0;
}

std::size_t containing_element(const Grid& g, const Vec3& p, bool& inside) {
  const Vec3 t = (p - g.origin) / g.spacing;
  const int i = std::min(static_cast<int>(std::floor(t.x())), g.nx - 1);
  const int j = std::min(static_cast<int>(std::floor(t.y())), g.ny - 1);
  const int k = std::min(static_cast<int>(std::floor(t.z())), g.nz - 1);
  inside = g.contains_element(i, j, k);
  return inside ? g.element(i, j, k) : 0;
}

// Unit eigenvector of the branch at p, flipped towards `ref`; nullopt with the reason
// when p is outside the solid or degenerate.
std::optional<Vec3> direction(const PslField& field, const Vec3& p, Branch b, const Vec3& ref, StopReason& why) {
  const auto t = field.sample(p);
  if (!t) {
    why = StopReason::Boundary;
    return std::nullopt;
  }
  const auto pr = principal(*t, Ordering::Signed);
  const int bi = static_cast<int>(b);
  if (pr.branch_degenerate[bi] || (field.degenerate_at && field.degenerate_at(p, b))) {
    why = StopReason::Degenerate;
    return std::nullopt;
  }
  Vec3 v = pr.dirs[bi];
  if (v.dot(ref) < 0.0) v = -v;
  return v;
}

struct Half {
  std::vector<Vec3> points;
  StopReason reason = StopReason::Boundary;
};

Half integrate(const Vec3& seed, const Vec3& v0, Branch b, const PslField& field, const PslConfig& cfg,
               const std::function<bool(const Vec3&)>& blocked, int budget) {
  Half out;
  const double h = cfg.step * field.spacing;
  const double cos_limit = std::cos(cfg.angle_limit * std::numbers::pi / 180.0);
  Vec3 p = seed, prev = v0;
  StopReason why = StopReason::Boundary;
  while (true) {
    if (static_cast<int>(out.points.size()) >= budget) {
      out.reason = StopReason::MaxLength;
      return out;
    }
    const auto k1 = direction(field, p, b, prev, why);
    const auto k2 = k1 ? direction(field, p + 0.5 * h * *k1, b, prev, why) : std::nullopt;
    const auto k3 = k2 ? direction(field, p + 0.5 * h * *k2, b, prev, why) : std::nullopt;
    const auto k4 = k3 ? direction(field, p + h * *k3, b, prev, why) : std::nullopt;
    if (!k4) {
      out.reason = why;
      return out;
    }
    const Vec3 t = (*k1 + 2.0 * *k2 + 2.0 * *k3 + *k4).normalized();
    if (t.dot(prev) < cos_limit) {
      out.reason = StopReason::AngleLimit;
      return out;
    }
    const Vec3 q = p + h * t;
    if (!direction(field, q, b, t, why)) {
      out.reason = why;
      return out;
    }
    if (blocked && blocked(q)) {
      out.reason = StopReason::Proximity;
      return out;
    }
    out.points.push_back(q);
    p = q;
    prev = t;
  }
}

// Uniform hash grid of points answering "any point closer than r" for r <= cell size.
class PointHash {
 public:
  explicit PointHash(double cell) : cell_(cell) {}
  void insert(const Vec3& p) { cells_[key(cell_of(p))].push_back(p); }
  bool any_within(const Vec3& q, double r) const {
    const auto c = cell_of(q);
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          auto it = cells_.find(key({c[0] + di, c[1] + dj, c[2] + dk}));
          if (it == cells_.end()) continue;
          for (const auto& p : it->second)
            if ((p - q).squaredNorm() < r * r) return true;
        }
    return false;
  }

 private:
  std::array<long long, 3> cell_of(const Vec3& p) const {
    return {static_cast<long long>(std::floor(p.x() / cell_)), static_cast<long long>(std::floor(p.y() / cell_)),
            static_cast<long long>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t key(const std::array<long long, 3>& c) {
    return (static_cast<std::uint64_t>(c[0] & 0x1FFFFF) << 42) | (static_cast<std::uint64_t>(c[1] & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(c[2] & 0x1FFFFF);
  }
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<Vec3>> cells_;
};

void validate(const PslConfig& c) {
  if (!(c.step > 0.0)) throw ConfigError("psl step must be > 0");
  if (!(c.angle_limit > 0.0 && c.angle_limit < 90.0)) throw ConfigError("psl angle_limit must lie in (0, 90) degrees");
  if (!(c.merge_distance > 0.0)) throw ConfigError("psl merge_distance must be > 0");
  if (!(c.seed_spacing > 0.0)) throw ConfigError("psl seed_spacing must be > 0");
  if (c.max_points < 2) throw ConfigError("psl max_points must be >= 2");
  if (c.branches.empty()) throw ConfigError("psl needs at least one branch");
}

}  // namespace

std::vector<std::uint8_t> degenerate_elements(const StressField& stress, Branch branch) {
  std::vector<std::uint8_t> out(stress.grid.num_elements(), 1);
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    if (!stress.present[e]) continue;
    out[e] = principal(stress.at(e), Ordering::Signed).branch_degenerate[static_cast<int>(branch)];
  }
  return out;
}

PslField psl_field(const StressField& stress, const VoxelDomain& domain) {
  if (!stress.grid.same_shape(domain.grid)) throw ConfigError("stress field and domain grids differ");
  auto flags = std::make_shared<std::array<std::vector<std::uint8_t>, 3>>();
  for (int b = 0; b < 3; ++b) (*flags)[b] = degenerate_elements(stress, static_cast<Branch>(b));
  PslField f;
  f.spacing = stress.grid.spacing;
  f.sample = [&stress](const Vec3& p) { return interpolate_tensor(stress, p); };
  f.degenerate_at = [flags, grid = stress.grid](const Vec3& p, Branch b) {
    bool inside = false;
    const auto e = containing_element(grid, p, inside);
    return !inside || (*flags)[static_cast<int>(b)][e] != 0;
  };
  return f;
}

PSL trace_psl(const Vec3& seed, Branch branch, const PslField& field, const PslConfig& config,
              const std::function<bool(const Vec3&)>& blocked) {
  validate(config);
  PSL line;
  line.branch = branch;
  if (!field.sample(seed)) throw ConfigError("psl seed lies outside the solid domain");
  StopReason why = StopReason::Boundary;
  const auto v0 = direction(field, seed, branch, Vec3::UnitX(), why);
  line.points.push_back(seed);
  if (!v0) {
    line.stop_reason = line.stop_forward = line.stop_backward = why;
    return line;
  }
  const int budget = std::max(1, (config.max_points - 1) / 2);
  auto fwd = integrate(seed, *v0, branch, field, config, blocked, budget);
  auto bwd = integrate(seed, -*v0, branch, field, config, blocked, budget);
  line.points.assign(bwd.points.rbegin(), bwd.points.rend());
  line.points.push_back(seed);
  line.points.insert(line.points.end(), fwd.points.begin(), fwd.points.end());
  line.stop_forward = fwd.reason;
  line.stop_backward = bwd.reason;
  line.stop_reason = severity(fwd.reason) >= severity(bwd.reason) ? fwd.reason : bwd.reason;
  return line;
}

PslSet build_psl_set(const PslField& field, const VoxelDomain& domain, const PslConfig& config) {
  validate(config);
  const Grid& g = domain.grid;
  const double s = config.seed_spacing * g.spacing;
  const double eps = config.merge_distance * g.spacing;
  std::vector<Vec3> seeds;
  for (double z = g.origin.z() + 0.5 * s; z < g.origin.z() + g.nz * g.spacing; z += s)
    for (double y = g.origin.y() + 0.5 * s; y < g.origin.y() + g.ny * g.spacing; y += s)
      for (double x = g.origin.x() + 0.5 * s; x < g.origin.x() + g.nx * g.spacing; x += s) {
        const Vec3 p(x, y, z);
        bool inside = false;
        const auto e = containing_element(g, p, inside);
        if (inside && domain.is_material(e) && field.sample(p)) seeds.push_back(p);
      }
  PslSet out;
  out.seeds_total = seeds.size();
  const KdTree seed_tree(seeds);
  std::vector<std::uint8_t> removed(seeds.size(), 0);
  std::map<Branch, PointHash> accepted;
  for (auto b : config.branches) accepted.emplace(b, PointHash(std::max(eps, 1e-12)));

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (removed[i]) continue;
    removed[i] = 1;
    ++out.seeds_consumed;
    for (auto b : config.branches) {
      auto& hash = accepted.at(b);
      const auto blocked = [&](const Vec3& q) { return hash.any_within(q, 0.5 * eps); };
      PSL line = trace_psl(seeds[i], b, field, config, blocked);
      if (line.stop_reason == StopReason::AngleLimit || line.points.size() < 2) {
        ++out.discarded;
        continue;
      }
      for (const auto& p : line.points) {
        hash.insert(p);
        for (auto idx : seed_tree.within(p, eps)) removed[idx] = 1;
      }
      out.lines.push_back(std::move(line));
    }
  }
  return out;
}

EdgeGraph psl_graph(const std::vector<PSL>& lines) {
  EdgeGraph g;
  for (const auto& l : lines) {
    std::size_t prev = SIZE_MAX;
    for (const auto& p : l.points) {
      const std::size_t cur = g.add_node(p);
      if (prev != SIZE_MAX) g.add_edge(prev, cur);
      prev = cur;
    }
  }
  return g;
}

PslInfill psl_infill(const PslField& field, const VoxelDomain& domain, const PslConfig& config, int thickness_layers,
                     double target, double tolerance) {
  validate(config);
  if (thickness_layers < 0) throw ConfigError("thickness layers must be >= 0");
  PslInfill out;
  const double shell = passive_fraction(domain);
  if (target <= shell + tolerance && target >= shell) {
    // the passive shell alone meets the budget
    out.budget.field = voxelize_graph(EdgeGraph{}, domain, thickness_layers, "psl");
    out.budget.volume = volume_fraction(out.budget.field, domain);
    out.budget.parameter = std::numeric_limits<double>::infinity();
    out.budget.converged = true;
    return out;
  }
  std::map<double, std::pair<PslSet, EdgeGraph>> cache;
  auto generator = [&](double eps) {
    PslConfig c = config;
    c.merge_distance = eps;
    auto set = build_psl_set(field, domain, c);
    auto graph = psl_graph(set.lines);
    auto f = voxelize_graph(graph, domain, thickness_layers, "psl");
    f.parameters["merge_distance"] = eps;
    cache[eps] = {std::move(set), std::move(graph)};
    return f;
  };
  BudgetConfig bc;
  bc.target = target;
  bc.tolerance = tolerance;
  bc.lo = config.step;
  bc.hi = std::max(2.0 * config.step, static_cast<double>(std::max({domain.grid.nx, domain.grid.ny, domain.grid.nz})));
  bc.log_scale = true;
  out.budget = match_budget(generator, domain, bc);
  if (!out.budget.converged) {
    double max_v = 0.0;
    for (const auto& s : out.budget.trace) max_v = std::max(max_v, s.volume);
    if (max_v < target - tolerance) {
      std::ostringstream os;
      os << "psl budget unreachable: densest set (epsilon = step) gives volume fraction " << max_v << " < " << target;
      throw ConfigError(os.str());
    }
  }
  auto& hit = cache.at(out.budget.parameter);
  out.set = std::move(hit.first);
  out.graph = std::move(hit.second);
  return out;
}

void write_psl_obj(const std::vector<PSL>& lines, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << std::setprecision(17);
  std::size_t base = 1;
  for (const auto& l : lines) {
    os << "# " << to_string(l.branch) << " " << to_string(l.stop_reason) << '\n';
    for (const auto& p : l.points) os << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    if (l.points.size() >= 2) {
      os << 'l';
      for (std::size_t i = 0; i < l.points.size(); ++i) os << ' ' << base + i;
      os << '\n';
    }
    base += l.points.size();
  }
}

}  // namespace infill
