#include "infill/rasterize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace infill {

std::size_t MaterialField::count() const {
  return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

double volume_fraction(const MaterialField& field, const VoxelDomain& domain) {
  const std::size_t n = domain.num_material();
  if (n == 0) throw ConfigError("empty solid domain");
  std::size_t occ = 0;
  for (std::size_t e = 0; e < field.occupied.size(); ++e) occ += field.occupied[e] && domain.is_material(e);
  return static_cast<double>(occ) / static_cast<double>(n);
}

double passive_fraction(const VoxelDomain& domain) {
  const std::size_t n = domain.num_material();
  if (n == 0) throw ConfigError("empty solid domain");
  return static_cast<double>(domain.count(Label::Passive)) / static_cast<double>(n);
}

std::vector<std::size_t> voxelize_edge(const Vec3& a, const Vec3& b, const Grid& grid) {
  const Vec3 u0 = (a - grid.origin) / grid.spacing;
  const Vec3 d = (b - a) / grid.spacing;
  const std::array<int, 3> n{grid.nx, grid.ny, grid.nz};
  double t0 = 0.0, t1 = 1.0;
  for (int ax = 0; ax < 3; ++ax) {
    if (d[ax] == 0.0) {
      if (u0[ax] < 0.0 || u0[ax] > n[ax]) return {};
      continue;
    }
    double ta = -u0[ax] / d[ax], tb = (n[ax] - u0[ax]) / d[ax];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return {};

  std::array<int, 3> cell{}, last{}, step{};
  std::array<double, 3> t_max{}, t_delta{};
  const Vec3 p = u0 + t0 * d, q = u0 + t1 * d;
  for (int ax = 0; ax < 3; ++ax) {
    cell[ax] = std::clamp(static_cast<int>(std::floor(p[ax])), 0, n[ax] - 1);
    last[ax] = std::clamp(static_cast<int>(std::floor(q[ax])), 0, n[ax] - 1);
    if (d[ax] > 0.0) {
      step[ax] = 1;
      t_max[ax] = (cell[ax] + 1 - u0[ax]) / d[ax];
      t_delta[ax] = 1.0 / d[ax];
    } else if (d[ax] < 0.0) {
      step[ax] = -1;
      t_max[ax] = (cell[ax] - u0[ax]) / d[ax];
      t_delta[ax] = -1.0 / d[ax];
    } else {
      step[ax] = 0;
      t_max[ax] = std::numeric_limits<double>::infinity();
      t_delta[ax] = std::numeric_limits<double>::infinity();
    }
  }
  std::vector<std::size_t> out;
  const int max_steps = grid.nx + grid.ny + grid.nz + 3;
  for (int s = 0; s <= max_steps; ++s) {
    out.push_back(grid.element(cell[0], cell[1], cell[2]));
    if (cell == last) break;
    int ax = 0;
    if (t_max[1] < t_max[ax]) ax = 1;
    if (t_max[2] < t_max[ax]) ax = 2;
    if (t_max[ax] > t1) break;
    cell[ax] += step[ax];
    if (cell[ax] < 0 || cell[ax] >= n[ax]) break;
    t_max[ax] += t_delta[ax];
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> voxelize_edge_reference(const Vec3& a, const Vec3& b, const Grid& grid) {
  const Vec3 u0 = (a - grid.origin) / grid.spacing;
  const Vec3 d = (b - a) / grid.spacing;
  std::vector<std::size_t> out;
  for (std::size_t e = 0; e < grid.num_elements(); ++e) {
    const auto ijk = grid.element_ijk(e);
    double t0 = 0.0, t1 = 1.0;
    bool hit = true;
    for (int ax = 0; ax < 3 && hit; ++ax) {
      const double lo = ijk[ax], hi = ijk[ax] + 1.0;
      if (d[ax] == 0.0) {
        hit = u0[ax] >= lo && u0[ax] <= hi;
        continue;
      }
      double ta = (lo - u0[ax]) / d[ax], tb = (hi - u0[ax]) / d[ax];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      hit = t0 <= t1;
    }
    if (hit) out.push_back(e);
  }
  return out;
}

void thicken(std::vector<std::uint8_t>& mask, int layers, const VoxelDomain& domain) {
  if (layers < 0) throw ConfigError("thickness layers must be >= 0");
  const Grid& g = domain.grid;
  std::vector<std::uint8_t> next(mask.size());
  const auto n = static_cast<std::ptrdiff_t>(mask.size());
  for (int layer = 0; layer < layers; ++layer) {
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (std::ptrdiff_t e = 0; e < n; ++e) {
      if (mask[e] || !domain.is_material(e)) {
        next[e] = mask[e];
        continue;
      }
      const auto [i, j, k] = g.element_ijk(e);
      std::uint8_t hit = 0;
      for (int dk = -1; dk <= 1 && !hit; ++dk)
        for (int dj = -1; dj <= 1 && !hit; ++dj)
          for (int di = -1; di <= 1 && !hit; ++di) {
            if (g.contains_element(i + di, j + dj, k + dk) && mask[g.element(i + di, j + dj, k + dk)]) hit = 1;
          }
      next[e] = hit;
    }
    mask.swap(next);
  }
}

MaterialField voxelize_graph(const EdgeGraph& graph, const VoxelDomain& domain, int thickness_layers,
                             const std::string& strategy) {
  const Grid& g = domain.grid;
  const std::size_t passive = domain.count(Label::Passive);
  if (graph.num_edges() == 0 && graph.num_nodes() == 0 && passive == 0) throw ConfigError("empty design");
  std::vector<std::uint8_t> mask(g.num_elements(), 0);

  const auto& edges = graph.edges();
  const auto ne = static_cast<std::ptrdiff_t>(edges.size());
#pragma omp parallel num_threads(worker_threads())
  {
    std::vector<std::size_t> local;
#pragma omp for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < ne; ++i) {
      const auto cells = voxelize_edge(graph.nodes()[edges[i].first], graph.nodes()[edges[i].second], g);
      local.insert(local.end(), cells.begin(), cells.end());
    }
    // union is order independent, so the merge order does not matter
#pragma omp critical
    for (auto e : local) mask[e] = 1;
  }
  for (const auto& p : graph.nodes()) {
    for (auto e : voxelize_edge(p, p, g)) mask[e] = 1;
  }
  thicken(mask, thickness_layers, domain);
  for (std::size_t e = 0; e < mask.size(); ++e) {
    if (!domain.is_material(e)) mask[e] = 0;
    if (domain.labels[e] == Label::Passive) mask[e] = 1;
  }
  MaterialField f{g, std::move(mask), strategy, {{"thickness_layers", double(thickness_layers)}}};
  if (f.count() == 0) throw ConfigError("empty design");
  return f;
}

BudgetMatch match_budget(const FieldGenerator& generator, const VoxelDomain& domain, const BudgetConfig& config) {
  const double shell = passive_fraction(domain);
  if (config.target < shell) {
    std::ostringstream os;
    os << "target volume fraction " << config.target << " is below the passive-shell fraction; minimum achievable is "
       << shell;
    throw ConfigError(os.str());
  }
  if (!(config.lo < config.hi)) throw ConfigError("budget parameter range must satisfy lo < hi");
  if (config.log_scale && config.lo <= 0.0) throw ConfigError("log-scale budget range needs lo > 0");

  BudgetMatch best;
  double best_err = std::numeric_limits<double>::infinity();
  auto eval = [&](double p) {
    auto f = generator(p);
    const double v = volume_fraction(f, domain);
    best.trace.push_back({p, v});
    if (std::abs(v - config.target) < best_err) {
      best_err = std::abs(v - config.target);
      best.field = std::move(f);
      best.parameter = p;
      best.volume = v;
    }
    return v;
  };
  auto finish = [&] {
    best.converged = best_err <= config.tolerance;
    auto t = best.trace;
    std::sort(t.begin(), t.end(), [](const BudgetStep& a, const BudgetStep& b) { return a.parameter < b.parameter; });
    bool up = true, down = true;
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (t[i].volume < t[i - 1].volume) up = false;
      if (t[i].volume > t[i - 1].volume) down = false;
    }
    best.monotone = up || down;
    if (!best.monotone) warn("budget matching: achieved volume is not monotone in the generator parameter");
    if (!best.converged) {
      std::ostringstream os;
      os << "budget matching: best volume fraction " << best.volume << " for target " << config.target;
      warn(os.str());
    }
    best.field.parameters["budget_parameter"] = best.parameter;
    return best;
  };

  double lo = config.lo, hi = config.hi;
  double vlo = eval(lo);
  if (best_err <= config.tolerance) return finish();
  double vhi = eval(hi);
  if (best_err <= config.tolerance) return finish();
  if (vlo == vhi || config.target < std::min(vlo, vhi) || config.target > std::max(vlo, vhi)) {
    best.bracketed = false;
    return finish();
  }
  const bool increasing = vhi > vlo;
  for (int it = 0; it < config.max_iterations; ++it) {
    const double mid = config.log_scale ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    const double v = eval(mid);
    if (std::abs(v - config.target) <= config.tolerance) break;
    if ((v < config.target) == increasing) {
      lo = mid;
      vlo = v;
    } else {
      hi = mid;
      vhi = v;
    }
  }
  return finish();
}

void require_within_cap(int nx, int ny, int nz, std::size_t element_cap) {
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
  if (n > element_cap) {
    throw ConfigError("grid " + std::to_string(nx) + "x" + std::to_string(ny) + "x" + std::to_string(nz) + " has " +
                      std::to_string(n) + " elements, above the cap of " + std::to_string(element_cap));
  }
}

Resolution auto_resolution(const EdgeGraph& graph, const Vec3& bbox_min, const Vec3& bbox_max, double default_thickness,
                           double min_voxels, std::size_t element_cap) {
  if (graph.num_edges() == 0) throw ConfigError("auto resolution needs a non-empty graph");
  std::vector<double> thick;
  for (const auto& [a, b] : graph.edges()) {
    const auto& ta = graph.thickness()[a];
    const auto& tb = graph.thickness()[b];
    if (ta && tb) thick.push_back(0.5 * (*ta + *tb));
    else if (ta || tb) thick.push_back(ta ? *ta : *tb);
    else thick.push_back(default_thickness);
  }
  std::nth_element(thick.begin(), thick.begin() + thick.size() / 2, thick.end());
  const double t = thick[thick.size() / 2];
  if (!(t > 0.0)) throw ConfigError("edge thickness must be positive");
  const Vec3 ext = bbox_max - bbox_min;
  const double longest = ext.maxCoeff();
  if (!(longest > 0.0)) throw ConfigError("degenerate bounding box");

  auto dims_for = [&](int res) {
    const double h = longest / res;
    std::array<int, 3> d{};
    for (int ax = 0; ax < 3; ++ax) d[ax] = std::max(1, static_cast<int>(std::ceil(ext[ax] / h - 1e-9)));
    return d;
  };
  auto elements = [](const std::array<int, 3>& d) { return static_cast<double>(d[0]) * d[1] * d[2]; };

  Resolution r;
  int res = static_cast<int>(std::ceil(min_voxels * longest / t - 1e-9));
  r.dims = dims_for(res);
  while (elements(r.dims) > static_cast<double>(element_cap) && res > 1) {
    r.capped = true;
    const double s = std::cbrt(static_cast<double>(element_cap) / elements(r.dims));
    res = std::max(1, std::min(res - 1, static_cast<int>(std::floor(res * s))));
    r.dims = dims_for(res);
  }
  r.voxels_per_edge = t / (longest / res);
  if (r.capped) {
    std::ostringstream os;
    os << "auto resolution capped at " << element_cap << " elements; edges span " << r.voxels_per_edge << " voxels";
    warn(os.str());
  }
  return r;
}

void write_material_field(const std::string& path, const MaterialField& field, const VoxelDomain& domain) {
  std::vector<std::uint8_t> passive(domain.labels.size());
  for (std::size_t e = 0; e < passive.size(); ++e) passive[e] = domain.labels[e] == Label::Passive;
  write_voxel_file(path, field.grid, field.occupied, &passive);
}

}  // namespace infill
