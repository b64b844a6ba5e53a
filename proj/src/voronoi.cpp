#include "infill/voronoi.hpp"

#include "infill/kdtree.hpp"
#include "infill/stress.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

namespace infill {

double map_radius(double rank, double r_hat, double rho_ratio) {
  return rank * (r_hat * rho_ratio - r_hat) + r_hat;
}

std::size_t SampleSet::count(SampleOrigin o) const {
  return static_cast<std::size_t>(std::count(origin.begin(), origin.end(), o));
}

std::vector<double> radius_field(const VoxelDomain& domain, std::span<const double> von_mises, double r_hat,
                                 double rho_ratio) {
  if (von_mises.size() != domain.grid.num_elements()) {
    throw ConfigError("von Mises field has " + std::to_string(von_mises.size()) + " entries, grid has " +
                      std::to_string(domain.grid.num_elements()));
  }
  std::vector<double> values;
  std::vector<std::size_t> ids;
  for (std::size_t e = 0; e < domain.labels.size(); ++e) {
    if (!domain.is_material(e)) continue;
    values.push_back(von_mises[e]);
    ids.push_back(e);
  }
  if (ids.empty()) throw ConfigError("empty solid domain");
  const auto rank = icdf_normalize(values);
  std::vector<double> out(domain.grid.num_elements(), r_hat);
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = map_radius(rank[i], r_hat, rho_ratio);
  return out;
}

double default_r_hat(const TriMesh& hull) { return 0.1 * (hull.bbox_max() - hull.bbox_min()).norm(); }

namespace {

// Radius of the material element containing p, or of the nearest material element
// within two layers; r_hat when there is none.
double radius_at(const VoxelDomain& domain, const std::vector<double>& radius, const Vec3& p, double r_hat) {
  const Grid& g = domain.grid;
  const Vec3 rel = (p - g.origin) / g.spacing;
  const int ci = std::clamp(static_cast<int>(std::floor(rel.x())), 0, g.nx - 1);
  const int cj = std::clamp(static_cast<int>(std::floor(rel.y())), 0, g.ny - 1);
  const int ck = std::clamp(static_cast<int>(std::floor(rel.z())), 0, g.nz - 1);
  double best = std::numeric_limits<double>::infinity();
  double r = r_hat;
  for (int layer = 0; layer <= 2 && !std::isfinite(best); ++layer) {
    for (int dk = -layer; dk <= layer; ++dk)
      for (int dj = -layer; dj <= layer; ++dj)
        for (int di = -layer; di <= layer; ++di) {
          const int i = ci + di, j = cj + dj, k = ck + dk;
          if (!g.contains_element(i, j, k)) continue;
          const auto e = g.element(i, j, k);
          if (!domain.is_material(e)) continue;
          const double d = (g.element_center(e) - p).squaredNorm();
          if (d < best) {
            best = d;
            r = radius[e];
          }
        }
  }
  return r;
}

}  // namespace

SampleSet graded_poisson_sample(const VoxelDomain& domain, const TriMesh& hull, std::span<const double> von_mises,
                                const SamplingConfig& config, const std::function<void(const SampleSet&)>& on_batch) {
  if (domain.num_material() == 0) throw ConfigError("empty solid domain");
  if (!(config.rho_ratio > 0.0 && config.rho_ratio <= 1.0)) throw ConfigError("rho_ratio must lie in (0, 1]");
  if (config.batch_size < 1 || config.max_empty_batches < 1) throw ConfigError("batch_size and max_empty_batches must be >= 1");
  if (hull.vertices.empty()) throw ConfigError("hull mesh has no vertices");
  const double r_hat = config.r_hat > 0.0 ? config.r_hat : default_r_hat(hull);
  const auto radius = radius_field(domain, von_mises, r_hat, config.rho_ratio);

  SampleSet s;
  auto push = [&](const Vec3& p, double r, SampleOrigin o) {
    s.points.push_back(p);
    s.radii.push_back(r);
    s.origin.push_back(o);
  };

  // auxiliary Fibonacci sphere bounding everything
  const Vec3 lo = hull.bbox_min(), hi = hull.bbox_max();
  const Vec3 center = 0.5 * (lo + hi);
  const double R = config.aux_scale * 0.5 * (hi - lo).norm();
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < config.aux_samples; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / config.aux_samples;
    const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    push(center + R * Vec3(rr * std::cos(phi), rr * std::sin(phi), z), r_hat, SampleOrigin::AuxiliarySphere);
  }

  // hull vertices, thinned by the disk rule among themselves
  {
    std::vector<Vec3> kept;
    std::vector<double> kept_r;
    for (const auto& v : hull.vertices) {
      const double rv = radius_at(domain, radius, v, r_hat);
      bool ok = true;
      for (std::size_t j = 0; j < kept.size() && ok; ++j) {
        const double m = config.hull_thinning * std::min(rv, kept_r[j]);
        ok = (kept[j] - v).squaredNorm() >= m * m;
      }
      if (!ok) continue;
      kept.push_back(v);
      kept_r.push_back(rv);
      push(v, rv, SampleOrigin::HullVertex);
    }
  }

  std::vector<std::size_t> material;
  for (std::size_t e = 0; e < domain.labels.size(); ++e)
    if (domain.is_material(e)) material.push_back(e);

  const Grid& g = domain.grid;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, material.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  KdTree tree(s.points);
  const int batch = config.batch_size;
  std::vector<Vec3> cand(batch);
  std::vector<double> cand_r(batch);
  std::vector<std::uint8_t> blocked(batch);
  int empty = 0;
  while (empty < config.max_empty_batches) {
    // candidates drawn serially so the stream does not depend on the thread count
    for (int c = 0; c < batch; ++c) {
      const std::size_t e = material[pick(rng)];
      const auto [i, j, k] = g.element_ijk(e);
      const double u = unit(rng), v = unit(rng), w = unit(rng);
      cand[c] = g.origin + g.spacing * Vec3(i + u, j + v, k + w);
      cand_r[c] = radius[e];
    }
#pragma omp parallel for schedule(static) num_threads(worker_threads())
    for (int c = 0; c < batch; ++c) {
      // min(Rc, Rs) <= Rc, so a query radius of Rc finds every conflict
      blocked[c] = tree.any_within(cand[c], cand_r[c], [&](std::size_t idx, double d2) {
        const double m = std::min(cand_r[c], s.radii[idx]);
        return d2 < m * m;
      });
    }
    const std::size_t before = s.size();
    for (int c = 0; c < batch; ++c) {
      if (blocked[c]) continue;
      bool ok = true;
      for (std::size_t a = before; a < s.size() && ok; ++a) {
        const double m = std::min(cand_r[c], s.radii[a]);
        ok = (s.points[a] - cand[c]).squaredNorm() >= m * m;
      }
      if (ok) push(cand[c], cand_r[c], SampleOrigin::Interior);
    }
    if (s.size() == before) {
      ++empty;
    } else {
      empty = 0;
      tree = KdTree(s.points);
    }
    if (on_batch) on_batch(s);
  }
  return s;
}

std::vector<std::pair<std::size_t, std::size_t>> disk_violations(const SampleSet& samples) {
  std::vector<std::pair<std::size_t, std::size_t>> bad;
  KdTree tree(samples.points);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples.origin[i] != SampleOrigin::Interior) continue;
    for (std::size_t j : tree.within(samples.points[i], samples.radii[i])) {
      if (j <= i || samples.origin[j] != SampleOrigin::Interior) continue;
      const double m = std::min(samples.radii[i], samples.radii[j]);
      if ((samples.points[i] - samples.points[j]).squaredNorm() < m * m) bad.emplace_back(i, j);
    }
  }
  return bad;
}

DelaunayComplex restrict_delaunay(const DelaunayComplex& complex, const TriMesh& mesh) {
  DelaunayComplex out = complex;
  std::vector<Vec3> centroids(complex.size());
  for (std::size_t t = 0; t < complex.size(); ++t) centroids[t] = complex.centroid(t);
  const auto w = winding_numbers(mesh, centroids);
  out.kept.assign(complex.size(), 0);
  for (std::size_t t = 0; t < complex.size(); ++t) out.kept[t] = complex.is_kept(t) && w[t] >= 0.5;
  return out;
}

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

EdgeGraph voronoi_dual_and_clip(const DelaunayComplex& restricted, const TriMesh& mesh,
                                std::span<const SampleOrigin> origin) {
  const std::size_t nt = restricted.size();
  if (restricted.kept_count() == 0) throw ConfigError("restricted complex is empty");
  auto is_aux = [&](int v) { return !origin.empty() && origin[v] == SampleOrigin::AuxiliarySphere; };

  std::vector<std::uint8_t> eligible(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& v = restricted.tets[t];
    eligible[t] = !(is_aux(v[0]) && is_aux(v[1]) && is_aux(v[2]) && is_aux(v[3]));
  }
  // dual faces: both tets finite and eligible, at least one kept, not all-auxiliary
  std::vector<std::pair<std::size_t, std::size_t>> faces;
  for (std::size_t t = 0; t < nt; ++t) {
    if (!eligible[t]) continue;
    for (int k = 0; k < 4; ++k) {
      const int u = restricted.neighbors[t][k];
      if (u < 0 || static_cast<std::size_t>(u) < t || !eligible[u]) continue;
      if (!restricted.is_kept(t) && !restricted.is_kept(u)) continue;
      const auto& v = restricted.tets[t];
      bool all_aux = true;
      for (int i = 0; i < 4; ++i)
        if (i != k && !is_aux(v[i])) all_aux = false;
      if (all_aux) continue;
      faces.emplace_back(t, static_cast<std::size_t>(u));
    }
  }

  std::vector<std::uint8_t> used(nt, 0);
  for (const auto& [a, b] : faces) used[a] = used[b] = 1;
  std::vector<Vec3> cc(nt, Vec3::Zero());
  std::vector<std::size_t> used_ids;
  for (std::size_t t = 0; t < nt; ++t) {
    if (!used[t]) continue;
    cc[t] = restricted.circumcenter(t);
    used_ids.push_back(t);
  }
  std::vector<Vec3> query;
  query.reserve(used_ids.size());
  for (auto t : used_ids) query.push_back(cc[t]);
  const auto w = winding_numbers(mesh, query);
  std::vector<std::uint8_t> inside(nt, 0);
  for (std::size_t i = 0; i < used_ids.size(); ++i) inside[used_ids[i]] = w[i] >= 0.5;

  const double diag = (mesh.bbox_max() - mesh.bbox_min()).norm();
  const double merge_tol = 1e-9 * diag;
  const double inset = 1e-7 * diag;  // clip points sit this far inside the hull

  UnionFind uf(nt);
  for (const auto& [a, b] : faces) {
    if (inside[a] && inside[b] && (cc[a] - cc[b]).norm() <= merge_tol) uf.unite(a, b);
  }

  EdgeGraph graph;
  std::vector<std::size_t> node(nt, SIZE_MAX);
  auto node_of = [&](std::size_t t) {
    const std::size_t r = uf.find(t);
    if (node[r] == SIZE_MAX) node[r] = graph.add_node(cc[r]);
    return node[r];
  };
  for (const auto& [a, b] : faces) {
    if (!inside[a] && !inside[b]) continue;
    if (inside[a] && inside[b]) {
      graph.add_edge(node_of(a), node_of(b));
      continue;
    }
    const std::size_t in = inside[a] ? a : b, out = inside[a] ? b : a;
    const Vec3 p = cc[in], q = cc[out];
    const double len = (q - p).norm();
    double t = 0.0;
    if (auto hit = first_hit(mesh, p, q)) {
      t = *hit;
    } else {
      // grazing segment the triangle test missed: bisect the winding number
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (winding_number(mesh, p + mid * (q - p)) >= 0.5 ? lo : hi) = mid;
      }
      t = lo;
    }
    t = std::max(0.0, t - inset / len);
    const Vec3 clip = p + t * (q - p);
    if ((clip - p).norm() <= merge_tol) continue;
    const std::size_t c = graph.add_node(clip);
    graph.add_edge(node_of(in), c);
  }
  graph.compact();
  return graph;
}

double mean_cell_anisotropy(const DelaunayComplex& complex, const SampleSet& samples) {
  const std::size_t np = complex.points.size();
  std::vector<std::vector<std::size_t>> incident(np);
  for (std::size_t t = 0; t < complex.size(); ++t)
    for (int v : complex.tets[t]) incident[v].push_back(t);
  Mat3 mean = Mat3::Zero();
  std::size_t cells = 0;
  for (std::size_t s = 0; s < np && s < samples.size(); ++s) {
    if (samples.origin[s] != SampleOrigin::Interior || incident[s].empty()) continue;
    bool closed = true;
    for (auto t : incident[s]) {
      if (!complex.is_kept(t)) closed = false;
      for (int v : complex.tets[t])
        if (samples.origin[v] != SampleOrigin::Interior) closed = false;
    }
    if (!closed) continue;
    Mat3 m = Mat3::Zero();
    for (auto t : incident[s]) {
      const Vec3 d = complex.circumcenter(t) - complex.points[s];
      m += d * d.transpose();
    }
    mean += m / m.trace();
    ++cells;
  }
  if (cells == 0) throw ConfigError("no closed interior Voronoi cell to measure");
  const Eigen::SelfAdjointEigenSolver<Mat3> es(mean / static_cast<double>(cells));
  return es.eigenvalues()(2) / es.eigenvalues()(0);
}

VoronoiResult voronoi_infill_graph(const VoxelDomain& domain, const TriMesh& hull, std::span<const double> von_mises,
                                   const SamplingConfig& config) {
  VoronoiResult r;
  r.samples = graded_poisson_sample(domain, hull, von_mises, config);
  const auto full = delaunay(r.samples.points);
  r.delaunay_tets = full.size();
  r.restricted = restrict_delaunay(full, hull);
  r.graph = voronoi_dual_and_clip(r.restricted, hull, r.samples.origin);
  return r;
}

VoronoiInfill voronoi_infill(const VoxelDomain& domain, const TriMesh& hull, std::span<const double> von_mises,
                             const SamplingConfig& config, int thickness_layers, double target, double tolerance,
                             double r_hat_min, double r_hat_max) {
  if (thickness_layers < 0) throw ConfigError("thickness layers must be >= 0");
  const double lo_r = r_hat_min > 0.0 ? r_hat_min : 3.0 * domain.grid.spacing;
  const double hi_r = r_hat_max > 0.0 ? r_hat_max : 0.3 * (hull.bbox_max() - hull.bbox_min()).norm();
  std::map<double, VoronoiResult> cache;
  auto generator = [&](double r_hat) {
    SamplingConfig c = config;
    c.r_hat = r_hat;
    auto res = voronoi_infill_graph(domain, hull, von_mises, c);
    auto f = voxelize_graph(res.graph, domain, thickness_layers, "voronoi");
    f.parameters["r_hat"] = r_hat;
    f.parameters["rho_ratio"] = c.rho_ratio;
    f.parameters["seed"] = static_cast<double>(c.seed);
    f.parameters["thickness_layers"] = thickness_layers;
    cache[r_hat] = std::move(res);
    return f;
  };
  BudgetConfig bc;
  bc.target = target;
  bc.tolerance = tolerance;
  bc.lo = lo_r;
  bc.hi = hi_r;
  bc.log_scale = true;
  VoronoiInfill out;
  out.budget = match_budget(generator, domain, bc);
  out.result = std::move(cache.at(out.budget.parameter));
  return out;
}

}  // namespace infill
