#pragma once

#include "infill/common.hpp"
#include "infill/delaunay.hpp"
#include "infill/domain.hpp"
#include "infill/graph.hpp"
#include "infill/mesh.hpp"
#include "infill/rasterize.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace infill {

/// Poisson radius for a stress rank in [0, 1]: r_hat at rank 0 down to r_hat * rho_ratio at rank 1.
double map_radius(double rank, double r_hat, double rho_ratio);

enum class SampleOrigin : std::uint8_t { AuxiliarySphere, HullVertex, Interior };

/// Samples in insertion order: auxiliary sphere, hull vertices, then interior darts.
/// Invariant: |p_i - p_j| >= min(r_i, r_j) for any two interior samples.
struct SampleSet {
  std::vector<Vec3> points;
  std::vector<double> radii;
  std::vector<SampleOrigin> origin;

  std::size_t size() const { return points.size(); }
  std::size_t count(SampleOrigin o) const;
};

struct SamplingConfig {
  double r_hat = 0.0;          // <= 0: 0.1 x hull bounding-box diagonal
  double rho_ratio = 0.5;      // smallest / largest radius, in (0, 1]
  int batch_size = 1024;
  int max_empty_batches = 20;  // stop after this many consecutive all-rejected batches
  int aux_samples = 64;
  double aux_scale = 1.1;      // auxiliary sphere radius / hull circumradius
  double hull_thinning = 0.5;  // hull vertices keep this fraction of the disk radius apart (0 keeps all)
  std::uint64_t seed = 1;
};

/// Per-element Poisson radius: ranks of the von Mises field over material elements.
std::vector<double> radius_field(const VoxelDomain& domain, std::span<const double> von_mises, double r_hat,
                                 double rho_ratio);

/// Default r_hat of a hull: 0.1 x bounding-box diagonal.
double default_r_hat(const TriMesh& hull);

/// Progressive stress-graded Poisson-disk sampling. Hull vertices are thinned among
/// themselves with the disk rule scaled by `hull_thinning`. `on_batch` sees the set after every batch commit.
SampleSet graded_poisson_sample(const VoxelDomain& domain, const TriMesh& hull, std::span<const double> von_mises,
                                const SamplingConfig& config,
                                const std::function<void(const SampleSet&)>& on_batch = {});

/// Pairs of interior samples closer than min(r_i, r_j) (empty for a valid set).
std::vector<std::pair<std::size_t, std::size_t>> disk_violations(const SampleSet& samples);

/// Marks as kept the tets whose centroid has winding number >= 0.5 (the `kept` mask);
/// removed tets stay in the complex so the dual can reach across the hull.
DelaunayComplex restrict_delaunay(const DelaunayComplex& complex, const TriMesh& mesh);

/// Voronoi skeleton of a restricted complex: circumcentres joined across faces with at
/// least one kept tet, edges leaving the mesh clipped at the hull, edges with both ends
/// outside dropped. Near-coincident circumcentres (cospherical samples) are merged.
/// Faces whose three vertices are all auxiliary samples produce no edge, and tets made
/// only of auxiliary samples produce no vertex.
EdgeGraph voronoi_dual_and_clip(const DelaunayComplex& restricted, const TriMesh& mesh,
                                std::span<const SampleOrigin> origin = {});

/// Largest / smallest eigenvalue of the mean trace-normalised second-moment tensor of
/// Voronoi cells around interior samples whose incident tets all lie in the complex.
/// 1 for statistically isotropic cells.
double mean_cell_anisotropy(const DelaunayComplex& complex, const SampleSet& samples);

struct VoronoiResult {
  SampleSet samples;
  DelaunayComplex restricted;
  EdgeGraph graph;
  std::size_t delaunay_tets = 0;
};

/// Sampling, Delaunay, restriction and dual extraction in one call.
VoronoiResult voronoi_infill_graph(const VoxelDomain& domain, const TriMesh& hull, std::span<const double> von_mises,
                                   const SamplingConfig& config);

struct VoronoiInfill {
  VoronoiResult result;
  BudgetMatch budget;
};

/// Matches the volume budget by dichotomy on r_hat in [r_hat_min, r_hat_max] (log scale;
/// larger r_hat, sparser infill). Non-positive bounds default to 3 elements and 0.3 x the
/// hull diagonal. Returns the best iterate with its flags when the target is not bracketed.
VoronoiInfill voronoi_infill(const VoxelDomain& domain, const TriMesh& hull, std::span<const double> von_mises,
                             const SamplingConfig& config, int thickness_layers, double target,
                             double tolerance = 0.02, double r_hat_min = 0.0, double r_hat_max = 0.0);

}  // namespace infill
