#include "infill/fem.hpp"

#include "infill/kernels.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace infill {

double simp_modulus(double rho, double p, double Emin, double E0) { return Emin + std::pow(rho, p) * (E0 - Emin); }

Matrix6 elasticity_matrix(double E, double nu) {
  const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  const double mu = E / (2.0 * (1.0 + nu));
  Matrix6 D = Matrix6::Zero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) D(a, b) = lambda;
    D(a, a) = lambda + 2.0 * mu;
    D(a + 3, a + 3) = mu;
  }
  return D;
}

Matrix6x24 strain_displacement(double xi, double eta, double zeta, double h) {
  Matrix6x24 B = Matrix6x24::Zero();
  const double s = 2.0 / h;
  for (int a = 0; a < 8; ++a) {
    const double xa = 2.0 * kHexCorners[a][0] - 1.0;
    const double ya = 2.0 * kHexCorners[a][1] - 1.0;
    const double za = 2.0 * kHexCorners[a][2] - 1.0;
    const double dx = 0.125 * xa * (1 + eta * ya) * (1 + zeta * za) * s;
    const double dy = 0.125 * ya * (1 + xi * xa) * (1 + zeta * za) * s;
    const double dz = 0.125 * za * (1 + xi * xa) * (1 + eta * ya) * s;
    const int c = 3 * a;
    B(0, c) = dx;
    B(1, c + 1) = dy;
    B(2, c + 2) = dz;
    B(3, c) = dy;
    B(3, c + 1) = dx;
    B(4, c + 1) = dz;
    B(4, c + 2) = dy;
    B(5, c) = dz;
    B(5, c + 2) = dx;
  }
  return B;
}

ElementStiffness generic_element_stiffness(double E0, double nu, double h) {
  if (!(nu < 0.5) || !(nu > -1.0)) throw ConfigError("Poisson ratio must lie in (-1, 0.5)");
  if (!(h > 0.0)) throw ConfigError("element spacing must be positive");
  const Matrix6 D = elasticity_matrix(1.0, nu);
  const double g = 1.0 / std::sqrt(3.0);
  const double detJ = h * h * h / 8.0;
  ElementStiffness out;
  out.K.setZero();
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const Matrix6x24 B = strain_displacement(a ? g : -g, b ? g : -g, c ? g : -g, h);
        out.K.noalias() += B.transpose() * D * B * detJ;
      }
  out.K = 0.5 * (out.K + out.K.transpose()).eval();
  out.E0 = E0;
  out.nu = nu;
  out.h = h;
  return out;
}

std::vector<double> element_moduli(const VoxelDomain& domain, std::span<const double> densities, const Material& mat,
                                   const SimpParams& simp) {
  if (densities.size() != domain.labels.size()) throw ConfigError("density field does not match the domain grid");
  std::vector<double> E(densities.size(), 0.0);
  const double Emin = simp.Emin_ratio * mat.E0;
  for (std::size_t e = 0; e < E.size(); ++e) {
    if (!domain.is_material(e)) continue;
    E[e] = simp_modulus(std::clamp(densities[e], 0.0, 1.0), simp.penalty, Emin, mat.E0);
  }
  return E;
}

FemProblem make_problem(const VoxelDomain& domain, std::vector<double> modulus, const Material& mat) {
  if (modulus.size() != domain.labels.size()) throw ConfigError("modulus field does not match the domain grid");
  FemProblem p;
  p.grid = domain.grid;
  p.Ke = generic_element_stiffness(mat.E0, mat.nu, domain.grid.spacing);
  p.modulus = std::move(modulus);
  p.dof_fixed.assign(p.num_dofs(), 1);
  for (std::size_t e = 0; e < p.modulus.size(); ++e) {
    if (p.modulus[e] == 0.0) continue;
    for (auto n : p.grid.element_nodes(e)) {
      p.dof_fixed[3 * n] = p.dof_fixed[3 * n + 1] = p.dof_fixed[3 * n + 2] = 0;
    }
  }
  for (auto n : domain.fixed) p.dof_fixed[3 * n] = p.dof_fixed[3 * n + 1] = p.dof_fixed[3 * n + 2] = 1;
  return p;
}

std::vector<double> force_vector(const VoxelDomain& domain, const FemProblem& problem) {
  std::vector<double> f(problem.num_dofs(), 0.0);
  for (const auto& [n, load] : domain.loads) {
    for (int c = 0; c < 3; ++c) {
      if (!problem.dof_fixed[3 * n + c]) f[3 * n + c] += load[c];
    }
  }
  return f;
}

namespace {

// Fixed-chunk reduction: the result is independent of the thread count.
double dot(std::span<const double> a, std::span<const double> b) {
  constexpr std::size_t kChunk = 4096;
  const std::size_t n = a.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    const std::size_t lo = c * kChunk, hi = std::min(n, lo + kChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[c] = s;
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

template <typename Kernel>
void apply_masked(const FemProblem& problem, std::span<const double> u, std::span<double> y, Kernel&& kernel) {
  if (u.size() != problem.num_dofs() || y.size() != problem.num_dofs()) {
    throw ConfigError("vector length does not match the problem's DOF count");
  }
  std::vector<double> um(u.begin(), u.end());
  for (std::size_t d = 0; d < um.size(); ++d)
    if (problem.dof_fixed[d]) um[d] = 0.0;
  std::fill(y.begin(), y.end(), 0.0);
  kernel(problem.grid, std::span<const double>(problem.Ke.K.data(), 576), std::span<const double>(problem.modulus),
         std::span<const double>(um), y);
  for (std::size_t d = 0; d < um.size(); ++d)
    if (problem.dof_fixed[d]) y[d] = u[d];
}

}  // namespace

void apply_operator(const FemProblem& problem, std::span<const double> u, std::span<double> y) {
  apply_masked(problem, u, y, [](auto&&... a) { kernels::parallel::apply_uniform_stiffness(a...); });
}

void apply_operator_reference(const FemProblem& problem, std::span<const double> u, std::span<double> y) {
  apply_masked(problem, u, y, [](auto&&... a) { kernels::serial::apply_uniform_stiffness(a...); });
}

// ---------------------------------------------------------------- multigrid

class CoarseSolver {
 public:
  Eigen::SparseMatrix<double> A;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
};

namespace {

Grid coarsen(const Grid& g) {
  Grid c;
  c.nx = (g.nx + 1) / 2;
  c.ny = (g.ny + 1) / 2;
  c.nz = (g.nz + 1) / 2;
  c.spacing = 2.0 * g.spacing;
  c.origin = g.origin;
  return c;
}

// 1D weight of coarse corner `cc` (0/1) for a fine node at half-offset s (0, 1, 2).
double w1(int s, int cc) {
  if (s == 1) return 0.5;
  return (s == 0) == (cc == 0) ? 1.0 : 0.0;
}

// W[child_node][coarse_node] for the child at position (a, b, c) inside its parent.
using Weights8 = Eigen::Matrix<double, 8, 8, Eigen::RowMajor>;
Weights8 child_weights(int a, int b, int c) {
  Weights8 W;
  for (int fn = 0; fn < 8; ++fn) {
    const int sx = a + kHexCorners[fn][0], sy = b + kHexCorners[fn][1], sz = c + kHexCorners[fn][2];
    for (int cn = 0; cn < 8; ++cn) {
      W(fn, cn) = w1(sx, kHexCorners[cn][0]) * w1(sy, kHexCorners[cn][1]) * w1(sz, kHexCorners[cn][2]);
    }
  }
  return W;
}

// out += (W (x) I3)^T K (W (x) I3)
void galerkin_accumulate(const Weights8& W, const double* K, double scale, double* out) {
  double T[24 * 24];  // K (W (x) I3): rows fine dof, cols coarse dof
  for (int r = 0; r < 24; ++r) {
    for (int cn = 0; cn < 8; ++cn) {
      for (int b = 0; b < 3; ++b) {
        double s = 0.0;
        for (int fn = 0; fn < 8; ++fn) {
          const double w = W(fn, cn);
          if (w != 0.0) s += w * K[24 * r + 3 * fn + b];
        }
        T[24 * r + 3 * cn + b] = s;
      }
    }
  }
  for (int cm = 0; cm < 8; ++cm) {
    for (int a = 0; a < 3; ++a) {
      double* orow = out + 24 * (3 * cm + a);
      for (int fn = 0; fn < 8; ++fn) {
        const double w = W(fn, cm);
        if (w == 0.0) continue;
        const double* trow = T + 24 * (3 * fn + a);
        const double sw = scale * w;
        for (int col = 0; col < 24; ++col) orow[col] += sw * trow[col];
      }
    }
  }
}

void compute_inv_diag(MultigridLevel& L, const std::vector<double>& diag) {
  L.inv_diag.assign(diag.size(), 0.0);
  L.dof_fixed.resize(diag.size());
  for (std::size_t d = 0; d < diag.size(); ++d) {
    if (diag[d] == 0.0) L.dof_fixed[d] = 1;
    if (!L.dof_fixed[d]) L.inv_diag[d] = 1.0 / diag[d];
  }
}

std::shared_ptr<CoarseSolver> factor_coarsest(const FemProblem& problem, const MultigridLevel& L, bool matrix_free) {
  const Grid& g = L.grid;
  const std::size_t ndof = 3 * g.num_nodes();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(g.num_elements() * 300 + ndof);
  for (std::size_t e = 0; e < g.num_elements(); ++e) {
    const double* M = nullptr;
    double scale = 1.0;
    if (matrix_free) {
      if (problem.modulus[e] == 0.0) continue;
      M = problem.Ke.K.data();
      scale = problem.modulus[e];
    } else {
      if (!L.active[e]) continue;
      M = L.matrices.data() + 576 * e;
    }
    const auto nodes = g.element_nodes(e);
    for (int r = 0; r < 24; ++r) {
      const std::size_t gr = 3 * nodes[r / 3] + r % 3;
      if (L.dof_fixed[gr]) continue;
      for (int c = 0; c < 24; ++c) {
        const std::size_t gc = 3 * nodes[c / 3] + c % 3;
        if (L.dof_fixed[gc] || gc < gr) continue;
        trip.emplace_back(static_cast<int>(gr), static_cast<int>(gc), scale * M[24 * r + c]);
      }
    }
  }
  for (std::size_t d = 0; d < ndof; ++d)
    if (L.dof_fixed[d]) trip.emplace_back(static_cast<int>(d), static_cast<int>(d), 1.0);
  auto cs = std::make_shared<CoarseSolver>();
  Eigen::SparseMatrix<double> upper(static_cast<int>(ndof), static_cast<int>(ndof));
  upper.setFromTriplets(trip.begin(), trip.end());
  cs->A = upper.selfadjointView<Eigen::Upper>();
  if (!matrix_free) {
    // Galerkin levels can carry zero-energy modes where coarse nodes share one free fine dof near voids;
    // a tiny relative shift keeps the preconditioner SPD while CG still works on the exact operator.
    double dmax = 0.0;
    for (int k = 0; k < cs->A.outerSize(); ++k) dmax = std::max(dmax, cs->A.coeff(k, k));
    cs->ldlt.setShift(1e-10 * dmax);
  }
  cs->ldlt.compute(cs->A);
  if (cs->ldlt.info() != Eigen::Success) throw NumericalError("coarsest-level factorization failed");
  return cs;
}

}  // namespace

MultigridHierarchy build_hierarchy(const FemProblem& problem, int levels, std::size_t coarsest_max_dofs) {
  MultigridHierarchy H;
  {
    MultigridLevel L0;
    L0.grid = problem.grid;
    L0.dof_fixed = problem.dof_fixed;
    std::vector<double> diag(problem.num_dofs(), 0.0);
    for (std::size_t e = 0; e < problem.modulus.size(); ++e) {
      if (problem.modulus[e] == 0.0) continue;
      const auto nodes = problem.grid.element_nodes(e);
      for (int r = 0; r < 24; ++r) diag[3 * nodes[r / 3] + r % 3] += problem.modulus[e] * problem.Ke.K(r, r);
    }
    for (std::size_t d = 0; d < diag.size(); ++d)
      if (problem.dof_fixed[d]) diag[d] = 0.0;
    compute_inv_diag(L0, diag);
    L0.dof_fixed = problem.dof_fixed;
    H.levels.push_back(std::move(L0));
  }

  // child templates for unconstrained fine elements: G_c = (W_c (x) I)^T Ke (W_c (x) I)
  std::array<Weights8, 8> W;
  std::array<std::vector<double>, 8> G;
  for (int c = 0; c < 8; ++c) {
    W[c] = child_weights(kHexCorners[c][0], kHexCorners[c][1], kHexCorners[c][2]);
    G[c].assign(576, 0.0);
    galerkin_accumulate(W[c], problem.Ke.K.data(), 1.0, G[c].data());
  }

  auto want_more = [&](const Grid& g, int have) {
    if (levels > 0) return have < levels;
    return 3 * g.num_nodes() > coarsest_max_dofs;
  };
  while (want_more(H.levels.back().grid, static_cast<int>(H.levels.size()))) {
    const MultigridLevel& F = H.levels.back();
    const Grid& fg = F.grid;
    if (fg.nx < 2 || fg.ny < 2 || fg.nz < 2) {
      if (levels > 0) {
        warn("multigrid depth clamped to " + std::to_string(H.levels.size()) + " levels (grid too small)");
      }
      break;
    }
    const bool from_fine = H.levels.size() == 1;
    MultigridLevel C;
    C.grid = coarsen(fg);
    const std::size_t nce = C.grid.num_elements();
    C.matrices.assign(576 * nce, 0.0);
    C.active.assign(nce, 0);
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_threads())
    for (std::ptrdiff_t ce = 0; ce < static_cast<std::ptrdiff_t>(nce); ++ce) {
      const auto [ci, cj, ck] = C.grid.element_ijk(ce);
      double* out = C.matrices.data() + 576 * ce;
      for (int c = 0; c < 8; ++c) {
        const int fi = 2 * ci + kHexCorners[c][0], fj = 2 * cj + kHexCorners[c][1], fk = 2 * ck + kHexCorners[c][2];
        if (!fg.contains_element(fi, fj, fk)) continue;
        const auto fe = fg.element(fi, fj, fk);
        if (from_fine) {
          const double E = problem.modulus[fe];
          if (E == 0.0) continue;
          C.active[ce] = 1;
          const auto nodes = fg.element_nodes(fe);
          bool constrained = false;
          for (int r = 0; r < 24 && !constrained; ++r) constrained = F.dof_fixed[3 * nodes[r / 3] + r % 3];
          if (!constrained) {
            for (int q = 0; q < 576; ++q) out[q] += E * G[c][q];
          } else {
            double Km[576];
            for (int r = 0; r < 24; ++r)
              for (int s = 0; s < 24; ++s) {
                const bool fr = F.dof_fixed[3 * nodes[r / 3] + r % 3];
                const bool fs = F.dof_fixed[3 * nodes[s / 3] + s % 3];
                Km[24 * r + s] = (fr || fs) ? 0.0 : problem.Ke.K(r, s);
              }
            galerkin_accumulate(W[c], Km, E, out);
          }
        } else {
          if (!F.active[fe]) continue;
          C.active[ce] = 1;
          galerkin_accumulate(W[c], F.matrices.data() + 576 * fe, 1.0, out);
        }
      }
    }
    std::vector<double> diag(3 * C.grid.num_nodes(), 0.0);
    for (std::size_t ce = 0; ce < nce; ++ce) {
      if (!C.active[ce]) continue;
      const auto nodes = C.grid.element_nodes(ce);
      for (int r = 0; r < 24; ++r) diag[3 * nodes[r / 3] + r % 3] += C.matrices[576 * ce + 25 * r];
    }
    C.dof_fixed.assign(diag.size(), 0);
    compute_inv_diag(C, diag);
    H.levels.push_back(std::move(C));
  }
  H.coarse = factor_coarsest(problem, H.levels.back(), H.levels.size() == 1);
  return H;
}

void MultigridHierarchy::apply_level(std::size_t l, std::span<const double> u, std::span<double> y) const {
  const MultigridLevel& L = levels[l];
  std::fill(y.begin(), y.end(), 0.0);
  kernels::parallel::apply_element_matrices(L.grid, L.matrices, L.active, u, y);
  for (std::size_t d = 0; d < y.size(); ++d)
    if (L.dof_fixed[d]) y[d] = u[d];
}

void MultigridHierarchy::prolongate(std::size_t l, std::span<const double> coarse, std::span<double> fine) const {
  const Grid& fg = levels[l].grid;
  const Grid& cg = levels[l + 1].grid;
  const auto& fixed = levels[l].dof_fixed;
  const auto nn = static_cast<std::ptrdiff_t>(fg.num_nodes());
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t n = 0; n < nn; ++n) {
    const auto ijk = fg.node_ijk(n);
    int idx[3][2];
    double wt[3][2];
    int cnt[3];
    for (int a = 0; a < 3; ++a) {
      if (ijk[a] % 2 == 0) {
        idx[a][0] = ijk[a] / 2;
        wt[a][0] = 1.0;
        cnt[a] = 1;
      } else {
        idx[a][0] = (ijk[a] - 1) / 2;
        idx[a][1] = (ijk[a] + 1) / 2;
        wt[a][0] = wt[a][1] = 0.5;
        cnt[a] = 2;
      }
    }
    double v[3] = {0, 0, 0};
    for (int c = 0; c < cnt[2]; ++c)
      for (int b = 0; b < cnt[1]; ++b)
        for (int a = 0; a < cnt[0]; ++a) {
          const double w = wt[0][a] * wt[1][b] * wt[2][c];
          const auto m = cg.node(idx[0][a], idx[1][b], idx[2][c]);
          for (int q = 0; q < 3; ++q) v[q] += w * coarse[3 * m + q];
        }
    for (int q = 0; q < 3; ++q) fine[3 * n + q] = fixed[3 * n + q] ? 0.0 : v[q];
  }
}

void MultigridHierarchy::restrict_to(std::size_t l, std::span<const double> fine, std::span<double> coarse) const {
  const Grid& fg = levels[l].grid;
  const Grid& cg = levels[l + 1].grid;
  const auto& ffixed = levels[l].dof_fixed;
  const auto& cfixed = levels[l + 1].dof_fixed;
  const auto nn = static_cast<std::ptrdiff_t>(cg.num_nodes());
  const int fmax[3] = {fg.nx, fg.ny, fg.nz};
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t m = 0; m < nn; ++m) {
    const auto c = cg.node_ijk(m);
    double v[3] = {0, 0, 0};
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int f[3] = {2 * c[0] + di, 2 * c[1] + dj, 2 * c[2] + dk};
          bool ok = true;
          for (int a = 0; a < 3; ++a) ok = ok && f[a] >= 0 && f[a] <= fmax[a];
          if (!ok) continue;
          const double w = (di ? 0.5 : 1.0) * (dj ? 0.5 : 1.0) * (dk ? 0.5 : 1.0);
          const auto n = fg.node(f[0], f[1], f[2]);
          for (int q = 0; q < 3; ++q)
            if (!ffixed[3 * n + q]) v[q] += w * fine[3 * n + q];
        }
    for (int q = 0; q < 3; ++q) coarse[3 * m + q] = cfixed[3 * m + q] ? 0.0 : v[q];
  }
}

Eigen::MatrixXd MultigridHierarchy::coarsest_dense() const { return Eigen::MatrixXd(coarse->A); }

namespace {

struct LevelWork {
  std::vector<double> b, x, r, t;
};

void level_apply(const FemProblem& problem, const MultigridHierarchy& H, std::size_t l, std::span<const double> u,
                 std::span<double> y) {
  if (l == 0)
    apply_operator(problem, u, y);
  else
    H.apply_level(l, u, y);
}

void vcycle_rec(const FemProblem& problem, const MultigridHierarchy& H, const SolverConfig& cfg,
                std::vector<LevelWork>& W, std::size_t l) {
  LevelWork& w = W[l];
  const MultigridLevel& L = H.levels[l];
  const std::size_t n = w.b.size();
  if (l + 1 == H.depth()) {
    Eigen::Map<const Eigen::VectorXd> b(w.b.data(), static_cast<Eigen::Index>(n));
    Eigen::Map<Eigen::VectorXd>(w.x.data(), static_cast<Eigen::Index>(n)) = H.coarse->ldlt.solve(b);
    for (std::size_t d = 0; d < n; ++d)
      if (L.dof_fixed[d]) w.x[d] = 0.0;
    return;
  }
  const double omega = cfg.jacobi_damping;
  auto smooth = [&](int sweeps, bool zero_start) {
    for (int s = 0; s < sweeps; ++s) {
      if (zero_start && s == 0) {
        for (std::size_t d = 0; d < n; ++d) w.x[d] = omega * L.inv_diag[d] * w.b[d];
        continue;
      }
      level_apply(problem, H, l, w.x, w.t);
      for (std::size_t d = 0; d < n; ++d) w.x[d] += omega * L.inv_diag[d] * (w.b[d] - w.t[d]);
    }
  };
  std::fill(w.x.begin(), w.x.end(), 0.0);
  smooth(cfg.smoother_sweeps, true);
  level_apply(problem, H, l, w.x, w.t);
  for (std::size_t d = 0; d < n; ++d) w.r[d] = w.b[d] - w.t[d];
  H.restrict_to(l, w.r, W[l + 1].b);
  vcycle_rec(problem, H, cfg, W, l + 1);
  H.prolongate(l, W[l + 1].x, w.t);
  for (std::size_t d = 0; d < n; ++d) w.x[d] += w.t[d];
  smooth(cfg.smoother_sweeps, false);
}

std::vector<LevelWork> make_work(const MultigridHierarchy& H) {
  std::vector<LevelWork> W(H.depth());
  for (std::size_t l = 0; l < H.depth(); ++l) {
    const std::size_t n = 3 * H.levels[l].grid.num_nodes();
    W[l].b.assign(n, 0.0);
    W[l].x.assign(n, 0.0);
    W[l].r.assign(n, 0.0);
    W[l].t.assign(n, 0.0);
  }
  return W;
}

}  // namespace

void vcycle(const FemProblem& problem, const MultigridHierarchy& H, const SolverConfig& config,
            std::span<const double> r, std::span<double> z) {
  auto W = make_work(H);
  std::copy(r.begin(), r.end(), W[0].b.begin());
  vcycle_rec(problem, H, config, W, 0);
  std::copy(W[0].x.begin(), W[0].x.end(), z.begin());
}

SolveResult solve(const FemProblem& problem, const MultigridHierarchy& H, std::span<const double> f,
                  const SolverConfig& config, std::span<const double> initial_guess) {
  const std::size_t n = problem.num_dofs();
  if (f.size() != n) throw ConfigError("force vector length does not match the problem");
  if (!(config.rel_tol > 0.0 && config.rel_tol < 1.0)) throw ConfigError("rel_tol must lie in (0, 1)");
  for (double v : f)
    if (!std::isfinite(v)) throw ConfigError("force vector contains non-finite entries");
  bool any_free = false;
  for (auto fx : problem.dof_fixed) any_free = any_free || !fx;
  if (!any_free) throw ConfigError("problem has no free degree of freedom");

  SolveResult res;
  res.u.assign(n, 0.0);
  std::vector<double> fm(f.begin(), f.end());
  for (std::size_t d = 0; d < n; ++d)
    if (problem.dof_fixed[d]) fm[d] = 0.0;
  const double normf = std::sqrt(dot(fm, fm));
  if (normf == 0.0) {
    res.converged = true;
    return res;
  }
  if (initial_guess.size() == n) {
    for (std::size_t d = 0; d < n; ++d) res.u[d] = problem.dof_fixed[d] ? 0.0 : initial_guess[d];
  }
  std::vector<double> r(n), z(n), p(n), q(n);
  apply_operator(problem, res.u, q);
  for (std::size_t d = 0; d < n; ++d) r[d] = fm[d] - q[d];
  double rel = std::sqrt(dot(r, r)) / normf;
  res.final_residual = rel;
  if (rel <= config.rel_tol) {
    res.converged = true;
    return res;
  }
  auto W = make_work(H);
  auto precondition = [&](const std::vector<double>& rin, std::vector<double>& zout) {
    std::copy(rin.begin(), rin.end(), W[0].b.begin());
    vcycle_rec(problem, H, config, W, 0);
    std::copy(W[0].x.begin(), W[0].x.end(), zout.begin());
  };
  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= config.max_cg_iters; ++it) {
    apply_operator(problem, p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) throw NumericalError("conjugate gradients broke down (non-positive curvature)");
    const double alpha = rz / pq;
    for (std::size_t d = 0; d < n; ++d) {
      res.u[d] += alpha * p[d];
      r[d] -= alpha * q[d];
    }
    rel = std::sqrt(dot(r, r)) / normf;
    res.residual_history.push_back(rel);
    res.iterations = it;
    res.final_residual = rel;
    if (rel <= config.rel_tol) {
      res.converged = true;
      break;
    }
    precondition(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t d = 0; d < n; ++d) p[d] = z[d] + beta * p[d];
  }
  return res;
}

SolveResult solve(const FemProblem& problem, std::span<const double> f, const SolverConfig& config) {
  const auto H = build_hierarchy(problem, config.levels, config.coarsest_max_dofs);
  return solve(problem, H, f, config);
}

ComplianceResult compliance(const FemProblem& problem, std::span<const double> u, std::span<const double> f) {
  ComplianceResult out;
  out.compliance = dot(f, u);
  std::vector<std::uint8_t> mask(problem.modulus.size());
  for (std::size_t e = 0; e < mask.size(); ++e) mask[e] = problem.modulus[e] != 0.0;
  out.unit_energy.assign(mask.size(), 0.0);
  kernels::parallel::element_energy(problem.grid, std::span<const double>(problem.Ke.K.data(), 576), mask, u,
                                    out.unit_energy);
  for (std::size_t e = 0; e < mask.size(); ++e) out.energy_sum += problem.modulus[e] * out.unit_energy[e];
  return out;
}

// ---------------------------------------------------------------- SGLDF32

namespace {
constexpr char kF32Magic[8] = {'S', 'G', 'L', 'D', 'F', '3', '2', '\0'};
}

void write_float_volume(const std::string& path, const FloatVolume& vol) {
  const std::size_t expect = static_cast<std::size_t>(vol.nx) * vol.ny * vol.nz * vol.channels;
  if (vol.data.size() != expect) throw ConfigError("float volume payload does not match its dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(kF32Magic, 8);
  const std::uint32_t hdr[4] = {static_cast<std::uint32_t>(vol.nx), static_cast<std::uint32_t>(vol.ny),
                                static_cast<std::uint32_t>(vol.nz), static_cast<std::uint32_t>(vol.channels)};
  out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  const float geo[4] = {static_cast<float>(vol.spacing), static_cast<float>(vol.origin.x()),
                        static_cast<float>(vol.origin.y()), static_cast<float>(vol.origin.z())};
  out.write(reinterpret_cast<const char*>(geo), sizeof(geo));
  out.write(reinterpret_cast<const char*>(vol.data.data()), static_cast<std::streamsize>(vol.data.size() * 4));
}

FloatVolume read_float_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kF32Magic, 8) != 0) throw ConfigError(path + ": not an SGLDF32 file");
  std::uint32_t hdr[4];
  float geo[4];
  in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  in.read(reinterpret_cast<char*>(geo), sizeof(geo));
  if (!in) throw ConfigError(path + ": truncated header");
  FloatVolume v;
  v.nx = static_cast<int>(hdr[0]);
  v.ny = static_cast<int>(hdr[1]);
  v.nz = static_cast<int>(hdr[2]);
  v.channels = static_cast<int>(hdr[3]);
  v.spacing = geo[0];
  v.origin = Vec3(geo[1], geo[2], geo[3]);
  const std::size_t count = static_cast<std::size_t>(v.nx) * v.ny * v.nz * v.channels;
  v.data.resize(count);
  in.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(count * 4));
  if (in.gcount() != static_cast<std::streamsize>(count * 4) || in.peek() != EOF) {
    throw ConfigError(path + ": payload does not match header dims");
  }
  return v;
}

FloatVolume element_volume(const Grid& grid, std::span<const double> values, int channels) {
  FloatVolume v;
  v.nx = grid.nx;
  v.ny = grid.ny;
  v.nz = grid.nz;
  v.channels = channels;
  v.spacing = grid.spacing;
  v.origin = grid.origin;
  if (values.size() != grid.num_elements() * channels) throw ConfigError("element field size mismatch");
  v.data.assign(values.begin(), values.end());
  return v;
}

FloatVolume nodal_volume(const Grid& grid, std::span<const double> values) {
  FloatVolume v;
  v.nx = grid.nx + 1;
  v.ny = grid.ny + 1;
  v.nz = grid.nz + 1;
  v.channels = 3;
  v.spacing = grid.spacing;
  v.origin = grid.origin;
  if (values.size() != 3 * grid.num_nodes()) throw ConfigError("nodal field size mismatch");
  v.data.assign(values.begin(), values.end());
  return v;
}

}  // namespace infill
