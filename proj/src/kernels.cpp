#include "infill/kernels.hpp"

#include <cmath>

namespace infill::kernels {

Stencil conic_stencil(double radius) {
  Stencil st;
  const int r = static_cast<int>(std::ceil(radius));
  for (int dk = -r; dk <= r; ++dk)
    for (int dj = -r; dj <= r; ++dj)
      for (int di = -r; di <= r; ++di) {
        const double w = radius - std::sqrt(double(di * di + dj * dj + dk * dk));
        if (w > 0.0) {
          st.offsets.push_back({di, dj, dk});
          st.weights.push_back(w);
        }
      }
  if (st.offsets.empty()) {
    st.offsets.push_back({0, 0, 0});
    st.weights.push_back(1.0);
  }
  return st;
}

Stencil ball_stencil(double radius) {
  Stencil st;
  const int r = static_cast<int>(std::floor(radius + 1e-12));
  for (int dk = -r; dk <= r; ++dk)
    for (int dj = -r; dj <= r; ++dj)
      for (int di = -r; di <= r; ++di) {
        if (std::sqrt(double(di * di + dj * dj + dk * dk)) <= radius + 1e-12) {
          st.offsets.push_back({di, dj, dk});
          st.weights.push_back(1.0);
        }
      }
  return st;
}

namespace {

inline void gather24(const std::array<std::size_t, 8>& nodes, std::span<const double> u, double* ue) {
  for (int a = 0; a < 8; ++a) {
    const std::size_t d = 3 * nodes[a];
    ue[3 * a] = u[d];
    ue[3 * a + 1] = u[d + 1];
    ue[3 * a + 2] = u[d + 2];
  }
}

inline void scatter24(const std::array<std::size_t, 8>& nodes, const double* fe, std::span<double> y) {
  for (int a = 0; a < 8; ++a) {
    const std::size_t d = 3 * nodes[a];
    y[d] += fe[3 * a];
    y[d + 1] += fe[3 * a + 1];
    y[d + 2] += fe[3 * a + 2];
  }
}

inline void matvec24(const double* K, const double* x, double scale, double* out) {
  for (int r = 0; r < 24; ++r) {
    const double* row = K + 24 * r;
    double s = 0.0;
    for (int c = 0; c < 24; ++c) s += row[c] * x[c];
    out[r] = scale * s;
  }
}

inline double quad24(const double* K, const double* x) {
  double acc = 0.0;
  for (int r = 0; r < 24; ++r) {
    const double* row = K + 24 * r;
    double s = 0.0;
    for (int c = 0; c < 24; ++c) s += row[c] * x[c];
    acc += x[r] * s;
  }
  return acc;
}

// Runs body(e) for every element of one parity colour, parallel over (k, j) rows.
template <typename Body>
void for_color(const Grid& g, int color, Body&& body) {
  const int pi = color & 1, pj = (color >> 1) & 1, pk = (color >> 2) & 1;
  const int nj = (g.ny - pj + 1) / 2;
  const int nk = (g.nz - pk + 1) / 2;
  const int rows = nj * nk;
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int r = 0; r < rows; ++r) {
    const int j = pj + 2 * (r % nj);
    const int k = pk + 2 * (r / nj);
    for (int i = pi; i < g.nx; i += 2) body(g.element(i, j, k));
  }
}

double stencil_weight_sum(const Grid& g, const Stencil& st, std::span<const std::uint8_t> mask, int i, int j, int k) {
  double w = 0.0;
  for (std::size_t s = 0; s < st.offsets.size(); ++s) {
    const int a = i + st.offsets[s][0], b = j + st.offsets[s][1], c = k + st.offsets[s][2];
    if (g.contains_element(a, b, c) && mask[g.element(a, b, c)]) w += st.weights[s];
  }
  return w;
}

}  // namespace

// ------------------------------------------------------------------ serial

namespace serial {

void apply_uniform_stiffness(const Grid& grid, std::span<const double> Ke, std::span<const double> modulus,
                             std::span<const double> u, std::span<double> y) {
  double ue[24], fe[24];
  for (std::size_t e = 0; e < grid.num_elements(); ++e) {
    if (modulus[e] == 0.0) continue;
    const auto nodes = grid.element_nodes(e);
    gather24(nodes, u, ue);
    matvec24(Ke.data(), ue, modulus[e], fe);
    scatter24(nodes, fe, y);
  }
}

void apply_element_matrices(const Grid& grid, std::span<const double> matrices, std::span<const std::uint8_t> active,
                            std::span<const double> u, std::span<double> y) {
  double ue[24], fe[24];
  for (std::size_t e = 0; e < grid.num_elements(); ++e) {
    if (!active[e]) continue;
    const auto nodes = grid.element_nodes(e);
    gather24(nodes, u, ue);
    matvec24(matrices.data() + 576 * e, ue, 1.0, fe);
    scatter24(nodes, fe, y);
  }
}

void element_energy(const Grid& grid, std::span<const double> Ke, std::span<const std::uint8_t> mask,
                    std::span<const double> u, std::span<double> out) {
  double ue[24];
  for (std::size_t e = 0; e < grid.num_elements(); ++e) {
    if (!mask[e]) {
      out[e] = 0.0;
      continue;
    }
    gather24(grid.element_nodes(e), u, ue);
    out[e] = quad24(Ke.data(), ue);
  }
}

void stencil_average(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                     std::span<const double> x, std::span<double> out) {
  for (std::size_t e = 0; e < grid.num_elements(); ++e) {
    if (!mask[e]) {
      out[e] = 0.0;
      continue;
    }
    const auto [i, j, k] = grid.element_ijk(e);
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < st.offsets.size(); ++s) {
      const int a = i + st.offsets[s][0], b = j + st.offsets[s][1], c = k + st.offsets[s][2];
      if (!grid.contains_element(a, b, c)) continue;
      const auto n = grid.element(a, b, c);
      if (!mask[n]) continue;
      num += st.weights[s] * x[n];
      den += st.weights[s];
    }
    out[e] = num / den;
  }
}

void stencil_average_transpose(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                               std::span<const double> g, std::span<double> out) {
  for (std::size_t e = 0; e < grid.num_elements(); ++e) out[e] = 0.0;
  for (std::size_t e = 0; e < grid.num_elements(); ++e) {
    if (!mask[e]) continue;
    const auto [i, j, k] = grid.element_ijk(e);
    const double W = stencil_weight_sum(grid, st, mask, i, j, k);
    for (std::size_t s = 0; s < st.offsets.size(); ++s) {
      const int a = i + st.offsets[s][0], b = j + st.offsets[s][1], c = k + st.offsets[s][2];
      if (!grid.contains_element(a, b, c)) continue;
      const auto n = grid.element(a, b, c);
      if (!mask[n]) continue;
      out[n] += st.weights[s] / W * g[e];
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------- parallel

namespace parallel {

void apply_uniform_stiffness(const Grid& grid, std::span<const double> Ke, std::span<const double> modulus,
                             std::span<const double> u, std::span<double> y) {
  for (int color = 0; color < 8; ++color) {
    for_color(grid, color, [&](std::size_t e) {
      if (modulus[e] == 0.0) return;
      double ue[24], fe[24];
      const auto nodes = grid.element_nodes(e);
      gather24(nodes, u, ue);
      matvec24(Ke.data(), ue, modulus[e], fe);
      scatter24(nodes, fe, y);
    });
  }
}

void apply_element_matrices(const Grid& grid, std::span<const double> matrices, std::span<const std::uint8_t> active,
                            std::span<const double> u, std::span<double> y) {
  for (int color = 0; color < 8; ++color) {
    for_color(grid, color, [&](std::size_t e) {
      if (!active[e]) return;
      double ue[24], fe[24];
      const auto nodes = grid.element_nodes(e);
      gather24(nodes, u, ue);
      matvec24(matrices.data() + 576 * e, ue, 1.0, fe);
      scatter24(nodes, fe, y);
    });
  }
}

void element_energy(const Grid& grid, std::span<const double> Ke, std::span<const std::uint8_t> mask,
                    std::span<const double> u, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(grid.num_elements());
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    if (!mask[e]) {
      out[e] = 0.0;
      continue;
    }
    double ue[24];
    gather24(grid.element_nodes(e), u, ue);
    out[e] = quad24(Ke.data(), ue);
  }
}

void stencil_average(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                     std::span<const double> x, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(grid.num_elements());
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    if (!mask[e]) {
      out[e] = 0.0;
      continue;
    }
    const auto [i, j, k] = grid.element_ijk(e);
    double num = 0.0, den = 0.0;
    for (std::size_t s = 0; s < st.offsets.size(); ++s) {
      const int a = i + st.offsets[s][0], b = j + st.offsets[s][1], c = k + st.offsets[s][2];
      if (!grid.contains_element(a, b, c)) continue;
      const auto m = grid.element(a, b, c);
      if (!mask[m]) continue;
      num += st.weights[s] * x[m];
      den += st.weights[s];
    }
    out[e] = num / den;
  }
}

void stencil_average_transpose(const Grid& grid, const Stencil& st, std::span<const std::uint8_t> mask,
                               std::span<const double> g, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(grid.num_elements());
  std::vector<double> scaled(grid.num_elements(), 0.0);
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    if (!mask[e]) continue;
    const auto [i, j, k] = grid.element_ijk(e);
    scaled[e] = g[e] / stencil_weight_sum(grid, st, mask, i, j, k);
  }
  // stencils are point-symmetric with symmetric weights, so the transpose is a gather
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    if (!mask[e]) {
      out[e] = 0.0;
      continue;
    }
    const auto [i, j, k] = grid.element_ijk(e);
    double acc = 0.0;
    for (std::size_t s = 0; s < st.offsets.size(); ++s) {
      const int a = i - st.offsets[s][0], b = j - st.offsets[s][1], c = k - st.offsets[s][2];
      if (!grid.contains_element(a, b, c)) continue;
      const auto m = grid.element(a, b, c);
      if (!mask[m]) continue;
      acc += st.weights[s] * scaled[m];
    }
    out[e] = acc;
  }
}

}  // namespace parallel

}  // namespace infill::kernels
