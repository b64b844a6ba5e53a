#include "infill/stress.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace infill {

Mat3 to_matrix(const Tensor6& s) {
  Mat3 m;
  m << s[0], s[3], s[5], s[3], s[1], s[4], s[5], s[4], s[2];
  return m;
}

Tensor6 from_matrix(const Mat3& m) {
  return {m(0, 0), m(1, 1), m(2, 2), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(1, 2) + m(2, 1)), 0.5 * (m(0, 2) + m(2, 0))};
}

StressField element_stress(const FemProblem& problem, std::span<const double> u) {
  if (u.size() != problem.num_dofs()) throw ConfigError("displacement length does not match the problem");
  const Grid& g = problem.grid;
  StressField out;
  out.grid = g;
  out.values.assign(6 * g.num_elements(), 0.0);
  out.present.assign(g.num_elements(), 0);
  const Matrix6 D = elasticity_matrix(1.0, problem.Ke.nu);
  const Matrix6x24 DB = D * strain_displacement(0.0, 0.0, 0.0, g.spacing);
  const auto n = static_cast<std::ptrdiff_t>(g.num_elements());
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const double E = problem.modulus[e];
    if (E == 0.0) continue;
    out.present[e] = 1;
    Eigen::Matrix<double, 24, 1> ue;
    const auto nodes = g.element_nodes(e);
    for (int a = 0; a < 8; ++a)
      for (int c = 0; c < 3; ++c) ue[3 * a + c] = u[3 * nodes[a] + c];
    const Eigen::Matrix<double, 6, 1> s = E * (DB * ue);
    for (int c = 0; c < 6; ++c) out.values[6 * e + c] = s[c];
  }
  return out;
}

double von_mises(const Tensor6& s) {
  const double a = s[0] - s[1], b = s[1] - s[2], c = s[2] - s[0];
  return std::sqrt(0.5 * (a * a + b * b + c * c) + 3.0 * (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]));
}

std::vector<double> von_mises(const StressField& field) {
  std::vector<double> out(field.grid.num_elements(), 0.0);
  for (std::size_t e = 0; e < out.size(); ++e)
    if (field.present[e]) out[e] = von_mises(field.at(e));
  return out;
}

Principal principal(const Tensor6& s, Ordering ordering) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(to_matrix(s));
  const Vec3 ev = es.eigenvalues();
  const Mat3 V = es.eigenvectors();
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return ordering == Ordering::Signed ? ev[a] > ev[b] : std::abs(ev[a]) > std::abs(ev[b]);
  });
  Principal p;
  for (int i = 0; i < 3; ++i) {
    p.values[i] = ev[order[i]];
    Vec3 d = V.col(order[i]).normalized();
    for (int c = 0; c < 3; ++c) {
      if (std::abs(d[c]) > 1e-12) {
        if (d[c] < 0) d = -d;
        break;
      }
    }
    p.dirs[i] = d;
  }
  const double scale = ev.cwiseAbs().maxCoeff();
  for (int i = 0; i < 3; ++i) {
    double gap = std::numeric_limits<double>::infinity();
    for (int j = 0; j < 3; ++j)
      if (j != i) gap = std::min(gap, std::abs(p.values[i] - p.values[j]));
    p.branch_degenerate[i] = !(scale > 0.0) || gap < kDegenerateGap * scale;
    p.degenerate = p.degenerate || p.branch_degenerate[i];
  }
  return p;
}

std::optional<Tensor6> interpolate_tensor(const StressField& field, const Vec3& p) {
  const Grid& g = field.grid;
  const Vec3 t = (p - g.origin) / g.spacing;
  const int dims[3] = {g.nx, g.ny, g.nz};
  int cell[3];
  for (int a = 0; a < 3; ++a) {
    if (!(t[a] >= 0.0 && t[a] <= dims[a])) return std::nullopt;
    cell[a] = std::min(static_cast<int>(std::floor(t[a])), dims[a] - 1);
  }
  if (!field.present[g.element(cell[0], cell[1], cell[2])]) return std::nullopt;
  int lo[3];
  double w[3][2];
  for (int a = 0; a < 3; ++a) {
    const double c = t[a] - 0.5;
    lo[a] = static_cast<int>(std::floor(c));
    const double f = c - lo[a];
    w[a][0] = 1.0 - f;
    w[a][1] = f;
  }
  Tensor6 out{};
  double wsum = 0.0;
  for (int dk = 0; dk < 2; ++dk)
    for (int dj = 0; dj < 2; ++dj)
      for (int di = 0; di < 2; ++di) {
        const double wt = w[0][di] * w[1][dj] * w[2][dk];
        if (wt == 0.0) continue;
        const int i = lo[0] + di, j = lo[1] + dj, k = lo[2] + dk;
        if (!g.contains_element(i, j, k)) continue;
        const auto e = g.element(i, j, k);
        if (!field.present[e]) continue;
        for (int c = 0; c < 6; ++c) out[c] += wt * field.values[6 * e + c];
        wsum += wt;
      }
  if (!(wsum > 0.0)) return std::nullopt;
  for (auto& v : out) v /= wsum;
  return out;
}

std::vector<double> icdf_normalize(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n == 0) throw ConfigError("cannot normalise an empty field");
  for (double v : values)
    if (!std::isfinite(v)) throw ConfigError("cannot normalise a field with non-finite values");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> out(n, 0.5);
  if (values[idx.front()] == values[idx.back()]) return out;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && values[idx[hi + 1]] == values[idx[lo]]) ++hi;
    const double rank = 0.5 * static_cast<double>(lo + hi) / static_cast<double>(n - 1);
    for (std::size_t q = lo; q <= hi; ++q) out[idx[q]] = rank;
    lo = hi + 1;
  }
  return out;
}

}  // namespace infill
