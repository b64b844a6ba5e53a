#include "infill/delaunay.hpp"

#include <gmpxx.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>

namespace infill {

namespace predicates {

namespace {

std::atomic<std::uint64_t> g_exact{0};

constexpr double kEps = std::numeric_limits<double>::epsilon() / 2.0;  // 2^-53
constexpr double kOrientBound = (7.0 + 56.0 * kEps) * kEps;
constexpr double kInsphereBound = (16.0 + 224.0 * kEps) * kEps;

int sign_of(const mpq_class& v) { return sgn(v); }

// Both expressions follow the classic filtered layout: d-relative coordinates,
// a determinant and the matching permanent for the static error bound. The
// result has the orientation sign convention of the reference implementation,
// which is the negative of det[b - a; c - a; d - a].
int orient_raw(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const double adx = a.x() - d.x(), bdx = b.x() - d.x(), cdx = c.x() - d.x();
  const double ady = a.y() - d.y(), bdy = b.y() - d.y(), cdy = c.y() - d.y();
  const double adz = a.z() - d.z(), bdz = b.z() - d.z(), cdz = c.z() - d.z();
  const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
  const double cdxady = cdx * ady, adxcdy = adx * cdy;
  const double adxbdy = adx * bdy, bdxady = bdx * ady;
  const double det = adz * (bdxcdy - cdxbdy) + bdz * (cdxady - adxcdy) + cdz * (adxbdy - bdxady);
  const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * std::abs(adz) +
                           (std::abs(cdxady) + std::abs(adxcdy)) * std::abs(bdz) +
                           (std::abs(adxbdy) + std::abs(bdxady)) * std::abs(cdz);
  const double bound = kOrientBound * permanent;
  if (det > bound) return 1;
  if (-det > bound) return -1;
  if (permanent == 0.0) return 0;

  g_exact.fetch_add(1, std::memory_order_relaxed);
  const mpq_class Adx = mpq_class(a.x()) - d.x(), Bdx = mpq_class(b.x()) - d.x(), Cdx = mpq_class(c.x()) - d.x();
  const mpq_class Ady = mpq_class(a.y()) - d.y(), Bdy = mpq_class(b.y()) - d.y(), Cdy = mpq_class(c.y()) - d.y();
  const mpq_class Adz = mpq_class(a.z()) - d.z(), Bdz = mpq_class(b.z()) - d.z(), Cdz = mpq_class(c.z()) - d.z();
  const mpq_class exact = Adz * (Bdx * Cdy - Cdx * Bdy) + Bdz * (Cdx * Ady - Adx * Cdy) + Cdz * (Adx * Bdy - Bdx * Ady);
  return sign_of(exact);
}

int insphere_raw(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  const double aex = a.x() - e.x(), bex = b.x() - e.x(), cex = c.x() - e.x(), dex = d.x() - e.x();
  const double aey = a.y() - e.y(), bey = b.y() - e.y(), cey = c.y() - e.y(), dey = d.y() - e.y();
  const double aez = a.z() - e.z(), bez = b.z() - e.z(), cez = c.z() - e.z(), dez = d.z() - e.z();

  const double aexbey = aex * bey, bexaey = bex * aey;
  const double bexcey = bex * cey, cexbey = cex * bey;
  const double cexdey = cex * dey, dexcey = dex * cey;
  const double dexaey = dex * aey, aexdey = aex * dey;
  const double aexcey = aex * cey, cexaey = cex * aey;
  const double bexdey = bex * dey, dexbey = dex * bey;
  const double ab = aexbey - bexaey, bc = bexcey - cexbey, cd = cexdey - dexcey;
  const double da = dexaey - aexdey, ac = aexcey - cexaey, bd = bexdey - dexbey;

  const double abc = aez * bc - bez * ac + cez * ab;
  const double bcd = bez * cd - cez * bd + dez * bc;
  const double cda = cez * da + dez * ac + aez * cd;
  const double dab = dez * ab + aez * bd + bez * da;

  const double alift = aex * aex + aey * aey + aez * aez;
  const double blift = bex * bex + bey * bey + bez * bez;
  const double clift = cex * cex + cey * cey + cez * cez;
  const double dlift = dex * dex + dey * dey + dez * dez;
  const double det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd);

  const double aezp = std::abs(aez), bezp = std::abs(bez), cezp = std::abs(cez), dezp = std::abs(dez);
  const double pab = std::abs(aexbey) + std::abs(bexaey), pbc = std::abs(bexcey) + std::abs(cexbey);
  const double pcd = std::abs(cexdey) + std::abs(dexcey), pda = std::abs(dexaey) + std::abs(aexdey);
  const double pac = std::abs(aexcey) + std::abs(cexaey), pbd = std::abs(bexdey) + std::abs(dexbey);
  const double permanent = (pcd * bezp + pbd * cezp + pbc * dezp) * alift +
                           (pda * cezp + pac * dezp + pcd * aezp) * blift +
                           (pab * dezp + pbd * aezp + pda * bezp) * clift +
                           (pbc * aezp + pac * bezp + pab * cezp) * dlift;
  const double bound = kInsphereBound * permanent;
  if (det > bound) return 1;
  if (-det > bound) return -1;
  if (permanent == 0.0) return 0;

  g_exact.fetch_add(1, std::memory_order_relaxed);
  auto diff = [](double x, double y) -> mpq_class { return mpq_class(x) - mpq_class(y); };
  const mpq_class Aex = diff(a.x(), e.x()), Bex = diff(b.x(), e.x()), Cex = diff(c.x(), e.x()), Dex = diff(d.x(), e.x());
  const mpq_class Aey = diff(a.y(), e.y()), Bey = diff(b.y(), e.y()), Cey = diff(c.y(), e.y()), Dey = diff(d.y(), e.y());
  const mpq_class Aez = diff(a.z(), e.z()), Bez = diff(b.z(), e.z()), Cez = diff(c.z(), e.z()), Dez = diff(d.z(), e.z());
  const mpq_class AB = Aex * Bey - Bex * Aey, BC = Bex * Cey - Cex * Bey, CD = Cex * Dey - Dex * Cey;
  const mpq_class DA = Dex * Aey - Aex * Dey, AC = Aex * Cey - Cex * Aey, BD = Bex * Dey - Dex * Bey;
  const mpq_class ABC = Aez * BC - Bez * AC + Cez * AB;
  const mpq_class BCD = Bez * CD - Cez * BD + Dez * BC;
  const mpq_class CDA = Cez * DA + Dez * AC + Aez * CD;
  const mpq_class DAB = Dez * AB + Aez * BD + Bez * DA;
  const mpq_class Al = Aex * Aex + Aey * Aey + Aez * Aez;
  const mpq_class Bl = Bex * Bex + Bey * Bey + Bez * Bez;
  const mpq_class Cl = Cex * Cex + Cey * Cey + Cez * Cez;
  const mpq_class Dl = Dex * Dex + Dey * Dey + Dez * Dez;
  const mpq_class exact = (Dl * ABC - Cl * DAB) + (Bl * CDA - Al * BCD);
  return sign_of(exact);
}

}  // namespace

int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) { return -orient_raw(a, b, c, d); }

int insphere(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& e) {
  return -insphere_raw(a, b, c, d, e);
}

std::uint64_t exact_fallbacks() { return g_exact.load(); }

}  // namespace predicates

// ------------------------------------------------------------------ complex

double DelaunayComplex::tet_volume(std::size_t t) const {
  const auto& v = tets[t];
  const Vec3 &a = points[v[0]], &b = points[v[1]], &c = points[v[2]], &d = points[v[3]];
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

Vec3 DelaunayComplex::circumcenter(std::size_t t) const {
  const auto& v = tets[t];
  const Vec3& a = points[v[0]];
  const Vec3 b = points[v[1]] - a, c = points[v[2]] - a, d = points[v[3]] - a;
  const Vec3 num = b.squaredNorm() * c.cross(d) + c.squaredNorm() * d.cross(b) + d.squaredNorm() * b.cross(c);
  return a + num / (2.0 * b.dot(c.cross(d)));
}

Vec3 DelaunayComplex::centroid(std::size_t t) const {
  const auto& v = tets[t];
  return 0.25 * (points[v[0]] + points[v[1]] + points[v[2]] + points[v[3]]);
}

std::size_t DelaunayComplex::kept_count() const {
  std::size_t n = 0;
  for (std::size_t t = 0; t < tets.size(); ++t) n += is_kept(t);
  return n;
}

double DelaunayComplex::kept_volume() const {
  double v = 0.0;
  for (std::size_t t = 0; t < tets.size(); ++t)
    if (is_kept(t)) v += tet_volume(t);
  return v;
}

std::size_t DelaunayComplex::interior_faces() const {
  std::size_t n = 0;
  for (const auto& nb : neighbors)
    for (int k = 0; k < 4; ++k) n += nb[k] >= 0;
  return n / 2;
}

// --------------------------------------------------------------- Delaunay

namespace {

using FaceKey = std::array<int, 3>;

FaceKey face_key(const std::array<int, 4>& v, int skip) {
  FaceKey f{};
  int m = 0;
  for (int i = 0; i < 4; ++i)
    if (i != skip) f[m++] = v[i];
  std::sort(f.begin(), f.end());
  return f;
}

}  // namespace

bool Delaunay::is_ghost(int c) const { return ghost_slot(c) >= 0; }

int Delaunay::ghost_slot(int c) const {
  const auto& v = cells_[c].v;
  for (int i = 0; i < 4; ++i)
    if (v[i] == kInfinite) return i;
  return -1;
}

int Delaunay::new_cell(const std::array<int, 4>& v) {
  int id;
  if (!free_.empty()) {
    id = free_.back();
    free_.pop_back();
    cells_[id] = {v, {-1, -1, -1, -1}, true};
  } else {
    id = static_cast<int>(cells_.size());
    cells_.push_back({v, {-1, -1, -1, -1}, true});
    stamp_.push_back(0);
    verdict_.push_back(0);
  }
  return id;
}

bool Delaunay::in_conflict(int c, const Vec3& p) {
  const auto& v = cells_[c].v;
  const int s = ghost_slot(c);
  if (s < 0) return predicates::insphere(points_[v[0]], points_[v[1]], points_[v[2]], points_[v[3]], p) > 0;
  std::array<Vec3, 4> q;
  for (int i = 0; i < 4; ++i) q[i] = i == s ? p : points_[v[i]];
  const int o = predicates::orient3d(q[0], q[1], q[2], q[3]);
  if (o != 0) return o > 0;
  // p on the hull plane: in conflict iff inside the hull face's circumcircle, which
  // is the plane section of the finite neighbour's circumsphere
  const auto& f = cells_[cells_[c].n[s]].v;
  return predicates::insphere(points_[f[0]], points_[f[1]], points_[f[2]], points_[f[3]], p) > 0;
}

int Delaunay::locate(const Vec3& p) {
  int c = last_;
  if (c < 0 || c >= static_cast<int>(cells_.size()) || !cells_[c].alive) {
    c = 0;
    while (!cells_[c].alive) ++c;
  }
  if (const int s = ghost_slot(c); s >= 0) c = cells_[c].n[s];
  const std::size_t limit = 4 * cells_.size() + 16;
  for (std::size_t step = 0; step < limit; ++step) {
    if (is_ghost(c)) return c;
    const auto& cell = cells_[c];
    walk_state_ = walk_state_ * 6364136223846793005ull + 1442695040888963407ull;
    const int off = static_cast<int>(walk_state_ >> 62);
    int next = -1;
    for (int t = 0; t < 4 && next < 0; ++t) {
      const int k = (off + t) & 3;
      std::array<Vec3, 4> q;
      for (int i = 0; i < 4; ++i) q[i] = i == k ? p : points_[cell.v[i]];
      if (predicates::orient3d(q[0], q[1], q[2], q[3]) < 0) next = cell.n[k];
    }
    if (next < 0) return c;
    c = next;
  }
  return -1;
}

void Delaunay::init(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) {
  std::array<int, 4> v{int(i0), int(i1), int(i2), int(i3)};
  if (predicates::orient3d(points_[v[0]], points_[v[1]], points_[v[2]], points_[v[3]]) < 0) std::swap(v[0], v[1]);
  const int t = new_cell(v);
  std::map<FaceKey, std::pair<int, int>> open;
  for (int k = 0; k < 4; ++k) {
    auto g = v;
    g[k] = kInfinite;
    std::swap(g[(k + 1) & 3], g[(k + 2) & 3]);
    const int gc = new_cell(g);
    cells_[t].n[k] = gc;
    cells_[gc].n[k] = t;
    for (int j = 0; j < 4; ++j) {
      if (j == k) continue;
      const auto key = face_key(g, j);
      if (auto it = open.find(key); it != open.end()) {
        cells_[gc].n[j] = it->second.first;
        cells_[it->second.first].n[it->second.second] = gc;
        open.erase(it);
      } else {
        open[key] = {gc, j};
      }
    }
  }
  last_ = t;
  for (auto i : {i0, i1, i2, i3}) inserted_[i] = 1;
}

bool Delaunay::insert_index(int idx) {
  const Vec3 p = points_[idx];
  int c = locate(p);
  if (c >= 0 && !is_ghost(c)) {
    for (int vi : cells_[c].v)
      if (points_[vi] == p) return false;
  }
  if (c < 0 || !in_conflict(c, p)) {
    // the walk failed to terminate or ended on a non-conflicting cell: scan
    c = -1;
    for (int i = 0; i < static_cast<int>(cells_.size()) && c < 0; ++i) {
      if (!cells_[i].alive) continue;
      if (!is_ghost(i)) {
        for (int vi : cells_[i].v)
          if (points_[vi] == p) return false;
      }
      if (in_conflict(i, p)) c = i;
    }
    if (c < 0) throw NumericalError("delaunay: no tetrahedron in conflict with point " + std::to_string(idx));
  }

  ++epoch_;
  std::vector<int> cavity{c};
  stamp_[c] = epoch_;
  verdict_[c] = 1;
  struct BoundaryFace {
    std::array<int, 4> v;
    int k, outside, outside_slot;
  };
  std::vector<BoundaryFace> boundary;
  for (std::size_t q = 0; q < cavity.size(); ++q) {
    const int cc = cavity[q];
    for (int k = 0; k < 4; ++k) {
      const int nb = cells_[cc].n[k];
      if (stamp_[nb] != epoch_) {
        stamp_[nb] = epoch_;
        verdict_[nb] = in_conflict(nb, p) ? 1 : 0;
        if (verdict_[nb]) {
          cavity.push_back(nb);
          continue;
        }
      } else if (verdict_[nb]) {
        continue;
      }
      int slot = 0;
      while (cells_[nb].n[slot] != cc) ++slot;
      boundary.push_back({cells_[cc].v, k, nb, slot});
    }
  }
  for (int cc : cavity) {
    cells_[cc].alive = false;
    free_.push_back(cc);
  }
  std::map<FaceKey, std::pair<int, int>> open;
  int last_finite = -1;
  for (const auto& bf : boundary) {
    auto v = bf.v;
    v[bf.k] = idx;
    const int nc = new_cell(v);
    cells_[nc].n[bf.k] = bf.outside;
    cells_[bf.outside].n[bf.outside_slot] = nc;
    for (int j = 0; j < 4; ++j) {
      if (j == bf.k) continue;
      const auto key = face_key(v, j);
      if (auto it = open.find(key); it != open.end()) {
        cells_[nc].n[j] = it->second.first;
        cells_[it->second.first].n[it->second.second] = nc;
        open.erase(it);
      } else {
        open[key] = {nc, j};
      }
    }
    if (!is_ghost(nc)) last_finite = nc;
  }
  if (!open.empty()) throw NumericalError("delaunay: cavity boundary is not closed");
  last_ = last_finite >= 0 ? last_finite : static_cast<int>(cells_.size()) - 1;
  inserted_[idx] = 1;
  return true;
}

Delaunay::Delaunay(std::vector<Vec3> points) : points_(std::move(points)) {
  const std::size_t n = points_.size();
  if (n < 4) throw ConfigError("delaunay needs at least 4 points, got " + std::to_string(n));
  inserted_.assign(n, 0);

  auto find_simplex = [&](std::array<std::size_t, 4>& out) {
    std::size_t i1 = 1;
    while (i1 < n && points_[i1] == points_[0]) ++i1;
    if (i1 == n) return false;
    for (std::size_t i2 = i1 + 1; i2 < n; ++i2) {
      if ((points_[i1] - points_[0]).cross(points_[i2] - points_[0]).squaredNorm() == 0.0) continue;
      for (std::size_t i3 = i2 + 1; i3 < n; ++i3) {
        if (predicates::orient3d(points_[0], points_[i1], points_[i2], points_[i3]) != 0) {
          out = {0, i1, i2, i3};
          return true;
        }
      }
    }
    return false;
  };

  std::array<std::size_t, 4> s{};
  if (!find_simplex(s)) {
    // no 4 affinely independent points: jitter every point by a tiny deterministic offset
    Vec3 lo = points_[0], hi = points_[0];
    for (const auto& p : points_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const double scale = std::max((hi - lo).norm(), 1.0) * 1e-9;
    std::uint64_t h = 0x2545F4914F6CDD1Dull;
    for (auto& p : points_) {
      for (int a = 0; a < 3; ++a) {
        h ^= h << 13;
        h ^= h >> 7;
        h ^= h << 17;
        p[a] += scale * (static_cast<double>(h >> 11) / 9007199254740992.0 - 0.5);
      }
    }
    perturbed_ = true;
    warn("delaunay: degenerate (coplanar) input, points perturbed by up to " + std::to_string(scale));
    if (!find_simplex(s)) throw ConfigError("delaunay: input is degenerate even after perturbation");
  }
  init(s[0], s[1], s[2], s[3]);
  for (std::size_t i = 0; i < n; ++i) {
    if (!inserted_[i]) insert_index(static_cast<int>(i));
  }
}

bool Delaunay::insert(const Vec3& p) {
  points_.push_back(p);
  inserted_.push_back(0);
  return insert_index(static_cast<int>(points_.size() - 1));
}

DelaunayComplex Delaunay::complex() const {
  DelaunayComplex out;
  out.points = points_;
  out.perturbed = perturbed_;
  std::vector<int> id(cells_.size(), -1);
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    if (cells_[c].alive && ghost_slot(static_cast<int>(c)) < 0) {
      id[c] = static_cast<int>(out.tets.size());
      out.tets.push_back(cells_[c].v);
    }
  }
  out.neighbors.resize(out.tets.size());
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    if (id[c] < 0) continue;
    for (int k = 0; k < 4; ++k) out.neighbors[id[c]][k] = id[cells_[c].n[k]];
  }
  return out;
}

DelaunayComplex delaunay(const std::vector<Vec3>& points) { return Delaunay(points).complex(); }

std::vector<std::size_t> empty_sphere_violations(const DelaunayComplex& complex) {
  std::vector<std::size_t> bad;
  for (std::size_t t = 0; t < complex.tets.size(); ++t) {
    const auto& v = complex.tets[t];
    const Vec3 &a = complex.points[v[0]], &b = complex.points[v[1]], &c = complex.points[v[2]],
               &d = complex.points[v[3]];
    for (std::size_t i = 0; i < complex.points.size(); ++i) {
      if (predicates::insphere(a, b, c, d, complex.points[i]) > 0) {
        bad.push_back(t);
        break;
      }
    }
  }
  return bad;
}

}  // namespace infill
