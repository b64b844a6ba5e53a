#include "infill/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace infill {

Vec3 TriMesh::bbox_min() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) lo = lo.cwiseMin(v);
  return lo;
}

Vec3 TriMesh::bbox_max() const {
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) hi = hi.cwiseMax(v);
  return hi;
}

double TriMesh::volume() const {
  double v = 0.0;
  for (const auto& t : triangles) {
    v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  }
  return v / 6.0;
}

std::vector<std::pair<int, int>> non_manifold_edges(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& t : mesh.triangles) {
    for (int c = 0; c < 3; ++c) {
      int a = t[c], b = t[(c + 1) % 3];
      if (a > b) std::swap(a, b);
      ++count[{a, b}];
    }
  }
  std::vector<std::pair<int, int>> bad;
  for (const auto& [edge, n] : count) {
    if (n != 2) bad.push_back(edge);
  }
  return bad;
}

void require_closed(const TriMesh& mesh) {
  if (mesh.triangles.empty()) throw ConfigError("mesh has no triangles");
  const int nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (int idx : mesh.triangles[t]) {
      if (idx < 0 || idx >= nv) {
        throw ConfigError("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                          " out of range");
      }
    }
  }
  const auto bad = non_manifold_edges(mesh);
  if (!bad.empty()) {
    std::ostringstream os;
    os << "mesh is not closed: " << bad.size() << " edge(s) not shared by exactly two triangles:";
    for (std::size_t i = 0; i < bad.size() && i < 16; ++i) {
      os << " (" << bad[i].first << "," << bad[i].second << ")";
    }
    if (bad.size() > 16) os << " ...";
    throw ConfigError(os.str());
  }
}

namespace {

double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
  const double la = a.norm(), lb = b.norm(), lc = c.norm();
  const double num = a.dot(b.cross(c));
  const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
  return 2.0 * std::atan2(num, den);
}

}  // namespace

double winding_number(const TriMesh& mesh, const Vec3& p) {
  double omega = 0.0;
  for (const auto& t : mesh.triangles) {
    omega += solid_angle(mesh.vertices[t[0]] - p, mesh.vertices[t[1]] - p, mesh.vertices[t[2]] - p);
  }
  return omega / (4.0 * std::numbers::pi);
}

std::vector<double> winding_numbers(const TriMesh& mesh, std::span<const Vec3> points) {
  std::vector<double> out(points.size());
  const auto n = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for schedule(dynamic, 64) num_threads(worker_threads())
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = winding_number(mesh, points[i]);
  return out;
}

std::optional<double> first_hit(const TriMesh& mesh, const Vec3& a, const Vec3& b) {
  const Vec3 dir = b - a;
  std::optional<double> best;
  for (const auto& t : mesh.triangles) {
    const Vec3& v0 = mesh.vertices[t[0]];
    const Vec3 e1 = mesh.vertices[t[1]] - v0;
    const Vec3 e2 = mesh.vertices[t[2]] - v0;
    const Vec3 pv = dir.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-300) continue;
    const double inv = 1.0 / det;
    const Vec3 tv = a - v0;
    const double u = tv.dot(pv) * inv;
    if (u < -1e-12 || u > 1.0 + 1e-12) continue;
    const Vec3 qv = tv.cross(e1);
    const double v = dir.dot(qv) * inv;
    if (v < -1e-12 || u + v > 1.0 + 1e-12) continue;
    const double s = e2.dot(qv) * inv;
    if (s < 0.0 || s > 1.0) continue;
    if (!best || s < *best) best = s;
  }
  return best;
}

TriMesh make_box_mesh(const Vec3& lo, const Vec3& hi) {
  TriMesh m;
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i)
        m.vertices.emplace_back(i ? hi.x() : lo.x(), j ? hi.y() : lo.y(), k ? hi.z() : lo.z());
  // vertex id = i + 2j + 4k; faces wound counter-clockwise seen from outside
  const int quads[6][4] = {
      {0, 2, 3, 1},  // z = lo
      {4, 5, 7, 6},  // z = hi
      {0, 1, 5, 4},  // y = lo
      {2, 6, 7, 3},  // y = hi
      {0, 4, 6, 2},  // x = lo
      {1, 3, 7, 5},  // x = hi
  };
  for (const auto& q : quads) {
    m.triangles.push_back({q[0], q[1], q[2]});
    m.triangles.push_back({q[0], q[2], q[3]});
  }
  return m;
}

TriMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]);
      const int b = midpoint(tri[1], tri[2]);
      const int c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriMesh m;
  m.vertices.reserve(v.size());
  for (const auto& p : v) m.vertices.push_back(center + radius * p);
  m.triangles = std::move(f);
  if (m.volume() < 0) {
    for (auto& tri : m.triangles) std::swap(tri[1], tri[2]);
  }
  return m;
}

namespace {

struct VecLess {
  bool operator()(const Vec3& a, const Vec3& b) const {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
  }
};

TriMesh weld(const std::vector<Vec3>& soup) {
  TriMesh m;
  std::map<Vec3, int, VecLess> ids;
  for (std::size_t i = 0; i + 2 < soup.size(); i += 3) {
    std::array<int, 3> tri{};
    for (int c = 0; c < 3; ++c) {
      auto [it, inserted] = ids.emplace(soup[i + c], static_cast<int>(m.vertices.size()));
      if (inserted) m.vertices.push_back(soup[i + c]);
      tri[c] = it->second;
    }
    m.triangles.push_back(tri);
  }
  return m;
}

TriMesh read_stl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open mesh file " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<Vec3> soup;
  bool binary = false;
  if (data.size() >= 84) {
    std::uint32_t n = 0;
    std::memcpy(&n, data.data() + 80, 4);
    binary = data.size() == 84 + static_cast<std::size_t>(n) * 50;
    if (binary) {
      for (std::uint32_t t = 0; t < n; ++t) {
        const char* rec = data.data() + 84 + static_cast<std::size_t>(t) * 50 + 12;
        for (int c = 0; c < 3; ++c) {
          float xyz[3];
          std::memcpy(xyz, rec + 12 * c, 12);
          soup.emplace_back(xyz[0], xyz[1], xyz[2]);
        }
      }
    }
  }
  if (!binary) {
    std::istringstream is(data);
    std::string tok;
    while (is >> tok) {
      if (tok == "vertex") {
        double x, y, z;
        if (!(is >> x >> y >> z)) throw ConfigError("malformed ASCII STL vertex in " + path);
        soup.emplace_back(x, y, z);
      }
    }
  }
  if (soup.empty() || soup.size() % 3 != 0) throw ConfigError("no triangles read from " + path);
  return weld(soup);
}

TriMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mesh file " + path);
  TriMesh m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      ls >> x >> y >> z;
      m.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        int idx = std::stoi(tok.substr(0, tok.find('/')));
        poly.push_back(idx > 0 ? idx - 1 : static_cast<int>(m.vertices.size()) + idx);
      }
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) m.triangles.push_back({poly[0], poly[i], poly[i + 1]});
    }
  }
  return m;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

}  // namespace

TriMesh read_mesh(const std::string& path) {
  if (ends_with(path, ".obj")) return read_obj(path);
  return read_stl(path);
}

void write_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

void write_stl_ascii(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(17);
  out << "solid mesh\n";
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    Vec3 n = (b - a).cross(c - a);
    if (n.norm() > 0) n.normalize();
    out << " facet normal " << n.x() << ' ' << n.y() << ' ' << n.z() << "\n  outer loop\n";
    for (const Vec3* v : {&a, &b, &c}) out << "   vertex " << v->x() << ' ' << v->y() << ' ' << v->z() << '\n';
    out << "  endloop\n endfacet\n";
  }
  out << "endsolid mesh\n";
}

}  // namespace infill
