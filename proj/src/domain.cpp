#include "infill/domain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace infill {

static_assert(std::endian::native == std::endian::little, "volume files are written in native little-endian order");

// ---------------------------------------------------------------- selectors

RegionSelector RegionSelector::box(const Vec3& lo, const Vec3& hi) {
  if ((lo.array() > hi.array()).any()) throw ConfigError("box selector needs min <= max componentwise");
  return RegionSelector(Box{lo, hi});
}

RegionSelector RegionSelector::sphere(const Vec3& center, double radius) {
  if (!(radius >= 0.0)) throw ConfigError("sphere selector radius must be non-negative");
  return RegionSelector(Sphere{center, radius});
}

RegionSelector RegionSelector::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("selector '" + text + "' must look like box:... or sphere:...");
  const std::string kind = text.substr(0, colon);
  std::vector<double> v;
  std::stringstream ss(text.substr(colon + 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("selector '" + text + "': bad number '" + tok + "'");
    }
  }
  if (kind == "box" && v.size() == 6) return box({v[0], v[1], v[2]}, {v[3], v[4], v[5]});
  if (kind == "sphere" && v.size() == 4) return sphere({v[0], v[1], v[2]}, v[3]);
  throw ConfigError("selector '" + text + "': expected box:6 numbers or sphere:4 numbers");
}

bool RegionSelector::contains(const Vec3& p, double tol) const {
  if (const auto* b = std::get_if<Box>(&shape_)) {
    return (p.array() >= b->lo.array() - tol).all() && (p.array() <= b->hi.array() + tol).all();
  }
  const auto& s = std::get<Sphere>(shape_);
  if (s.radius <= 0.0) return false;
  return (p - s.center).norm() <= s.radius + tol;
}

std::string RegionSelector::to_string() const {
  std::ostringstream os;
  os.precision(17);
  if (const auto* b = std::get_if<Box>(&shape_)) {
    os << "box:" << b->lo.x() << ',' << b->lo.y() << ',' << b->lo.z() << ',' << b->hi.x() << ',' << b->hi.y() << ','
       << b->hi.z();
  } else {
    const auto& s = std::get<Sphere>(shape_);
    os << "sphere:" << s.center.x() << ',' << s.center.y() << ',' << s.center.z() << ',' << s.radius;
  }
  return os.str();
}

// ---------------------------------------------------------------- domain

std::size_t VoxelDomain::count(Label l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }

std::vector<std::uint8_t> VoxelDomain::material_nodes() const {
  std::vector<std::uint8_t> out(grid.num_nodes(), 0);
  for (std::size_t e = 0; e < labels.size(); ++e) {
    if (labels[e] == Label::Void) continue;
    for (auto n : grid.element_nodes(e)) out[n] = 1;
  }
  return out;
}

std::vector<std::uint8_t> VoxelDomain::boundary_nodes() const {
  std::vector<std::uint8_t> out(grid.num_nodes(), 0);
  for (std::size_t e = 0; e < labels.size(); ++e) {
    if (labels[e] != Label::Boundary && labels[e] != Label::Passive) continue;
    for (auto n : grid.element_nodes(e)) out[n] = 1;
  }
  return out;
}

VoxelDomain make_block_domain(int nx, int ny, int nz, double spacing, bool padding) {
  if (nx < 1 || ny < 1 || nz < 1) throw ConfigError("block dimensions must be positive");
  const int pad = padding ? 1 : 0;
  VoxelDomain d;
  d.grid.nx = nx + 2 * pad;
  d.grid.ny = ny + 2 * pad;
  d.grid.nz = nz + 2 * pad;
  d.grid.spacing = spacing;
  d.grid.origin = -spacing * pad * Vec3::Ones();
  d.labels.assign(d.grid.num_elements(), Label::Void);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) d.labels[d.grid.element(i + pad, j + pad, k + pad)] = Label::Solid;
  return classify_boundary(std::move(d));
}

VoxelDomain voxelize_mesh(const TriMesh& mesh, int resolution, std::size_t element_cap) {
  if (resolution < 4) throw ConfigError("voxelization resolution must be at least 4");
  require_closed(mesh);
  const Vec3 lo = mesh.bbox_min();
  const Vec3 ext = mesh.bbox_max() - lo;
  const double longest = ext.maxCoeff();
  if (!(longest > 0.0)) throw ConfigError("mesh has an empty bounding box");
  const double h = longest / resolution;
  int dims[3];
  for (int a = 0; a < 3; ++a) dims[a] = std::max(1, static_cast<int>(std::ceil(ext[a] / h - 1e-9)));

  VoxelDomain d;
  d.grid.nx = dims[0] + 2;
  d.grid.ny = dims[1] + 2;
  d.grid.nz = dims[2] + 2;
  d.grid.spacing = h;
  // centre the core block on the bounding box, then pad by one element
  const Vec3 core(dims[0] * h, dims[1] * h, dims[2] * h);
  d.grid.origin = lo - 0.5 * (core - ext) - h * Vec3::Ones();
  if (d.grid.num_elements() > element_cap) {
    throw ConfigError("voxel grid of " + std::to_string(d.grid.num_elements()) + " elements exceeds the cap of " +
                      std::to_string(element_cap));
  }
  // only the unpadded core can be inside
  std::vector<std::size_t> core_ids;
  std::vector<Vec3> centers;
  core_ids.reserve(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  for (int k = 1; k <= dims[2]; ++k)
    for (int j = 1; j <= dims[1]; ++j)
      for (int i = 1; i <= dims[0]; ++i) {
        const auto e = d.grid.element(i, j, k);
        core_ids.push_back(e);
        centers.push_back(d.grid.element_center(e));
      }
  const auto w = winding_numbers(mesh, centers);
  d.labels.assign(d.grid.num_elements(), Label::Void);
  for (std::size_t c = 0; c < core_ids.size(); ++c) {
    if (w[c] >= 0.5) d.labels[core_ids[c]] = Label::Solid;
  }
  if (d.count(Label::Solid) == 0) throw ConfigError("voxelization produced an empty domain");
  return classify_boundary(std::move(d));
}

namespace {

template <typename F>
void for_each_neighbor26(const Grid& g, std::size_t e, F&& f) {
  const auto [i, j, k] = g.element_ijk(e);
  for (int dk = -1; dk <= 1; ++dk)
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0 && dk == 0) continue;
        f(i + di, j + dj, k + dk);
      }
}

}  // namespace

VoxelDomain classify_boundary(VoxelDomain domain) {
  const Grid& g = domain.grid;
  std::vector<std::size_t> to_mark;
  for (std::size_t e = 0; e < domain.labels.size(); ++e) {
    if (domain.labels[e] != Label::Solid) continue;
    bool exposed = false;
    for_each_neighbor26(g, e, [&](int i, int j, int k) {
      if (!g.contains_element(i, j, k) || domain.labels[g.element(i, j, k)] == Label::Void) exposed = true;
    });
    if (exposed) to_mark.push_back(e);
  }
  for (auto e : to_mark) domain.labels[e] = Label::Boundary;
  return domain;
}

VoxelDomain dilate(VoxelDomain domain, Label label, int iterations) {
  if (iterations < 0) throw ConfigError("dilation iterations must be non-negative");
  if (label != Label::Boundary && label != Label::Passive) throw ConfigError("only Boundary or Passive can be dilated");
  const Grid& g = domain.grid;
  auto absorbable = [&](Label l) {
    return l == Label::Solid || (label == Label::Passive && l == Label::Boundary);
  };
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::size_t> grow;
    for (std::size_t e = 0; e < domain.labels.size(); ++e) {
      if (!absorbable(domain.labels[e])) continue;
      bool touches = false;
      for_each_neighbor26(g, e, [&](int i, int j, int k) {
        if (g.contains_element(i, j, k) && domain.labels[g.element(i, j, k)] == label) touches = true;
      });
      if (touches) grow.push_back(e);
    }
    if (grow.empty()) break;
    for (auto e : grow) domain.labels[e] = label;
  }
  return domain;
}

std::vector<std::size_t> select_boundary_nodes(const VoxelDomain& domain, const RegionSelector& selector) {
  const auto bnodes = domain.boundary_nodes();
  const double tol = 1e-9 * domain.grid.spacing;
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < bnodes.size(); ++n) {
    if (bnodes[n] && selector.contains(domain.grid.node_position(n), tol)) out.push_back(n);
  }
  return out;
}

VoxelDomain apply_fixation(VoxelDomain domain, const RegionSelector& selector) {
  const auto nodes = select_boundary_nodes(domain, selector);
  if (nodes.empty()) throw ConfigError("fixation selector " + selector.to_string() + " selects no boundary node");
  domain.fixed.insert(nodes.begin(), nodes.end());
  return domain;
}

VoxelDomain apply_load(VoxelDomain domain, const RegionSelector& selector, const Vec3& total_force) {
  const auto nodes = select_boundary_nodes(domain, selector);
  if (nodes.empty()) throw ConfigError("load selector " + selector.to_string() + " selects no boundary node");
  if (!total_force.allFinite()) throw ConfigError("load vector must be finite");
  if (total_force.squaredNorm() == 0.0) {
    warn("zero load vector for selector " + selector.to_string() + " ignored");
    return domain;
  }
  const bool all_fixed =
      std::all_of(nodes.begin(), nodes.end(), [&](std::size_t n) { return domain.fixed.count(n) > 0; });
  if (all_fixed) throw ConfigError("load selector " + selector.to_string() + " selects only fixed nodes");
  const Vec3 share = total_force / static_cast<double>(nodes.size());
  for (auto n : nodes) {
    auto [it, inserted] = domain.loads.emplace(n, share);
    if (!inserted) it->second += share;
  }
  return domain;
}

VoxelDomain mark_passive(VoxelDomain domain, PassiveMode mode, int extra_dilation) {
  const Grid& g = domain.grid;
  if (mode == PassiveMode::AllBoundary) {
    for (auto& l : domain.labels)
      if (l == Label::Boundary) l = Label::Passive;
  } else {
    for (std::size_t e = 0; e < domain.labels.size(); ++e) {
      if (domain.labels[e] != Label::Boundary) continue;
      for (auto n : g.element_nodes(e)) {
        if (domain.fixed.count(n) || domain.loads.count(n)) {
          domain.labels[e] = Label::Passive;
          break;
        }
      }
    }
  }
  if (extra_dilation > 0 && domain.count(Label::Passive) > 0) domain = dilate(std::move(domain), Label::Passive, extra_dilation);
  return domain;
}

TriMesh surface_mesh(const VoxelDomain& domain) {
  static constexpr int kFaces[6][4][3] = {
      {{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {0, 1, 0}},  // -x
      {{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}},  // +x
      {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}},  // -y
      {{0, 1, 0}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}},  // +y
      {{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}},  // -z
      {{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}},  // +z
  };
  static constexpr int kStep[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  const Grid& g = domain.grid;
  TriMesh m;
  std::unordered_map<std::size_t, int> vid;
  auto vertex = [&](std::size_t node) {
    auto [it, inserted] = vid.emplace(node, static_cast<int>(m.vertices.size()));
    if (inserted) m.vertices.push_back(g.node_position(node));
    return it->second;
  };
  for (std::size_t e = 0; e < domain.labels.size(); ++e) {
    if (domain.labels[e] == Label::Void) continue;
    const auto [i, j, k] = g.element_ijk(e);
    for (int f = 0; f < 6; ++f) {
      const int ni = i + kStep[f][0], nj = j + kStep[f][1], nk = k + kStep[f][2];
      if (g.contains_element(ni, nj, nk) && domain.labels[g.element(ni, nj, nk)] != Label::Void) continue;
      int q[4];
      for (int c = 0; c < 4; ++c) q[c] = vertex(g.node(i + kFaces[f][c][0], j + kFaces[f][c][1], k + kFaces[f][c][2]));
      m.triangles.push_back({q[0], q[1], q[2]});
      m.triangles.push_back({q[0], q[2], q[3]});
    }
  }
  return m;
}

// ---------------------------------------------------------------- SGLDVOX1

namespace {
constexpr char kVoxMagic[8] = {'S', 'G', 'L', 'D', 'V', 'O', 'X', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void write_voxel_file(const std::string& path, const Grid& grid, const std::vector<std::uint8_t>& labels,
                      const std::vector<std::uint8_t>* second_channel) {
  if (labels.size() != grid.num_elements()) throw ConfigError("label count does not match grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(kVoxMagic, 8);
  put<std::uint32_t>(out, grid.nx);
  put<std::uint32_t>(out, grid.ny);
  put<std::uint32_t>(out, grid.nz);
  put<float>(out, static_cast<float>(grid.spacing));
  for (int a = 0; a < 3; ++a) put<float>(out, static_cast<float>(grid.origin[a]));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (second_channel) {
    if (second_channel->size() != labels.size()) throw ConfigError("second channel size does not match grid");
    out.write(reinterpret_cast<const char*>(second_channel->data()), static_cast<std::streamsize>(labels.size()));
  }
}

Grid read_voxel_file(const std::string& path, std::vector<std::uint8_t>& labels,
                     std::vector<std::uint8_t>* second_channel) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open voxel file " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kVoxMagic, 8) != 0) throw ConfigError(path + ": not an SGLDVOX1 file");
  Grid g;
  g.nx = static_cast<int>(get<std::uint32_t>(in));
  g.ny = static_cast<int>(get<std::uint32_t>(in));
  g.nz = static_cast<int>(get<std::uint32_t>(in));
  g.spacing = get<float>(in);
  for (int a = 0; a < 3; ++a) g.origin[a] = get<float>(in);
  if (!in) throw ConfigError(path + ": truncated header");
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t n = g.num_elements();
  if (payload.size() != n && payload.size() != 2 * n) {
    throw ConfigError(path + ": payload of " + std::to_string(payload.size()) + " bytes does not match dims " +
                      std::to_string(g.nx) + "x" + std::to_string(g.ny) + "x" + std::to_string(g.nz));
  }
  labels.assign(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(n));
  if (second_channel) {
    if (payload.size() == 2 * n)
      second_channel->assign(payload.begin() + static_cast<std::ptrdiff_t>(n), payload.end());
    else
      second_channel->clear();
  }
  return g;
}

VoxelDomain load_voxel_model(const std::string& path) {
  std::vector<std::uint8_t> raw;
  VoxelDomain d;
  d.grid = read_voxel_file(path, raw);
  d.labels.resize(raw.size());
  for (std::size_t e = 0; e < raw.size(); ++e) {
    if (raw[e] > 3) throw ConfigError(path + ": invalid label " + std::to_string(raw[e]));
    const auto l = static_cast<Label>(raw[e]);
    d.labels[e] = l == Label::Boundary ? Label::Solid : l;
  }
  if (d.num_material() == 0) throw ConfigError(path + ": empty domain");
  return classify_boundary(std::move(d));
}

void save_voxel_model(const VoxelDomain& domain, const std::string& path) {
  std::vector<std::uint8_t> raw(domain.labels.size());
  std::transform(domain.labels.begin(), domain.labels.end(), raw.begin(),
                 [](Label l) { return static_cast<std::uint8_t>(l); });
  write_voxel_file(path, domain.grid, raw);
}

}  // namespace infill
