#include "infill/preset.hpp"

#include "infill/mesh.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace infill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(what + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string hex_digest(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 15];
  }
  return out;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) { return hex_digest(bytes); }

std::string Preset::hash() const {
  std::ostringstream os;
  os.precision(17);
  const Grid& g = domain.grid;
  os << g.nx << ' ' << g.ny << ' ' << g.nz << ' ' << g.spacing << ' ' << g.origin.transpose() << '\n';
  for (auto l : domain.labels) os << static_cast<char>('0' + static_cast<int>(l));
  os << '\n';
  for (auto n : domain.fixed) os << n << ' ';
  os << '\n';
  for (const auto& [n, f] : domain.loads) os << n << ' ' << f.transpose() << ';';
  os << '\n' << material.E0 << ' ' << material.nu;
  return hex_digest(os.str());
}

std::string save_preset(const Preset& preset, const std::string& dir) {
  fs::create_directories(dir);
  const std::string labels_name = preset.name + ".labels.vox";
  save_voxel_model(preset.domain, (fs::path(dir) / labels_name).string());
  const Grid& g = preset.domain.grid;
  json j;
  j["name"] = preset.name;
  j["dims"] = {g.nx, g.ny, g.nz};
  j["spacing"] = g.spacing;
  j["origin"] = vec_json(g.origin);
  j["labels"] = labels_name;
  j["material"] = {{"E0", preset.material.E0}, {"nu", preset.material.nu}};
  j["fixations"] = json::array();
  for (const auto& s : preset.fixations) j["fixations"].push_back(s.to_string());
  j["loads"] = json::array();
  for (const auto& l : preset.loads) j["loads"].push_back({{"selector", l.selector.to_string()}, {"force", vec_json(l.force)}});
  j["fixed_nodes"] = std::vector<std::size_t>(preset.domain.fixed.begin(), preset.domain.fixed.end());
  json nodal = json::array();
  for (const auto& [n, f] : preset.domain.loads) nodal.push_back({n, f.x(), f.y(), f.z()});
  j["nodal_loads"] = nodal;
  const auto path = (fs::path(dir) / (preset.name + ".preset.json")).string();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(1) << '\n';
  return path;
}

Preset load_preset(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw ConfigError("cannot open preset " + json_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(json_path + ": " + e.what());
  }
  Preset p;
  try {
    p.name = j.at("name").get<std::string>();
    const auto labels_path = (fs::path(json_path).parent_path() / j.at("labels").get<std::string>()).string();
    std::vector<std::uint8_t> raw;
    const Grid file_grid = read_voxel_file(labels_path, raw);
    const auto dims = j.at("dims").get<std::array<int, 3>>();
    if (dims[0] != file_grid.nx || dims[1] != file_grid.ny || dims[2] != file_grid.nz)
      throw ConfigError(json_path + ": dims do not match the label volume " + labels_path);
    Grid& g = p.domain.grid;
    g = file_grid;
    g.spacing = j.at("spacing").get<double>();
    g.origin = json_vec(j.at("origin"), "origin");
    p.domain.labels.resize(raw.size());
    for (std::size_t e = 0; e < raw.size(); ++e) {
      if (raw[e] > 3) throw ConfigError(labels_path + ": invalid label " + std::to_string(raw[e]));
      p.domain.labels[e] = static_cast<Label>(raw[e]);
    }
    if (p.domain.num_material() == 0) throw ConfigError(labels_path + ": empty domain");
    if (j.contains("material")) {
      p.material.E0 = j["material"].value("E0", 1.0);
      p.material.nu = j["material"].value("nu", 0.3);
    }
    for (const auto& s : j.value("fixations", json::array())) p.fixations.push_back(RegionSelector::parse(s.get<std::string>()));
    for (const auto& l : j.value("loads", json::array()))
      p.loads.push_back({RegionSelector::parse(l.at("selector").get<std::string>()), json_vec(l.at("force"), "force")});
    const auto mat_nodes = p.domain.material_nodes();
    for (auto n : j.at("fixed_nodes").get<std::vector<std::size_t>>()) {
      if (n >= mat_nodes.size() || !mat_nodes[n]) throw ConfigError(json_path + ": fixed node " + std::to_string(n) + " is not on material");
      p.domain.fixed.insert(n);
    }
    for (const auto& r : j.at("nodal_loads")) {
      const auto n = r.at(0).get<std::size_t>();
      if (n >= mat_nodes.size() || !mat_nodes[n]) throw ConfigError(json_path + ": loaded node " + std::to_string(n) + " is not on material");
      p.domain.loads[n] = Vec3(r.at(1).get<double>(), r.at(2).get<double>(), r.at(3).get<double>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(json_path + ": " + e.what());
  }
  if (p.domain.fixed.empty()) throw ConfigError(json_path + ": no fixation");
  return p;
}

LoadSpec parse_load_spec(const std::string& text) {
  const auto at = text.find(",f=");
  if (at == std::string::npos) throw ConfigError("load '" + text + "' must end with ,f=fx,fy,fz");
  std::vector<double> f;
  std::stringstream ss(text.substr(at + 3));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      f.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("load '" + text + "': bad number '" + tok + "'");
    }
  }
  if (f.size() != 3) throw ConfigError("load '" + text + "': force needs 3 components");
  return {RegionSelector::parse(text.substr(0, at)), Vec3(f[0], f[1], f[2])};
}

Preset cantilever_preset(int nx, int ny, int nz) {
  Preset p;
  p.name = "cantilever";
  p.domain = make_block_domain(nx, ny, nz, 1.0);
  p.fixations.push_back(RegionSelector::box(Vec3(-0.1, -0.1, -0.1), Vec3(0.1, ny + 0.1, nz + 0.1)));
  p.loads.push_back({RegionSelector::box(Vec3(nx - 0.1, -0.1, -0.1), Vec3(nx + 0.1, ny + 0.1, 0.1)), Vec3(0, 0, -1)});
  p.domain = apply_fixation(std::move(p.domain), p.fixations[0]);
  p.domain = apply_load(std::move(p.domain), p.loads[0].selector, p.loads[0].force);
  return p;
}

Preset sphere_preset(int res) {
  Preset p;
  p.name = "sphere";
  const double r = 0.5 * res;
  p.domain = voxelize_mesh(make_icosphere(Vec3(r, r, r), r, 3), res);
  const double lo = -1.0, hi = res + 1.0;
  p.fixations.push_back(RegionSelector::box(Vec3(lo, lo, lo), Vec3(hi, hi, 0.15 * res)));
  p.loads.push_back({RegionSelector::box(Vec3(lo, lo, 0.85 * res), Vec3(hi, hi, hi)), Vec3(0, 0, -1)});
  p.domain = apply_fixation(std::move(p.domain), p.fixations[0]);
  p.domain = apply_load(std::move(p.domain), p.loads[0].selector, p.loads[0].force);
  p.domain = mark_passive(std::move(p.domain), PassiveMode::AllBoundary);
  return p;
}

Mat3 euler_rotation(const Vec3& euler_degrees) {
  const Vec3 a = euler_degrees * (std::numbers::pi / 180.0);
  const Eigen::AngleAxisd rx(a.x(), Vec3::UnitX()), ry(a.y(), Vec3::UnitY()), rz(a.z(), Vec3::UnitZ());
  return (rz * ry * rx).toRotationMatrix();
}

Preset rotate_loads(Preset preset, const Vec3& euler_degrees) {
  const Mat3 R = euler_rotation(euler_degrees);
  for (auto& [n, f] : preset.domain.loads) f = R * f;
  for (auto& l : preset.loads) l.force = R * l.force;
  return preset;
}

}  // namespace infill
