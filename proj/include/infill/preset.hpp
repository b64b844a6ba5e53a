#pragma once

#include "infill/domain.hpp"
#include "infill/fem.hpp"

#include <string>
#include <vector>

namespace infill {

struct LoadSpec {
  RegionSelector selector;
  Vec3 force;
};

/// A voxel domain with resolved boundary conditions and material: the input of every
/// strategy. Selectors are kept for provenance; the node sets in `domain` are authoritative.
struct Preset {
  std::string name = "preset";
  VoxelDomain domain;
  Material material;
  std::vector<RegionSelector> fixations;
  std::vector<LoadSpec> loads;

  /// Hex digest of grid, labels, fixed nodes, loads and material.
  std::string hash() const;
};

/// Writes `<dir>/<name>.preset.json` and the label volume `<dir>/<name>.labels.vox`;
/// returns the JSON path. Output is byte-identical for identical presets.
std::string save_preset(const Preset& preset, const std::string& dir);
Preset load_preset(const std::string& json_path);

/// Parses "box:x0,y0,z0,x1,y1,z1,f=fx,fy,fz" (or a sphere selector with the same suffix).
LoadSpec parse_load_spec(const std::string& text);

/// Block cantilever clamped on its x = 0 face, unit downward load on the bottom edge of the
/// x = max face, no passive shell.
Preset cantilever_preset(int nx = 48, int ny = 24, int nz = 24);
/// Icosphere of radius res/2 voxelized at `res`, clamped on a bottom cap, loaded downward on a
/// top cap, boundary shell passive.
Preset sphere_preset(int res = 32);

/// The same preset with every nodal force rotated by Rz * Ry * Rx (angles in degrees).
Preset rotate_loads(Preset preset, const Vec3& euler_degrees);
Mat3 euler_rotation(const Vec3& euler_degrees);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace infill
