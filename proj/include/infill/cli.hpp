#pragma once

#include "infill/analysis.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace infill::cli {

/// Exit codes: 0 success, 2 configuration error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point of the `infillbench` executable; never throws.
int main(int argc, const char* const* argv);
/// Same as main with an argument list that excludes the program name.
int run_command(const std::vector<std::string>& args);

inline const std::vector<std::string> kStrategies = {"topopt", "porous", "voronoi", "psl", "import"};

/// A benchmark run: preset, strategy with its config, solver settings, output directory and seed.
/// Relative paths are resolved against the manifest's directory.
struct Manifest {
  std::string path;
  std::string name;
  std::string preset;
  std::string strategy;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json solver = nlohmann::json::object();
  std::string out;
  std::optional<std::uint64_t> seed;
};

Manifest parse_manifest(const nlohmann::json& j, const std::string& base_dir);
Manifest load_manifest(const std::string& path);
/// Strategy and solver configs with every default filled in; throws ConfigError on
/// unknown strategies, unknown keys, wrong types or a missing seed.
nlohmann::json resolved_config(const Manifest& manifest);

struct RunOutcome {
  DesignReport report;
  std::string report_path;
};

/// Runs the strategy end to end and writes every artifact into `out_dir`. On failure a
/// `.failed` marker holding the message is written and the exception rethrown.
RunOutcome execute_run(const Manifest& manifest, const std::string& out_dir);

/// Copies the volumes exported by the reports in `run_dirs` into `bundle_dir` and writes
/// `scene.json`; returns the scene.
nlohmann::json export_viewer(const std::vector<std::string>& run_dirs, const std::string& bundle_dir);
/// Checks scene.json structure and that every referenced volume exists with matching dims.
void validate_scene(const std::string& bundle_dir);

}  // namespace infill::cli
