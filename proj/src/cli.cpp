#include "infill/cli.hpp"

#include "infill/graph.hpp"
#include "infill/porous.hpp"
#include "infill/psl.hpp"
#include "infill/voronoi.hpp"

#include <CLI11.hpp>

#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

extern char** environ;

namespace infill::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ------------------------------------------------------------------ schemas

const json& design_defaults() {
  static const json j = {{"max_iters", 100},    {"filter_radius", 1.5}, {"move", 0.2},      {"eta", 0.5},
                         {"beta_initial", 1.0}, {"beta_period", 40},    {"beta_max", 64.0}, {"penalty", 3.0},
                         {"change_tol", 0.01},  {"snapshot_every", 10}};
  return j;
}

json strategy_defaults(const std::string& strategy) {
  if (strategy == "topopt") {
    json j = design_defaults();
    j["volume_fraction"] = 0.3;
    return j;
  }
  if (strategy == "porous") {
    json j = design_defaults();
    j["local_bound"] = 0.5;
    j["local_radius"] = 6.0;
    j["aggregation"] = 16.0;
    j["volume_fraction"] = nullptr;  // number: calibrate the local bound to this global volume
    return j;
  }
  if (strategy == "voronoi") {
    return {{"volume_fraction", 0.3}, {"tolerance", 0.02},      {"thickness_layers", 0},    {"rho_ratio", 0.5},
            {"r_hat_min", 0.0},       {"r_hat_max", 0.0},       {"batch_size", 1024},       {"max_empty_batches", 20},
            {"aux_samples", 64},      {"hull_thinning", 0.5}};
  }
  if (strategy == "psl") {
    return {{"volume_fraction", 0.3}, {"tolerance", 0.02},     {"thickness_layers", 0},
            {"step", 0.5},            {"angle_limit", 30.0},   {"seed_spacing", 1.0},
            {"max_points", 4000},     {"branches", {"major", "minor"}}};
  }
  if (strategy == "import") {
    return {{"graph", ""}, {"thickness_layers", 0}, {"volume_fraction", nullptr}, {"tolerance", 0.02}, {"max_layers", 8}};
  }
  std::string known;
  for (const auto& s : kStrategies) known += (known.empty() ? "" : ", ") + s;
  throw ConfigError("unknown strategy '" + strategy + "' (expected one of " + known + ")");
}

const json& solver_defaults() {
  static const json j = {{"rel_tol", 1e-3},      {"max_cg_iters", 1000}, {"levels", 0},
                         {"smoother_sweeps", 2}, {"eval_rel_tol", 1e-6}};
  return j;
}

// Overlays user values on defaults; keys and value kinds must match the defaults.
json merge_checked(const json& defaults, const json& user, const std::string& what) {
  if (!user.is_object()) throw ConfigError(what + " must be a JSON object");
  json out = defaults;
  for (const auto& [key, value] : user.items()) {
    if (!defaults.contains(key)) throw ConfigError(what + ": unknown key '" + key + "'");
    const json& d = defaults[key];
    const bool ok = (d.is_number() && value.is_number()) || (d.is_string() && value.is_string()) ||
                    (d.is_null() && (value.is_null() || value.is_number())) ||
                    (d.is_array() && value.is_array() &&
                     std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_string(); }));
    if (!ok) throw ConfigError(what + ": key '" + key + "' has the wrong type");
    out[key] = value;
  }
  return out;
}

// -------------------------------------------------------------- config glue

SolverConfig solver_config(const json& s, bool evaluation) {
  SolverConfig c;
  c.rel_tol = s.at(evaluation ? "eval_rel_tol" : "rel_tol").get<double>();
  c.max_cg_iters = s.at("max_cg_iters").get<int>();
  c.levels = s.at("levels").get<int>();
  c.smoother_sweeps = s.at("smoother_sweeps").get<int>();
  return c;
}

void fill_design_config(DesignConfig& d, const json& c, const json& solver, const Preset& preset,
                        const std::string& out_dir) {
  d.max_iters = c.at("max_iters").get<int>();
  d.filter_radius = c.at("filter_radius").get<double>();
  d.move = c.at("move").get<double>();
  d.eta = c.at("eta").get<double>();
  d.beta.initial = c.at("beta_initial").get<double>();
  d.beta.period = c.at("beta_period").get<int>();
  d.beta.max = c.at("beta_max").get<double>();
  d.simp.penalty = c.at("penalty").get<double>();
  d.change_tol = c.at("change_tol").get<double>();
  d.snapshot_every = c.at("snapshot_every").get<int>();
  d.snapshot_dir = d.snapshot_every > 0 ? (fs::path(out_dir) / "snapshots").string() : std::string();
  d.material = preset.material;
  d.solver = solver_config(solver, false);
}

std::map<std::string, double> numeric_parameters(const json& c) {
  std::map<std::string, double> out;
  for (const auto& [k, v] : c.items())
    if (v.is_number()) out[k] = v.get<double>();
  return out;
}

std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).string();
}

// Densities as stored in SGLDF32 so later analyses reproduce the run exactly.
std::vector<double> float_rounded(std::span<const double> v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return static_cast<double>(static_cast<float>(x)); });
  return out;
}

void write_history(const std::string& path, const std::vector<IterationRecord>& history) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os.precision(10);
  os << "iteration,compliance,volume,change,beta,solver_iterations,constraint,max_local\n";
  for (const auto& r : history)
    os << r.iteration << ',' << r.compliance << ',' << r.volume << ',' << r.change << ',' << r.beta << ','
       << r.solver_iterations << ',' << r.constraint << ',' << r.max_local << '\n';
}

std::vector<double> read_design(const std::string& path, const Grid& grid) {
  std::vector<double> d;
  if (fs::path(path).extension() == ".vox") {
    std::vector<std::uint8_t> labels;
    const Grid g = read_voxel_file(path, labels);
    if (!g.same_shape(grid)) throw ConfigError(path + ": design grid does not match the preset");
    d.assign(labels.begin(), labels.end());
    for (auto& v : d) v = v != 0 ? 1.0 : 0.0;
  } else {
    const auto vol = read_float_volume(path);
    if (vol.nx != grid.nx || vol.ny != grid.ny || vol.nz != grid.nz || vol.channels != 1)
      throw ConfigError(path + ": design volume does not match the preset grid");
    d.assign(vol.data.begin(), vol.data.end());
  }
  return d;
}

// Integer thickness chosen by dichotomy on a continuous parameter rounded to layers.
BudgetMatch match_layers(const EdgeGraph& graph, const VoxelDomain& domain, int max_layers, double target,
                         double tolerance, const std::string& strategy) {
  BudgetConfig bc;
  bc.target = target;
  bc.tolerance = tolerance;
  bc.lo = 0.0;
  bc.hi = max_layers;
  bc.max_iterations = 2 * (1 + static_cast<int>(std::ceil(std::log2(std::max(1, max_layers)))));
  auto gen = [&](double p) {
    const int layers = static_cast<int>(std::lround(p));
    auto f = voxelize_graph(graph, domain, layers, strategy);
    f.parameters["thickness_layers"] = layers;
    return f;
  };
  return match_budget(gen, domain, bc);
}

// ---------------------------------------------------------------- the run

struct Design {
  std::vector<double> densities;
  std::vector<double> history;
  std::map<std::string, double> parameters;
  std::optional<MaterialField> material;
};

Design run_strategy(const Manifest& m, const json& cfg, const Preset& preset, const std::string& out_dir,
                    std::map<std::string, std::string>& exports) {
  const json& c = cfg.at("config");
  const json& s = cfg.at("solver");
  const VoxelDomain& domain = preset.domain;
  Design d;
  d.parameters = numeric_parameters(c);
  auto from_result = [&](const DesignResult& r) {
    d.densities = r.density.projected;
    for (const auto& h : r.history) d.history.push_back(h.compliance);
    write_history((fs::path(out_dir) / "history.csv").string(), r.history);
    exports["history"] = "history.csv";
  };
  auto solid_evaluation = [&] {
    return evaluate_design(std::vector<double>(domain.grid.num_elements(), 1.0), preset, solver_config(s, true),
                           "solid");
  };

  if (m.strategy == "topopt") {
    TopOptConfig t;
    fill_design_config(t, c, s, preset, out_dir);
    t.volume_fraction = c.at("volume_fraction").get<double>();
    from_result(run_topopt(domain, t));
  } else if (m.strategy == "porous") {
    PorousConfig p;
    fill_design_config(p, c, s, preset, out_dir);
    p.local_bound = c.at("local_bound").get<double>();
    p.local_radius = c.at("local_radius").get<double>();
    p.aggregation = c.at("aggregation").get<double>();
    if (c.at("volume_fraction").is_number()) {
      auto cal = calibrate_local_bound(domain, p, c.at("volume_fraction").get<double>());
      d.parameters["local_bound"] = cal.local_bound;
      from_result(cal.design);
    } else {
      from_result(run_porous(domain, p));
    }
  } else if (m.strategy == "voronoi") {
    SamplingConfig sc;
    sc.rho_ratio = c.at("rho_ratio").get<double>();
    sc.batch_size = c.at("batch_size").get<int>();
    sc.max_empty_batches = c.at("max_empty_batches").get<int>();
    sc.aux_samples = c.at("aux_samples").get<int>();
    sc.hull_thinning = c.at("hull_thinning").get<double>();
    sc.seed = *m.seed;
    const auto solid = solid_evaluation();
    const auto hull = surface_mesh(domain);
    auto v = voronoi_infill(domain, hull, solid.von_mises, sc, c.at("thickness_layers").get<int>(),
                            c.at("volume_fraction").get<double>(), c.at("tolerance").get<double>(),
                            c.at("r_hat_min").get<double>(), c.at("r_hat_max").get<double>());
    write_graph_obj(v.result.graph, (fs::path(out_dir) / "graph.obj").string());
    exports["graph"] = "graph.obj";
    d.parameters["budget_converged"] = v.budget.converged;
    d.material = std::move(v.budget.field);
    d.parameters["samples"] = static_cast<double>(v.result.samples.size());
  } else if (m.strategy == "psl") {
    PslConfig pc;
    pc.step = c.at("step").get<double>();
    pc.angle_limit = c.at("angle_limit").get<double>();
    pc.seed_spacing = c.at("seed_spacing").get<double>();
    pc.max_points = c.at("max_points").get<int>();
    pc.branches.clear();
    for (const auto& b : c.at("branches")) {
      const auto name = b.get<std::string>();
      if (name == "major") pc.branches.push_back(Branch::Major);
      else if (name == "medium") pc.branches.push_back(Branch::Medium);
      else if (name == "minor") pc.branches.push_back(Branch::Minor);
      else throw ConfigError("psl: unknown branch '" + name + "'");
    }
    const auto solid = solid_evaluation();
    const auto field = psl_field(solid.stress, domain);
    auto r = psl_infill(field, domain, pc, c.at("thickness_layers").get<int>(), c.at("volume_fraction").get<double>(),
                        c.at("tolerance").get<double>());
    write_psl_obj(r.set.lines, (fs::path(out_dir) / "psl.obj").string());
    exports["graph"] = "psl.obj";
    d.parameters["budget_converged"] = r.budget.converged;
    d.material = std::move(r.budget.field);
    d.parameters["lines"] = static_cast<double>(r.set.lines.size());
  } else {
    const auto graph_path = c.at("graph").get<std::string>();
    if (graph_path.empty()) throw ConfigError("import: config.graph (edge-graph OBJ) is required");
    const auto graph = read_graph_obj(resolve(fs::path(m.path).parent_path().string(), graph_path));
    if (c.at("volume_fraction").is_number()) {
      auto b = match_layers(graph, domain, c.at("max_layers").get<int>(), c.at("volume_fraction").get<double>(),
                            c.at("tolerance").get<double>(), "import");
      d.parameters["budget_converged"] = b.converged;
      d.material = std::move(b.field);
    } else {
      d.material = voxelize_graph(graph, domain, c.at("thickness_layers").get<int>(), "import");
    }
  }
  if (d.material) {
    d.densities = d.material->densities();
    for (const auto& [k, v] : d.material->parameters) d.parameters[k] = v;
    write_material_field((fs::path(out_dir) / "material.vox").string(), *d.material, domain);
    exports["material"] = "material.vox";
  }
  return d;
}

std::string run_name(const Manifest& m) { return m.name.empty() ? m.strategy : m.name; }

// ------------------------------------------------------------- subcommands

int cmd_preset(const std::string& mesh, const std::string& voxel, const std::string& block, const std::string& builtin,
               int res, double spacing, const std::vector<std::string>& fix, const std::vector<std::string>& load,
               const std::string& passive, int dilation, std::string name, std::size_t cap, const std::string& out) {
  const int sources = !mesh.empty() + !voxel.empty() + !block.empty() + !builtin.empty();
  if (sources != 1) throw ConfigError("preset needs exactly one of --mesh, --voxel, --block, --builtin");
  Preset p;
  if (!builtin.empty()) {
    if (builtin == "cantilever") p = cantilever_preset();
    else if (builtin == "sphere") p = sphere_preset(res > 0 ? res : 32);
    else throw ConfigError("unknown builtin preset '" + builtin + "' (cantilever, sphere)");
  } else {
    if (fix.empty()) throw ConfigError("no fixation: pass at least one --fix selector");
    if (load.empty()) throw ConfigError("no load: pass at least one --load selector,f=fx,fy,fz");
    if (!mesh.empty()) {
      if (res <= 0) throw ConfigError("--mesh needs --res");
      p.domain = voxelize_mesh(read_mesh(mesh), res, cap);
      p.name = fs::path(mesh).stem().string();
    } else if (!voxel.empty()) {
      p.domain = load_voxel_model(voxel);
      require_within_cap(p.domain.grid.nx, p.domain.grid.ny, p.domain.grid.nz, cap);
      p.name = fs::path(voxel).stem().string();
    } else {
      int nx = 0, ny = 0, nz = 0;
      char c1 = 0, c2 = 0;
      std::istringstream is(block);
      if (!(is >> nx >> c1 >> ny >> c2 >> nz) || c1 != ',' || c2 != ',' || nx < 1 || ny < 1 || nz < 1)
        throw ConfigError("--block expects nx,ny,nz");
      require_within_cap(nx, ny, nz, cap);
      p.domain = make_block_domain(nx, ny, nz, spacing);
      p.name = "block";
    }
    for (const auto& f : fix) {
      p.fixations.push_back(RegionSelector::parse(f));
      p.domain = apply_fixation(std::move(p.domain), p.fixations.back());
    }
    for (const auto& l : load) {
      p.loads.push_back(parse_load_spec(l));
      p.domain = apply_load(std::move(p.domain), p.loads.back().selector, p.loads.back().force);
    }
  }
  if (passive == "all") p.domain = mark_passive(std::move(p.domain), PassiveMode::AllBoundary, dilation);
  else if (passive == "bc") p.domain = mark_passive(std::move(p.domain), PassiveMode::LoadedAndFixed, dilation);
  else if (passive != "none" && passive != "default") throw ConfigError("--passive must be none, all or bc");
  if (!name.empty()) p.name = name;
  const auto path = save_preset(p, out);
  std::cout << path << '\n';
  return kExitOk;
}

int cmd_run(const std::string& manifest_path, const std::string& out_override, bool dry_run) {
  auto m = load_manifest(manifest_path);
  if (!out_override.empty()) m.out = out_override;
  const auto cfg = resolved_config(m);
  if (dry_run) {
    std::cout << cfg.dump(2) << '\n';
    return kExitOk;
  }
  const auto r = execute_run(m, m.out);
  std::cout << r.report_path << " compliance " << r.report.compliance << " vf " << r.report.volume_fraction << '\n';
  return kExitOk;
}

int cmd_analyze(const std::string& preset_path, const std::string& design_path, std::string name,
                const std::vector<double>& angles, const std::string& deviation, const std::string& out,
                const SolverConfig& solver) {
  if (angles.size() % 3 != 0) throw ConfigError("--variable-load takes three angles per load case");
  const auto preset = load_preset(preset_path);
  const auto design = read_design(design_path, preset.domain.grid);
  if (name.empty()) name = fs::path(design_path).stem().string();
  fs::create_directories(out);
  std::vector<Vec3> cases;
  for (std::size_t i = 0; i < angles.size(); i += 3) cases.emplace_back(angles[i], angles[i + 1], angles[i + 2]);
  if (cases.empty()) cases.emplace_back(Vec3::Zero());
  std::optional<std::vector<double>> baseline;
  if (!deviation.empty())
    baseline = deviation == "solid" ? std::vector<double>(design.size(), 1.0) : read_design(deviation, preset.domain.grid);

  const std::string design_copy = "design" + fs::path(design_path).extension().string();
  if (!fs::exists(fs::path(out) / design_copy) || !fs::equivalent(design_path, fs::path(out) / design_copy))
    fs::copy_file(design_path, fs::path(out) / design_copy, fs::copy_options::overwrite_existing);
  std::vector<DesignReport> reports;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    std::ostringstream tag;
    tag << name << '@' << cases[i].x() << ',' << cases[i].y() << ',' << cases[i].z();
    auto ev = variable_load(design, preset, cases[i], solver, tag.str());
    const std::string stem = "case" + std::to_string(i);
    write_float_volume((fs::path(out) / (stem + "_vm.f32")).string(), element_volume(preset.domain.grid, ev.von_mises));
    ev.report.exports["design"] = design_copy;
    ev.report.exports["vm"] = stem + "_vm.f32";
    if (baseline) {
      const auto base = variable_load(*baseline, preset, cases[i], solver, "baseline");
      const auto dev = deviation_field(base.stress, ev.stress, ev.occupied);
      ev.report.deviation = dev.stats;
      write_float_volume((fs::path(out) / (stem + "_deviation.f32")).string(),
                         element_volume(preset.domain.grid, dev.values));
      ev.report.exports["deviation"] = stem + "_deviation.f32";
    }
    write_report(ev.report, (fs::path(out) / (stem + ".report.json")).string());
    reports.push_back(ev.report);
  }
  const auto csv = comparison_csv(compare_designs(reports));
  std::ofstream((fs::path(out) / "comparison.csv").string()) << csv;
  std::cout << csv;
  return kExitOk;
}

int cmd_rasterize(const std::string& graph_path, const std::string& preset_path, int layers,
                  std::optional<double> target, double tolerance, int max_layers, const std::string& out) {
  const auto preset = load_preset(preset_path);
  const auto graph = read_graph_obj(graph_path);
  fs::create_directories(out);
  MaterialField f = target ? match_layers(graph, preset.domain, max_layers, *target, tolerance, "import").field
                           : voxelize_graph(graph, preset.domain, layers, "import");
  write_material_field((fs::path(out) / "material.vox").string(), f, preset.domain);
  write_float_volume((fs::path(out) / "design.f32").string(), element_volume(preset.domain.grid, f.densities()));
  std::cout << "volume fraction " << volume_fraction(f, preset.domain) << '\n';
  return kExitOk;
}

int cmd_bench(const std::vector<std::string>& manifests, int jobs, const std::string& out, const std::string& exe) {
  if (manifests.empty()) throw ConfigError("bench needs at least one --manifest");
  fs::create_directories(out);
  struct Job {
    std::string name, dir;
    pid_t pid = 0;
  };
  std::vector<Job> all;
  std::set<std::string> names;
  for (const auto& mp : manifests) {
    const auto m = load_manifest(mp);
    resolved_config(m);
    if (!names.insert(run_name(m)).second) throw ConfigError("bench: duplicate run name '" + run_name(m) + "'");
    all.push_back({run_name(m), (fs::path(out) / run_name(m)).string()});
  }
  int worst = kExitOk;
  std::size_t next = 0, running = 0;
  std::map<pid_t, std::size_t> live;
  auto reap = [&] {
    int status = 0;
    const pid_t pid = waitpid(-1, &status, 0);
    if (pid <= 0) throw NumericalError("bench: waitpid failed");
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitNumerical;
    worst = std::max(worst, code);
    --running;
    std::cerr << "bench: " << all[live.at(pid)].name << " exited with " << code << '\n';
  };
  while (next < all.size() || running > 0) {
    if (next < all.size() && static_cast<int>(running) < std::max(1, jobs)) {
      std::vector<std::string> args = {exe, "run", manifests[next], "--out", all[next].dir};
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      argv.push_back(nullptr);
      pid_t pid = 0;
      if (posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0)
        throw ConfigError("bench: cannot start " + exe);
      live[pid] = next++;
      ++running;
    } else {
      reap();
    }
  }
  std::vector<DesignReport> reports;
  for (const auto& j : all) {
    for (const auto& e : fs::directory_iterator(j.dir)) {
      const auto fn = e.path().filename().string();
      if (fn.size() > 12 && fn.ends_with(".report.json")) reports.push_back(read_report(e.path().string()));
    }
  }
  if (!reports.empty()) {
    const auto csv = comparison_csv(compare_designs(reports));
    std::ofstream((fs::path(out) / "comparison.csv").string()) << csv;
    std::cout << csv;
  }
  return worst;
}

}  // namespace

// ------------------------------------------------------------------ manifest

Manifest parse_manifest(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("manifest must be a JSON object");
  static const std::set<std::string> keys = {"name", "preset", "strategy", "config", "solver", "out", "seed"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ConfigError("manifest: unknown key '" + k + "'");
  Manifest m;
  m.path = (fs::path(base_dir) / "manifest.json").string();
  try {
    m.name = j.value("name", std::string());
    m.preset = resolve(base_dir, j.at("preset").get<std::string>());
    m.strategy = j.at("strategy").get<std::string>();
    m.config = j.value("config", json::object());
    m.solver = j.value("solver", json::object());
    m.out = resolve(base_dir, j.value("out", std::string("out")));
    if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  auto m = parse_manifest(j, fs::path(path).parent_path().string());
  m.path = path;
  return m;
}

json resolved_config(const Manifest& m) {
  json out;
  out["name"] = run_name(m);
  out["preset"] = m.preset;
  out["strategy"] = m.strategy;
  out["config"] = merge_checked(strategy_defaults(m.strategy), m.config, m.strategy + " config");
  out["solver"] = merge_checked(solver_defaults(), m.solver, "solver config");
  out["out"] = m.out;
  if (m.strategy == "voronoi" && !m.seed) throw ConfigError("strategy 'voronoi' is stochastic: manifest needs a seed");
  out["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  return out;
}

RunOutcome execute_run(const Manifest& m, const std::string& out_dir) {
  const auto cfg = resolved_config(m);
  fs::create_directories(out_dir);
  const auto marker = fs::path(out_dir) / ".failed";
  fs::remove(marker);
  try {
    const auto preset = load_preset(m.preset);
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome r;
    std::map<std::string, std::string> exports;
    auto design = run_strategy(m, cfg, preset, out_dir, exports);
    const auto stored = float_rounded(design.densities);
    write_float_volume((fs::path(out_dir) / "design.f32").string(), element_volume(preset.domain.grid, stored));
    exports["design"] = "design.f32";
    auto ev = evaluate_design(stored, preset, solver_config(cfg.at("solver"), true), m.strategy);
    write_float_volume((fs::path(out_dir) / "vm.f32").string(), element_volume(preset.domain.grid, ev.von_mises));
    exports["vm"] = "vm.f32";
    r.report = std::move(ev.report);
    r.report.parameters = design.parameters;
    if (m.seed) r.report.parameters["seed"] = static_cast<double>(*m.seed);
    r.report.compliance_history = design.history;
    r.report.exports = exports;
    r.report.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.report_path = (fs::path(out_dir) / (run_name(m) + ".report.json")).string();
    write_report(r.report, r.report_path);
    return r;
  } catch (const std::exception& e) {
    std::ofstream(marker.string()) << e.what() << '\n';
    throw;
  }
}

// -------------------------------------------------------------------- scene

namespace {

struct VolumeHeader {
  std::array<int, 3> dims;
  int channels = 1;
  double spacing = 1.0;
  Vec3 origin;
  double lo = 0.0, hi = 0.0;
};

VolumeHeader inspect_volume(const std::string& path, const std::string& format) {
  VolumeHeader h;
  if (format == "SGLDVOX1") {
    std::vector<std::uint8_t> labels;
    const Grid g = read_voxel_file(path, labels);
    h.dims = {g.nx, g.ny, g.nz};
    h.spacing = g.spacing;
    h.origin = g.origin;
    h.hi = 1.0;
  } else if (format == "SGLDF32") {
    const auto v = read_float_volume(path);
    h.dims = {v.nx, v.ny, v.nz};
    h.channels = v.channels;
    h.spacing = v.spacing;
    h.origin = v.origin;
    if (!v.data.empty()) {
      const auto [a, b] = std::minmax_element(v.data.begin(), v.data.end());
      h.lo = *a;
      h.hi = *b;
    }
  } else {
    throw ConfigError("unknown volume format '" + format + "'");
  }
  return h;
}

}  // namespace

json export_viewer(const std::vector<std::string>& run_dirs, const std::string& bundle_dir) {
  if (run_dirs.empty()) throw ConfigError("export-viewer needs at least one --run directory");
  fs::create_directories(bundle_dir);
  json volumes = json::array();
  std::set<std::string> names;
  for (const auto& dir : run_dirs) {
    std::vector<fs::path> reports;
    if (!fs::is_directory(dir)) throw ConfigError("run directory " + dir + " does not exist");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().filename().string().ends_with(".report.json")) reports.push_back(e.path());
    if (reports.empty()) throw ConfigError("no *.report.json in " + dir);
    std::sort(reports.begin(), reports.end());
    for (const auto& rp : reports) {
      const auto report = read_report(rp.string());
      std::string run = rp.filename().string();
      run = run.substr(0, run.size() - std::string(".report.json").size());
      if (run_dirs.size() > 1) run = fs::path(dir).filename().string() + "/" + run;
      for (const auto& [key, rel] : report.exports) {
        const auto ext = fs::path(rel).extension().string();
        if (ext != ".f32" && ext != ".vox") continue;
        const auto src = fs::path(dir) / rel;
        if (!fs::exists(src)) throw ConfigError("report " + rp.string() + " exports missing volume " + src.string());
        const std::string format = ext == ".vox" ? "SGLDVOX1" : "SGLDF32";
        const auto h = inspect_volume(src.string(), format);
        std::string name = run + "/" + key;
        if (!names.insert(name).second) continue;  // a design shared by several load cases
        std::string file = name;
        std::replace(file.begin(), file.end(), '/', '_');
        file += ext;
        fs::copy_file(src, fs::path(bundle_dir) / file, fs::copy_options::overwrite_existing);
        const bool material = key == "design" || key == "material";
        json v = {{"name", name},
                  {"path", file},
                  {"format", format},
                  {"kind", material ? "material" : "scalar"},
                  {"dims", h.dims},
                  {"channels", h.channels},
                  {"spacing", h.spacing},
                  {"origin", {h.origin.x(), h.origin.y(), h.origin.z()}},
                  {"range", {h.lo, h.hi}}};
        if (material) {
          v["colormap"] = "grayscale";
          v["iso"] = 0.5;
        } else if (key == "deviation") {
          v["colormap"] = "white-brown-linear";
        } else {
          v["colormap"] = "viridis";
        }
        volumes.push_back(v);
      }
    }
  }
  json scene = {{"format", "sgld-scene"},
                {"version", 1},
                {"volumes", volumes},
                {"iso_default", 0.5},
                {"clip", {{"enabled", false}, {"depth", 0.0}}},
                {"camera", {{"azimuth_deg", 45.0}, {"elevation_deg", 30.0}, {"distance", 2.0}}},
                {"deviation_fade", {{"low", 0.0}, {"high", 1.0}}}};
  std::ofstream((fs::path(bundle_dir) / "scene.json").string()) << scene.dump(1) << '\n';
  validate_scene(bundle_dir);
  return scene;
}

void validate_scene(const std::string& bundle_dir) {
  const auto path = (fs::path(bundle_dir) / "scene.json").string();
  std::ifstream in(path);
  if (!in) throw ConfigError("bundle has no scene.json: " + path);
  json s;
  try {
    s = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  auto fail = [&](const std::string& msg) { throw ConfigError(path + ": " + msg); };
  try {
    if (s.at("format") != "sgld-scene" || s.at("version") != 1) fail("unsupported format or version");
    const auto& vols = s.at("volumes");
    if (!vols.is_array() || vols.empty()) fail("volumes must be a non-empty array");
    std::set<std::string> names;
    for (const auto& v : vols) {
      const auto name = v.at("name").get<std::string>();
      if (!names.insert(name).second) fail("duplicate volume name " + name);
      const auto kind = v.at("kind").get<std::string>();
      if (kind != "material" && kind != "scalar") fail(name + ": kind must be material or scalar");
      v.at("colormap").get<std::string>();
      const auto dims = v.at("dims").get<std::array<int, 3>>();
      if (std::any_of(dims.begin(), dims.end(), [](int d) { return d <= 0; })) fail(name + ": dims must be positive");
      if (!(v.at("spacing").get<double>() > 0.0)) fail(name + ": spacing must be positive");
      const auto file = fs::path(bundle_dir) / v.at("path").get<std::string>();
      if (!fs::exists(file)) fail(name + ": missing volume " + file.string());
      const auto h = inspect_volume(file.string(), v.at("format").get<std::string>());
      if (h.dims != dims) {
        std::ostringstream os;
        os << name << ": dims " << dims[0] << 'x' << dims[1] << 'x' << dims[2] << " do not match the payload "
           << h.dims[0] << 'x' << h.dims[1] << 'x' << h.dims[2];
        fail(os.str());
      }
    }
    const double depth = s.at("clip").at("depth").get<double>();
    if (!(depth >= 0.0 && depth <= 1.0)) fail("clip depth must lie in [0, 1]");
    s.at("clip").at("enabled").get<bool>();
    s.at("iso_default").get<double>();
  } catch (const json::exception& e) {
    fail(e.what());
  }
}

// --------------------------------------------------------------------- main

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Stiff lightweight infill benchmark"};
  app.require_subcommand(1);
  int threads = 0;
  bool quiet = false;
  app.add_option("--threads", threads, "worker threads (default: SGLD_THREADS or all cores)");
  app.add_flag("--quiet", quiet, "suppress warnings");

  std::string mesh, voxel, block, builtin, passive = "default", pname, out = ".";
  int res = 0, dilation = 0;
  double spacing = 1.0;
  std::size_t cap = kDefaultElementCap;
  std::vector<std::string> fix, load;
  auto* preset = app.add_subcommand("preset", "build a preset from a mesh, voxel model, block or builtin");
  preset->add_option("--mesh", mesh, "closed STL or OBJ mesh");
  preset->add_option("--voxel", voxel, "SGLDVOX1 voxel model");
  preset->add_option("--block", block, "solid block nx,ny,nz");
  preset->add_option("--builtin", builtin, "cantilever or sphere");
  preset->add_option("--res", res, "elements along the longest axis");
  preset->add_option("--spacing", spacing, "element size for --block");
  preset->add_option("--fix", fix, "fixation selector box:x0,y0,z0,x1,y1,z1 or sphere:cx,cy,cz,r");
  preset->add_option("--load", load, "load selector with force: box:...,f=fx,fy,fz");
  preset->add_option("--passive", passive, "none, all (boundary shell) or bc (loaded and fixed elements)");
  preset->add_option("--dilate", dilation, "extra passive dilation layers");
  preset->add_option("--name", pname, "preset name");
  preset->add_option("--element-cap", cap, "maximum element count");
  preset->add_option("--out", out, "output directory");

  std::string manifest, run_out;
  bool dry = false;
  auto* run = app.add_subcommand("run", "run a strategy from a JSON manifest");
  run->add_option("manifest", manifest, "run manifest")->required();
  run->add_option("--out", run_out, "output directory (overrides the manifest)");
  run->add_flag("--dry-run", dry, "print the resolved configuration and exit");

  std::string a_preset, a_design, a_name, a_dev, a_out = "analysis";
  std::vector<double> angles;
  double a_tol = 1e-6;
  auto* analyze = app.add_subcommand("analyze", "evaluate a design under modified loads or against a baseline");
  analyze->add_option("--preset", a_preset, "preset JSON")->required();
  analyze->add_option("--design", a_design, "design volume (.f32 densities or .vox material)")->required();
  analyze->add_option("--name", a_name, "design name in reports");
  analyze->add_option("--variable-load", angles, "Euler angles in degrees (repeat for a batch)")->expected(3)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  analyze->add_option("--deviation", a_dev, "baseline design volume, or 'solid'");
  analyze->add_option("--rel-tol", a_tol, "solver tolerance");
  analyze->add_option("--out", a_out, "output directory");

  std::string r_graph, r_preset, r_out = ".";
  int r_layers = 0, r_max = 8;
  double r_tol = 0.02;
  std::optional<double> r_target;
  auto* rasterize = app.add_subcommand("rasterize", "voxelize an edge graph onto a preset grid");
  rasterize->add_option("--graph", r_graph, "edge graph OBJ")->required();
  rasterize->add_option("--preset", r_preset, "preset JSON")->required();
  rasterize->add_option("--layers", r_layers, "thickening layers");
  rasterize->add_option("--volume-fraction", r_target, "match this volume fraction by choosing the layers");
  rasterize->add_option("--tolerance", r_tol, "absolute volume-fraction tolerance");
  rasterize->add_option("--max-layers", r_max, "largest thickness tried");
  rasterize->add_option("--out", r_out, "output directory");

  std::vector<std::string> runs;
  std::string bundle;
  auto* exportv = app.add_subcommand("export-viewer", "bundle run volumes with a scene.json for the viewer");
  exportv->add_option("--run", runs, "run or analysis directory (repeatable)")->required();
  exportv->add_option("--out", bundle, "bundle directory")->required();

  std::vector<std::string> manifests;
  int jobs = 1;
  std::string b_out = "bench", exe = "/proc/self/exe";
  auto* bench = app.add_subcommand("bench", "run several manifests in parallel processes and compare them");
  bench->add_option("--manifest", manifests, "run manifest (repeatable)")->required();
  bench->add_option("--jobs", jobs, "concurrent processes");
  bench->add_option("--out", b_out, "output directory");
  bench->add_option("--exe", exe, "executable used for the child runs")->group("");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (quiet) set_quiet(true);
  if (threads > 0) set_worker_threads(threads);

  if (*preset) return cmd_preset(mesh, voxel, block, builtin, res, spacing, fix, load, passive, dilation, pname, cap, out);
  if (*run) return cmd_run(manifest, run_out, dry);
  if (*analyze) {
    SolverConfig sc;
    sc.rel_tol = a_tol;
    return cmd_analyze(a_preset, a_design, a_name, angles, a_dev, a_out, sc);
  }
  if (*rasterize) return cmd_rasterize(r_graph, r_preset, r_layers, r_target, r_tol, r_max, r_out);
  if (*exportv) {
    const auto scene = export_viewer(runs, bundle);
    std::cout << (fs::path(bundle) / "scene.json").string() << " (" << scene["volumes"].size() << " volumes)\n";
    return kExitOk;
  }
  return cmd_bench(manifests, jobs, b_out, exe);
}

int main(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run_command(args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace infill::cli
