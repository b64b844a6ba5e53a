#include "infill/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace infill;
namespace fs = std::filesystem;

namespace {

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "infillbench");
  args.insert(args.begin() + 1, "--quiet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::main(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() / ("infill_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
    ASSERT_EQ(invoke({"preset", "--block", "16,8,8", "--fix", "box:-0.1,-0.1,-0.1,0.1,8.1,8.1", "--load",
                   "box:15.9,-0.1,-0.1,16.1,8.1,0.1,f=0,0,-1", "--passive", "all", "--name", "cant", "--out",
                   (root / "presets").string()}),
              0);
    preset = (root / "presets" / "cant.preset.json").string();
  }
  void TearDown() override { fs::remove_all(root); }

  std::string manifest(const std::string& name, const std::string& body, const std::string& file = "") {
    const auto p = root / ((file.empty() ? name : file) + ".json");
    write(p, "{\"preset\": \"presets/cant.preset.json\", \"name\": \"" + name + "\", " + body + "}");
    return p.string();
  }

  fs::path root;
  std::string preset;
};

}  // namespace

TEST_F(Cli, PresetIsDeterministicAndNeedsFixation) {
  const auto first = slurp(preset);
  const auto labels = slurp(root / "presets" / "cant.labels.vox");
  ASSERT_EQ(invoke({"preset", "--block", "16,8,8", "--fix", "box:-0.1,-0.1,-0.1,0.1,8.1,8.1", "--load",
                 "box:15.9,-0.1,-0.1,16.1,8.1,0.1,f=0,0,-1", "--passive", "all", "--name", "cant", "--out",
                 (root / "presets").string()}),
            0);
  EXPECT_EQ(slurp(preset), first);
  EXPECT_EQ(slurp(root / "presets" / "cant.labels.vox"), labels);
  EXPECT_EQ(invoke({"preset", "--block", "4,4,4", "--load", "box:3.9,-1,-1,4.1,5,5,f=0,0,-1", "--out", root.string()}),
            cli::kExitConfig);
  EXPECT_EQ(invoke({"preset", "--block", "4,4,4", "--fix", "sphere:0,0,0,0", "--load", "box:3.9,-1,-1,4.1,5,5,f=0,0,-1",
                 "--out", root.string()}),
            cli::kExitConfig);
  EXPECT_EQ(invoke({"preset"}), cli::kExitConfig);
  EXPECT_EQ(invoke({"frobnicate"}), cli::kExitConfig);
}

TEST_F(Cli, ManifestValidationAndDryRun) {
  EXPECT_EQ(invoke({"run", manifest("bad", "\"strategy\": \"magic\"")}), cli::kExitConfig);
  EXPECT_EQ(invoke({"run", manifest("key", "\"strategy\": \"topopt\", \"config\": {\"volume\": 0.3}")}), cli::kExitConfig);
  EXPECT_EQ(invoke({"run", manifest("type", "\"strategy\": \"topopt\", \"config\": {\"max_iters\": \"ten\"}")}),
            cli::kExitConfig);
  EXPECT_EQ(invoke({"run", manifest("noseed", "\"strategy\": \"voronoi\"")}), cli::kExitConfig);
  // below the passive shell fraction
  EXPECT_EQ(invoke({"run", manifest("shell", "\"strategy\": \"topopt\", \"config\": {\"volume_fraction\": 0.3}")}),
            cli::kExitConfig);
  const auto m = manifest("dry", "\"strategy\": \"topopt\", \"out\": \"runs/dry\"");
  ::testing::internal::CaptureStdout();
  EXPECT_EQ(invoke({"run", m, "--dry-run"}), 0);
  const auto out = ::testing::internal::GetCapturedStdout();
  const auto resolved = nlohmann::json::parse(out);
  EXPECT_EQ(resolved["config"]["volume_fraction"], 0.3);
  EXPECT_EQ(resolved["solver"]["rel_tol"], 1e-3);
  EXPECT_FALSE(fs::exists(root / "runs" / "dry"));
}

TEST_F(Cli, TopoptRunOnCubeEmitsReport) {
  ASSERT_EQ(invoke({"preset", "--block", "16,16,16", "--fix", "box:-0.1,-0.1,-0.1,0.1,16.1,16.1", "--load",
                 "box:15.9,-0.1,-0.1,16.1,16.1,0.1,f=0,0,-1", "--name", "cube", "--out", (root / "presets").string()}),
            0);
  write(root / "topo.json",
        R"({"preset": "presets/cube.preset.json", "strategy": "topopt", "config": {"max_iters": 15, "snapshot_every": 5}, "out": "runs/topo"})");
  ASSERT_EQ(invoke({"run", (root / "topo.json").string()}), 0);
  const auto report = read_report((root / "runs" / "topo" / "topopt.report.json").string());
  EXPECT_GT(report.compliance, 0.0);
  EXPECT_NEAR(report.volume_fraction, 0.3, 1e-3);
  EXPECT_EQ(report.compliance_history.size(), 15u);
  EXPECT_TRUE(fs::exists(root / "runs" / "topo" / "design.f32"));
  EXPECT_TRUE(fs::exists(root / "runs" / "topo" / "vm.f32"));
  EXPECT_TRUE(fs::exists(root / "runs" / "topo" / "history.csv"));
  EXPECT_EQ(std::distance(fs::directory_iterator(root / "runs" / "topo" / "snapshots"), fs::directory_iterator()), 3);
  EXPECT_FALSE(fs::exists(root / "runs" / "topo" / ".failed"));
}

TEST_F(Cli, FailuresLeaveMarkerAndExitCodes) {
  const auto missing = manifest("imp", R"("strategy": "import", "config": {"graph": "nope.obj"}, "out": "runs/imp")");
  EXPECT_EQ(invoke({"run", missing}), cli::kExitConfig);
  EXPECT_TRUE(fs::exists(root / "runs" / "imp" / ".failed"));

  write(root / "g.obj", "v 0.5 4 4\nv 15.5 4 4\nl 1 2\n");
  const auto stuck = manifest("num", R"("strategy": "import", "config": {"graph": "g.obj"},
      "solver": {"max_cg_iters": 1, "eval_rel_tol": 1e-12}, "out": "runs/num")");
  EXPECT_EQ(invoke({"run", stuck}), cli::kExitNumerical);
  const auto msg = slurp(root / "runs" / "num" / ".failed");
  EXPECT_NE(msg.find("did not reach"), std::string::npos);
  EXPECT_TRUE(fs::exists(root / "runs" / "num" / "material.vox"));  // partial artifacts kept

  const auto ok = manifest("num", R"("strategy": "import", "config": {"graph": "g.obj"}, "out": "runs/num")");
  EXPECT_EQ(invoke({"run", ok}), 0);
  EXPECT_FALSE(fs::exists(root / "runs" / "num" / ".failed"));
}

TEST_F(Cli, IdenticalManifestGivesIdenticalHash) {
  const auto a = manifest("va", R"("strategy": "voronoi", "seed": 11, "config": {"volume_fraction": 0.8}, "out": "runs/a")");
  const auto b = manifest("va", R"("strategy": "voronoi", "seed": 11, "config": {"volume_fraction": 0.8}, "out": "runs/b")", "vb");
  ASSERT_EQ(invoke({"run", a}), 0);
  ASSERT_EQ(invoke({"run", b}), 0);
  const auto ra = read_report((root / "runs" / "a" / "va.report.json").string());
  const auto rb = read_report((root / "runs" / "b" / "va.report.json").string());
  EXPECT_EQ(ra.hash(), rb.hash());
  EXPECT_EQ(ra.to_json()["hash"], rb.to_json()["hash"]);
  const auto c = manifest("va", R"("strategy": "voronoi", "seed": 12, "config": {"volume_fraction": 0.8}, "out": "runs/c")", "vc");
  ASSERT_EQ(invoke({"run", c}), 0);
  EXPECT_NE(read_report((root / "runs" / "c" / "va.report.json").string()).hash(), ra.hash());
}

TEST_F(Cli, AnalyzeVariableLoadDeviationAndBatch) {
  const auto m = manifest("topo", R"("strategy": "topopt", "config": {"max_iters": 10, "snapshot_every": 0, "volume_fraction": 0.9}, "out": "runs/topo")");
  ASSERT_EQ(invoke({"run", m}), 0);
  const auto base = read_report((root / "runs" / "topo" / "topo.report.json").string());
  const auto design = (root / "runs" / "topo" / "design.f32").string();

  ASSERT_EQ(invoke({"analyze", "--preset", preset, "--design", design, "--variable-load", "0", "0", "0", "--deviation",
                 design, "--out", (root / "an0").string()}),
            0);
  const auto zero = read_report((root / "an0" / "case0.report.json").string());
  EXPECT_EQ(zero.compliance, base.compliance);
  ASSERT_TRUE(zero.deviation.has_value());
  const auto dev = read_float_volume((root / "an0" / "case0_deviation.f32").string());
  for (float v : dev.data) EXPECT_EQ(v, 0.0f);

  ASSERT_EQ(invoke({"analyze", "--preset", preset, "--design", design, "--variable-load", "0", "0", "0",
                 "--variable-load", "15", "0", "0", "--variable-load", "30", "0", "0", "--variable-load", "45", "0",
                 "0", "--deviation", "solid", "--out", (root / "an4").string()}),
            0);
  const auto csv = slurp(root / "an4" / "comparison.csv");
  EXPECT_EQ(lines(csv), 5u);
  EXPECT_NE(csv.find("design@45,0,0"), std::string::npos);
  EXPECT_EQ(invoke({"analyze", "--preset", preset, "--design", design, "--variable-load", "1", "2", "--out",
                 (root / "bad").string()}),
            cli::kExitConfig);
}

TEST_F(Cli, ExportViewerBundle) {
  write(root / "g.obj", "v 0.5 4 4\nv 15.5 4 4\nl 1 2\n");
  const auto m = manifest("imp", R"("strategy": "import", "config": {"graph": "g.obj", "thickness_layers": 1}, "out": "runs/imp")");
  ASSERT_EQ(invoke({"run", m}), 0);
  const auto design = (root / "runs" / "imp" / "design.f32").string();
  ASSERT_EQ(invoke({"analyze", "--preset", preset, "--design", design, "--deviation", "solid", "--out",
                 (root / "runs" / "an").string()}),
            0);
  const auto bundle = root / "bundle";
  const auto scene = cli::export_viewer({(root / "runs" / "imp").string(), (root / "runs" / "an").string()},
                                        bundle.string());
  EXPECT_NO_THROW(cli::validate_scene(bundle.string()));
  std::set<std::string> names;
  for (const auto& v : scene["volumes"]) names.insert(v["name"].get<std::string>());
  const std::set<std::string> expected = {"imp/imp/design", "imp/imp/material", "imp/imp/vm", "an/case0/design",
                                          "an/case0/vm", "an/case0/deviation"};
  EXPECT_EQ(names, expected);
  for (const auto& v : scene["volumes"]) {
    const auto name = v["name"].get<std::string>();
    const bool material = name.ends_with("design") || name.ends_with("material");
    EXPECT_EQ(v["kind"], material ? "material" : "scalar");
    if (name.ends_with("deviation")) EXPECT_EQ(v["colormap"], "white-brown-linear");
    EXPECT_EQ(v["dims"], nlohmann::json({16, 8, 8}));
  }
  // the bundle on disk lists exactly the copied volumes
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(bundle)) files += e.path().filename() != "scene.json";
  EXPECT_EQ(files, expected.size());

  // CLI wiring
  EXPECT_EQ(invoke({"export-viewer", "--run", (root / "runs" / "imp").string(), "--out", (root / "b2").string()}), 0);
  EXPECT_EQ(invoke({"export-viewer", "--run", (root / "nowhere").string(), "--out", (root / "b3").string()}),
            cli::kExitConfig);

  // a missing volume, then mismatched dims, make the bundle invalid
  fs::remove(bundle / "an_case0_vm.f32");
  EXPECT_THROW(cli::validate_scene(bundle.string()), ConfigError);
  fs::copy_file(bundle / "an_case0_deviation.f32", bundle / "an_case0_vm.f32");
  EXPECT_NO_THROW(cli::validate_scene(bundle.string()));
  auto s = nlohmann::json::parse(slurp(bundle / "scene.json"));
  s["volumes"][0]["dims"] = {16, 8, 9};
  write(bundle / "scene.json", s.dump());
  try {
    cli::validate_scene(bundle.string());
    ADD_FAILURE() << "dims mismatch accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("16x8x9"), std::string::npos);
  }
}

TEST_F(Cli, RasterizeAndBenchFanOut) {
  write(root / "g.obj", "v 0.5 4 4\nv 15.5 4 4\nl 1 2\nv 8 0.5 4\nv 8 7.5 4\nl 3 4\n");
  ASSERT_EQ(invoke({"rasterize", "--graph", (root / "g.obj").string(), "--preset", preset, "--volume-fraction", "0.75",
                 "--out", (root / "r").string()}),
            0);
  EXPECT_TRUE(fs::exists(root / "r" / "material.vox"));

  const auto a = manifest("one", R"("strategy": "import", "config": {"graph": "g.obj"})");
  const auto b = manifest("two", R"("strategy": "import", "config": {"graph": "g.obj", "thickness_layers": 1})");
  ASSERT_EQ(invoke({"bench", "--manifest", a, "--manifest", b, "--jobs", "2", "--exe", INFILLBENCH_EXE, "--out",
                 (root / "bench").string()}),
            0);
  const auto csv = slurp(root / "bench" / "comparison.csv");
  EXPECT_EQ(lines(csv), 3u);
  // thicker struts are stiffer: "two" sorts first
  EXPECT_LT(csv.find("\nimport,"), csv.size());
  const auto r1 = read_report((root / "bench" / "one" / "one.report.json").string());
  const auto r2 = read_report((root / "bench" / "two" / "two.report.json").string());
  EXPECT_LT(r2.compliance, r1.compliance);
}
