#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "temp_dir.hpp"

using namespace agdet;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "agdet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_line_cloud(const std::filesystem::path& path, bool constant_attention) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i) pts.push_back({double(i), 0, 0});
  const PointCloud cloud(pts);
  const AttentionField attn(cloud, std::vector<double>(5, constant_attention ? 1.0 : 0.0));
  io::write_ply(path, cloud, constant_attention ? &attn : nullptr);
}

Box3D cube(double x) { return Box3D({x, 0, 0}, {1, 1, 1}); }

}  // namespace

TEST_CASE("sample with fps on a line", "[cli]") {
  TempDir dir;
  write_line_cloud(dir / "line.ply", false);
  const Outcome r = run_cli({"sample", (dir / "line.ply").string(), "--method", "fps", "--k", "3", "--out",
                             (dir / "s").string()});
  REQUIRE(r.code == 0);
  CHECK(io::read_indices(dir / "s.indices.txt") == std::vector<std::size_t>{0, 4, 2});
  CHECK(io::read_ply(dir / "s.ply").cloud == PointCloud({{0, 0, 0}, {4, 0, 0}, {2, 0, 0}}));
}

TEST_CASE("sample with constant attention matches fps", "[cli]") {
  TempDir dir;
  write_line_cloud(dir / "line.ply", true);
  REQUIRE(run_cli({"sample", (dir / "line.ply").string(), "--k", "4", "--out", (dir / "ag").string()}).code == 0);
  REQUIRE(run_cli({"sample", (dir / "line.ply").string(), "--method", "fps", "--k", "4", "--out",
                   (dir / "fps").string()})
              .code == 0);
  CHECK(slurp(dir / "ag.indices.txt") == slurp(dir / "fps.indices.txt"));
}

TEST_CASE("sample lambda sweep writes one output per lambda", "[cli]") {
  TempDir dir;
  SceneSpec spec;
  spec.num_points = 400;
  io::write_scene(dir / "scene", generate(spec));
  const Outcome r = run_cli({"sample", (dir / "scene.ply").string(), "--k", "32", "--lambda", "0.5", "--lambda",
                             "0.8", "--lambda", "0.9", "--out", (dir / "q").string()});
  REQUIRE(r.code == 0);
  for (const char* tag : {"0.5", "0.8", "0.9"}) {
    const auto path = dir / ("q_lambda" + std::string(tag) + ".indices.txt");
    REQUIRE(std::filesystem::exists(path));
    CHECK(io::read_indices(path).size() == 32);
  }

  // the fast path and the oracle write identical files
  REQUIRE(run_cli({"sample", (dir / "scene.ply").string(), "--k", "32", "--method", "ag-oracle", "--out",
                   (dir / "o").string()})
              .code == 0);
  REQUIRE(run_cli({"sample", (dir / "scene.ply").string(), "--k", "32", "--out", (dir / "f").string()}).code == 0);
  CHECK(slurp(dir / "o.indices.txt") == slurp(dir / "f.indices.txt"));
  CHECK(slurp(dir / "o.ply") == slurp(dir / "f.ply"));
}

TEST_CASE("eval replays the AP fixture through files", "[cli]") {
  TempDir dir;
  io::write_detections(dir / "gt.json", DetectionSet({{cube(0), 0, 1.0}, {cube(5), 0, 1.0}}));
  io::write_detections(dir / "p.json", DetectionSet({{cube(0), 0, 0.9}, {cube(10), 0, 0.8}, {cube(5), 0, 0.7}}));
  const Outcome r = run_cli({"eval", "--preds", (dir / "p.json").string(), "--gt", (dir / "gt.json").string()});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string header, row, mean;
  std::getline(lines, header);
  std::getline(lines, row);
  std::getline(lines, mean);
  CHECK(header == "class,ap");
  CHECK(row.rfind("cab,0.8333333333", 0) == 0);
  CHECK(std::abs(std::stod(mean.substr(5)) - 5.0 / 6.0) < 1e-9);

  const Outcome mismatched = run_cli({"eval", "--preds", (dir / "p.json").string()});
  CHECK(mismatched.code == 2);
}

TEST_CASE("synth is reproducible", "[cli]") {
  TempDir dir;
  for (const char* stem : {"a", "b"}) {
    REQUIRE(run_cli({"synth", "--seed", "7", "--points", "500", "--out", (dir / stem).string()}).code == 0);
  }
  CHECK(slurp(dir / "a.ply") == slurp(dir / "b.ply"));
  CHECK(slurp(dir / "a.gt.json") == slurp(dir / "b.gt.json"));

  REQUIRE(run_cli({"synth", "--count", "2", "--points", "200", "--out", (dir / "m").string()}).code == 0);
  CHECK(std::filesystem::exists(dir / "m_000.ply"));
  CHECK(std::filesystem::exists(dir / "m_001.gt.json"));
}

TEST_CASE("perturb at level zero copies the cloud", "[cli]") {
  TempDir dir;
  SceneSpec spec;
  spec.num_points = 300;
  io::write_scene(dir / "scene", generate(spec));
  REQUIRE(run_cli({"perturb", (dir / "scene.ply").string(), "--noise-level", "0", "--out",
                   (dir / "same.ply").string()})
              .code == 0);
  CHECK(slurp(dir / "same.ply") == slurp(dir / "scene.ply"));
  REQUIRE(run_cli({"perturb", (dir / "scene.ply").string(), "--noise-level", "0.1", "--out",
                   (dir / "noisy.ply").string()})
              .code == 0);
  CHECK(slurp(dir / "noisy.ply") != slurp(dir / "scene.ply"));
}

TEST_CASE("agdemo runs every strategy", "[cli]") {
  TempDir dir;
  for (const char* strategy : {"last-layer", "sequential-4", "qd"}) {
    const auto out = dir / (std::string(strategy) + ".json");
    const Outcome r = run_cli({"agdemo", "--strategy", strategy, "--dim", "24", "--tokens", "16", "--layers", "2",
                               "--save-params", (dir / "p.json").string(), "--out", out.string()});
    REQUIRE(r.code == 0);
    CHECK(io::read_detections(out).size() == 16);
  }
  const Outcome qd = run_cli({"agdemo", "--dim", "24", "--tokens", "16", "--layers", "2", "--params",
                              (dir / "p.json").string(), "--out", (dir / "again.json").string()});
  REQUIRE(qd.code == 0);
  CHECK(qd.out.find("layer,w_level4") != std::string::npos);
  CHECK(slurp(dir / "again.json") == slurp(dir / "qd.json"));
}

TEST_CASE("bench reports oracle agreement", "[cli]") {
  const Outcome r = run_cli({"bench", "--n", "500", "--k", "16", "--spot-n", "300"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("method,n,k,seconds,oracle_match\n", 0) == 0);
  CHECK(r.out.find("ag,500,16,") != std::string::npos);
  CHECK(r.out.find(",no\n") == std::string::npos);
}

TEST_CASE("exit codes", "[cli]") {
  TempDir dir;
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"sample"}).code == 2);
  CHECK(run_cli({"sample", (dir / "missing.ply").string(), "--out", (dir / "x").string()}).code == 3);

  std::ofstream(dir / "bad.ply") << "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\n"
                                    "property double z\nend_header\n0 0 0\n";
  const Outcome truncated = run_cli({"sample", (dir / "bad.ply").string(), "--out", (dir / "x").string()});
  CHECK(truncated.code == 3);
  CHECK(truncated.err.find("line 9") != std::string::npos);

  write_line_cloud(dir / "line.ply", false);
  CHECK(run_cli({"sample", (dir / "line.ply").string(), "--out", (dir / "x").string()}).code == 2);  // no attention
  CHECK(run_cli({"sample", (dir / "line.ply").string(), "--method", "fps", "--k", "9", "--out",
                 (dir / "x").string()})
            .code == 2);
  CHECK(run_cli({"perturb", (dir / "line.ply").string(), "--noise-level", "2", "--out", (dir / "y.ply").string()})
            .code == 2);
}
