#include "rlc/cli.hpp"
#include "rlc/spec_io.hpp"

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rlc;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = RLC_FIXTURE_DIR;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("rlc_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing " << p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json json_file(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Last column of a CSV body, one entry per row.
std::vector<double> last_column(const fs::path& p) {
  std::vector<double> v;
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) v.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  return v;
}

}  // namespace

TEST_CASE("exit codes") {
  const auto dir = scratch("codes");
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"solve", "--bogus"}).code == 1);
  CHECK(run({"solve", "--spec", (dir / "missing.json").string(), "--out", dir.string()}).code == 1);
  CHECK(run({"solve", "--spec", (kFixtures / "exit_2state.json").string(), "--out", dir.string()}).code == 0);

  // Negative cost with a slow exit cannot converge.
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << R"({"n_states":2,"alpha":0,"kind":"fe","terminal_states":[1],
    "q":[-1,0],"q_final":[0,0],
    "passive":[{"from":0,"to":0,"prob":0.99},{"from":0,"to":1,"prob":0.01},{"from":1,"to":1,"prob":1}]})";
  const auto r = run({"solve", "--spec", (dir / "bad.json").string(), "--out", dir.string(), "--max-iter", "5000"});
  CHECK(r.code == 2);
  CHECK(r.err.find("q >= 0, alpha <= 1") != std::string::npos);
}

TEST_CASE("solve writes values that match the closed form") {
  const auto dir = scratch("solve");
  REQUIRE(run({"solve", "--spec", (kFixtures / "exit_2state.json").string(), "--alpha", "0,0.5", "--out",
               dir.string()})
              .code == 0);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "policy_a0.5.csv"));
  const auto report = json_file(dir / "report_a0.5.json");
  CHECK(report.contains("iterations"));
  const double v0 = last_column(dir / "value_a0.5.csv")[0];
  CHECK(v0 == doctest::Approx(testing::exit_fixture_value(0.4, 0.5)).epsilon(1e-12));
}

TEST_CASE("sampling is byte-identical across reruns and replay") {
  const auto a = scratch("sample_a");
  const auto b = scratch("sample_b");
  const auto c = scratch("sample_c");
  const std::vector<std::string> base{"sample", "--spec", (kFixtures / "exit_2state.json").string(),
                                      "--n", "500", "--seed", "11", "--write-samples", "--alpha", "0.5"};
  auto args_a = base;
  args_a.insert(args_a.end(), {"--out", a.string()});
  auto args_b = base;
  args_b.insert(args_b.end(), {"--out", b.string(), "--threads", "3"});
  REQUIRE(run(args_a).code == 0);
  REQUIRE(run(args_b).code == 0);
  CHECK(slurp(a / "samples_a0.5.csv") == slurp(b / "samples_a0.5.csv"));
  CHECK(slurp(a / "path_integral_a0.5.json") == slurp(b / "path_integral_a0.5.json"));

  const auto manifest = json_file(a / "manifest.json");
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["inputs"].size() == 1);
  CHECK(manifest["inputs"][0]["sha256"].get<std::string>().size() == 64);
  REQUIRE(run({"replay", "--manifest", (a / "manifest.json").string(), "--out", c.string()}).code == 0);
  CHECK(slurp(a / "samples_a0.5.csv") == slurp(c / "samples_a0.5.csv"));
}

TEST_CASE("compose with a single unit-weight component reproduces the solve") {
  const auto dir = scratch("compose");
  const auto spec = (kFixtures / "exit_2state.json").string();
  REQUIRE(run({"compose", "--component", spec, "--weights", "1", "--out", dir.string()}).code == 0);
  REQUIRE(run({"solve", "--spec", spec, "--out", dir.string()}).code == 0);
  const auto composite = last_column(dir / "composite_value_a0.5.csv");
  const auto direct = last_column(dir / "value_a0.5.csv");
  REQUIRE(composite.size() == direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(composite[i] == doctest::Approx(direct[i]).epsilon(1e-12));
  CHECK(run({"compose", "--component", spec, "--weights", "0.5,0.5", "--out", dir.string()}).code == 1);
}

TEST_CASE("game check on the two-state fixture") {
  const auto dir = scratch("game");
  REQUIRE(run({"game-check", "--spec", (kFixtures / "game_2state.json").string(), "--out", dir.string()}).code == 0);
  const auto j = json_file(dir / "game_check_a0.5.json");
  CHECK(j["gap"].get<double>() <= 1e-2);
}

TEST_CASE("alpha 0 and a tiny alpha agree") {
  const auto dir = scratch("tiny");
  REQUIRE(run({"solve", "--spec", (kFixtures / "exit_2state.json").string(), "--alpha", "0,1e-9", "--out",
               dir.string()})
              .code == 0);
  const double va = last_column(dir / "value_a0.csv")[0];
  const double vb = last_column(dir / "value_a1e-09.csv")[0];
  CHECK(va > 0.5);
  CHECK(std::abs(va - vb) < 1e-6);
}

TEST_CASE("validate and discretize") {
  const auto dir = scratch("validate");
  CHECK(run({"validate", "--spec", (kFixtures / "game_2state.json").string(), "--out", dir.string()}).code == 0);
  CHECK(json_file(dir / "validation.json").contains("warnings"));
  CHECK(run({"discretize", "--preset", "hill-car", "--grid", "11x11", "--out", dir.string()}).code == 0);
  // Coarse hill-car grids can split into several closed classes, so only
  // the structure is checked here.
  CHECK(json_file(dir / "hill-car.json")["n_states"] == 121);
  CHECK(run({"discretize", "--preset", "hill-car", "--grid", "11by11", "--out", dir.string()}).code == 1);
}
