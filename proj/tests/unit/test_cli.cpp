#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "plumecast/pipeline.hpp"
#include "support/tiny_protocol.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "plumecast_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::string& args) {
  const auto out = workdir() / "stdout.txt", err = workdir() / "stderr.txt";
  const std::string cmd = std::string("\"") + PLUMECAST_EXE + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

fs::path tiny_config() {
  const auto path = workdir() / "tiny.json";
  if (!fs::exists(path)) {
    auto cfg = support::tiny_protocol();
    cfg.scaling.enabled = false;
    std::ofstream(path) << cfg.to_json().dump(2);
  }
  return path;
}

}  // namespace

TEST_CASE("usage errors") {
  auto help = run("--help");
  CHECK(help.code == 0);
  CHECK(help.out.find("run-experiment") != std::string::npos);
  CHECK(run("").code == 2);
  auto unknown = run("bake");
  CHECK(unknown.code == 2);
  CHECK(json::parse(unknown.err)["error"] == "usage");
  CHECK(run("partition --width 10").code == 2);
}

TEST_CASE("invalid config reports the field") {
  const auto path = workdir() / "bad.json";
  std::ofstream(path) << R"({"schema": 1, "base": "3dp-desk", "cases": {"width": "wide"}})";
  auto r = run("generate --config " + q(path) + " --out " + q(workdir() / "never"));
  CHECK(r.code == 2);
  auto e = json::parse(r.err);
  CHECK(e["field"] == "cases.width");
  CHECK(e.contains("message"));
  CHECK_FALSE(fs::exists(workdir() / "never"));

  std::ofstream(path) << "{not json";
  CHECK(run("generate --config " + q(path) + " --out " + q(workdir() / "never")).code == 2);
}

TEST_CASE("partition counts") {
  auto r = run("partition --width 2560 --height 2560 --box 256 --skip 16");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["count"] == 20736);
  r = run("partition --width 2560 --height 2560 --box 256 --skip 8");
  CHECK(json::parse(r.out)["count"] == 82944);
  r = run("partition --width 20 --height 20 --box 32 --skip 8");
  CHECK(r.code == 1);
  CHECK(json::parse(r.err)["error"] == "shape");
}

TEST_CASE("generate, simulate, trace, render, evaluate") {
  const auto cfg = tiny_config();
  const auto dir = workdir() / "case";
  REQUIRE(run("generate --config " + q(cfg) + " --out " + q(dir) + " --role test --seed 3").code == 0);
  for (const char* ch : {"p", "k", "i", "vx", "vy", "s", "s_o", "T"}) CHECK(fs::exists(dir / (std::string(ch) + ".lgf1")));
  const auto t_generated = slurp(dir / "T.lgf1");

  auto sim = run("simulate --config " + q(cfg) + " --case " + q(dir));
  REQUIRE(sim.code == 0);
  CHECK(json::parse(sim.out)["mass_balance_error"].get<double>() < 1e-8);

  auto tr = run("trace --case " + q(dir) + " --scheme rk4 --steps 300");
  REQUIRE(tr.code == 0);
  CHECK(json::parse(tr.out)["pumps"] == 2);
  CHECK(fs::exists(dir / "streamlines.jsonl"));
  CHECK(run("trace --case " + q(dir) + " --scheme euler").code == 2);

  REQUIRE(run("render --field " + q(dir / "T.lgf1") + " --out " + q(workdir() / "a.ppm") + " --colormap diverging").code == 0);
  REQUIRE(run("render --field " + q(dir / "T.lgf1") + " --out " + q(workdir() / "b.ppm") + " --colormap diverging").code == 0);
  CHECK(slurp(workdir() / "a.ppm") == slurp(workdir() / "b.ppm"));
  CHECK(slurp(workdir() / "a.ppm").substr(0, 2) == "P6");
  CHECK(run("render --field " + q(dir / "T.lgf1") + " --out " + q(workdir() / "c.pgm") + " --min 3 --max 1").code == 2);

  auto ev = run("evaluate --pred " + q(dir / "T.lgf1") + " --label " + q(dir / "T.lgf1") + " --channel T");
  REQUIRE(ev.code == 0);
  auto rep = json::parse(ev.out);
  CHECK(rep["channels"]["T"]["mae"] == 0.0);
  CHECK(rep["channels"]["T"]["pat_percent"] == 0.0);
  CHECK(slurp(dir / "T.lgf1") == t_generated);
}

TEST_CASE("experiment, inference and evaluation") {
  const auto cfg = tiny_config();
  const auto out = workdir() / "exp";
  auto rx = run("run-experiment --config " + q(cfg) + " --out " + q(out) + " --quiet --no-render");
  REQUIRE(rx.code == 0);
  CHECK(json::parse(rx.out)["ordering"].contains("holds"));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK_FALSE(fs::exists(out / "predictions" / "test" / "T_pipeline.ppm"));

  const auto inf_dir = workdir() / "inferred";
  auto inf = run("infer --case " + q(out / "cases" / "test") + " --models " + q(out / "models") + " --out " +
                 q(inf_dir) + " --config " + q(cfg));
  REQUIRE(inf.code == 0);
  CHECK(slurp(inf_dir / "T_pred.lgf1") == slurp(out / "predictions" / "test" / "T_pipeline.lgf1"));

  auto ev = run("evaluate --pred " + q(inf_dir / "T_pred.lgf1") + " --label " + q(out / "cases" / "test" / "T.lgf1") +
                " --channel T");
  REQUIRE(ev.code == 0);
  auto report = json::parse(slurp(out / "report.json"));
  const double mae = json::parse(ev.out)["channels"]["T"]["mae"].get<double>();
  CHECK(mae == doctest::Approx(report["test"]["pipeline"]["channels"]["T"]["mae"].get<double>()).epsilon(1e-6));

  CHECK(run("infer --case " + q(out / "cases" / "test") + " --models " + q(workdir() / "nowhere") + " --out " +
            q(inf_dir)).code == 1);
  CHECK(run("run-experiment --out " + q(out) + " --ablation dropout").code == 2);
}
