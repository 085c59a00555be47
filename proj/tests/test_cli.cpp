/* Copyright 2026 The qtraj Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qtraj/cli.hpp"
#include "qtraj/config.hpp"

using namespace qtraj;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "qtraj");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fresh scratch directory removed on scope exit.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name)
      : dir(fs::temp_directory_path() / ("qtraj_test_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

} // namespace

TEST_CASE("config text parsing") {
  RunConfig c;
  apply_config_text(c, "# comment\nx1 = 2.5\n\nr=1 # trailing\ngrid-dx = 0.05\nn = 2e5\nmeasure = p\n", "t.cfg");
  CHECK(c.spec.x1 == 2.5);
  CHECK(c.spec.r == 1.0);
  CHECK(c.grid_dx == 0.05);
  CHECK(c.n_samples == 200000);
  CHECK(c.setting == Setting::MeasureP);

  RunConfig d;
  try {
    apply_config_text(d, "x1 = 1\nnot a pair\n", "bad.cfg");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.cfg:2:") == 0);
  }
  CHECK_THROWS_WITH_AS(apply_config_text(d, "colour = red\n", "c.cfg"),
                       doctest::Contains("c.cfg:1: unknown key"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(d, "x1 = abc\n", "c.cfg"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(d, "n = 1.5\n", "c.cfg"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(d, "= 3\n", "c.cfg"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(d, "integrator = rk4\n", "c.cfg"), ConfigError);
}

TEST_CASE("cat amplitude sets the separation") {
  RunConfig c;
  c.set("alpha0", "2");
  CHECK(c.spec.x1 == 4.0);
  CHECK(c.spec.r == 0.0);
}

TEST_CASE("times scale with the gain") {
  RunConfig c;
  c.g = 2.0;
  c.gtf = 4.0;
  c.gdt = 0.1;
  const MeasurementConfig m = c.measurement();
  CHECK(m.t_f == doctest::Approx(2.0));
  CHECK(m.dt == doctest::Approx(0.05));
  CHECK(m.n_steps() == 40);
  c.g = 0.0;
  CHECK_THROWS_AS((void)c.measurement(), ModelError);
}

TEST_CASE("seed fallback order") {
  ::unsetenv("QTRAJ_SEED");
  CHECK(resolve_seed(std::nullopt) == 1);
  ::setenv("QTRAJ_SEED", "99", 1);
  CHECK(resolve_seed(std::nullopt) == 99);
  CHECK(resolve_seed(5) == 5);
  ::setenv("QTRAJ_SEED", "x", 1);
  CHECK_THROWS_AS(resolve_seed(std::nullopt), ConfigError);
  ::unsetenv("QTRAJ_SEED");
}

TEST_CASE("entries round-trip through the parser") {
  RunConfig c;
  c.spec.x1 = 0.1 + 0.2;
  c.spec.c1_sq = 1.0 / 3.0;
  c.seed = 12345;
  c.setting = Setting::MeasureP;
  RunConfig d;
  for (const auto& [k, v] : c.entries()) d.set(k, v);
  CHECK(d.entries() == c.entries());
  CHECK(d.spec.x1 == c.spec.x1);
  CHECK(d.spec.c1_sq == c.spec.c1_sq);
  CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("simulate writes paths and a manifest") {
  Scratch s("simulate");
  const auto r = run({"simulate", "--x1", "8", "--r", "2", "--gtf", "2", "--n", "40",
                      "--seed", "7", "--out-dir", s / "out"});
  REQUIRE(r.code == kExitOk);
  const std::string csv = slurp(s / "out/paths.csv");
  CHECK(csv.rfind("sample_id,t,x,p,hill_label\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 40 * 21);
  const auto m = nlohmann::json::parse(slurp(s / "out/manifest.json"));
  CHECK(m["command"] == "simulate");
  CHECK(m["seed"] == 7);
  CHECK(m["version"] == kVersion);
  CHECK(m["config"]["x1"] == "8");
  CHECK(fs::directory_iterator(s.dir / "out") != fs::directory_iterator());
  for (const auto& e : fs::directory_iterator(s.dir / "out")) {
    CHECK(e.path().filename().string().find(".partial") == std::string::npos);
  }
}

TEST_CASE("manifest rerun is byte-identical") {
  Scratch s("roundtrip");
  REQUIRE(run({"simulate", "--x1", "1", "--n", "300", "--seed", "3", "--measure", "p",
               "--out-dir", s / "a"}).code == kExitOk);
  REQUIRE(run({"simulate", "--config", s / "a/manifest.json", "--out-dir", s / "b"}).code == kExitOk);
  CHECK(slurp(s / "a/paths.csv") == slurp(s / "b/paths.csv"));
  REQUIRE(run({"simulate", "--x1", "1", "--n", "300", "--seed", "3", "--measure", "p",
               "--workers", "1", "--out-dir", s / "c"}).code == kExitOk);
  CHECK(slurp(s / "a/paths.csv") == slurp(s / "c/paths.csv"));
}

TEST_CASE("configuration errors leave no outputs") {
  Scratch s("errors");
  auto r = run({"simulate", "--config", s / "missing.cfg", "--out-dir", s / "o1"});
  CHECK(r.code == kExitConfig);
  CHECK_FALSE(fs::exists(s / "o1"));

  r = run({"simulate", "--r", "9", "--out-dir", s / "o2"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("squeezing") != std::string::npos);
  CHECK_FALSE(fs::exists(s / "o2"));

  std::ofstream(s / "bad.cfg") << "x1 = 1\nwhat\n";
  r = run({"verify", "--config", s / "bad.cfg", "--out-dir", s / "o3"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("bad.cfg:2:") != std::string::npos);
  CHECK_FALSE(fs::exists(s / "o3"));

  r = run({"simulate", "--alpha0", "2", "--x1", "1", "--out-dir", s / "o4"});
  CHECK(r.code == kExitConfig);
  r = run({"simulate", "--bogus"});
  CHECK(r.code == kExitConfig);
  r = run({});
  CHECK(r.code == kExitConfig);
}

TEST_CASE("verify passes and the shifted control fails") {
  Scratch s("verify");
  auto r = run({"verify", "--n", "50000", "--seed", "2", "--out-dir", s / "ok"});
  CHECK(r.code == kExitOk);
  const auto j = nlohmann::json::parse(slurp(s / "ok/chi2.json"));
  CHECK(j["pass"] == true);
  CHECK(j["per_slice"].size() == 31);

  r = run({"verify", "--n", "50000", "--shift-x1", "0.5", "--out-dir", s / "bad"});
  CHECK(r.code == kExitFail);
  CHECK(nlohmann::json::parse(slurp(s / "bad/chi2.json"))["pass"] == false);
}

TEST_CASE("born, postselect and marginal commands") {
  Scratch s("analysis");
  auto r = run({"born", "--x1", "4", "--gtf", "4", "--n", "20000", "--out-dir", s / "born"});
  CHECK(r.code == kExitOk);
  const auto b = nlohmann::json::parse(slurp(s / "born/born.json"));
  CHECK(std::abs(b["f_plus"].get<double>() - 0.5) < 0.02);

  r = run({"postselect", "--r", "0", "--gtf", "4", "--n", "20000", "--sweep-x1", "1,2",
           "--oracle", "--out-dir", s / "post"});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(s / "post/postselect.json"));
  CHECK(fs::exists(s / "post/qplus.csv"));

  r = run({"marginal", "--points", "101", "--out-dir", s / "marg"});
  CHECK(r.code == kExitOk);
  CHECK(slurp(s / "marg/marginal.csv").rfind("curve,u,density\n", 0) == 0);
}
