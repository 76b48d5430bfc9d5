#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "app.hpp"

namespace app = contlab::app;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("contlab-app-" + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

app::Json resolve_with(const std::string& preset, std::vector<std::string> overrides = {}) {
  app::ResolveInputs in;
  in.preset = preset;
  in.overrides = std::move(overrides);
  return app::resolve(in);
}

}  // namespace

TEST_CASE("every preset resolves to a complete config") {
  for (const auto& name : app::preset_names()) {
    const auto c = resolve_with(name);
    CHECK(c["preset"] == name);
    CHECK(c["forcing"].is_number());
    CHECK(c["plant"]["m"].is_number());
    CHECK(c["plant"]["k3"].is_number());
    CHECK(c["hbm"]["omega_start"].is_number());
  }
  CHECK_THROWS_AS(app::preset("no-such-preset"), app::ConfigError);
}

TEST_CASE("overrides are applied last and parsed as JSON") {
  const auto c = resolve_with("duffing-f1", {"hbm.h=9", "methods.pll.mode=backbone", "forcing=2.5"});
  CHECK(c["hbm"]["h"] == 9);
  CHECK(c["methods"]["pll"]["mode"] == "backbone");
  CHECK(c["forcing"] == 2.5);
}

TEST_CASE("unknown keys and type mismatches are rejected") {
  CHECK_THROWS_AS(resolve_with("duffing-f1", {"hbm.harmonics=9"}), app::ConfigError);
  CHECK_THROWS_AS(resolve_with("duffing-f1", {"hbm.h=\"many\""}), app::ConfigError);
  CHECK_THROWS_AS(resolve_with("duffing-f1", {"no_equals_sign"}), app::ConfigError);
  app::ResolveInputs in;
  in.file = app::Json{{"plant", {{"mass", 1.0}}}};
  CHECK_THROWS_AS(app::resolve(in), app::ConfigError);
}

TEST_CASE("file settings sit between preset and overrides") {
  app::ResolveInputs in;
  in.file = app::Json{{"preset", "duffing-f3"}, {"hbm", {{"h", 11}}}};
  in.overrides = {"hbm.step=0.01"};
  const auto c = app::resolve(in);
  CHECK(c["forcing"] == 3.0);
  CHECK(c["hbm"]["h"] == 11);
  CHECK(c["hbm"]["step"] == 0.01);
}

TEST_CASE("seed replaces every random stream") {
  app::ResolveInputs in;
  in.preset = "duffing-f1";
  in.seed = 77;
  const auto c = app::resolve(in);
  CHECK(c["plant"]["seed"] == 77);
  CHECK(c["oracle"]["seed"] == 77);
}

TEST_CASE("digest depends on subcommand and config only") {
  const auto a = resolve_with("duffing-f1");
  const auto b = resolve_with("duffing-f1");
  CHECK(app::config_digest("hbm", a) == app::config_digest("hbm", b));
  CHECK(app::config_digest("hbm", a) != app::config_digest("sws", a));
  CHECK(app::config_digest("hbm", a) != app::config_digest("hbm", resolve_with("duffing-f1", {"hbm.h=9"})));
}

TEST_CASE("missing required keys fail without leaving a directory") {
  const auto root = scratch("missing");
  const auto res = app::run("hbm", app::resolve({}), root);
  CHECK(res.exit_code == 1);
  CHECK(res.error.find("missing required key") != std::string::npos);
  CHECK_FALSE(fs::exists(root / ("hbm-" + app::config_digest("hbm", app::resolve({})))));
  fs::remove_all(root);
}

TEST_CASE("hbm run writes branch and manifest under the digest directory") {
  const auto root = scratch("hbm");
  const auto c = resolve_with("duffing-f1", {"hbm.h=5", "hbm.omega_end=2"});
  const auto res = app::run("hbm", c, root);
  REQUIRE(res.exit_code == 0);
  CHECK(res.directory == root / ("hbm-" + app::config_digest("hbm", c)));
  CHECK(fs::exists(res.directory / "branch.csv"));
  std::ifstream f(res.directory / "manifest.json");
  const auto m = app::Json::parse(f);
  CHECK(m["subcommand"] == "hbm");
  CHECK(m["config"] == c);
  CHECK(m["exit_code"] == 0);
  CHECK(m["diagnostics"]["folds"].empty());
  fs::remove_all(root);
}

TEST_CASE("output root honours the environment") {
  ::unsetenv("CONTLAB_OUT");
  CHECK(app::output_root("runs") == fs::path("runs"));
  ::setenv("CONTLAB_OUT", "/tmp/elsewhere", 1);
  CHECK(app::output_root("runs") == fs::path("/tmp/elsewhere"));
  ::unsetenv("CONTLAB_OUT");
}
