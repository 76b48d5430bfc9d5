#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "app.hpp"

namespace app = contlab::app;

namespace {

const std::map<std::string, std::string> kHelp{
    {"hbm", "Harmonic balance continuation of the open-loop response"},
    {"sws", "Swept-sine test: up and down sweeps with jump detection"},
    {"sts", "Stepped-sine test over a frequency grid"},
    {"cbc-fd", "Control-based continuation with a finite-difference Newton solver"},
    {"scbc", "Simplified control-based continuation: S-curve or force surface"},
    {"pll", "Phase-locked loop sweep of the response phase"},
    {"rct", "Response-controlled test over a frequency and amplitude grid"},
    {"acbc", "Arclength control-based continuation along an ellipse"},
    {"slice", "Slice a force surface at a constant forcing level"},
    {"compare", "Compare a test branch with a reference branch"},
    {"oracle", "Time-integration oracle for periodic responses"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"contlab: nonlinear frequency response testing workbench"};
  cli.require_subcommand(1);

  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  bool print_config = false;

  for (const auto& name : app::subcommands()) {
    auto* sub = cli.add_subcommand(name, kHelp.at(name));
    sub->add_option("-c,--config", config_path, "JSON run config");
    sub->add_option("-p,--preset", preset, "Scenario preset")->check(CLI::IsMember(app::preset_names()));
    sub->add_option("-s,--set", overrides, "Dotted-path override key=value")->allow_extra_args(false);
    sub->add_option("--seed", seed, "Seed for every random stream");
    sub->add_option("-o,--out", out_dir, "Output root (CONTLAB_OUT wins)");
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string subcommand = cli.get_subcommands().front()->get_name();
  const auto* sub = cli.get_subcommands().front();

  app::Json config;
  try {
    app::ResolveInputs in;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw app::ConfigError("cannot open config " + config_path);
      in.file = app::Json::parse(f, nullptr, false);
      if (in.file->is_discarded()) throw app::ConfigError("config " + config_path + " is not valid JSON");
    }
    in.preset = preset;
    in.overrides = overrides;
    if (sub->count("--seed") > 0) in.seed = seed;
    config = app::resolve(in);
  } catch (const app::ConfigError& e) {
    std::cerr << "contlab: " << e.what() << '\n';
    return 1;
  }

  if (print_config) {
    std::cout << config.dump(2) << '\n';
    return 0;
  }

  const auto result = app::run(subcommand, config, app::output_root(out_dir));
  if (result.exit_code == 1) {
    std::cerr << "contlab: " << result.error << '\n';
    return 1;
  }
  std::cout << result.directory.string() << '\n';
  if (result.exit_code == 2) std::cerr << "contlab: partial result (flagged points or truncated branch)\n";
  return result.exit_code;
}
