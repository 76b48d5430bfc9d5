#pragma once

// Run orchestration behind the contlab command line: config resolution,
// scenario presets, subcommand dispatch and artifact emission.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace contlab::app {

using Json = nlohmann::json;

/// Malformed, unknown or missing configuration; reported before any artifact is written.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& subcommands();
const std::vector<std::string>& preset_names();

/// Every key the runner reads, with its default; null marks a required key.
Json default_config();

/// Complete config for a named scenario. Throws ConfigError for unknown names.
Json preset(const std::string& name);

struct ResolveInputs {
  /// Parsed config file, if any. A top-level "preset" selects the base.
  std::optional<Json> file;
  /// Preset requested on the command line; wins over the file's choice.
  std::string preset;
  /// Dotted-path assignments "a.b.c=value"; value parsed as JSON, else a string.
  std::vector<std::string> overrides;
  /// Replaces every seed in the tree.
  std::optional<std::uint64_t> seed;
};

/// Defaults, then preset, then file, then overrides, then seed. Unknown keys
/// and type mismatches throw ConfigError listing every offending path.
Json resolve(const ResolveInputs& inputs);

/// Digest of the subcommand and the resolved config's canonical dump.
std::string config_digest(const std::string& subcommand, const Json& config);

struct RunResult {
  /// 0 success, 2 flagged points or a truncated branch, 1 failure.
  int exit_code{1};
  std::filesystem::path directory;
  std::vector<std::filesystem::path> artifacts;
  Json manifest;
  std::string error;
};

/// Output root: CONTLAB_OUT when set, otherwise `fallback`.
std::filesystem::path output_root(const std::filesystem::path& fallback);

/// Runs the subcommand and writes <root>/<subcommand>-<digest>/ with the CSV
/// artifacts and manifest.json. Config errors and failures yield exit code 1
/// and leave no directory behind.
RunResult run(const std::string& subcommand, const Json& config, const std::filesystem::path& root);

}  // namespace contlab::app
