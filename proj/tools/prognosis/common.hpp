#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prognosis/config.hpp"
#include "prognosis/dataset.hpp"

namespace prognosis::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// Flags shared by every subcommand.
struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;  ///< key=value
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

/// Resolved configuration plus the report being assembled for one run.
struct Run {
  std::string command;
  RunConfig config;
  std::uint64_t seed = 0;
  fs::path out_dir;
  Json inputs = Json::object();
  Json metrics = Json::object();
  std::vector<std::string> outputs;

  /// Writes `<command>_report.json` under the output directory.
  void write_report();
  fs::path output(const std::string& name);
};

/// Defaults, then the config file, then --set overrides, then --seed and --out-dir.
Run start_run(const std::string& command, const CommonFlags& flags);

/// Loads `<dir>/manifest.csv` (and `<dir>/clinical.csv` when `clinical`).
Dataset load_data(const fs::path& dir, const RunConfig& config, bool images, bool clinical);

/// Per-exam window labels as integer vectors, one per window.
std::vector<int> window_labels(const Dataset& data, std::span<const std::size_t> exams, std::size_t window);

void log(const std::string& message);

}  // namespace prognosis::cli
