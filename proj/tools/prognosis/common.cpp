#include "common.hpp"

#include <fstream>
#include <iostream>

#include "prognosis/error.hpp"
#include "prognosis/model_store.hpp"

namespace prognosis::cli {

void log(const std::string& message) { std::cerr << message << std::endl; }

Run start_run(const std::string& command, const CommonFlags& flags) {
  Run run;
  run.command = command;
  if (!flags.config_path.empty()) run.config.load_file(flags.config_path);
  for (const auto& kv : flags.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    run.config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (flags.seed) run.config.set("seed", std::to_string(*flags.seed));
  if (!flags.out_dir.empty()) run.config.set("out_dir", flags.out_dir);
  run.seed = run.config.seed();
  run.out_dir = run.config.get("out_dir");
  fs::create_directories(run.out_dir);
  return run;
}

fs::path Run::output(const std::string& name) {
  outputs.push_back(name);
  const fs::path path = out_dir / name;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return path;
}

void Run::write_report() {
  Json report;
  report["command"] = command;
  report["version"] = version_string();
  report["seed"] = seed;
  Json cfg = Json::object();
  for (const auto& [k, v] : config.values()) cfg[k] = v;
  report["config"] = cfg;
  report["inputs"] = inputs;
  report["metrics"] = metrics;
  const std::string name = command + "_report.json";
  outputs.push_back(name);
  report["outputs"] = outputs;
  std::ofstream out(out_dir / name);
  if (!out) throw Error("cannot write " + (out_dir / name).string());
  out << report.dump(2) << "\n";
}

Dataset load_data(const fs::path& dir, const RunConfig& config, bool images, bool clinical) {
  const fs::path manifest = dir / "manifest.csv";
  if (!fs::exists(manifest)) throw Error("missing " + manifest.string());
  std::string clinical_path;
  if (clinical) {
    const fs::path p = dir / "clinical.csv";
    if (!fs::exists(p)) throw Error("missing " + p.string());
    clinical_path = p.string();
  }
  DatasetOptions opt;
  opt.load_images = images;
  opt.image_side = config.count("image.side");
  opt.preprocess = config.preprocess();
  return load_dataset(manifest.string(), clinical_path, opt);
}

std::vector<int> window_labels(const Dataset& data, std::span<const std::size_t> exams, std::size_t window) {
  std::vector<int> y;
  y.reserve(exams.size());
  for (auto e : exams) y.push_back(data.exams.at(e).labels.y.at(window));
  return y;
}

}  // namespace prognosis::cli
