#include <numeric>

#include "commands.hpp"
#include "prognosis/synthetic.hpp"

namespace prognosis::cli {

void synth_command(const CommonFlags& flags) {
  Run run = start_run("synth", flags);
  const SyntheticSpec spec = run.config.synthetic();
  log("generating " + std::to_string(spec.num_patients) + " patients");
  const SyntheticCohort cohort = generate_synthetic(spec);
  write_synthetic(cohort, run.out_dir.string());
  for (const char* name : {"manifest.csv", "clinical.csv", "true_drc.csv", "images/"}) run.outputs.push_back(name);

  DatasetOptions opt;
  opt.load_images = false;
  const Dataset data = build_dataset(cohort.manifest, nullptr, nullptr, opt);
  run.metrics["patients"] = spec.num_patients;
  run.metrics["manifest_rows"] = cohort.manifest.rows.size();
  run.metrics["included_exams"] = data.exams.size();
  run.metrics["excluded_exams"] = data.excluded;
  run.metrics["train_exams"] = data.indices(Split::Train).size();
  run.metrics["test_exams"] = data.indices(Split::Test).size();
  Json rates = Json::object();
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    double pos = 0.0;
    for (const auto& e : data.exams) pos += e.labels.y[t];
    rates[std::to_string(static_cast<int>(kWindowHours[t])) + "h"] =
        data.exams.empty() ? 0.0 : pos / static_cast<double>(data.exams.size());
  }
  run.metrics["positive_rate"] = rates;
  run.write_report();
}

}  // namespace prognosis::cli
