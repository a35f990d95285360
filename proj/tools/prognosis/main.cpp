#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "prognosis/model_store.hpp"

using namespace prognosis::cli;

namespace {

void add_common(CLI::App* app, CommonFlags& flags) {
  app->add_option("--config", flags.config_path, "key = value config file")->check(CLI::ExistingFile);
  app->add_option("--set", flags.overrides, "config override key=value (repeatable)");
  app->add_option("--seed", flags.seed, "overrides the config seed");
  app->add_option("--out-dir", flags.out_dir, "output directory (overrides out_dir)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterioration risk models for chest radiographs and clinical variables"};
  app.set_version_flag("--version", prognosis::version_string());
  app.require_subcommand(1);

  CommonFlags flags;

  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  add_common(synth, flags);

  std::string family, data_dir;
  auto* train = app.add_subcommand("train", "train one model with the configured hyperparameters");
  add_common(train, flags);
  train->add_option("family", family, "gmic, drc, gbm or logreg")->required()
      ->check(CLI::IsMember({"gmic", "drc", "gbm", "logreg"}));
  train->add_option("--data", data_dir, "dataset directory (manifest.csv, clinical.csv)")->required();

  auto* select = app.add_subcommand("select", "random search with Monte Carlo cross-validation");
  add_common(select, flags);
  select->add_option("family", family, "gmic, drc, gbm or logreg")->required()
      ->check(CLI::IsMember({"gmic", "drc", "gbm", "logreg"}));
  select->add_option("--data", data_dir, "dataset directory")->required();

  EvalInputs eval_in;
  auto* eval = app.add_subcommand("eval", "test-set metrics, curves and bootstrap intervals");
  add_common(eval, flags);
  eval->add_option("--data", eval_in.data_dir, "dataset directory")->required();
  eval->add_option("--gmic", eval_in.gmic, "classifier model directory");
  eval->add_option("--drc", eval_in.drc, "survival model directory");
  eval->add_option("--gbm", eval_in.gbm, "GBM model directory");
  eval->add_option("--logreg", eval_in.logreg, "logistic regression model directory");

  PredictInputs pred_in;
  auto* predict = app.add_subcommand("predict", "risk estimates and saliency for one exam");
  add_common(predict, flags);
  predict->add_option("--image", pred_in.image, "16-bit PGM radiograph")->required()->check(CLI::ExistingFile);
  predict->add_option("--gmic", pred_in.gmic, "classifier model directory");
  predict->add_option("--drc", pred_in.drc, "survival model directory");
  predict->add_option("--gbm", pred_in.gbm, "GBM model directory");
  predict->add_option("--ensemble", pred_in.ensemble, "ensemble.json from eval");
  predict->add_option("--clinical", pred_in.clinical, "clinical CSV")->check(CLI::ExistingFile);
  predict->add_option("--patient", pred_in.patient, "patient id in the clinical CSV");
  predict->add_option("--exam-id", pred_in.exam_id, "exam id for drc.csv (default: image file stem)");
  predict->add_option("--exam-time", pred_in.exam_time_h, "exam time in hours");

  std::string eval_dir;
  auto* report = app.add_subcommand("export-report", "markdown summary of an eval run");
  add_common(report, flags);
  report->add_option("--eval-dir", eval_dir, "output directory of eval")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) synth_command(flags);
    if (train->parsed()) train_command(flags, family, data_dir);
    if (select->parsed()) select_command(flags, family, data_dir);
    if (eval->parsed()) eval_command(flags, eval_in);
    if (predict->parsed()) predict_command(flags, pred_in);
    if (report->parsed()) export_report_command(flags, eval_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
