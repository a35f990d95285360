#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "prognosis/csv.hpp"
#include "prognosis/error.hpp"
#include "prognosis/model_store.hpp"
#include "prognosis/random.hpp"

namespace prognosis::cli {

namespace {

enum Stream : std::uint64_t { kValSplit = 5, kTrainRun = 6, kTta = 7 };

bool image_family(const std::string& family) { return family == "gmic" || family == "drc"; }

void check_family(const std::string& family) {
  if (family != "gmic" && family != "drc" && family != "gbm" && family != "logreg") {
    throw Error("unknown model family '" + family + "' (expected gmic, drc, gbm or logreg)");
  }
}

ImageTask task_of(const std::string& family) {
  return family == "drc" ? ImageTask::Survival : ImageTask::Classifier;
}

StoredModel empty_model(const std::string& family, const Run& run) {
  StoredModel model;
  model.family = family;
  if (image_family(family)) {
    const auto opt = run.config.image_options(task_of(family));
    model.image_side = run.config.count("image.side");
    model.preprocess = run.config.preprocess();
    model.arch = opt.arch;
    model.tta = opt.tta;
    model.tta_policy = opt.augmentation;
    model.tta_policy.seed = derive_seed(run.seed, kTta);
  }
  return model;
}

ImageTrainOptions image_options(const Run& run, const std::string& family) {
  auto opt = run.config.image_options(task_of(family));
  opt.augmentation.seed = derive_seed(run.seed, kTta);
  return opt;
}

double family_score(const Dataset& data, const std::string& family,
                    std::span<const std::vector<double>> preds, std::span<const std::size_t> exams) {
  if (family == "drc") {
    std::vector<ExamLabels> labels;
    for (auto e : exams) labels.push_back(data.exams[e].labels);
    return survival_score(preds, labels);
  }
  return score_windows(data, preds, exams);
}

void write_oof(Run& run, const Dataset& data, const std::string& family,
               const std::vector<std::size_t>& exams, const std::vector<std::vector<double>>& preds) {
  std::vector<std::string> ids;
  for (auto e : exams) ids.push_back(data.exams[e].exam_id);
  write_predictions_csv(run.output("oof.csv"), ids, preds, prediction_columns(family));
}

}  // namespace

void train_command(const CommonFlags& flags, const std::string& family, const std::string& data_dir) {
  check_family(family);
  Run run = start_run("train", flags);
  run.inputs["family"] = family;
  run.inputs["data"] = data_dir;
  const bool images = image_family(family);
  const Dataset data = load_data(data_dir, run.config, images, !images);

  // Patient-level validation split of the training exams.
  const auto train = data.indices(Split::Train);
  const auto patients = data.exam_patients();
  std::vector<std::string> train_patients;
  for (auto e : train) train_patients.push_back(patients[e]);
  std::sort(train_patients.begin(), train_patients.end());
  train_patients.erase(std::unique(train_patients.begin(), train_patients.end()), train_patients.end());
  const auto [fit_patients, val_patients] =
      split_patients(train_patients, run.config.selection().train_fraction, derive_seed(run.seed, kValSplit));
  const std::set<std::string> fit_set(fit_patients.begin(), fit_patients.end());
  std::vector<std::size_t> fit, val;
  for (auto e : train) (fit_set.contains(patients[e]) ? fit : val).push_back(e);
  log("train " + family + ": " + std::to_string(fit.size()) + " fit / " + std::to_string(val.size()) +
      " validation exams");

  StoredModel model = empty_model(family, run);
  std::vector<std::vector<double>> val_preds;
  const std::uint64_t seed = derive_seed(run.seed, kTrainRun);
  HyperConfig hp;
  if (images) {
    const auto opt = image_options(run, family);
    hp = {{"lr", opt.learning_rate}, {"beta", opt.beta}, {"r", opt.arch.pool_fraction}};
    std::vector<EpochRecord> history;
    ImageModel trained = train_image_model(data, fit, val, task_of(family), opt, seed, &history,
                                           [](const EpochRecord& r) {
                                             std::ostringstream msg;
                                             msg << "epoch " << r.epoch << " loss " << r.train_loss
                                                 << " val " << r.val_score;
                                             log(msg.str());
                                           });
    {
      std::ofstream out(run.output("training_log.csv"));
      out << "epoch,train_loss,val_score\n";
      for (const auto& r : history) {
        out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_score) << '\n';
      }
    }
    Json epochs = Json::array();
    for (const auto& r : history) epochs.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_score", r.val_score}});
    run.metrics["epochs"] = epochs;
    for (auto e : val) val_preds.push_back(trained.predict(data.exams[e].image));
    model.image_members.push_back(std::move(trained.params));
  } else if (family == "gbm") {
    GbmParams params = run.config.gbm();
    params.seed = seed;
    hp = {{"lr", params.learning_rate}, {"trees", static_cast<double>(params.num_trees)},
          {"leaves", static_cast<double>(params.max_leaves)}};
    WindowGbm trained = fit_window_gbm(data, fit, params);
    for (auto e : val) {
      const auto p = trained.predict(data.exams[e].features);
      val_preds.emplace_back(p.begin(), p.end());
    }
    model.gbm_members.push_back(std::move(trained));
  } else {
    const LogRegParams params = run.config.logreg();
    hp = {{"l2", params.l2}};
    WindowLogReg trained = fit_window_logreg(data, fit, params);
    for (auto e : val) {
      const auto p = trained.predict(data.exams[e].features);
      val_preds.emplace_back(p.begin(), p.end());
    }
    model.logreg_members.push_back(std::move(trained));
  }
  model.hyperparameters.push_back(hp);

  run.metrics["fit_exams"] = fit.size();
  run.metrics["val_exams"] = val.size();
  try {
    run.metrics["val_score"] = family_score(data, family, val_preds, val);
  } catch (const Error& e) {
    log(std::string("validation score unavailable: ") + e.what());
    run.metrics["val_score"] = nullptr;
  }
  save_model(model, run.out_dir);
  run.outputs.push_back("model.json");
  write_oof(run, data, family, val, val_preds);
  run.write_report();
}

void select_command(const CommonFlags& flags, const std::string& family, const std::string& data_dir) {
  check_family(family);
  Run run = start_run("select", flags);
  run.inputs["family"] = family;
  run.inputs["data"] = data_dir;
  const bool images = image_family(family);
  const Dataset data = load_data(data_dir, run.config, images, !images);
  const SearchSpace space = run.config.search_space(family);

  std::unique_ptr<ModelFamily> fam;
  if (images) {
    fam = std::make_unique<ImageFamily>(data, task_of(family), image_options(run, family), space);
  } else if (family == "gbm") {
    fam = std::make_unique<GbmFamily>(data, run.config.gbm(), space);
  } else {
    fam = std::make_unique<LogRegFamily>(data, run.config.logreg(), space);
  }
  const auto options = run.config.selection();
  const SelectionResult result = run_model_selection(
      *fam, data.exam_patients(), data.indices(Split::Train), data.indices(Split::Test), options, run.seed,
      [](const SelectionRun& r, const HyperConfig& hc) {
        std::ostringstream msg;
        msg << "config " << r.config << " split " << r.split << " [" << to_string(hc) << "] score " << r.score;
        log(msg.str());
      });

  StoredModel model = empty_model(family, run);
  for (std::size_t k = 0; k < result.members.size(); ++k) {
    const TrainedMember* m = result.members[k].get();
    if (const auto* im = dynamic_cast<const ImageMember*>(m)) {
      model.image_members.push_back(im->model().params);
    } else if (const auto* gm = dynamic_cast<const GbmMember*>(m)) {
      model.gbm_members.push_back(gm->model());
    } else if (const auto* lm = dynamic_cast<const LogRegMember*>(m)) {
      model.logreg_members.push_back(lm->model());
    } else {
      throw Error("unexpected member type");
    }
    model.hyperparameters.push_back(result.configs[result.runs[result.member_runs[k]].config]);
  }
  save_model(model, run.out_dir);
  run.outputs.push_back("model.json");

  std::vector<std::size_t> oof_exams;
  std::vector<std::vector<double>> oof;
  for (const auto& [e, p] : result.oof_predictions) {
    oof_exams.push_back(e);
    oof.push_back(p);
  }
  write_oof(run, data, family, oof_exams, oof);
  {
    std::vector<std::string> ids;
    for (auto e : result.test_exams) ids.push_back(data.exams[e].exam_id);
    write_predictions_csv(run.output("test_predictions.csv"), ids, result.test_predictions,
                          prediction_columns(family));
  }
  {
    std::ofstream out(run.output("selection.jsonl"));
    write_selection_jsonl(out, result, family);
  }
  run.metrics["universe_patients"] = result.universe_patients.size();
  run.metrics["config_scores"] = result.config_scores;
  run.metrics["top_configs"] = result.top_configs;
  run.metrics["members"] = result.members.size();
  run.metrics["test_score"] = result.test_score;
  run.write_report();
}

}  // namespace prognosis::cli
