#include <fstream>
#include <map>
#include <optional>

#include "commands.hpp"
#include "prognosis/drc.hpp"
#include "prognosis/ensemble.hpp"
#include "prognosis/error.hpp"
#include "prognosis/metrics.hpp"
#include "prognosis/model_store.hpp"
#include "prognosis/random.hpp"

namespace prognosis::cli {

namespace {

std::string window_name(std::size_t t) { return std::to_string(static_cast<int>(kWindowHours[t])) + "h"; }

/// Grid index of each prediction window on the DRC time grid.
std::size_t grid_index(std::size_t window) {
  for (std::size_t i = 0; i < kGridSize; ++i) {
    if (kTimeGrid[i] == kWindowHours[window]) return i;
  }
  throw Error("window not on the time grid");
}

Json ci_json(const ConfidenceInterval& ci) {
  return {{"value", ci.point}, {"ci_lo", ci.lo}, {"ci_hi", ci.hi}, {"replicates", ci.replicates}};
}

/// Window metrics, bootstrap CIs and ROC/PR curve files for per-window scores.
Json window_metrics(Run& run, const std::string& name, const Dataset& data, std::span<const std::size_t> exams,
                    std::span<const std::vector<double>> scores) {
  const std::size_t iterations = run.config.count("eval.bootstrap_iterations");
  Json out = Json::object();
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    const auto y = window_labels(data, exams, t);
    std::vector<double> s;
    for (const auto& p : scores) s.push_back(p.at(t));
    Json w;
    std::size_t pos = 0;
    for (int v : y) pos += static_cast<std::size_t>(v);
    w["positives"] = pos;
    w["exams"] = y.size();
    if (pos == 0 || pos == y.size()) {
      w["auc"] = nullptr;
      w["pr_auc"] = nullptr;
      out[window_name(t)] = w;
      continue;
    }
    const std::uint64_t seed = derive_seed(run.seed, 31, t);
    w["auc"] = ci_json(bootstrap_ci(s, y, roc_auc, iterations, seed));
    w["pr_auc"] = ci_json(bootstrap_ci(s, y, pr_auc, iterations, seed));
    const std::string dir = "curves/" + name + "_" + window_name(t) + "/";
    write_roc_csv(run.output(dir + "roc.csv").string(), roc_curve(s, y));
    write_pr_csv(run.output(dir + "pr.csv").string(), pr_curve(s, y));
    out[window_name(t)] = w;
  }
  return out;
}

StoredModel load_checked(const std::string& dir, const std::string& family) {
  StoredModel m = load_model(dir);
  if (m.family != family) throw Error(dir + " holds a " + m.family + " model, expected " + family);
  return m;
}

std::vector<std::vector<double>> predict_all(const StoredModel& model, const Dataset& data,
                                             std::span<const std::size_t> exams) {
  std::vector<std::vector<double>> out;
  out.reserve(exams.size());
  for (std::size_t k = 0; k < exams.size(); ++k) {
    out.push_back(model.predict(data.exams[exams[k]]));
    if ((k + 1) % 200 == 0) log(model.family + ": predicted " + std::to_string(k + 1) + " exams");
  }
  return out;
}

void write_predictions(Run& run, const std::string& family, const Dataset& data,
                       std::span<const std::size_t> exams, std::span<const std::vector<double>> preds) {
  std::vector<std::string> ids;
  for (auto e : exams) ids.push_back(data.exams[e].exam_id);
  write_predictions_csv(run.output("predictions_" + family + ".csv"), ids, preds, prediction_columns(family));
}

WindowScores to_window(const std::vector<double>& v) {
  if (v.size() != kNumWindows) throw ShapeError("expected one score per window");
  WindowScores w{};
  std::copy(v.begin(), v.end(), w.begin());
  return w;
}

}  // namespace

void eval_command(const CommonFlags& flags, const EvalInputs& in) {
  Run run = start_run("eval", flags);
  if (in.gmic.empty() && in.drc.empty() && in.gbm.empty() && in.logreg.empty()) {
    throw Error("eval needs at least one of --gmic, --drc, --gbm, --logreg");
  }
  run.inputs["data"] = in.data_dir;
  const bool images = !in.gmic.empty() || !in.drc.empty();
  const bool clinical = !in.gbm.empty() || !in.logreg.empty();
  const Dataset data = load_data(in.data_dir, run.config, images, clinical);
  const auto test = data.indices(Split::Test);
  if (test.empty()) throw Error("manifest has no test exams");
  run.metrics["test_exams"] = test.size();

  std::map<std::string, std::vector<std::vector<double>>> preds;
  for (const auto& [family, dir] : std::vector<std::pair<std::string, std::string>>{
           {"gmic", in.gmic}, {"gbm", in.gbm}, {"logreg", in.logreg}}) {
    if (dir.empty()) continue;
    run.inputs[family] = dir;
    const StoredModel model = load_checked(dir, family);
    log("evaluating " + family + " (" + std::to_string(model.size()) + " members)");
    preds[family] = predict_all(model, data, test);
    write_predictions(run, family, data, test, preds[family]);
    run.metrics[family] = window_metrics(run, family, data, test, preds[family]);
  }

  if (!in.drc.empty()) {
    run.inputs["drc"] = in.drc;
    const StoredModel model = load_checked(in.drc, "drc");
    log("evaluating drc (" + std::to_string(model.size()) + " members)");
    const auto curves = predict_all(model, data, test);
    write_predictions(run, "drc", data, test, curves);
    std::vector<std::string> ids;
    for (auto e : test) ids.push_back(data.exams[e].exam_id);
    write_drc_csv(run.output("drc.csv"), ids, curves);
    Json m;
    std::vector<ExamLabels> labels;
    for (auto e : test) labels.push_back(data.exams[e].labels);
    try {
      m["concordance_96h"] = survival_score(curves, labels);
    } catch (const Error& e) {
      log(std::string("concordance unavailable: ") + e.what());
      m["concordance_96h"] = nullptr;
    }
    std::vector<ReliabilityRow> rows;
    Json errors = Json::object();
    std::vector<std::vector<double>> at_windows;
    for (const auto& c : curves) {
      std::vector<double> w;
      for (std::size_t t = 0; t < kNumWindows; ++t) w.push_back(c[grid_index(t)]);
      at_windows.push_back(std::move(w));
    }
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      std::vector<double> p;
      for (const auto& w : at_windows) p.push_back(w[t]);
      const auto r = reliability(p, window_labels(data, test, t), kWindowHours[t]);
      errors[window_name(t)] = reliability_max_error(r);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    write_reliability_csv(run.output("reliability.csv").string(), rows);
    m["reliability_max_error"] = errors;
    m["windows"] = window_metrics(run, "drc", data, test, at_windows);
    run.metrics["drc"] = m;
  }

  if (!in.gmic.empty() && !in.gbm.empty()) {
    // Lambda from the out-of-fold validation predictions of both models.
    const auto oof_gmic = read_predictions_csv(fs::path(in.gmic) / "oof.csv");
    const auto oof_gbm = read_predictions_csv(fs::path(in.gbm) / "oof.csv");
    std::vector<WindowScores> g, b;
    std::vector<WindowLabels> y;
    for (const auto& [id, p] : oof_gmic) {
      auto it = oof_gbm.find(id);
      const auto exam = data.find(id);
      if (it == oof_gbm.end() || !exam) continue;
      g.push_back(to_window(p));
      b.push_back(to_window(it->second));
      y.push_back(data.exams[*exam].labels.y);
    }
    if (y.empty()) throw Error("the two models' oof.csv files share no exams");
    std::optional<LambdaSelection> sel;
    try {
      sel = select_lambda(g, b, y);
    } catch (const Error& e) {
      log(std::string("ensemble skipped: ") + e.what());
      run.metrics["ensemble"] = Json{{"skipped", e.what()}};
    }
    if (sel) {
      EnsembleWeights weights;
      weights.lambda = sel->lambda;
      for (std::size_t t = 0; t < kNumWindows; ++t) {
        double sum = 0.0;
        for (const auto& v : b) sum += v[t];
        weights.gbm_imputation_mean[t] = sum / static_cast<double>(b.size());
      }
      std::vector<std::vector<double>> ens;
      for (std::size_t k = 0; k < test.size(); ++k) {
        std::optional<WindowScores> gbm;
        if (data.exams[test[k]].has_clinical) gbm = to_window(preds["gbm"][k]);
        const auto e = ensemble_predict(to_window(preds["gmic"][k]), gbm, weights);
        ens.emplace_back(e.begin(), e.end());
      }
      std::vector<std::string> ids;
      for (auto e : test) ids.push_back(data.exams[e].exam_id);
      write_predictions_csv(run.output("predictions_ensemble.csv"), ids, ens, prediction_columns("gmic"));
      Json ej;
      ej["format"] = "prognosis-ensemble";
      ej["gmic"] = in.gmic;
      ej["gbm"] = in.gbm;
      ej["lambda"] = weights.lambda;
      ej["gbm_imputation_mean"] = weights.gbm_imputation_mean;
      ej["oof_exams"] = y.size();
      ej["oof_objective"] = sel->objective;
      ej["oof_gmic_objective"] = sel->gmic_objective;
      ej["oof_gbm_objective"] = sel->gbm_objective;
      std::ofstream out(run.output("ensemble.json"));
      out << ej.dump(2) << "\n";
      Json m = window_metrics(run, "ensemble", data, test, ens);
      m["lambda"] = weights.lambda;
      run.metrics["ensemble"] = m;
    }
  }
  run.write_report();
}

void export_report_command(const CommonFlags& flags, const std::string& eval_dir) {
  Run run = start_run("export_report", flags);
  run.inputs["eval"] = eval_dir;
  const fs::path path = fs::path(eval_dir) / "eval_report.json";
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  Json report;
  try {
    report = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed " + path.string() + ": " + e.what());
  }
  const Json& m = report.at("metrics");
  auto num = [](const Json& v) -> std::string {
    if (v.is_null()) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
    return buf;
  };
  auto cell = [&](const Json& w, const char* key) -> std::string {
    if (!w.contains(key) || w[key].is_null()) return "n/a";
    const Json& c = w[key];
    return num(c["value"]) + " (" + num(c["ci_lo"]) + "-" + num(c["ci_hi"]) + ")";
  };

  std::ofstream out(run.output("report.md"));
  out << "# Evaluation report\n\n";
  out << "- version: " << report.value("version", "") << "\n";
  out << "- seed: " << report.value("seed", 0) << "\n";
  out << "- test exams: " << m.value("test_exams", 0) << "\n\n";
  out << "## Window metrics (95% bootstrap CI)\n\n";
  out << "| model | window | AUC | PR AUC | positives |\n|---|---|---|---|---|\n";
  for (const char* name : {"gmic", "gbm", "logreg", "ensemble"}) {
    if (!m.contains(name)) continue;
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      const Json& w = m[name][window_name(t)];
      out << "| " << name << " | " << window_name(t) << " | " << cell(w, "auc") << " | " << cell(w, "pr_auc")
          << " | " << w.value("positives", 0) << " |\n";
    }
  }
  if (m.contains("ensemble")) {
    out << "\nEnsemble weights (lambda on the image model):";
    for (const auto& v : m["ensemble"]["lambda"]) out << " " << num(v);
    out << "\n";
  }
  if (m.contains("drc")) {
    const Json& d = m["drc"];
    out << "\n## Deterioration risk curve\n\n";
    out << "- concordance at 96h: " << num(d["concordance_96h"]) << "\n";
    out << "- reliability max |predicted - empirical|:";
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      out << " " << window_name(t) << " " << num(d["reliability_max_error"][window_name(t)]);
    }
    out << "\n";
  }
  run.write_report();
}

}  // namespace prognosis::cli
