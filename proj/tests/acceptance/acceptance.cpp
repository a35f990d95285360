// Acceptance runner: one PASS/FAIL line per criterion.
//
//   prognosis_acceptance --cli <path to prognosis> [--workdir DIR] [--only 1,4,9]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prognosis/adam.hpp"
#include "prognosis/clinical.hpp"
#include "prognosis/config.hpp"
#include "prognosis/dataset.hpp"
#include "prognosis/drc.hpp"
#include "prognosis/ensemble.hpp"
#include "prognosis/error.hpp"
#include "prognosis/families.hpp"
#include "prognosis/gbm.hpp"
#include "prognosis/gmic.hpp"
#include "prognosis/metrics.hpp"
#include "prognosis/random.hpp"
#include "prognosis/selection.hpp"
#include "prognosis/synthetic.hpp"
#include "prognosis/topr.hpp"
#include "prognosis/training.hpp"
#include "support/gradcheck.hpp"
#include "support/mock_family.hpp"
#include "support/op_cases.hpp"
#include "support/oracles.hpp"

using namespace prognosis;
using namespace prognosis::testing;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  std::string cli;
  fs::path workdir;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// 1. Finite-difference gradient checks.
Outcome gradients(const Context&) {
  constexpr std::size_t kTrials = 100;
  const Stopwatch clock;
  auto cases = op_cases();
  for (const auto& c : loss_cases()) cases.push_back(c);
  double worst_smooth = 0.0, worst_pool = 0.0;
  std::size_t checked = 0, skipped = 0, failures = 0;
  std::string first_failure;
  for (const auto& c : cases) {
    for (std::size_t trial = 0; trial < kTrials; ++trial) {
      Rng rng(derive_seed(1, trial, c.name.size(), c.name.front()));
      OpTrial t = c.make(rng);
      const auto r = grad_check(t.graph, t.loss, t.point, t.tol, 0, trial);
      checked += r.checked;
      skipped += r.skipped;
      double& worst = t.tol > 1e-4 ? worst_pool : worst_smooth;
      worst = std::max(worst, r.max_rel);
      if (!(r.max_rel < t.tol) || r.checked == 0) {
        ++failures;
        if (first_failure.empty()) first_failure = c.name + " " + r.worst;
      }
    }
  }
  const double secs = clock.seconds();
  Outcome o;
  o.pass = failures == 0 && secs < 120.0;
  o.detail = fmt("%zu cases x %zu trials, %zu coordinates (%zu kink-skipped), max rel err %.2e (tol 1e-4), "
                 "%.2e on pooling/loss paths (tol 1e-3), %.1f s (limit 120 s)",
                 cases.size(), kTrials, checked, skipped, worst_smooth, worst_pool, secs);
  if (failures) o.detail += fmt(", %zu failing trials, first: ", failures) + first_failure;
  return o;
}

// 2. exp(-nll) of an event in interval i equals the curve increment at t_i.
Outcome likelihood_curve(const Context&) {
  Rng rng(2);
  double worst = 0.0;
  bool monotone = true;
  for (int k = 0; k < 10000; ++k) {
    std::vector<double> p(kDrcOutputs);
    for (auto& v : p) v = rng.uniform(1e-3, 1.0 - 1e-3);
    const auto drc = drc_from_conditionals(p);
    double prev = 0.0;
    for (std::size_t i = 0; i < kGridSize; ++i) {
      SurvivalLabel event{true, static_cast<int>(i) + 1, 0};
      worst = std::max(worst, std::abs(std::exp(-nll(event, p)) - (drc[i] - prev)));
      SurvivalLabel censored{false, 0, static_cast<int>(i) + 1};
      worst = std::max(worst, std::abs(std::exp(-nll(censored, p)) - (1.0 - drc[i])));
      if (drc[i] < prev) monotone = false;
      prev = drc[i];
    }
  }
  return {worst <= 1e-12 && monotone,
          fmt("10000 vectors, max |exp(-nll) - curve increment| = %.2e (tol 1e-12), curves %s", worst,
              monotone ? "nondecreasing" : "NOT monotone")};
}

// 3. A constant-input head recovers the closed-form per-interval MLE.
Outcome mle_recovery(const Context&) {
  const Stopwatch clock;
  const std::array<double, kGridSize> hazard{0.02, 0.05, 0.08, 0.1, 0.12, 0.15, 0.2, 0.25};
  Rng rng(3);
  std::vector<SurvivalLabel> labels;
  for (int n = 0; n < 5000; ++n) {
    const int follow = rng.bernoulli(0.5) ? static_cast<int>(kGridSize) : static_cast<int>(rng.below(kGridSize + 1));
    SurvivalLabel l{false, 0, follow};
    for (int i = 1; i <= follow; ++i)
      if (rng.bernoulli(hazard[static_cast<std::size_t>(i - 1)])) {
        l = {true, i, 0};
        break;
      }
    labels.push_back(l);
  }
  const auto target = empirical_conditionals(labels);

  NamedTensors params{{"logit", Tensor({kDrcOutputs})}};
  AdamOptions opt;
  opt.learning_rate = 0.05;
  AdamState state(opt);
  std::array<double, kGridSize> fitted{};
  for (int step = 0; step < 4000; ++step) {
    if (step == 2000) state.options.learning_rate = 0.005;
    Graph g;
    const NodeRef probs = g.sigmoid(g.parameter("logit", params.at("logit")));
    const NodeRef loss = mean_nll_node(g, probs, labels);
    adam_step(params, g.backward(loss), state);
  }
  for (std::size_t i = 0; i < kGridSize; ++i) fitted[i] = 1.0 / (1.0 + std::exp(-params.at("logit")[i]));
  double worst = 0.0, truth_gap = 0.0;
  for (std::size_t i = 0; i < kGridSize; ++i) {
    worst = std::max(worst, std::abs(fitted[i] - target[i]));
    truth_gap = std::max(truth_gap, std::abs(target[i] - hazard[i]));
  }
  const double secs = clock.seconds();
  return {worst <= 1e-3 && secs < 60.0,
          fmt("n = 5000, max |fitted - events/at-risk| = %.2e (tol 1e-3), closed form vs true hazards %.3f, %.1f s",
              worst, truth_gap, secs)};
}

// 4. Library routines against independent oracles, 1,000 instances each.
Outcome oracles(const Context&) {
  Rng rng(4);
  std::size_t bad_topr = 0, bad_roi = 0, bad_gbm = 0, bad_auc = 0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> v(1 + rng.below(64));
    for (auto& x : v) x = rng.bernoulli(0.2) ? 0.5 : rng.uniform();
    const double r = rng.uniform(0.01, 1.0);
    bad_topr += aggregate_topr(v, r) != topr_oracle(v, r);
  }
  for (int k = 0; k < 1000; ++k) {
    GmicConfig cfg = tiny_config(1 + rng.below(4));
    cfg.saliency_side = 4 << rng.below(2);
    cfg.input_side = cfg.saliency_side * 4;
    cfg.global_channels = cfg.saliency_side == 4 ? std::vector<std::size_t>{2, 2, 2} : std::vector<std::size_t>{2, 2};
    cfg.crop_side = 4 * (1 + rng.below(3));
    cfg.num_patches = 1 + rng.below(6);
    Tensor maps = random_tensor(rng, {cfg.num_windows, cfg.saliency_side, cfg.saliency_side}, 0, 1);
    if (rng.bernoulli(0.1)) maps.fill(0.3);
    bad_roi += select_roi_windows(maps, cfg) != roi_oracle(maps, cfg.window_cells(), cfg.num_patches, cfg.cell_pixels());
  }
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 20 + rng.below(60), d = 1 + rng.below(5);
    FeatureMatrix x(n, std::vector<double>(d));
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        x[i][j] = rng.bernoulli(0.1) ? kMissing : rng.normal();
        if (!std::isnan(x[i][j])) z += x[i][j];
      }
      y[i] = rng.uniform() < 1.0 / (1.0 + std::exp(-z));
    }
    y[0] = 0;
    y[1] = 1;
    GbmParams p;
    p.num_trees = 1 + rng.below(8);
    p.max_leaves = 2 + rng.below(6);
    p.min_samples_leaf = 1 + rng.below(5);
    p.seed = rng.next();
    const GbmModel m = fit_gbm(x, y, p);
    std::vector<double> probe(d);
    for (auto& v : probe) v = rng.bernoulli(0.2) ? kMissing : rng.normal();
    bad_gbm += m.raw_score(probe) != tree_walk_oracle(m, probe);
  }
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = std::round(rng.uniform() * 10.0) / 10.0;
    }
    y[0] = 0;
    y[1] = 1;
    bad_auc += roc_auc(s, y) != auc_pairs_oracle(s, y);
  }
  return {bad_topr + bad_roi + bad_gbm + bad_auc == 0,
          fmt("mismatches: top-r %zu/1000, ROI %zu/1000, tree walk %zu/1000, AUC %zu/1000", bad_topr, bad_roi,
              bad_gbm, bad_auc)};
}

int run_cli(const Context& ctx, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + ctx.cli + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) std::cerr << "command failed (" << rc << "): " << cmd << "\n";
  return rc;
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw prognosis::Error("cannot open " + p.string());
  return Json::parse(in);
}

// 5. Default synthetic cohort through the command-line pipeline.
Outcome end_to_end(const Context& ctx) {
  const fs::path dir = ctx.workdir / "c5";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "c5.cfg");
    cfg << "train.epochs = 12\n";
  }
  const fs::path log = dir / "log.txt";
  const std::string common = " --config \"" + (dir / "c5.cfg").string() + "\" --seed 0";
  const std::string data = (dir / "data").string();
  const Stopwatch clock;
  const bool ok = run_cli(ctx, "synth" + common + " --out-dir \"" + data + "\"", log) == 0 &&
                  run_cli(ctx, "train gmic --data \"" + data + "\"" + common + " --out-dir \"" + (dir / "gmic").string() + "\"", log) == 0 &&
                  run_cli(ctx, "train drc --data \"" + data + "\"" + common + " --out-dir \"" + (dir / "drc").string() + "\"", log) == 0 &&
                  run_cli(ctx, "eval --data \"" + data + "\"" + common + " --gmic \"" + (dir / "gmic").string() +
                                   "\" --drc \"" + (dir / "drc").string() + "\" --out-dir \"" + (dir / "eval").string() + "\"",
                          log) == 0;
  const double minutes = clock.seconds() / 60.0;
  if (!ok) return {false, "pipeline failed, see " + log.string()};
  const Json m = read_json(dir / "eval" / "eval_report.json").at("metrics");
  const double auc = m.at("gmic").at("96h").at("auc").at("value");
  const Json& conc_j = m.at("drc").at("concordance_96h");
  const double conc = conc_j.is_null() ? 0.0 : conc_j.get<double>();
  const double rel = m.at("drc").at("reliability_max_error").at("96h");
  return {auc >= 0.85 && conc >= 0.80 && rel <= 0.07 && minutes <= 20.0,
          fmt("96 h test AUC %.3f (>= 0.85), concordance@96h %.3f (>= 0.80), reliability max error %.3f (<= 0.07), "
              "%.1f min (<= 20)",
              auc, conc, rel, minutes)};
}

// 6. Ensemble of image and tabular models on cohorts with independent signal.
Outcome ensemble_gain(const Context&) {
  RunConfig cfg;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"synth.num_patients", "600"}, {"synth.image_side", "32"}, {"image.side", "32"},
           {"synth.tabular_kappa", "8"}, {"synth.alpha", "-18"}, {"synth.tabular_noise", "0.1"},
           {"arch.global_channels", "8,16,32"}, {"arch.local_channels", "8,16"}, {"arch.crop_side", "8"},
           {"arch.patch_side", "7"}, {"arch.num_patches", "4"}, {"train.epochs", "8"}, {"train.tta", "0"}})
    cfg.set(k, v);
  const Stopwatch clock;
  int wins = 0;
  double worst_val_gap = 1.0;
  std::string per_seed;
  auto window = [](const std::vector<double>& v) {
    WindowScores w{};
    std::copy(v.begin(), v.end(), w.begin());
    return w;
  };
  for (int seed = 0; seed < 10; ++seed) {
    cfg.set("seed", std::to_string(seed));
    const SyntheticCohort cohort = generate_synthetic(cfg.synthetic());
    ClinicalTable table;
    for (const auto& [pid, obs] : cohort.clinical) table.add(pid, obs);
    table.finalize();
    DatasetOptions dopt;
    dopt.image_side = cfg.count("image.side");
    const Dataset data = build_dataset(cohort.manifest, &cohort.images, &table, dopt);
    const auto train = data.indices(Split::Train), test = data.indices(Split::Test);
    const auto patients = data.exam_patients();
    std::vector<std::string> train_patients;
    for (auto e : train) train_patients.push_back(patients[e]);
    const auto [fit_p, val_p] = split_patients(train_patients, 0.8, derive_seed(seed, 5));
    const std::set<std::string> fit_set(fit_p.begin(), fit_p.end());
    std::vector<std::size_t> fit, val;
    for (auto e : train) (fit_set.contains(patients[e]) ? fit : val).push_back(e);

    const ImageTrainOptions o = cfg.image_options(ImageTask::Classifier);
    const ImageModel image = train_image_model(data, fit, val, ImageTask::Classifier, o, derive_seed(seed, 6));
    const WindowGbm gbm = fit_window_gbm(data, fit, cfg.gbm());

    std::vector<WindowScores> vg, vb;
    std::vector<WindowLabels> vy;
    for (auto e : val) {
      vg.push_back(window(image.predict_tta(data.exams[e].image, o.augmentation, o.tta)));
      vb.push_back(gbm.predict(data.exams[e].features));
      vy.push_back(data.exams[e].labels.y);
    }
    const LambdaSelection sel = select_lambda(vg, vb, vy);
    EnsembleWeights w;
    w.lambda = sel.lambda;
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      double s = 0.0;
      for (const auto& v : vb) s += v[t];
      w.gbm_imputation_mean[t] = s / static_cast<double>(vb.size());
      worst_val_gap = std::min(worst_val_gap,
                               sel.objective[t] - std::max(sel.gmic_objective[t], sel.gbm_objective[t]));
    }
    std::vector<double> sg, sb, se;
    std::vector<int> y;
    for (auto e : test) {
      const WindowScores pg = window(image.predict_tta(data.exams[e].image, o.augmentation, o.tta));
      const WindowScores pb = gbm.predict(data.exams[e].features);
      std::optional<WindowScores> ob;
      if (data.exams[e].has_clinical) ob = pb;
      sg.push_back(pg[3]);
      sb.push_back(pb[3]);
      se.push_back(ensemble_predict(pg, ob, w)[3]);
      y.push_back(data.exams[e].labels.y[3]);
    }
    const double ag = roc_auc(sg, y), ab = roc_auc(sb, y), ae = roc_auc(se, y);
    const bool win = ae > ag && ae > ab;
    wins += win;
    per_seed += fmt(" %d:%s", seed, win ? "+" : "-");
    std::cerr << fmt("  seed %d: lambda96 %.2f, test AUC96 image %.3f, tabular %.3f, ensemble %.3f\n", seed,
                     w.lambda[3], ag, ab, ae);
  }
  return {wins >= 7 && worst_val_gap >= -0.005,
          fmt("ensemble beats both members' 96 h test AUC in %d/10 seeds (>= 7) [%s ], validation objective "
              "margin over best member >= %.4f (>= -0.005), %.0f s",
              wins, per_seed.c_str() + 1, worst_val_gap, clock.seconds())};
}

// 7. Selection harness against a pure re-simulation with a mock family.
Outcome harness(const Context&) {
  const MockCohort cohort = mock_cohort(200, 3);
  bool same = true, disjoint = true;
  std::size_t splits = 0;
  for (double universe : {100.0, 50.0}) {
    SelectionOptions opt;
    opt.universe_percent = universe;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      MockFamily family(cohort);
      const SelectionResult r = run_model_selection(family, cohort.exam_patient, cohort.train, cohort.test, opt, seed);
      const MockExpectation e = simulate_selection(cohort, opt, seed);
      same = same && r.universe_patients == e.universe && r.config_scores == e.config_scores &&
             r.top_configs == e.top_configs && r.members.size() == 9 && member_keys(r) == e.member_keys &&
             r.test_predictions == e.test_predictions;
      disjoint = disjoint && r.runs.size() == 90 && disjoint_splits(r, cohort.exam_patient);
      splits += r.runs.size();
    }
  }
  return {same && disjoint,
          fmt("6 searches (30 configs x 3 splits, universe 100%% and 50%%): top-3 and 9-member ensemble %s the "
              "re-simulation, %zu splits %s",
              same ? "match" : "DIFFER from", splits, disjoint ? "patient-disjoint" : "NOT disjoint")};
}

// 8. Bootstrap interval coverage of the large-sample AUC.
Outcome bootstrap_coverage(const Context&) {
  auto draw = [](Rng& rng, std::size_t n, std::vector<double>& s, std::vector<int>& y) {
    s.resize(n);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.3);
      s[i] = rng.normal() + (y[i] ? 1.0 : 0.0);
    }
  };
  Rng rng(8);
  std::vector<double> s;
  std::vector<int> y;
  draw(rng, 50000, s, y);
  const double truth = roc_auc(s, y);
  int covered = 0;
  for (int rep = 0; rep < 100; ++rep) {
    draw(rng, 500, s, y);
    const auto ci = bootstrap_ci(s, y, roc_auc, 1000, derive_seed(8, rep));
    covered += ci.lo <= truth && truth <= ci.hi;
  }
  return {covered >= 93, fmt("%d/100 intervals (n = 500, 1000 resamples) cover AUC %.4f from n = 50000 (>= 93)",
                             covered, truth)};
}

// 9. Every CLI command rerun with the same seed reproduces its report bytes.
Outcome determinism(const Context& ctx) {
  const fs::path dir = ctx.workdir / "c9";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "tiny.cfg");
    cfg << "synth.num_patients = 300\ntrain.epochs = 1\ntrain.tta = 2\nselect.num_configs = 2\n"
           "select.universe_percent = 50\ngbm.num_trees = 20\neval.bootstrap_iterations = 50\n";
  }
  const std::string c = " --config \"" + (dir / "tiny.cfg").string() + "\" --seed 3";
  auto out = [&](const std::string& name) { return " --out-dir \"" + (dir / name).string() + "\""; };
  const std::string data = " --data \"" + (dir / "data").string() + "\"";
  const std::vector<std::pair<std::string, std::string>> steps{
      {"data/synth_report.json", "synth" + c + out("data")},
      {"gmic/train_report.json", "train gmic" + data + c + out("gmic")},
      {"drc/train_report.json", "train drc" + data + c + out("drc")},
      {"gbm/train_report.json", "train gbm" + data + c + out("gbm")},
      {"logreg/train_report.json", "train logreg" + data + c + out("logreg")},
      {"select/select_report.json", "select gbm" + data + c + out("select")},
      {"eval/eval_report.json", "eval" + data + c + " --gmic \"" + (dir / "gmic").string() + "\" --drc \"" +
                                    (dir / "drc").string() + "\" --gbm \"" + (dir / "gbm").string() + "\" --logreg \"" +
                                    (dir / "logreg").string() + "\"" + out("eval")},
      {"predict/predict_report.json",
       "predict --image \"" + (dir / "data" / "images" / "P00000-0.pgm").string() + "\" --gmic \"" +
           (dir / "gmic").string() + "\" --drc \"" + (dir / "drc").string() + "\" --gbm \"" + (dir / "gbm").string() +
           "\" --clinical \"" + (dir / "data" / "clinical.csv").string() + "\" --patient P00000 --ensemble \"" +
           (dir / "eval" / "ensemble.json").string() + "\"" + c + out("predict")},
      {"eval/export_report_report.json", "export-report --eval-dir \"" + (dir / "eval").string() + "\"" + c + out("eval")}};
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::vector<std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t k = 0; k < steps.size(); ++k) {
      if (run_cli(ctx, steps[k].second, dir / "log.txt") != 0) return {false, "command failed: " + steps[k].second};
      const std::string bytes = slurp(dir / steps[k].first);
      if (bytes.empty()) return {false, "missing report " + steps[k].first};
      if (pass == 0) first.push_back(bytes);
    }
  }
  std::vector<std::string> differing;
  for (std::size_t k = 0; k < steps.size(); ++k)
    if (slurp(dir / steps[k].first) != first[k]) differing.push_back(steps[k].first);
  std::string detail = fmt("%zu commands run twice with seed 3; ", steps.size());
  if (differing.empty()) return {true, detail + "all reports byte-identical"};
  for (const auto& d : differing) detail += d + " ";
  return {false, detail + "differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  Context ctx;
  std::string workdir = (fs::temp_directory_path() / "prognosis_acceptance").string();
  std::vector<int> only;
  app.add_option("--cli", ctx.cli, "path to the prognosis executable")->required();
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  ctx.workdir = workdir;
  fs::create_directories(ctx.workdir);

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
      {"gradient correctness", gradients},
      {"likelihood/curve consistency", likelihood_curve},
      {"MLE recovery", mle_recovery},
      {"oracle equivalence", oracles},
      {"synthetic end-to-end skill", end_to_end},
      {"ensemble improvement", ensemble_gain},
      {"model-selection harness fidelity", harness},
      {"bootstrap sanity", bootstrap_coverage},
      {"determinism", determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
