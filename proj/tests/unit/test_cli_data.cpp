#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prognosis/config.hpp"
#include "prognosis/dataset.hpp"
#include "prognosis/error.hpp"
#include "prognosis/manifest.hpp"
#include "prognosis/model_store.hpp"
#include "prognosis/random.hpp"
#include "prognosis/synthetic.hpp"

using namespace prognosis;
namespace fs = std::filesystem;

namespace {

ManifestRow row(double exam, std::optional<double> event, double censor) {
  ManifestRow r;
  r.exam_id = "E1";
  r.patient_id = "P1";
  r.image_path = "e1.pgm";
  r.exam_time_h = exam;
  r.event_time_h = event;
  r.censor_time_h = censor;
  return r;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("prognosis_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("label derivation examples") {
  auto a = derive_labels(row(5, 100, 100));
  REQUIRE(a);
  CHECK(a->y == WindowLabels{0, 0, 0, 1});
  CHECK(a->survival.event_observed);
  CHECK(a->survival.interval_index == 6);

  CHECK_FALSE(derive_labels(row(50, 40, 40)));
  CHECK_FALSE(derive_labels(row(40, 40, 40)));

  auto c = derive_labels(row(0, std::nullopt, 200));
  REQUIRE(c);
  CHECK(c->y == WindowLabels{0, 0, 0, 0});
  CHECK_FALSE(c->survival.event_observed);
  CHECK(c->survival.censor_index == 8);

  auto excluded = row(0, std::nullopt, 200);
  excluded.exclude = true;
  CHECK_FALSE(derive_labels(excluded));
  CHECK_THROWS_AS(derive_labels(row(0, -1, 10)), Error);
  CHECK_THROWS_AS(derive_labels(row(20, std::nullopt, 10)), Error);
}

TEST_CASE("window labels are monotone") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double exam = rng.uniform(0, 50);
    const double censor = exam + rng.uniform(0, 300);
    std::optional<double> event;
    if (rng.bernoulli(0.6)) event = rng.uniform(0, censor);
    const auto l = derive_labels(row(exam, event, event ? *event : censor));
    if (!l) {
      CHECK(event);
      continue;
    }
    for (std::size_t t = 1; t < kNumWindows; ++t) CHECK(l->y[t - 1] <= l->y[t]);
  }
}

TEST_CASE("manifest parsing and validation") {
  const std::string header = "exam_id,patient_id,image_path,exam_time_h,event_time_h,censor_time_h,split,exclude\n";
  std::istringstream good(header + "E1,P1,a.pgm,1,,200,train,0\nE2,P1,b.pgm,5,,200,train,1\nE3,P2,c.pgm,0,30,30,test,0\n");
  const Manifest m = read_manifest(good);
  REQUIRE(m.rows.size() == 3);
  CHECK(m.rows[1].exclude);
  CHECK_FALSE(m.rows[0].event_time_h);
  CHECK(m.rows[2].split == Split::Test);

  std::ostringstream round;
  write_manifest(round, m);
  std::istringstream again(round.str());
  CHECK(read_manifest(again).rows.size() == 3);

  std::istringstream both(header + "E1,P1,a.pgm,1,,200,train,0\nE2,P1,b.pgm,5,,200,test,0\n");
  CHECK_THROWS_AS(read_manifest(both), Error);
  std::istringstream dup(header + "E1,P1,a.pgm,1,,200,train,0\nE1,P2,b.pgm,5,,200,train,0\n");
  CHECK_THROWS_AS(read_manifest(dup), Error);
  std::istringstream bad_header("exam,patient\nE1,P1\n");
  CHECK_THROWS_AS(read_manifest(bad_header), Error);
  std::istringstream bad_split(header + "E1,P1,a.pgm,1,,200,valid,0\n");
  CHECK_THROWS_AS(read_manifest(bad_split), Error);
}

TEST_CASE("run configuration") {
  RunConfig c;
  CHECK(c.number("gmic.lr") == 0.002);
  c.set("train.epochs", "3");
  CHECK(c.count("train.epochs") == 3);
  CHECK_THROWS_AS(c.set("no.such.key", "1"), Error);
  CHECK_THROWS_AS(c.set("train.epochs", "three"), Error);
  CHECK(c.count("train.epochs") == 3);
  std::istringstream text("# comment\nseed = 9\narch.local_channels = 4,5,6\n");
  c.load(text);
  CHECK(c.seed() == 9);
  CHECK(c.counts("arch.local_channels") == std::vector<std::size_t>{4, 5, 6});
  std::istringstream unknown("bogus = 1\n");
  CHECK_THROWS_AS(c.load(unknown), Error);
  c.set("search.gbm.leaves", "7,9");
  const SearchSpace s = c.search_space("gbm");
  for (std::size_t i = 0; i < 20; ++i) {
    const double leaves = s.sample(1, i).at("leaves");
    CHECK(leaves >= 7);
    CHECK(leaves <= 9);
  }
  CHECK(c.selection().train_fraction == doctest::Approx(0.8));
}

TEST_CASE("synthetic cohort is deterministic") {
  SyntheticSpec spec;
  spec.num_patients = 40;
  spec.image_side = 32;
  spec.seed = 3;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  const fs::path da = scratch_dir("synth_a"), db = scratch_dir("synth_b");
  write_synthetic(a, da.string());
  write_synthetic(b, db.string());
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(da)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    CHECK(slurp(entry.path()) == slurp(db / fs::relative(entry.path(), da)));
  }
  CHECK(files == a.manifest.rows.size() + 3);
  spec.seed = 4;
  std::ostringstream m1, m2;
  write_manifest(m1, a.manifest);
  write_manifest(m2, generate_synthetic(spec).manifest);
  CHECK(m1.str() != m2.str());
}

TEST_CASE("higher synthetic risk means more events at every horizon") {
  SyntheticSpec spec;
  spec.render_images = false;
  spec.alpha = -10;
  spec.tabular_noise = 0;
  spec.seed = 5;
  const auto cohort = generate_synthetic(spec);
  std::vector<double> risks;
  for (const auto& r : cohort.manifest.rows) risks.push_back(*r.true_risk);
  std::vector<double> sorted = risks;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  std::array<double, kNumWindows> hi{}, lo{};
  double n_hi = 0, n_lo = 0;
  for (std::size_t i = 0; i < risks.size(); ++i) {
    const auto l = derive_labels(cohort.manifest.rows[i]);
    if (!l) continue;
    auto& acc = risks[i] > median ? hi : lo;
    (risks[i] > median ? n_hi : n_lo) += 1;
    for (std::size_t t = 0; t < kNumWindows; ++t) acc[t] += l->y[t];
  }
  for (std::size_t t = 0; t < kNumWindows; ++t) CHECK(hi[t] / n_hi > lo[t] / n_lo);
}

TEST_CASE("recorded true DRC matches empirical event frequencies") {
  for (double alpha : {-8.0, -10.0}) {
    SyntheticSpec spec;
    spec.num_patients = 10000;
    spec.render_images = false;
    spec.no_blob_probability = 1.0;
    spec.alpha = alpha;
    spec.censor_min_h = spec.censor_max_h = 1000;
    spec.followup_probability = 0;
    spec.exclude_probability = 0;
    spec.seed = 6;
    const auto cohort = generate_synthetic(spec);
    std::array<double, kGridSize> freq{};
    for (const auto& r : cohort.manifest.rows) {
      for (std::size_t i = 0; i < kGridSize; ++i)
        freq[i] += r.event_time_h && *r.event_time_h - r.exam_time_h <= kTimeGrid[i];
    }
    for (std::size_t i = 0; i < kGridSize; ++i) {
      CHECK(std::abs(freq[i] / 10000.0 - cohort.true_drc[0][i]) <= 0.03);
      CHECK(cohort.true_drc[0][i] == cohort.true_drc.back()[i]);
    }
    CHECK(cohort.true_drc[0][kGridSize - 1] > 0.05);
  }
}

TEST_CASE("true conditionals agree with the Gompertz distribution") {
  for (double lh : {-12.0, -9.0, -6.0}) {
    const auto q = true_conditionals(lh, 0.05);
    const auto drc = drc_from_conditionals(q);
    for (std::size_t i = 0; i < kGridSize; ++i) {
      CHECK(q[i] > 0.0);
      CHECK(q[i] < 1.0);
      CHECK(std::abs(drc[i] - gompertz_cdf(lh, 0.05, kTimeGrid[i])) <= 1e-9);
    }
  }
  for (double q : true_conditionals(-2.0, 0.05)) CHECK(q < 1.0);
}

TEST_CASE("stored tabular model and prediction files round trip") {
  SyntheticSpec spec;
  spec.num_patients = 200;
  spec.render_images = false;
  spec.alpha = -8;
  spec.seed = 7;
  const auto cohort = generate_synthetic(spec);
  ClinicalTable table;
  for (const auto& [pid, obs] : cohort.clinical) table.add(pid, obs);
  table.finalize();
  DatasetOptions opt;
  opt.load_images = false;
  const Dataset data = build_dataset(cohort.manifest, nullptr, &table, opt);
  const auto train = data.indices(Split::Train);
  REQUIRE_FALSE(train.empty());

  StoredModel model;
  model.family = "logreg";
  model.logreg_members.push_back(fit_window_logreg(data, train, LogRegParams{}));
  model.hyperparameters.push_back({{"l2", 0.001}});
  const fs::path dir = scratch_dir("model");
  save_model(model, dir);
  const StoredModel loaded = load_model(dir);
  CHECK(loaded.family == "logreg");
  CHECK(loaded.size() == 1);
  for (auto e : data.indices(Split::Test)) CHECK(loaded.predict(data.exams[e]) == model.predict(data.exams[e]));

  fs::remove(dir / "model.json");
  CHECK_THROWS_AS(load_model(dir), Error);

  const std::vector<std::string> ids{"E1", "E2"};
  const std::vector<std::vector<double>> preds{{0.1, 0.2, 0.3, 0.4}, {0.5, 0.6, 0.7, 0.8}};
  const auto cols = prediction_columns("gmic");
  write_predictions_csv(dir / "p.csv", ids, preds, cols);
  const auto back = read_predictions_csv(dir / "p.csv");
  CHECK(back.at("E2") == preds[1]);
  CHECK(prediction_columns("drc").size() == kGridSize);
}
