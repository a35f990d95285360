#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "../support/oracles.hpp"
#include "prognosis/clinical.hpp"
#include "prognosis/error.hpp"
#include "prognosis/gbm.hpp"
#include "prognosis/metrics.hpp"
#include "prognosis/random.hpp"

using namespace prognosis;
using namespace prognosis::testing;

namespace {

std::size_t feature_index(const std::string& name) {
  const auto& names = ClinicalSchema::feature_names();
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

struct Planted {
  FeatureMatrix x;
  std::vector<int> y;
};

/// Feature `signal` drives the label through a logistic link; the rest is noise.
Planted planted(Rng& rng, std::size_t n, std::size_t features, std::size_t signal, double missing = 0.0) {
  Planted d;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(features);
    for (auto& v : row) v = rng.normal();
    const double p = 1.0 / (1.0 + std::exp(-3.0 * row[signal]));
    d.y.push_back(rng.bernoulli(p) ? 1 : 0);
    for (auto& v : row)
      if (rng.bernoulli(missing)) v = kMissing;
    d.x.push_back(std::move(row));
  }
  return d;
}

}  // namespace

TEST_CASE("featurisation picks the latest vitals and lab extremes") {
  std::vector<Observation> recs{{0.0, "age", 61.0},        {1.0, "heart_rate", 80.0}, {5.0, "heart_rate", 95.0},
                                {9.0, "heart_rate", 120.0}, {2.0, "d_dimer", 3.0},    {4.0, "d_dimer", 9.0},
                                {6.0, "d_dimer", 5.0},     {-10.0, "albumin", 4.0},  {6.0, "ldh", 250.0}};
  const auto f = featurize(recs, 6.0);
  CHECK(f.size() == ClinicalSchema::feature_names().size());
  CHECK(f[feature_index("heart_rate")] == 95.0);
  CHECK(f[feature_index("age")] == 61.0);
  CHECK(f[feature_index("d_dimer_min")] == 3.0);
  CHECK(f[feature_index("d_dimer_max")] == 9.0);
  CHECK(f[feature_index("ldh_min")] == 250.0);
  CHECK(f[feature_index("ldh_max")] == 250.0);
  CHECK(std::isnan(f[feature_index("albumin_min")]));  // outside (ref - 12, ref]
  CHECK(f[feature_index("missing_albumin_min")] == 1.0);
  CHECK(f[feature_index("missing_d_dimer_max")] == 0.0);
  CHECK(std::isnan(f[feature_index("temperature")]));
  const auto none = featurize({}, 10.0);
  CHECK(none[feature_index("missing_heart_rate")] == 1.0);
}

TEST_CASE("clinical CSV parsing") {
  std::stringstream good("patient_id,timestamp_h,variable_name,value\nP1,0,age,50\nP1,2,heart_rate,88\n");
  const ClinicalTable t = read_clinical_csv(good);
  CHECK(t.has_patient("P1"));
  CHECK(t.patient("P1").size() == 2);
  std::stringstream unknown("patient_id,timestamp_h,variable_name,value\nP1,0,shoe_size,44\n");
  CHECK_THROWS_AS(read_clinical_csv(unknown), Error);
  std::stringstream header("pid,t,var,v\n");
  CHECK_THROWS_AS(read_clinical_csv(header), Error);
}

TEST_CASE("empty ensemble predicts the base rate") {
  FeatureMatrix x{{0.0}, {1.0}, {2.0}, {3.0}};
  std::vector<int> y{0, 1, 1, 1};
  GbmParams p;
  p.num_trees = 0;
  const GbmModel m = fit_gbm(x, y, p);
  CHECK(m.predict(x[0]) == doctest::Approx(0.75));
  for (auto c : feature_importance(m)) CHECK(c == 0);
}

TEST_CASE("one stump separates 1-D data") {
  FeatureMatrix x;
  std::vector<int> y;
  for (int i = -10; i <= 10; ++i) {
    if (i == 0) continue;
    x.push_back({i * 0.1});
    y.push_back(i > 0);
  }
  GbmParams p;
  p.num_trees = 1;
  p.max_leaves = 2;
  p.min_samples_leaf = 1;
  const GbmModel m = fit_gbm(x, y, p);
  REQUIRE(m.trees.size() == 1);
  CHECK(std::abs(m.trees[0].nodes[0].threshold) < 0.1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK((m.predict(x[i]) > 0.5) == (y[i] == 1));
  CHECK(feature_importance(m) == std::vector<std::size_t>{1});
}

TEST_CASE("training loss never increases and trees respect max_leaves") {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Planted d = planted(rng, 300, 5, rng.below(5), 0.1);
    GbmParams p;
    p.num_trees = 40;
    p.max_leaves = 2 + rng.below(10);
    p.subsample = trial % 2 ? 1.0 : 0.7;
    p.seed = rng.next();
    std::vector<double> trace;
    const GbmModel m = fit_gbm(d.x, d.y, p, &trace);
    if (p.subsample == 1.0) {
      for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
    }
    std::size_t internal = 0;
    for (const auto& t : m.trees) {
      CHECK(t.leaf_count() <= p.max_leaves);
      internal += t.nodes.size() - t.leaf_count();
    }
    std::size_t counted = 0;
    for (auto c : feature_importance(m)) counted += c;
    CHECK(counted == internal);
  }
}

TEST_CASE("prediction equals a manual tree walk") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Planted d = planted(rng, 200, 4, 0, 0.2);
    GbmParams p;
    p.num_trees = 20;
    p.seed = rng.next();
    const GbmModel m = fit_gbm(d.x, d.y, p);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> x(4);
      for (auto& v : x) v = rng.bernoulli(0.2) ? kMissing : rng.normal();
      CHECK(m.raw_score(x) == tree_walk_oracle(m, x));
    }
    const std::vector<double> missing(4, kMissing);
    CHECK(std::isfinite(m.predict(missing)));
  }
  GbmModel m;
  m.num_features = 2;
  CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("planted feature dominates the split counts") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Planted d = planted(rng, 400, 6, 3);
    GbmParams p;
    p.num_trees = 30;
    p.seed = seed;
    const auto ranked = ranked_importance(fit_gbm(d.x, d.y, p));
    wins += ranked.front().first == 3;
  }
  CHECK(wins >= 6);
}

TEST_CASE("single-class training falls back to the prior with a warning") {
  FeatureMatrix x{{1.0}, {2.0}};
  std::vector<int> y{1, 1};
  const GbmModel m = fit_gbm(x, y, GbmParams{});
  CHECK_FALSE(m.warning.empty());
  CHECK(m.trees.empty());
  const LogRegModel l = fit_logreg(x, y, LogRegParams{});
  CHECK_FALSE(l.warning.empty());
}

TEST_CASE("text dumps round-trip") {
  Rng rng(3);
  const Planted d = planted(rng, 200, 3, 1, 0.1);
  GbmParams p;
  p.num_trees = 5;
  const GbmModel m = fit_gbm(d.x, d.y, p);
  std::stringstream buf;
  write_gbm(buf, m);
  const GbmModel back = read_gbm(buf);
  for (const auto& row : d.x) CHECK(back.raw_score(row) == m.raw_score(row));
  std::stringstream bad("gbm 1\nnum_features x\n");
  CHECK_THROWS_AS(read_gbm(bad), Error);

  const LogRegModel l = fit_logreg(d.x, d.y, LogRegParams{});
  std::stringstream lbuf;
  write_logreg(lbuf, l);
  const LogRegModel lback = read_logreg(lbuf);
  for (const auto& row : d.x) CHECK(lback.predict(row) == l.predict(row));
}

TEST_CASE("logistic regression baseline") {
  FeatureMatrix x;
  std::vector<int> y;
  for (int i = -20; i <= 20; ++i) {
    if (i == 0) continue;
    x.push_back({i * 0.05});
    y.push_back(i > 0);
  }
  LogRegParams p;
  p.l2 = 0.0;
  p.iterations = 2000;
  const LogRegModel m = fit_logreg(x, y, p);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK((m.predict(x[i]) > 0.5) == (y[i] == 1));
  p.iterations = 0;
  const LogRegModel prior = fit_logreg(x, y, p);
  CHECK(prior.predict(x[0]) == doctest::Approx(0.5));
  CHECK(prior.predict(x[5]) == prior.predict(x[30]));
}

TEST_CASE("boosting is not worse than the linear baseline on planted data") {
  Rng rng(4);
  const Planted train = planted(rng, 800, 5, 2, 0.05);
  const Planted test = planted(rng, 800, 5, 2, 0.05);
  GbmParams p;
  p.num_trees = 100;
  p.learning_rate = 0.05;
  const GbmModel g = fit_gbm(train.x, train.y, p);
  const LogRegModel l = fit_logreg(train.x, train.y, LogRegParams{});
  std::vector<double> sg, sl;
  for (const auto& row : test.x) {
    sg.push_back(g.predict(row));
    sl.push_back(l.predict(row));
  }
  CHECK(roc_auc(sg, test.y) >= roc_auc(sl, test.y) - 0.02);
}
