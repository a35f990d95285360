#pragma once

// Deterministic stand-in model family plus an independent re-simulation of
// the random-search / Monte Carlo CV harness.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prognosis/random.hpp"
#include "prognosis/selection.hpp"

namespace prognosis::testing {

struct MockCohort {
  std::vector<std::string> exam_patient;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Patients P000.. with `exams_per_patient` exams each; the last quarter of
/// patients forms the test set.
inline MockCohort mock_cohort(std::size_t patients, std::size_t exams_per_patient) {
  MockCohort c;
  const std::size_t n_train = patients - patients / 4;
  for (std::size_t p = 0; p < patients; ++p) {
    char name[16];
    std::snprintf(name, sizeof name, "P%03zu", p);
    for (std::size_t k = 0; k < exams_per_patient; ++k) {
      (p < n_train ? c.train : c.test).push_back(c.exam_patient.size());
      c.exam_patient.emplace_back(name);
    }
  }
  return c;
}

/// Validation quality as a pure function of the configuration.
inline double mock_quality(const HyperConfig& c) {
  const double a = std::log10(c.at("lr")) + 5.0;
  const double b = c.at("r") - 0.5;
  return -(a * a) - b * b;
}

inline double mock_noise(std::uint64_t seed, std::size_t exam) {
  return static_cast<double>(derive_seed(seed, exam) >> 11) * 0x1.0p-53;
}

class MockMember : public TrainedMember {
 public:
  MockMember(double quality, std::uint64_t seed) : quality_(quality), seed_(seed) {}
  std::vector<double> predict(std::size_t exam) const override {
    return {quality_, mock_noise(seed_, exam)};
  }
  std::uint64_t seed() const { return seed_; }

 private:
  double quality_;
  std::uint64_t seed_;
};

/// score = mean(p[0]) + 1e-3 * mean(p[1]); the second output breaks ties
/// between splits without depending on anything but the run seed.
inline double mock_score(const std::vector<std::vector<double>>& preds) {
  double q = 0.0, n = 0.0;
  for (const auto& p : preds) {
    q += p[0];
    n += p[1];
  }
  const double k = static_cast<double>(preds.size());
  return q / k + 1e-3 * n / k;
}

class MockFamily : public ModelFamily {
 public:
  MockFamily() = default;
  explicit MockFamily(const MockCohort&) {}
  std::string name() const override { return "mock"; }
  SearchSpace search_space() const override { return SearchSpace::gmic(); }
  std::unique_ptr<TrainedMember> train(const HyperConfig& config, std::span<const std::size_t>,
                                       std::span<const std::size_t>, std::uint64_t seed) override {
    return std::make_unique<MockMember>(mock_quality(config), seed);
  }
  double score(std::span<const std::vector<double>> predictions, std::span<const std::size_t>) const override {
    return mock_score({predictions.begin(), predictions.end()});
  }

};

struct MockExpectation {
  std::vector<std::string> universe;
  std::vector<double> config_scores;
  std::vector<std::size_t> top_configs;
  std::vector<std::uint64_t> member_keys;
  std::vector<std::vector<double>> test_predictions;
};

/// Re-derives the harness outcome from the seed-stream contract alone.
inline MockExpectation simulate_selection(const MockCohort& cohort, const SelectionOptions& opt,
                                          std::uint64_t seed) {
  MockExpectation e;
  std::set<std::string> unique;
  for (auto x : cohort.train) unique.insert(cohort.exam_patient[x]);
  e.universe.assign(unique.begin(), unique.end());
  {
    Rng rng(derive_seed(seed, 1));
    rng.shuffle(e.universe.begin(), e.universe.end());
    e.universe.resize(static_cast<std::size_t>(
        std::floor(opt.universe_percent / 100.0 * static_cast<double>(e.universe.size()))));
  }
  std::vector<std::string> sorted_universe = e.universe;
  std::sort(sorted_universe.begin(), sorted_universe.end());
  const std::set<std::string> in_universe(e.universe.begin(), e.universe.end());

  std::vector<double> quality;
  for (std::size_t i = 0; i < opt.num_configs; ++i) {
    Rng rng(derive_seed(seed, 2, i));
    HyperConfig c;
    c["lr"] = std::exp(rng.uniform(std::log(1e-6), std::log(1e-4)));
    c["beta"] = std::exp(rng.uniform(std::log(4e-6), std::log(4e-3)));
    c["r"] = rng.uniform(0.2, 0.8);
    quality.push_back(mock_quality(c));
  }

  std::vector<std::vector<std::uint64_t>> train_seeds(opt.num_configs);
  for (std::size_t i = 0; i < opt.num_configs; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < opt.num_splits; ++j) {
      const std::uint64_t s = derive_seed(seed, 3, i, j);
      std::vector<std::string> order = sorted_universe;
      Rng rng(s);
      rng.shuffle(order.begin(), order.end());
      const auto n_train = static_cast<std::size_t>(std::floor(opt.train_fraction * static_cast<double>(order.size())));
      const std::set<std::string> val(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
      const std::uint64_t ts = derive_seed(s, 4);
      train_seeds[i].push_back(ts);
      std::vector<std::vector<double>> preds;
      for (auto x : cohort.train)
        if (val.contains(cohort.exam_patient[x])) preds.push_back({quality[i], mock_noise(ts, x)});
      total += mock_score(preds);
    }
    e.config_scores.push_back(total / static_cast<double>(opt.num_splits));
  }

  std::vector<std::size_t> idx(opt.num_configs);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // Scores are distinct with probability one; a plain selection of maxima suffices.
  for (std::size_t k = 0; k < std::min(opt.top_k, idx.size()); ++k) {
    std::size_t best = k;
    for (std::size_t m = k + 1; m < idx.size(); ++m)
      if (e.config_scores[idx[m]] > e.config_scores[idx[best]]) best = m;
    std::swap(idx[k], idx[best]);
    e.top_configs.push_back(idx[k]);
  }
  for (auto i : e.top_configs)
    for (auto ts : train_seeds[i]) e.member_keys.push_back(ts);

  for (auto x : cohort.test) {
    std::vector<double> mean(2, 0.0);
    for (auto i : e.top_configs)
      for (auto ts : train_seeds[i]) {
        mean[0] += quality[i];
        mean[1] += mock_noise(ts, x);
      }
    for (auto& v : mean) v /= static_cast<double>(e.member_keys.size());
    e.test_predictions.push_back(mean);
  }
  return e;
}

inline std::vector<std::uint64_t> member_keys(const SelectionResult& r) {
  std::vector<std::uint64_t> keys;
  for (const auto& m : r.members) keys.push_back(dynamic_cast<const MockMember&>(*m).seed());
  return keys;
}

/// Every split separates patients, and every split covers exactly the universe.
inline bool disjoint_splits(const SelectionResult& r, const std::vector<std::string>& exam_patient) {
  const std::set<std::string> universe(r.universe_patients.begin(), r.universe_patients.end());
  for (const auto& run : r.runs) {
    std::set<std::string> tr, va;
    for (auto x : run.train_exams) tr.insert(exam_patient[x]);
    for (auto x : run.val_exams) {
      va.insert(exam_patient[x]);
      if (tr.contains(exam_patient[x])) return false;
    }
    std::set<std::string> all = tr;
    all.insert(va.begin(), va.end());
    if (all != universe) return false;
  }
  return true;
}

}  // namespace prognosis::testing
