#include "prognosis/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "prognosis/csv.hpp"
#include "prognosis/error.hpp"
#include "prognosis/random.hpp"

namespace prognosis {

namespace {
constexpr std::uint64_t stream(SelectionStream s) { return static_cast<std::uint64_t>(s); }
}  // namespace

void SearchSpace::validate() const {
  for (const auto& p : params) {
    using L = HyperParameter::Law;
    if (p.law == L::Choice) {
      if (p.choices.empty()) throw Error("hyperparameter '" + p.name + "' has no choices");
      continue;
    }
    if (!std::isfinite(p.lo) || !std::isfinite(p.hi) || p.lo > p.hi) {
      throw Error("hyperparameter '" + p.name + "' has invalid bounds");
    }
    if ((p.law == L::LogUniform || p.law == L::LogUniformInt) && !(p.lo > 0.0)) {
      throw Error("log-scale hyperparameter '" + p.name + "' needs positive bounds");
    }
  }
}

HyperConfig SearchSpace::sample(std::uint64_t seed, std::size_t index) const {
  validate();
  Rng rng(derive_seed(seed, stream(SelectionStream::Configs), index));
  HyperConfig config;
  for (const auto& p : params) {
    using L = HyperParameter::Law;
    double v = 0.0;
    switch (p.law) {
      case L::LogUniform:
        v = std::exp(rng.uniform(std::log(p.lo), std::log(p.hi)));
        break;
      case L::Uniform:
        v = rng.uniform(p.lo, p.hi);
        break;
      case L::LogUniformInt:
        v = std::round(std::exp(rng.uniform(std::log(p.lo), std::log(p.hi))));
        break;
      case L::UniformInt:
        v = static_cast<double>(
            rng.integer(static_cast<std::int64_t>(p.lo), static_cast<std::int64_t>(p.hi)));
        break;
      case L::Choice:
        v = p.choices[rng.below(p.choices.size())];
        break;
    }
    config[p.name] = v;
  }
  return config;
}

SearchSpace SearchSpace::gmic() {
  using L = HyperParameter::Law;
  return {{{"lr", L::LogUniform, 1e-6, 1e-4, {}},
           {"beta", L::LogUniform, 4e-6, 4e-3, {}},
           {"r", L::Uniform, 0.2, 0.8, {}}}};
}

SearchSpace SearchSpace::drc() {
  using L = HyperParameter::Law;
  return {{{"beta", L::LogUniform, 1e-6, 1e-4, {}}, {"r", L::Choice, 0, 0, {0.2, 0.5, 0.8}}}};
}

SearchSpace SearchSpace::gbm() {
  using L = HyperParameter::Law;
  return {{{"lr", L::LogUniform, 1e-2, 1e-1, {}},
           {"trees", L::LogUniformInt, 100, 1000, {}},
           {"leaves", L::UniformInt, 5, 15, {}}}};
}

SearchSpace SearchSpace::logreg() {
  using L = HyperParameter::Law;
  return {{{"l2", L::LogUniform, 1e-4, 1e-1, {}}}};
}

std::string to_string(const HyperConfig& config) {
  std::string s;
  for (const auto& [k, v] : config) s += (s.empty() ? "" : " ") + k + "=" + format_double(v);
  return s;
}

std::uint64_t split_seed(std::uint64_t seed, std::size_t config, std::size_t split) {
  return derive_seed(seed, stream(SelectionStream::Split), config, split);
}

std::vector<std::string> sample_universe(std::span<const std::string> patients, double percent,
                                         std::uint64_t seed) {
  if (!(percent >= 0.0 && percent <= 100.0)) throw Error("universe fraction must lie in [0, 100]");
  std::set<std::string> unique(patients.begin(), patients.end());
  std::vector<std::string> list(unique.begin(), unique.end());
  Rng rng(derive_seed(seed, stream(SelectionStream::Universe)));
  rng.shuffle(list.begin(), list.end());
  const auto keep = static_cast<std::size_t>(std::floor(percent / 100.0 * static_cast<double>(list.size())));
  list.resize(std::min(keep, list.size()));
  return list;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_patients(
    std::span<const std::string> patients, double train_fraction, std::uint64_t seed) {
  std::vector<std::string> list(patients.begin(), patients.end());
  std::sort(list.begin(), list.end());
  Rng rng(seed);
  rng.shuffle(list.begin(), list.end());
  const auto n_train =
      static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(list.size())));
  if (n_train == 0 || n_train >= list.size()) {
    throw Error("universe of " + std::to_string(list.size()) +
                " patients is too small for a train/validation split");
  }
  return {std::vector<std::string>(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n_train)),
          std::vector<std::string>(list.begin() + static_cast<std::ptrdiff_t>(n_train), list.end())};
}

SelectionResult run_model_selection(ModelFamily& family, std::span<const std::string> exam_patient,
                                    std::span<const std::size_t> train_exams,
                                    std::span<const std::size_t> test_exams,
                                    const SelectionOptions& options, std::uint64_t seed,
                                    const SelectionLogger& logger) {
  if (options.num_configs == 0 || options.num_splits == 0 || options.top_k == 0) {
    throw Error("selection needs at least one configuration, split and chosen configuration");
  }
  for (auto e : train_exams)
    if (e >= exam_patient.size()) throw Error("train exam index out of range");
  std::set<std::string> test_patients;
  for (auto e : test_exams) {
    if (e >= exam_patient.size()) throw Error("test exam index out of range");
    test_patients.insert(exam_patient[e]);
  }
  std::vector<std::string> train_patients;
  for (auto e : train_exams) {
    if (test_patients.contains(exam_patient[e])) {
      throw Error("patient '" + exam_patient[e] + "' appears in both training and test sets");
    }
    train_patients.push_back(exam_patient[e]);
  }

  SelectionResult result;
  result.universe_percent = options.universe_percent;
  result.universe_patients = sample_universe(train_patients, options.universe_percent, seed);
  const std::set<std::string> universe(result.universe_patients.begin(), result.universe_patients.end());

  const SearchSpace space = family.search_space();
  for (std::size_t i = 0; i < options.num_configs; ++i) result.configs.push_back(space.sample(seed, i));

  for (std::size_t i = 0; i < options.num_configs; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < options.num_splits; ++j) {
      SelectionRun run;
      run.config = i;
      run.split = j;
      run.seed = split_seed(seed, i, j);
      const auto [tr, va] = split_patients(result.universe_patients, options.train_fraction, run.seed);
      const std::set<std::string> tr_set(tr.begin(), tr.end());
      for (auto e : train_exams) {
        if (!universe.contains(exam_patient[e])) continue;
        (tr_set.contains(exam_patient[e]) ? run.train_exams : run.val_exams).push_back(e);
      }
      const auto start = std::chrono::steady_clock::now();
      auto member = family.train(result.configs[i], run.train_exams, run.val_exams,
                                 derive_seed(run.seed, stream(SelectionStream::Train)));
      for (auto e : run.val_exams) run.val_predictions.push_back(member->predict_fast(e));
      run.score = family.score(run.val_predictions, run.val_exams);
      run.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      total += run.score;
      if (logger) logger(run, result.configs[i]);
      result.members.push_back(std::move(member));
      result.runs.push_back(std::move(run));
    }
    result.config_scores.push_back(total / static_cast<double>(options.num_splits));
  }

  std::vector<std::size_t> order(options.num_configs);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.config_scores[a] > result.config_scores[b];
  });
  order.resize(std::min(options.top_k, order.size()));
  result.top_configs = order;

  // Keep only the chosen members; the rest are released.
  std::vector<std::shared_ptr<TrainedMember>> all = std::move(result.members);
  result.members.clear();
  for (auto i : result.top_configs)
    for (std::size_t j = 0; j < options.num_splits; ++j) {
      const std::size_t r = i * options.num_splits + j;
      result.members.push_back(all[r]);
      result.member_runs.push_back(r);
    }
  all.clear();

  std::map<std::size_t, std::size_t> oof_counts;
  for (auto r : result.member_runs) {
    const auto& run = result.runs[r];
    for (std::size_t k = 0; k < run.val_exams.size(); ++k) {
      auto& acc = result.oof_predictions[run.val_exams[k]];
      const auto& p = run.val_predictions[k];
      if (acc.empty()) acc.assign(p.size(), 0.0);
      for (std::size_t c = 0; c < p.size(); ++c) acc[c] += p[c];
      ++oof_counts[run.val_exams[k]];
    }
  }
  for (auto& [exam, acc] : result.oof_predictions)
    for (auto& v : acc) v /= static_cast<double>(oof_counts[exam]);

  result.test_exams.assign(test_exams.begin(), test_exams.end());
  for (auto e : result.test_exams) {
    std::vector<double> mean;
    for (const auto& m : result.members) {
      const auto p = m->predict(e);
      if (mean.empty()) mean.assign(p.size(), 0.0);
      for (std::size_t c = 0; c < p.size(); ++c) mean[c] += p[c];
    }
    for (auto& v : mean) v /= static_cast<double>(result.members.size());
    result.test_predictions.push_back(std::move(mean));
  }
  if (!result.test_exams.empty()) result.test_score = family.score(result.test_predictions, result.test_exams);
  return result;
}

void write_selection_jsonl(std::ostream& out, const SelectionResult& result, const std::string& family,
                           const std::map<std::string, double>& extra_summary) {
  using nlohmann::json;
  for (const auto& run : result.runs) {
    json rec;
    rec["type"] = "run";
    rec["family"] = family;
    rec["config"] = run.config;
    rec["split"] = run.split;
    rec["seed"] = run.seed;
    rec["hyperparameters"] = result.configs[run.config];
    rec["train_exams"] = run.train_exams.size();
    rec["val_exams"] = run.val_exams.size();
    rec["val_score"] = run.score;
    rec["wall_seconds"] = run.wall_seconds;
    out << rec.dump() << '\n';
  }
  json summary;
  summary["type"] = "summary";
  summary["family"] = family;
  summary["universe_percent"] = result.universe_percent;
  summary["universe_patients"] = result.universe_patients.size();
  summary["config_scores"] = result.config_scores;
  summary["top_configs"] = result.top_configs;
  summary["test_score"] = result.test_score;
  for (const auto& [k, v] : extra_summary) summary[k] = v;
  out << summary.dump() << '\n';
}

}  // namespace prognosis
