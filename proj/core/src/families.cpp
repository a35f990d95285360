#include "prognosis/families.hpp"

#include <cmath>

#include "prognosis/error.hpp"
#include "prognosis/random.hpp"

namespace prognosis {

namespace {

const Exam& exam_at(const Dataset& data, std::size_t i) {
  if (i >= data.exams.size()) throw Error("exam index out of range");
  return data.exams[i];
}

std::vector<int> window_labels(const Dataset& data, std::span<const std::size_t> exams, std::size_t t) {
  std::vector<int> y;
  y.reserve(exams.size());
  for (auto i : exams) y.push_back(exam_at(data, i).labels.y[t]);
  return y;
}

double get(const HyperConfig& config, const std::string& key, double fallback) {
  auto it = config.find(key);
  return it == config.end() ? fallback : it->second;
}

}  // namespace

WindowScores WindowGbm::predict(std::span<const double> features) const {
  WindowScores out{};
  for (std::size_t t = 0; t < kNumWindows; ++t) out[t] = models[t].predict(features);
  return out;
}

WindowScores WindowLogReg::predict(std::span<const double> features) const {
  WindowScores out{};
  for (std::size_t t = 0; t < kNumWindows; ++t) out[t] = models[t].predict(features);
  return out;
}

FeatureMatrix feature_matrix(const Dataset& data, std::span<const std::size_t> exams) {
  FeatureMatrix x;
  x.reserve(exams.size());
  for (auto i : exams) {
    const auto& e = exam_at(data, i);
    if (e.features.empty()) throw Error("exam '" + e.exam_id + "' has no clinical features");
    x.push_back(e.features);
  }
  return x;
}

WindowGbm fit_window_gbm(const Dataset& data, std::span<const std::size_t> exams, const GbmParams& params) {
  const auto x = feature_matrix(data, exams);
  WindowGbm model;
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    GbmParams p = params;
    p.seed = derive_seed(params.seed, t);
    model.models[t] = fit_gbm(x, window_labels(data, exams, t), p);
  }
  return model;
}

WindowLogReg fit_window_logreg(const Dataset& data, std::span<const std::size_t> exams,
                               const LogRegParams& params) {
  const auto x = feature_matrix(data, exams);
  WindowLogReg model;
  for (std::size_t t = 0; t < kNumWindows; ++t) model.models[t] = fit_logreg(x, window_labels(data, exams, t), params);
  return model;
}

std::vector<double> ImageMember::predict(std::size_t exam) const {
  return model_.predict_tta(exam_at(data_, exam).image, policy_, tta_);
}

std::vector<double> ImageMember::predict_fast(std::size_t exam) const {
  return model_.predict(exam_at(data_, exam).image);
}

std::vector<double> GbmMember::predict(std::size_t exam) const {
  const auto p = model_.predict(exam_at(data_, exam).features);
  return {p.begin(), p.end()};
}

std::vector<double> LogRegMember::predict(std::size_t exam) const {
  const auto p = model_.predict(exam_at(data_, exam).features);
  return {p.begin(), p.end()};
}

double score_windows(const Dataset& data, std::span<const std::vector<double>> predictions,
                     std::span<const std::size_t> exams) {
  std::vector<WindowLabels> labels;
  for (auto i : exams) labels.push_back(exam_at(data, i).labels.y);
  return window_score(predictions, labels);
}

ImageTrainOptions ImageFamily::options_for(const HyperConfig& config) const {
  ImageTrainOptions opt = base_;
  if (task_ == ImageTask::Classifier) opt.learning_rate = get(config, "lr", opt.learning_rate);
  opt.beta = get(config, "beta", opt.beta);
  opt.arch.pool_fraction = get(config, "r", opt.arch.pool_fraction);
  return opt;
}

std::unique_ptr<TrainedMember> ImageFamily::train(const HyperConfig& config,
                                                  std::span<const std::size_t> train_exams,
                                                  std::span<const std::size_t> val_exams, std::uint64_t seed) {
  const ImageTrainOptions opt = options_for(config);
  ImageModel model = train_image_model(data_, train_exams, val_exams, task_, opt, seed);
  // TTA draws use the base augmentation seed.
  return std::make_unique<ImageMember>(std::move(model), data_, opt.augmentation, opt.tta);
}

double ImageFamily::score(std::span<const std::vector<double>> predictions,
                          std::span<const std::size_t> exams) const {
  if (task_ == ImageTask::Classifier) return score_windows(data_, predictions, exams);
  std::vector<ExamLabels> labels;
  for (auto i : exams) labels.push_back(exam_at(data_, i).labels);
  try {
    return survival_score(predictions, labels);
  } catch (const Error&) {
    return 0.5;  // too few events to rank; uninformative
  }
}

GbmParams GbmFamily::params_for(const HyperConfig& config, std::uint64_t seed) const {
  GbmParams p = base_;
  p.learning_rate = get(config, "lr", p.learning_rate);
  p.num_trees = static_cast<std::size_t>(std::llround(get(config, "trees", static_cast<double>(p.num_trees))));
  p.max_leaves = static_cast<std::size_t>(std::llround(get(config, "leaves", static_cast<double>(p.max_leaves))));
  p.seed = seed;
  return p;
}

std::unique_ptr<TrainedMember> GbmFamily::train(const HyperConfig& config, std::span<const std::size_t> train_exams,
                                                std::span<const std::size_t>, std::uint64_t seed) {
  return std::make_unique<GbmMember>(fit_window_gbm(data_, train_exams, params_for(config, seed)), data_);
}

double GbmFamily::score(std::span<const std::vector<double>> predictions,
                        std::span<const std::size_t> exams) const {
  return score_windows(data_, predictions, exams);
}

std::unique_ptr<TrainedMember> LogRegFamily::train(const HyperConfig& config,
                                                   std::span<const std::size_t> train_exams,
                                                   std::span<const std::size_t>, std::uint64_t) {
  LogRegParams p = base_;
  p.l2 = get(config, "l2", p.l2);
  return std::make_unique<LogRegMember>(fit_window_logreg(data_, train_exams, p), data_);
}

double LogRegFamily::score(std::span<const std::vector<double>> predictions,
                           std::span<const std::size_t> exams) const {
  return score_windows(data_, predictions, exams);
}

}  // namespace prognosis
