#pragma once

#include <array>
#include <memory>
#include <optional>

#include "prognosis/dataset.hpp"
#include "prognosis/gbm.hpp"
#include "prognosis/selection.hpp"
#include "prognosis/training.hpp"

namespace prognosis {

/// One GBM per prediction window.
struct WindowGbm {
  std::array<GbmModel, kNumWindows> models;
  WindowScores predict(std::span<const double> features) const;
};

struct WindowLogReg {
  std::array<LogRegModel, kNumWindows> models;
  WindowScores predict(std::span<const double> features) const;
};

FeatureMatrix feature_matrix(const Dataset& data, std::span<const std::size_t> exams);
WindowGbm fit_window_gbm(const Dataset& data, std::span<const std::size_t> exams, const GbmParams& params);
WindowLogReg fit_window_logreg(const Dataset& data, std::span<const std::size_t> exams,
                               const LogRegParams& params);

class ImageMember : public TrainedMember {
 public:
  ImageMember(ImageModel model, const Dataset& data, AugmentPolicy tta_policy, std::size_t tta)
      : model_(std::move(model)), data_(data), policy_(tta_policy), tta_(tta) {}
  std::vector<double> predict(std::size_t exam) const override;
  std::vector<double> predict_fast(std::size_t exam) const override;
  const ImageModel& model() const { return model_; }

 private:
  ImageModel model_;
  const Dataset& data_;
  AugmentPolicy policy_;
  std::size_t tta_;
};

class GbmMember : public TrainedMember {
 public:
  GbmMember(WindowGbm model, const Dataset& data) : model_(std::move(model)), data_(data) {}
  std::vector<double> predict(std::size_t exam) const override;
  const WindowGbm& model() const { return model_; }

 private:
  WindowGbm model_;
  const Dataset& data_;
};

class LogRegMember : public TrainedMember {
 public:
  LogRegMember(WindowLogReg model, const Dataset& data) : model_(std::move(model)), data_(data) {}
  std::vector<double> predict(std::size_t exam) const override;
  const WindowLogReg& model() const { return model_; }

 private:
  WindowLogReg model_;
  const Dataset& data_;
};

/// Image classifier or survival model; hyperparameters lr (classifier only),
/// beta and r override the base options.
class ImageFamily : public ModelFamily {
 public:
  ImageFamily(const Dataset& data, ImageTask task, ImageTrainOptions base, SearchSpace space)
      : data_(data), task_(task), base_(std::move(base)), space_(std::move(space)) {}
  std::string name() const override { return task_name(task_); }
  SearchSpace search_space() const override { return space_; }
  std::unique_ptr<TrainedMember> train(const HyperConfig& config, std::span<const std::size_t> train_exams,
                                       std::span<const std::size_t> val_exams, std::uint64_t seed) override;
  double score(std::span<const std::vector<double>> predictions,
               std::span<const std::size_t> exams) const override;
  ImageTrainOptions options_for(const HyperConfig& config) const;

 private:
  const Dataset& data_;
  ImageTask task_;
  ImageTrainOptions base_;
  SearchSpace space_;
};

class GbmFamily : public ModelFamily {
 public:
  GbmFamily(const Dataset& data, GbmParams base, SearchSpace space)
      : data_(data), base_(base), space_(std::move(space)) {}
  std::string name() const override { return "gbm"; }
  SearchSpace search_space() const override { return space_; }
  std::unique_ptr<TrainedMember> train(const HyperConfig& config, std::span<const std::size_t> train_exams,
                                       std::span<const std::size_t> val_exams, std::uint64_t seed) override;
  double score(std::span<const std::vector<double>> predictions,
               std::span<const std::size_t> exams) const override;
  GbmParams params_for(const HyperConfig& config, std::uint64_t seed) const;

 private:
  const Dataset& data_;
  GbmParams base_;
  SearchSpace space_;
};

class LogRegFamily : public ModelFamily {
 public:
  LogRegFamily(const Dataset& data, LogRegParams base, SearchSpace space)
      : data_(data), base_(base), space_(std::move(space)) {}
  std::string name() const override { return "logreg"; }
  SearchSpace search_space() const override { return space_; }
  std::unique_ptr<TrainedMember> train(const HyperConfig& config, std::span<const std::size_t> train_exams,
                                       std::span<const std::size_t> val_exams, std::uint64_t seed) override;
  double score(std::span<const std::vector<double>> predictions,
               std::span<const std::size_t> exams) const override;

 private:
  const Dataset& data_;
  LogRegParams base_;
  SearchSpace space_;
};

/// Window score of predictions against the exams' labels.
double score_windows(const Dataset& data, std::span<const std::vector<double>> predictions,
                     std::span<const std::size_t> exams);

}  // namespace prognosis
