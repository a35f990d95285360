#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prognosis/adam.hpp"
#include "prognosis/dataset.hpp"
#include "prognosis/gmic.hpp"

namespace prognosis {

enum class ImageTask { Classifier, Survival };

const char* task_name(ImageTask task) noexcept;

/// Mean over windows (with both classes present) of (AUC + PR AUC) / 2.
double window_score(std::span<const std::vector<double>> predictions, std::span<const WindowLabels> labels);

/// Concordance of DRC(96 h) (entry 5 of an 8-point curve) over exams with an observed event.
double survival_score(std::span<const std::vector<double>> curves, std::span<const ExamLabels> labels);

struct ImageTrainOptions {
  GmicConfig arch;
  double learning_rate = 1e-3;
  double beta = 0.0;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  bool augment = true;
  AugmentPolicy augmentation;  ///< seed is replaced per run
  std::size_t tta = 10;        ///< augmented copies averaged at prediction time (0 = plain forward)
};

struct ImageModel {
  ImageTask task = ImageTask::Classifier;
  GmicConfig arch;
  NamedTensors params;

  /// Classifier: the 4 fusion probabilities. Survival: the 8-point DRC from the fusion head.
  std::vector<double> predict(const GrayImage& image) const;
  /// Mean of predict() over `n` augmented copies (plain forward when n == 0).
  std::vector<double> predict_tta(const GrayImage& image, const AugmentPolicy& policy, std::size_t n) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_score = 0.0;
};

/// Adam on minibatches (mean loss over the batch) with the augmented image per
/// draw; keeps the parameters of the epoch with the best validation score
/// (the last epoch when `val` is empty).
ImageModel train_image_model(const Dataset& data, std::span<const std::size_t> train,
                             std::span<const std::size_t> val, ImageTask task,
                             const ImageTrainOptions& options, std::uint64_t seed,
                             std::vector<EpochRecord>* history = nullptr,
                             const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Per-exam loss for one image, as used in training.
double image_loss(const ImageModel& model, const GrayImage& image, const ExamLabels& labels, double beta);

}  // namespace prognosis
