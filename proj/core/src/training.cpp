#include "prognosis/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "prognosis/drc.hpp"
#include "prognosis/error.hpp"
#include "prognosis/metrics.hpp"
#include "prognosis/random.hpp"

namespace prognosis {

namespace {
enum Stream : std::uint64_t { kInit = 21, kShuffle = 22, kAugment = 23 };

std::vector<double> as_doubles(const WindowLabels& y) { return {y.begin(), y.end()}; }

NodeRef build_loss(GmicGraph& m, ImageTask task, const ExamLabels& labels, double beta) {
  if (task == ImageTask::Classifier) return gmic_loss(m, as_doubles(labels.y), beta);
  return drc_loss(m, labels.survival, beta);
}
}  // namespace

const char* task_name(ImageTask task) noexcept {
  return task == ImageTask::Classifier ? "gmic" : "drc";
}

double window_score(std::span<const std::vector<double>> predictions, std::span<const WindowLabels> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in count");
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> s(predictions.size());
  std::vector<int> y(predictions.size());
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    int pos = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      if (predictions[i].size() != kNumWindows) throw ShapeError("expected one prediction per window");
      s[i] = predictions[i][t];
      y[i] = labels[i][t];
      pos += y[i];
    }
    if (pos == 0 || pos == static_cast<int>(y.size())) continue;
    total += (roc_auc(s, y) + pr_auc(s, y)) / 2.0;
    ++used;
  }
  if (used == 0) throw Error("no window has both classes; cannot score");
  return total / static_cast<double>(used);
}

double survival_score(std::span<const std::vector<double>> curves, std::span<const ExamLabels> labels) {
  if (curves.size() != labels.size()) throw ShapeError("curves and labels differ in count");
  std::vector<double> risk, times;
  std::vector<int> observed;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (curves[i].size() != kGridSize) throw ShapeError("expected an 8-point risk curve");
    if (!labels[i].time_to_event_h) continue;
    risk.push_back(curves[i][5]);
    times.push_back(*labels[i].time_to_event_h);
    observed.push_back(1);
  }
  return concordance_at(risk, times, observed);
}

std::vector<double> ImageModel::predict(const GrayImage& image) const {
  const auto out = gmic_forward(image, arch, params);
  if (task == ImageTask::Classifier) return out.y_fusion;
  const auto drc = drc_from_conditionals(out.y_fusion);
  return {drc.begin(), drc.end()};
}

std::vector<double> ImageModel::predict_tta(const GrayImage& image, const AugmentPolicy& policy,
                                            std::size_t n) const {
  if (n == 0) return predict(image);
  return tta_average([this](const GrayImage& img) { return predict(img); }, image, policy, n);
}

double image_loss(const ImageModel& model, const GrayImage& image, const ExamLabels& labels, double beta) {
  GmicGraph m = build_gmic(image, model.arch, model.params);
  return m.graph.value(build_loss(m, model.task, labels, beta)).item();
}

ImageModel train_image_model(const Dataset& data, std::span<const std::size_t> train,
                             std::span<const std::size_t> val, ImageTask task,
                             const ImageTrainOptions& options, std::uint64_t seed,
                             std::vector<EpochRecord>* history,
                             const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.empty()) throw Error("no training exams");
  if (options.batch_size == 0) throw Error("batch size must be positive");
  options.arch.validate();
  if (task == ImageTask::Survival && options.arch.num_windows != kDrcOutputs) {
    throw ShapeError("survival model needs " + std::to_string(kDrcOutputs) + " output channels");
  }
  if (task == ImageTask::Classifier && options.arch.num_windows != kNumWindows) {
    throw ShapeError("classifier needs " + std::to_string(kNumWindows) + " output windows");
  }
  ImageModel model;
  model.task = task;
  model.arch = options.arch;
  model.params = init_gmic_parameters(options.arch, derive_seed(seed, kInit));
  AdamState adam(AdamOptions{options.learning_rate});
  AugmentPolicy policy = options.augmentation;
  policy.seed = derive_seed(seed, kAugment);
  if (options.augment) policy.validate();

  ImageModel best = model;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.begin(), train.end());
  std::uint64_t draw = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(derive_seed(seed, kShuffle, epoch));
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      NamedTensors batch_grads;
      for (std::size_t k = start; k < end; ++k) {
        const Exam& exam = data.exams.at(order[k]);
        const GrayImage image = options.augment ? augment(exam.image, policy, draw++) : exam.image;
        GmicGraph m = build_gmic(image, model.arch, model.params);
        const NodeRef loss = build_loss(m, task, exam.labels, options.beta);
        loss_sum += m.graph.value(loss).item();
        NamedTensors grads = m.graph.backward(loss);
        if (batch_grads.empty()) {
          for (auto& [name, g] : grads)
            for (auto& v : g.values()) v *= inv;
          batch_grads = std::move(grads);
        } else {
          for (auto& [name, g] : grads) {
            auto dst = batch_grads.at(name).values();
            const auto src = g.values();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += inv * src[i];
          }
        }
      }
      adam_step(model.params, batch_grads, adam);
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val.empty()) {
      std::vector<std::vector<double>> preds;
      std::vector<WindowLabels> y;
      std::vector<ExamLabels> labels;
      for (auto i : val) {
        preds.push_back(model.predict(data.exams.at(i).image));
        y.push_back(data.exams[i].labels.y);
        labels.push_back(data.exams[i].labels);
      }
      try {
        rec.val_score = task == ImageTask::Classifier ? window_score(preds, y) : survival_score(preds, labels);
      } catch (const Error&) {
        rec.val_score = std::numeric_limits<double>::quiet_NaN();
      }
    }
    if (history) history->push_back(rec);
    if (on_epoch) on_epoch(rec);
    // Without a usable validation score the latest epoch wins.
    const bool unscored = val.empty() || std::isnan(rec.val_score);
    if (unscored || rec.val_score > best_score) {
      if (!unscored) best_score = rec.val_score;
      best = model;
    }
  }
  return best;
}

}  // namespace prognosis
