#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prognosis/families.hpp"
#include "prognosis/selection.hpp"
#include "prognosis/training.hpp"

namespace prognosis {

/// Library version, `v<major.minor.patch>[-g<describe>]`.
const char* version_string() noexcept;

/// An equal-weight ensemble of trained members of one family, as persisted
/// in a model directory:
///   model.json            family, preprocessing, architecture, TTA and member list
///   member_<k>.milw       image member parameters
///   member_<k>_<w>h.gbm   / .logreg  per-window tabular members
struct StoredModel {
  std::string family;  ///< gmic, drc, gbm or logreg
  std::size_t image_side = 64;
  PreprocessOptions preprocess;
  GmicConfig arch;
  AugmentPolicy tta_policy;
  std::size_t tta = 0;
  std::vector<NamedTensors> image_members;
  std::vector<WindowGbm> gbm_members;
  std::vector<WindowLogReg> logreg_members;
  std::vector<HyperConfig> hyperparameters;  ///< per member

  bool is_image() const { return family == "gmic" || family == "drc"; }
  ImageTask task() const { return family == "drc" ? ImageTask::Survival : ImageTask::Classifier; }
  std::size_t size() const;
  ImageModel image_member(std::size_t k) const;

  /// Member mean; image members use TTA.
  std::vector<double> predict_image(const GrayImage& image) const;
  std::vector<double> predict_features(std::span<const double> features) const;
  std::vector<double> predict(const Exam& exam) const;
};

void save_model(const StoredModel& model, const std::filesystem::path& dir);
StoredModel load_model(const std::filesystem::path& dir);

/// `exam_id,<columns...>` CSV of per-exam prediction vectors.
void write_predictions_csv(const std::filesystem::path& path, std::span<const std::string> exam_ids,
                           std::span<const std::vector<double>> predictions,
                           std::span<const std::string> columns);
std::map<std::string, std::vector<double>> read_predictions_csv(const std::filesystem::path& path);

/// Long-format risk curves: `exam_id,t_hours,drc_value`, one row per exam and grid point.
void write_drc_csv(const std::filesystem::path& path, std::span<const std::string> exam_ids,
                   std::span<const std::vector<double>> curves);

/// Column names: p_24h.. for classifiers, drc_3h.. for survival curves.
std::vector<std::string> prediction_columns(const std::string& family);

}  // namespace prognosis
