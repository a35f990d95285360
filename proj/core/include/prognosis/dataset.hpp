#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prognosis/clinical.hpp"
#include "prognosis/image.hpp"
#include "prognosis/manifest.hpp"

namespace prognosis {

/// One included exam with its derived labels and inputs.
struct Exam {
  std::size_t manifest_row = 0;
  std::string exam_id;
  std::string patient_id;
  Split split = Split::Train;
  ExamLabels labels;
  GrayImage image;               ///< preprocessed; empty when images were not loaded
  std::vector<double> features;  ///< clinical features at exam time; empty without clinical data
  bool has_clinical = false;     ///< the patient has at least one clinical record
  std::optional<double> true_risk;  ///< synthetic ground truth, for evaluation only
};

struct DatasetOptions {
  bool load_images = true;
  std::size_t image_side = 64;
  PreprocessOptions preprocess;
};

struct Dataset {
  std::vector<Exam> exams;
  std::size_t excluded = 0;  ///< manifest rows dropped by derive_labels

  std::vector<std::size_t> indices(Split split) const;
  /// Patient id per exam index.
  std::vector<std::string> exam_patients() const;
  std::optional<std::size_t> find(const std::string& exam_id) const;
};

/// `images` (parallel to manifest rows) may be null when options.load_images is false;
/// `clinical` may be null.
Dataset build_dataset(const Manifest& manifest, const std::vector<RawImage>* images,
                      const ClinicalTable* clinical, const DatasetOptions& options);

/// Reads the manifest, its PGM images (paths relative to the manifest) and an
/// optional clinical CSV (empty path to skip).
Dataset load_dataset(const std::string& manifest_path, const std::string& clinical_path,
                     const DatasetOptions& options);

}  // namespace prognosis
