#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "prognosis/drc.hpp"
#include "prognosis/ensemble.hpp"

namespace prognosis {

enum class Split { Train, Test };

const char* split_name(Split split) noexcept;

struct ManifestRow {
  std::string exam_id;
  std::string patient_id;
  std::string image_path;  ///< relative paths resolve against the manifest's directory
  double exam_time_h = 0.0;
  std::optional<double> event_time_h;  ///< empty means censored
  double censor_time_h = 0.0;
  Split split = Split::Train;
  bool exclude = false;
  std::optional<double> true_risk;  ///< synthetic ground truth; never used for training
};

struct Manifest {
  std::vector<ManifestRow> rows;
  bool has_true_risk = false;
};

/// Parses and validates: unique exam ids, each patient in exactly one split,
/// finite non-negative times, event_time <= censor_time.
Manifest read_manifest(std::istream& in);
Manifest read_manifest(const std::string& path);
void write_manifest(std::ostream& out, const Manifest& manifest);
void validate_manifest(const Manifest& manifest);

struct ExamLabels {
  WindowLabels y{};  ///< y^24, y^48, y^72, y^96
  SurvivalLabel survival;
  std::optional<double> time_to_event_h;  ///< event time relative to the exam
  double followup_h = 0.0;                ///< censor time relative to the exam
};

/// nullopt marks an EXCLUDED exam: flagged `exclude`, or taken at or after the event.
std::optional<ExamLabels> derive_labels(const ManifestRow& row);

}  // namespace prognosis
