#include "prognosis/dataset.hpp"

#include <filesystem>
#include <functional>

#include "prognosis/error.hpp"
#include "prognosis/pgm.hpp"

namespace prognosis {

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < exams.size(); ++i)
    if (exams[i].split == split) idx.push_back(i);
  return idx;
}

std::vector<std::string> Dataset::exam_patients() const {
  std::vector<std::string> ids;
  ids.reserve(exams.size());
  for (const auto& e : exams) ids.push_back(e.patient_id);
  return ids;
}

std::optional<std::size_t> Dataset::find(const std::string& exam_id) const {
  for (std::size_t i = 0; i < exams.size(); ++i)
    if (exams[i].exam_id == exam_id) return i;
  return std::nullopt;
}

namespace {

Dataset assemble(const Manifest& manifest, const ClinicalTable* clinical, const DatasetOptions& options,
                 const std::function<RawImage(std::size_t)>& image_for_row) {
  validate_manifest(manifest);
  Dataset data;
  for (std::size_t r = 0; r < manifest.rows.size(); ++r) {
    const auto& row = manifest.rows[r];
    auto labels = derive_labels(row);
    if (!labels) {
      ++data.excluded;
      continue;
    }
    Exam exam;
    exam.manifest_row = r;
    exam.exam_id = row.exam_id;
    exam.patient_id = row.patient_id;
    exam.split = row.split;
    exam.labels = *labels;
    exam.true_risk = row.true_risk;
    if (options.load_images) {
      try {
        exam.image = preprocess(image_for_row(r), options.image_side, options.preprocess);
      } catch (const Error& e) {
        throw Error("exam '" + row.exam_id + "': " + e.what());
      }
    }
    if (clinical) {
      exam.features = featurize(clinical->patient(row.patient_id), row.exam_time_h);
      exam.has_clinical = clinical->has_patient(row.patient_id);
    }
    data.exams.push_back(std::move(exam));
  }
  return data;
}

}  // namespace

Dataset build_dataset(const Manifest& manifest, const std::vector<RawImage>* images,
                      const ClinicalTable* clinical, const DatasetOptions& options) {
  if (options.load_images && (!images || images->size() != manifest.rows.size())) {
    throw Error("one image per manifest row is required");
  }
  return assemble(manifest, clinical, options, [&](std::size_t r) { return (*images)[r]; });
}

Dataset load_dataset(const std::string& manifest_path, const std::string& clinical_path,
                     const DatasetOptions& options) {
  namespace fs = std::filesystem;
  const Manifest manifest = read_manifest(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::optional<ClinicalTable> clinical;
  if (!clinical_path.empty()) clinical = read_clinical_csv(clinical_path);
  return assemble(manifest, clinical ? &*clinical : nullptr, options, [&](std::size_t r) {
    fs::path p = manifest.rows[r].image_path;
    if (p.is_relative()) p = base / p;
    return read_pgm(p);
  });
}

}  // namespace prognosis
