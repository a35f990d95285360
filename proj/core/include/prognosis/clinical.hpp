#pragma once

#include <istream>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace prognosis {

/// Sentinel for a missing feature value; tree splits route it by default direction.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct ClinicalSchema {
  static const std::vector<std::string>& vitals();
  static const std::vector<std::string>& demographics();
  static const std::vector<std::string>& labs();
  /// Ordered feature names: vitals, demographics, lab min/max pairs, then one
  /// missing flag per preceding value.
  static const std::vector<std::string>& feature_names();
  static std::size_t value_count();
  static std::size_t feature_count() { return 2 * value_count(); }
  static bool known_variable(const std::string& name);
};

struct Observation {
  double timestamp_h = 0.0;
  std::string variable;
  double value = 0.0;
};

/// Long-format clinical data, grouped by patient and sorted by timestamp.
class ClinicalTable {
 public:
  void add(const std::string& patient_id, Observation obs);
  /// Sorts each patient's observations; call after the last add().
  void finalize();
  const std::vector<Observation>& patient(const std::string& patient_id) const;
  bool has_patient(const std::string& patient_id) const { return by_patient_.contains(patient_id); }
  std::size_t patient_count() const { return by_patient_.size(); }
  std::size_t size() const;

 private:
  std::map<std::string, std::vector<Observation>> by_patient_;
};

/// Header must be `patient_id,timestamp_h,variable_name,value`.
ClinicalTable read_clinical_csv(std::istream& in);
ClinicalTable read_clinical_csv(const std::string& path);

/// Vitals: latest value at or before reference_time. Demographics: latest
/// value at or before reference_time. Labs: min and max over
/// (reference_time - 12 h, reference_time]. Absent values are kMissing with
/// their flag set to 1.
std::vector<double> featurize(const std::vector<Observation>& records, double reference_time,
                              double lab_window_hours = 12.0);

}  // namespace prognosis
