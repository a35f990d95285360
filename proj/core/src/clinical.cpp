#include "prognosis/clinical.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "prognosis/csv.hpp"
#include "prognosis/error.hpp"

namespace prognosis {

const std::vector<std::string>& ClinicalSchema::vitals() {
  static const std::vector<std::string> names{"heart_rate",   "respiratory_rate", "temperature",
                                              "systolic_bp",  "diastolic_bp",     "o2_saturation"};
  return names;
}

const std::vector<std::string>& ClinicalSchema::demographics() {
  static const std::vector<std::string> names{"age", "weight", "bmi"};
  return names;
}

const std::vector<std::string>& ClinicalSchema::labs() {
  static const std::vector<std::string> names{
      "albumin",        "alt",           "ast",           "total_bilirubin",
      "bun",            "calcium",       "chloride",      "creatinine",
      "d_dimer",        "eosinophils_pct", "eosinophils_n", "hematocrit",
      "ldh",            "lymphocytes_pct", "lymphocytes_n", "platelet_volume",
      "neutrophils_n",  "neutrophils_pct", "platelets_n",   "potassium",
      "procalcitonin",  "total_protein", "sodium",        "troponin"};
  return names;
}

std::size_t ClinicalSchema::value_count() {
  return vitals().size() + demographics().size() + 2 * labs().size();
}

const std::vector<std::string>& ClinicalSchema::feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& n : vitals()) v.push_back(n);
    for (const auto& n : demographics()) v.push_back(n);
    for (const auto& n : labs()) {
      v.push_back(n + "_min");
      v.push_back(n + "_max");
    }
    const std::size_t values = v.size();
    for (std::size_t i = 0; i < values; ++i) v.push_back("missing_" + v[i]);
    return v;
  }();
  return names;
}

bool ClinicalSchema::known_variable(const std::string& name) {
  static const std::set<std::string> all = [] {
    std::set<std::string> s;
    for (const auto* group : {&vitals(), &demographics(), &labs()}) s.insert(group->begin(), group->end());
    return s;
  }();
  return all.contains(name);
}

void ClinicalTable::add(const std::string& patient_id, Observation obs) {
  by_patient_[patient_id].push_back(std::move(obs));
}

void ClinicalTable::finalize() {
  for (auto& [id, obs] : by_patient_) {
    std::stable_sort(obs.begin(), obs.end(),
                     [](const Observation& a, const Observation& b) { return a.timestamp_h < b.timestamp_h; });
  }
}

const std::vector<Observation>& ClinicalTable::patient(const std::string& patient_id) const {
  static const std::vector<Observation> none;
  auto it = by_patient_.find(patient_id);
  return it == by_patient_.end() ? none : it->second;
}

std::size_t ClinicalTable::size() const {
  std::size_t n = 0;
  for (const auto& [id, obs] : by_patient_) n += obs.size();
  return n;
}

ClinicalTable read_clinical_csv(std::istream& in) {
  CsvReader reader(in);
  reader.expect_header({"patient_id", "timestamp_h", "variable_name", "value"});
  ClinicalTable table;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const std::string where = "clinical CSV line " + std::to_string(reader.line());
    if (row.size() != 4) throw FormatError(where + ": expected 4 fields");
    if (row[0].empty()) throw FormatError(where + ": empty patient_id");
    if (!ClinicalSchema::known_variable(row[2])) {
      throw FormatError(where + ": unknown variable '" + row[2] + "'");
    }
    Observation obs;
    obs.timestamp_h = parse_double(row[1], where + " timestamp_h");
    obs.variable = row[2];
    obs.value = parse_double(row[3], where + " value");
    if (obs.timestamp_h < 0) throw FormatError(where + ": negative timestamp");
    table.add(row[0], std::move(obs));
  }
  table.finalize();
  return table;
}

ClinicalTable read_clinical_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open clinical CSV " + path);
  return read_clinical_csv(in);
}

std::vector<double> featurize(const std::vector<Observation>& records, double reference_time,
                              double lab_window_hours) {
  const auto& vitals = ClinicalSchema::vitals();
  const auto& demo = ClinicalSchema::demographics();
  const auto& labs = ClinicalSchema::labs();
  const std::size_t values = ClinicalSchema::value_count();
  std::vector<double> f(2 * values, kMissing);

  auto slot_of = [&](const std::string& name) -> std::pair<int, std::size_t> {
    for (std::size_t i = 0; i < vitals.size(); ++i)
      if (vitals[i] == name) return {0, i};
    for (std::size_t i = 0; i < demo.size(); ++i)
      if (demo[i] == name) return {0, vitals.size() + i};
    for (std::size_t i = 0; i < labs.size(); ++i)
      if (labs[i] == name) return {1, vitals.size() + demo.size() + 2 * i};
    return {-1, 0};
  };

  std::vector<double> seen_at(values, -1.0);
  for (const auto& obs : records) {
    if (obs.timestamp_h > reference_time) continue;
    const auto [kind, slot] = slot_of(obs.variable);
    if (kind == 0) {
      if (obs.timestamp_h >= seen_at[slot]) {
        f[slot] = obs.value;
        seen_at[slot] = obs.timestamp_h;
      }
    } else if (kind == 1 && obs.timestamp_h > reference_time - lab_window_hours) {
      f[slot] = std::isnan(f[slot]) ? obs.value : std::min(f[slot], obs.value);
      f[slot + 1] = std::isnan(f[slot + 1]) ? obs.value : std::max(f[slot + 1], obs.value);
    }
  }
  for (std::size_t i = 0; i < values; ++i) f[values + i] = std::isnan(f[i]) ? 1.0 : 0.0;
  return f;
}

}  // namespace prognosis
