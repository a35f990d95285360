#include "prognosis/manifest.hpp"

#include <fstream>
#include <map>
#include <set>

#include "prognosis/csv.hpp"
#include "prognosis/error.hpp"

namespace prognosis {

namespace {
const std::vector<std::string> kColumns{"exam_id",       "patient_id", "image_path", "exam_time_h",
                                        "event_time_h",  "censor_time_h", "split",   "exclude"};

bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false" || s.empty()) return false;
  throw FormatError(where + ": exclude must be 0/1 or true/false, got '" + s + "'");
}
}  // namespace

const char* split_name(Split split) noexcept { return split == Split::Train ? "train" : "test"; }

Manifest read_manifest(std::istream& in) {
  CsvReader reader(in);
  auto with_risk = kColumns;
  with_risk.push_back("true_risk");
  Manifest m;
  m.has_true_risk = reader.expect_header({kColumns, with_risk}) == 1;
  const std::size_t width = m.has_true_risk ? with_risk.size() : kColumns.size();
  std::vector<std::string> f;
  while (reader.next(f)) {
    const std::string where = "manifest line " + std::to_string(reader.line());
    if (f.size() != width) {
      throw FormatError(where + ": expected " + std::to_string(width) + " fields, got " +
                        std::to_string(f.size()));
    }
    ManifestRow row;
    row.exam_id = f[0];
    row.patient_id = f[1];
    row.image_path = f[2];
    if (row.exam_id.empty() || row.patient_id.empty()) throw FormatError(where + ": empty id");
    row.exam_time_h = parse_double(f[3], where + " exam_time_h");
    row.event_time_h = parse_optional_double(f[4], where + " event_time_h");
    row.censor_time_h = parse_double(f[5], where + " censor_time_h");
    if (f[6] == "train") {
      row.split = Split::Train;
    } else if (f[6] == "test") {
      row.split = Split::Test;
    } else {
      throw FormatError(where + ": split must be 'train' or 'test', got '" + f[6] + "'");
    }
    row.exclude = parse_bool(f[7], where);
    if (m.has_true_risk) row.true_risk = parse_optional_double(f[8], where + " true_risk");
    m.rows.push_back(std::move(row));
  }
  validate_manifest(m);
  return m;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  return read_manifest(in);
}

void validate_manifest(const Manifest& manifest) {
  std::set<std::string> ids;
  std::map<std::string, Split> patient_split;
  for (const auto& row : manifest.rows) {
    const std::string where = "exam '" + row.exam_id + "'";
    if (!ids.insert(row.exam_id).second) throw FormatError("duplicate exam_id '" + row.exam_id + "'");
    auto [it, fresh] = patient_split.emplace(row.patient_id, row.split);
    if (!fresh && it->second != row.split) {
      throw FormatError("patient '" + row.patient_id + "' has exams in both train and test splits");
    }
    if (row.exam_time_h < 0 || row.censor_time_h < 0) throw FormatError(where + ": negative time");
    if (row.event_time_h) {
      if (*row.event_time_h < 0) throw FormatError(where + ": event before time zero");
      if (*row.event_time_h > row.censor_time_h) {
        throw FormatError(where + ": event_time_h exceeds censor_time_h");
      }
    }
  }
}

void write_manifest(std::ostream& out, const Manifest& manifest) {
  for (std::size_t i = 0; i < kColumns.size(); ++i) out << (i ? "," : "") << kColumns[i];
  if (manifest.has_true_risk) out << ",true_risk";
  out << '\n';
  for (const auto& r : manifest.rows) {
    out << r.exam_id << ',' << r.patient_id << ',' << r.image_path << ',' << format_double(r.exam_time_h)
        << ',' << (r.event_time_h ? format_double(*r.event_time_h) : "") << ','
        << format_double(r.censor_time_h) << ',' << split_name(r.split) << ',' << (r.exclude ? 1 : 0);
    if (manifest.has_true_risk) out << ',' << (r.true_risk ? format_double(*r.true_risk) : "");
    out << '\n';
  }
}

std::optional<ExamLabels> derive_labels(const ManifestRow& row) {
  if (row.event_time_h && *row.event_time_h < 0) {
    throw FormatError("exam '" + row.exam_id + "': event before time zero");
  }
  if (row.exclude) return std::nullopt;
  if (row.event_time_h && row.exam_time_h >= *row.event_time_h) return std::nullopt;
  if (row.censor_time_h < row.exam_time_h) {
    throw FormatError("exam '" + row.exam_id + "': exam taken after the end of follow-up");
  }
  ExamLabels labels;
  labels.followup_h = row.censor_time_h - row.exam_time_h;
  std::optional<double> rel;
  if (row.event_time_h) rel = *row.event_time_h - row.exam_time_h;
  labels.time_to_event_h = rel;
  for (std::size_t t = 0; t < kNumWindows; ++t) labels.y[t] = rel && *rel <= kWindowHours[t] ? 1 : 0;
  labels.survival = to_label(rel, labels.followup_h);
  return labels;
}

}  // namespace prognosis
