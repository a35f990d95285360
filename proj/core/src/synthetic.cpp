#include "prognosis/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "prognosis/csv.hpp"
#include "prognosis/error.hpp"
#include "prognosis/pgm.hpp"
#include "prognosis/random.hpp"

namespace prognosis {

namespace {

enum Stream : std::uint64_t { kPatient = 11, kImage = 12, kClinical = 13, kSplit = 14 };

struct Blob {
  double row, col, amplitude, sigma;
};

struct VariableModel {
  const char* name;
  double mean;
  double sd;
  double weight;  // signal direction and strength, in sd units per unit of signal
};

// Reference distributions; informative variables carry a non-zero weight.
const std::vector<VariableModel>& variable_models() {
  static const std::vector<VariableModel> models{
      {"heart_rate", 85, 12, 1.2},        {"respiratory_rate", 19, 3, 1.8},
      {"temperature", 37.3, 0.6, 0.8},    {"systolic_bp", 128, 15, 0.0},
      {"diastolic_bp", 76, 10, 0.0},      {"o2_saturation", 95, 2.5, -2.0},
      {"age", 62, 14, 1.0},               {"weight", 85, 18, 0.0},
      {"bmi", 29, 5, 0.0},                {"albumin", 3.6, 0.5, -0.8},
      {"alt", 40, 20, 0.0},               {"ast", 45, 22, 0.4},
      {"total_bilirubin", 0.7, 0.3, 0.0}, {"bun", 20, 8, 0.6},
      {"calcium", 8.8, 0.5, 0.0},         {"chloride", 101, 4, 0.0},
      {"creatinine", 1.1, 0.4, 0.5},      {"d_dimer", 600, 250, 1.5},
      {"eosinophils_pct", 1.0, 0.8, 0.0}, {"eosinophils_n", 0.05, 0.04, 0.0},
      {"hematocrit", 40, 5, 0.0},         {"ldh", 320, 90, 1.6},
      {"lymphocytes_pct", 18, 7, -1.4},   {"lymphocytes_n", 1.1, 0.5, -1.0},
      {"platelet_volume", 10.5, 1.0, 0.0}, {"neutrophils_n", 5.5, 2.0, 0.8},
      {"neutrophils_pct", 72, 9, 1.0},    {"platelets_n", 230, 70, 0.0},
      {"potassium", 4.1, 0.5, 0.0},       {"procalcitonin", 0.2, 0.15, 1.0},
      {"total_protein", 7.0, 0.6, 0.0},   {"sodium", 137, 4, 0.0},
      {"troponin", 0.02, 0.015, 1.2}};
  return models;
}

bool is_lab(const std::string& name) {
  const auto& labs = ClinicalSchema::labs();
  return std::find(labs.begin(), labs.end(), name) != labs.end();
}

bool is_demographic(const std::string& name) {
  const auto& d = ClinicalSchema::demographics();
  return std::find(d.begin(), d.end(), name) != d.end();
}

// Rounded to 4 significant decimals so the CSV stays compact and exact on re-read.
double round4(double v) { return std::round(v * 1e4) / 1e4; }

RawImage render(const std::vector<Blob>& blobs, double amplitude_scale, std::size_t side, Rng& rng) {
  const std::size_t margin = std::max<std::size_t>(2, side / 8);
  const std::size_t rows = side, cols = side + 2 * margin;
  const std::size_t max_pad = std::max<std::size_t>(1, side / 10);
  const auto pad = [&] { return static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(max_pad))); };
  const std::size_t top = pad(), bottom = pad(), left = pad(), right = pad();
  const std::size_t stripe = std::max<std::size_t>(1, margin / 2);

  GrayImage content(rows, cols);
  const double pi = std::acos(-1.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      double v;
      if (c < stripe || c >= cols - stripe) {
        v = 0.95 + 0.01 * rng.normal();
      } else {
        v = 0.22 + 0.08 * std::sin(pi * (r + 0.5) / rows) + 0.015 * rng.normal();
        const double lr = static_cast<double>(r), lc = static_cast<double>(c) - margin;
        for (const auto& b : blobs) {
          const double d2 = (lr - b.row) * (lr - b.row) + (lc - b.col) * (lc - b.col);
          v += 0.55 * amplitude_scale * b.amplitude * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        }
      }
      content.at(r, c) = std::clamp(v, 0.0, 1.0);
    }

  RawImage raw;
  raw.height = rows + top + bottom;
  raw.width = cols + left + right;
  raw.pixels.assign(raw.width * raw.height, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      raw.pixels[(r + top) * raw.width + c + left] =
          static_cast<std::uint16_t>(std::lround(content.at(r, c) * 60000.0) + 1000);
    }
  return raw;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_patients == 0) throw Error("synthetic cohort needs at least one patient");
  if (image_side < 16) throw Error("synthetic image side must be at least 16");
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(what) + " must lie in [0, 1]");
  };
  prob(no_blob_probability, "no_blob_probability");
  prob(followup_probability, "followup_probability");
  prob(exclude_probability, "exclude_probability");
  prob(test_fraction, "test_fraction");
  if (!(amplitude_min > 0 && amplitude_min <= amplitude_max)) throw Error("invalid blob amplitude range");
  if (!(sigma_min > 0 && sigma_min <= sigma_max)) throw Error("invalid blob width range");
  if (!(gompertz_c > 0)) throw Error("Gompertz rate must be positive");
  if (!(censor_min_h > 0 && censor_min_h <= censor_max_h)) throw Error("invalid censoring range");
  if (!(followup_min_h > 0 && followup_min_h <= followup_max_h)) throw Error("invalid follow-up range");
  if (!(tabular_noise >= 0)) throw Error("tabular noise must be non-negative");
  if (!std::isfinite(alpha) || !std::isfinite(kappa) || !std::isfinite(tabular_kappa)) {
    throw Error("risk coefficients must be finite");
  }
}

double gompertz_cdf(double log_hazard, double c, double t_hours) {
  const double cumulative = std::exp(log_hazard) / c * std::expm1(c * t_hours);
  return -std::expm1(-cumulative);
}

std::array<double, kGridSize> true_conditionals(double log_hazard, double c) {
  constexpr double kHazardFloor = 1e-12;
  std::array<double, kGridSize> q{};
  double prev = 0.0;
  for (std::size_t i = 0; i < kGridSize; ++i) {
    const double t = kTimeGrid[i];
    const double cum = std::exp(log_hazard) / c * std::expm1(c * t);
    q[i] = std::clamp(-std::expm1(-(cum - prev)), kHazardFloor, 1.0 - kHazardFloor);
    prev = cum;
  }
  return q;
}

SyntheticCohort generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticCohort cohort;
  cohort.manifest.has_true_risk = true;
  const double scale = static_cast<double>(spec.image_side) / 64.0;

  std::vector<std::size_t> order(spec.num_patients);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(spec.seed, kSplit));
  split_rng.shuffle(order.begin(), order.end());
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * spec.num_patients));
  std::vector<bool> is_test(spec.num_patients, false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;

  for (std::size_t p = 0; p < spec.num_patients; ++p) {
    Rng rng(derive_seed(spec.seed, kPatient, p));
    char pid_buf[32];
    std::snprintf(pid_buf, sizeof pid_buf, "P%05zu", p);
    const std::string pid = pid_buf;

    const double t0 = rng.uniform(0.0, 24.0);
    std::vector<Blob> blobs;
    if (!rng.bernoulli(spec.no_blob_probability)) {
      const auto count = rng.integer(1, static_cast<std::int64_t>(std::max<std::size_t>(1, spec.max_blobs)));
      for (std::int64_t b = 0; b < count; ++b) {
        Blob blob;
        blob.amplitude = rng.uniform(spec.amplitude_min, spec.amplitude_max);
        const double sigma64 = rng.uniform(spec.sigma_min, spec.sigma_max);
        blob.sigma = sigma64 * scale;
        const double lo = std::min(2.0 * blob.sigma, spec.image_side / 2.0);
        const double hi = std::max(lo, spec.image_side - 1.0 - 2.0 * blob.sigma);
        blob.row = rng.uniform(lo, hi);
        blob.col = rng.uniform(lo, hi);
        blobs.push_back(blob);
      }
    }
    double severity = 0.0;
    for (const auto& b : blobs) severity = std::max(severity, b.amplitude * (b.sigma / scale) / spec.sigma_max);
    const double z_tab = spec.tabular_kappa != 0.0 && !rng.bernoulli(0.5) ? rng.uniform(0.0, 1.0) : 0.0;
    const double lh0 = spec.alpha + spec.kappa * severity + spec.tabular_kappa * z_tab;
    const double c = spec.gompertz_c;
    const double event_rel = std::log1p(c * rng.exponential() / std::exp(lh0)) / c;
    const double censor_rel = rng.uniform(spec.censor_min_h, spec.censor_max_h);
    const bool observed = event_rel <= censor_rel;

    std::vector<double> exam_offsets{0.0};
    if (rng.bernoulli(spec.followup_probability)) {
      exam_offsets.push_back(rng.uniform(spec.followup_min_h, spec.followup_max_h));
    }
    for (std::size_t k = 0; k < exam_offsets.size(); ++k) {
      const double e = exam_offsets[k];
      ManifestRow row;
      row.exam_id = pid + "-" + std::to_string(k);
      row.patient_id = pid;
      row.image_path = "images/" + row.exam_id + ".pgm";
      row.exam_time_h = t0 + e;
      if (observed) row.event_time_h = t0 + event_rel;
      row.censor_time_h = t0 + (observed ? event_rel : censor_rel);
      row.split = is_test[p] ? Split::Test : Split::Train;
      row.exclude = rng.bernoulli(spec.exclude_probability);
      // Gompertz ageing: the residual hazard e hours later is scaled by exp(c e).
      const double lh = lh0 + c * e;
      row.true_risk = lh;
      const double shown = severity > 0 ? severity + c * e / spec.kappa : 0.0;
      if (spec.render_images) {
        Rng image_rng(derive_seed(spec.seed, kImage, p, k));
        cohort.images.push_back(render(blobs, severity > 0 ? shown / severity : 1.0, spec.image_side, image_rng));
      }
      cohort.true_drc.push_back(drc_from_conditionals(true_conditionals(lh, c)));
      cohort.image_severity.push_back(shown);
      cohort.manifest.rows.push_back(std::move(row));
    }

    // Clinical stream: vitals every 4 h, labs every 8 h, demographics at admission.
    Rng crng(derive_seed(spec.seed, kClinical, p));
    const double signal = spec.tabular_kappa != 0.0 ? z_tab : severity;
    const double horizon = t0 + exam_offsets.back() + 4.0;
    for (const auto& v : variable_models()) {
      const std::string name = v.name;
      const double patient_offset = 0.3 * crng.normal();
      auto value = [&] {
        return round4(v.mean + v.sd * (v.weight * 2.0 * signal + patient_offset +
                                       spec.tabular_noise * crng.normal()));
      };
      if (is_demographic(name)) {
        cohort.clinical.emplace_back(pid, Observation{0.0, name, value()});
        continue;
      }
      const double step = is_lab(name) ? 8.0 : 4.0;
      for (double t = crng.uniform(0.0, step); t <= horizon; t += step) {
        const bool taken = crng.bernoulli(is_lab(name) ? 0.75 : 0.95);
        const double x = value();
        if (taken) cohort.clinical.emplace_back(pid, Observation{round4(t), name, x});
      }
    }
  }
  std::stable_sort(cohort.clinical.begin(), cohort.clinical.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : a.second.timestamp_h < b.second.timestamp_h;
  });
  validate_manifest(cohort.manifest);
  return cohort;
}

void write_synthetic(const SyntheticCohort& cohort, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  {
    std::ofstream out(fs::path(dir) / "manifest.csv");
    if (!out) throw Error("cannot write manifest in " + dir);
    write_manifest(out, cohort.manifest);
  }
  {
    std::ofstream out(fs::path(dir) / "clinical.csv");
    if (!out) throw Error("cannot write clinical data in " + dir);
    out << "patient_id,timestamp_h,variable_name,value\n";
    for (const auto& [pid, obs] : cohort.clinical) {
      out << pid << ',' << format_double(obs.timestamp_h) << ',' << obs.variable << ','
          << format_double(obs.value) << '\n';
    }
  }
  {
    std::ofstream out(fs::path(dir) / "true_drc.csv");
    out << "exam_id,t_hours,drc_value\n";
    for (std::size_t i = 0; i < cohort.manifest.rows.size(); ++i)
      for (std::size_t t = 0; t < kGridSize; ++t) {
        out << cohort.manifest.rows[i].exam_id << ',' << kTimeGrid[t] << ','
            << format_double(cohort.true_drc[i][t]) << '\n';
      }
  }
  for (std::size_t i = 0; i < cohort.images.size(); ++i) {
    write_pgm(fs::path(dir) / cohort.manifest.rows[i].image_path, cohort.images[i]);
  }
}

}  // namespace prognosis
