#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prognosis/clinical.hpp"
#include "prognosis/drc.hpp"
#include "prognosis/image.hpp"
#include "prognosis/manifest.hpp"

namespace prognosis {

/// Generator settings. Each patient's image carries 0..max_blobs Gaussian
/// blobs; the image severity is the largest amplitude * sigma / sigma_max.
/// The event time follows a Gompertz hazard h(t) = exp(lh) * exp(c t) with
/// log-hazard lh = alpha + kappa * severity + tabular_kappa * z_tab.
struct SyntheticSpec {
  std::size_t num_patients = 2000;
  std::size_t image_side = 64;
  double no_blob_probability = 0.5;
  std::size_t max_blobs = 3;
  double amplitude_min = 0.35;
  double amplitude_max = 1.0;
  double sigma_min = 1.5;  ///< blob width in pixels at side 64 (scaled with the side)
  double sigma_max = 4.0;
  double alpha = -16.0;
  double kappa = 14.0;
  double gompertz_c = 0.05;
  /// Weight of a risk component visible only in the clinical data. At 0 the
  /// clinical features track the image severity instead.
  double tabular_kappa = 0.0;
  double tabular_noise = 0.5;
  double censor_min_h = 120.0;
  double censor_max_h = 400.0;
  double followup_probability = 0.15;
  double followup_min_h = 6.0;
  double followup_max_h = 36.0;
  double exclude_probability = 0.01;
  double test_fraction = 0.5;
  bool render_images = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// P(T <= t | lh) under the Gompertz hazard.
double gompertz_cdf(double log_hazard, double c, double t_hours);
/// Per-interval conditional event probabilities on the time grid.
std::array<double, kGridSize> true_conditionals(double log_hazard, double c);

struct SyntheticCohort {
  Manifest manifest;                                 ///< includes true_risk (log-hazard at exam)
  std::vector<RawImage> images;                      ///< parallel to manifest rows (empty if not rendered)
  std::vector<std::array<double, kGridSize>> true_drc;  ///< parallel to manifest rows
  std::vector<double> image_severity;                ///< parallel to manifest rows
  std::vector<std::pair<std::string, Observation>> clinical;
};

SyntheticCohort generate_synthetic(const SyntheticSpec& spec);

/// Writes manifest.csv, clinical.csv, true_drc.csv and images/<exam_id>.pgm under `dir`.
void write_synthetic(const SyntheticCohort& cohort, const std::string& dir);

}  // namespace prognosis
