#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace prognosis {

/// Mann-Whitney AUC: P(s_pos > s_neg) + P(tie) / 2. Throws unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over distinct thresholds of (R_k - R_{k-1}) * P_k.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr, tpr, threshold;
};
struct PrPoint {
  double recall, precision, threshold;
};

/// One point per distinct score, descending, preceded by (0, 0, +inf).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const int> labels);

using Metric = std::function<double(std::span<const double>, std::span<const int>)>;

struct ConfidenceInterval {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t replicates = 0;  ///< iterations that produced a value
};

/// Resampled indices for bootstrap iteration `iteration` (draw `attempt`).
/// With `groups`, whole groups are drawn with replacement.
std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed, std::size_t iteration,
                                           std::size_t attempt = 0,
                                           std::span<const std::string> groups = {});

/// Percentile bootstrap (2.5 / 97.5, linear interpolation). Resamples on which
/// the metric throws are redrawn up to 10 times, then skipped.
ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                const Metric& metric, std::size_t iterations, std::uint64_t seed,
                                std::span<const std::string> groups = {});

/// Linear-interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Concordance over event-patient pairs with distinct event times: higher risk
/// with earlier event counts 1, equal risk 0.5. Censored entries are ignored.
double concordance_at(std::span<const double> risk, std::span<const double> event_times,
                      std::span<const int> event_observed);

struct ReliabilityRow {
  double t_hours = 0.0;
  std::size_t decile = 0;
  double mean_pred = 0.0;
  double emp_frac = 0.0;
  std::size_t count = 0;
};

/// Sorts by prediction and splits into 10 equal-count deciles (remainder to
/// the first deciles). Tied predictions are never split: a tie group joins the
/// decile its first member falls in, so some deciles may be empty (count 0).
std::vector<ReliabilityRow> reliability(std::span<const double> predicted,
                                        std::span<const int> event_by_t, double t_hours);

/// Largest |mean_pred - emp_frac| over non-empty rows.
double reliability_max_error(std::span<const ReliabilityRow> rows);

void write_roc_csv(const std::string& path, std::span<const RocPoint> curve);
void write_pr_csv(const std::string& path, std::span<const PrPoint> curve);
void write_reliability_csv(const std::string& path, std::span<const ReliabilityRow> rows);

}  // namespace prognosis
