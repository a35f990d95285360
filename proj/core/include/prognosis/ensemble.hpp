#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace prognosis {

/// Prediction horizons in hours for the binary window labels.
inline constexpr std::array<double, 4> kWindowHours{24, 48, 72, 96};
inline constexpr std::size_t kNumWindows = kWindowHours.size();

using WindowScores = std::array<double, kNumWindows>;
using WindowLabels = std::array<int, kNumWindows>;

struct EnsembleWeights {
  WindowScores lambda{1.0, 1.0, 1.0, 1.0};
  WindowScores gbm_imputation_mean{0.5, 0.5, 0.5, 0.5};

  void validate() const;
};

/// lambda_t * y_gmic + (1 - lambda_t) * (y_gbm or the imputation mean).
WindowScores ensemble_predict(const WindowScores& y_gmic, const std::optional<WindowScores>& y_gbm,
                              const EnsembleWeights& weights);

/// (AUC + PR AUC) / 2.
double auc_pr_objective(std::span<const double> scores, std::span<const int> labels);

struct LambdaSelection {
  WindowScores lambda{};
  WindowScores objective{};  ///< best (AUC + PR AUC) / 2 per window
  WindowScores gmic_objective{};
  WindowScores gbm_objective{};
};

/// Grid search over lambda in {0, 0.01, ..., 1} per window; objective values
/// within 1e-12 of the best count as ties and the smallest lambda wins.
LambdaSelection select_lambda(std::span<const WindowScores> gmic, std::span<const WindowScores> gbm,
                              std::span<const WindowLabels> labels);

}  // namespace prognosis
