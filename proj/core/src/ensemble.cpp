#include "prognosis/ensemble.hpp"

#include "prognosis/error.hpp"
#include "prognosis/metrics.hpp"

namespace prognosis {

void EnsembleWeights::validate() const {
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    if (!(lambda[t] >= 0.0 && lambda[t] <= 1.0)) throw Error("ensemble weight outside [0, 1]");
    if (!(gbm_imputation_mean[t] > 0.0 && gbm_imputation_mean[t] < 1.0)) {
      throw Error("imputation mean outside (0, 1)");
    }
  }
}

WindowScores ensemble_predict(const WindowScores& y_gmic, const std::optional<WindowScores>& y_gbm,
                              const EnsembleWeights& weights) {
  WindowScores out{};
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    const double tab = y_gbm ? (*y_gbm)[t] : weights.gbm_imputation_mean[t];
    out[t] = weights.lambda[t] * y_gmic[t] + (1.0 - weights.lambda[t]) * tab;
  }
  return out;
}

double auc_pr_objective(std::span<const double> scores, std::span<const int> labels) {
  return (roc_auc(scores, labels) + pr_auc(scores, labels)) / 2.0;
}

LambdaSelection select_lambda(std::span<const WindowScores> gmic, std::span<const WindowScores> gbm,
                              std::span<const WindowLabels> labels) {
  const std::size_t n = labels.size();
  if (gmic.size() != n || gbm.size() != n) throw ShapeError("validation arrays differ in length");
  LambdaSelection result;
  std::vector<double> a(n), b(n), mix(n);
  std::vector<int> y(n);
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    int pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = gmic[i][t];
      b[i] = gbm[i][t];
      y[i] = labels[i][t];
      pos += y[i];
    }
    if (pos == 0 || pos == static_cast<int>(n)) {
      throw Error("window " + std::to_string(static_cast<int>(kWindowHours[t])) +
                  " h: validation labels need both classes to select lambda");
    }
    double best = -1.0, best_lambda = 0.0;
    for (int k = 0; k <= 100; ++k) {
      const double lambda = k / 100.0;
      for (std::size_t i = 0; i < n; ++i) mix[i] = lambda * a[i] + (1.0 - lambda) * b[i];
      const double value = auc_pr_objective(mix, y);
      if (value > best + 1e-12) {
        best = value;
        best_lambda = lambda;
      }
    }
    result.lambda[t] = best_lambda;
    result.objective[t] = best;
    result.gmic_objective[t] = auc_pr_objective(a, y);
    result.gbm_objective[t] = auc_pr_objective(b, y);
  }
  return result;
}

}  // namespace prognosis
