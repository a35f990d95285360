#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace prognosis {

struct HyperParameter {
  enum class Law { LogUniform, Uniform, LogUniformInt, UniformInt, Choice };
  std::string name;
  Law law = Law::Uniform;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> choices;
};

/// Sampled configuration, ordered by name.
using HyperConfig = std::map<std::string, double>;

struct SearchSpace {
  std::vector<HyperParameter> params;

  void validate() const;
  /// Draws every parameter in declaration order.
  HyperConfig sample(std::uint64_t seed, std::size_t index) const;

  static SearchSpace gmic();    ///< lr 10^[-6,-4], beta 4*10^[-6,-3], r in [0.2, 0.8]
  static SearchSpace drc();     ///< beta 10^[-6,-4], r in {0.2, 0.5, 0.8}
  static SearchSpace gbm();     ///< lr 10^[-2,-1], trees 10^[2,3], leaves [5, 15]
  static SearchSpace logreg();  ///< l2 10^[-4,-1]
};

std::string to_string(const HyperConfig& config);

/// A trained model that can score exams of the family's dataset by index.
class TrainedMember {
 public:
  virtual ~TrainedMember() = default;
  virtual std::vector<double> predict(std::size_t exam) const = 0;
  /// Cheaper prediction used for validation scoring (e.g. without test-time augmentation).
  virtual std::vector<double> predict_fast(std::size_t exam) const { return predict(exam); }
};

/// One trainable model type plus its validation metric.
class ModelFamily {
 public:
  virtual ~ModelFamily() = default;
  virtual std::string name() const = 0;
  virtual SearchSpace search_space() const = 0;
  virtual std::unique_ptr<TrainedMember> train(const HyperConfig& config,
                                               std::span<const std::size_t> train_exams,
                                               std::span<const std::size_t> val_exams,
                                               std::uint64_t seed) = 0;
  /// Higher is better. `predictions[k]` belongs to `exams[k]`.
  virtual double score(std::span<const std::vector<double>> predictions,
                       std::span<const std::size_t> exams) const = 0;
};

struct SelectionOptions {
  double universe_percent = 100.0;
  std::size_t num_configs = 30;
  std::size_t num_splits = 3;
  std::size_t top_k = 3;
  double train_fraction = 0.8;
};

struct SelectionRun {
  std::size_t config = 0;
  std::size_t split = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train_exams;
  std::vector<std::size_t> val_exams;
  std::vector<std::vector<double>> val_predictions;
  double score = 0.0;
  double wall_seconds = 0.0;
};

struct SelectionResult {
  double universe_percent = 100.0;
  std::vector<std::string> universe_patients;
  std::vector<HyperConfig> configs;
  std::vector<double> config_scores;  ///< a_i
  std::vector<SelectionRun> runs;     ///< config-major, num_splits per config
  std::vector<std::size_t> top_configs;
  std::vector<std::shared_ptr<TrainedMember>> members;  ///< top_k x num_splits
  std::vector<std::size_t> member_runs;                 ///< index into runs per member
  std::vector<std::size_t> test_exams;
  std::vector<std::vector<double>> test_predictions;  ///< equal-weight member mean
  double test_score = 0.0;                             ///< a*
  /// Mean validation prediction of the chosen members, per universe exam
  /// that was validated at least once.
  std::map<std::size_t, std::vector<double>> oof_predictions;
};

/// Seed streams used by the harness (public so a re-simulation can reproduce them).
enum class SelectionStream : std::uint64_t { Universe = 1, Configs = 2, Split = 3, Train = 4 };

std::uint64_t split_seed(std::uint64_t seed, std::size_t config, std::size_t split);

/// Patients sorted, shuffled with the universe stream, first floor(u/100 * P) kept.
std::vector<std::string> sample_universe(std::span<const std::string> patients, double percent,
                                         std::uint64_t seed);

/// Patient-level split: the sorted patient list is shuffled with `seed`;
/// the first floor(fraction * P) patients train.
std::pair<std::vector<std::string>, std::vector<std::string>> split_patients(
    std::span<const std::string> patients, double train_fraction, std::uint64_t seed);

using SelectionLogger = std::function<void(const SelectionRun&, const HyperConfig&)>;

/// Random search with Monte Carlo cross-validation over patient-level splits,
/// then an equal-weight ensemble of the top configurations' members.
/// `exam_patient[e]` names the patient of exam e.
SelectionResult run_model_selection(ModelFamily& family, std::span<const std::string> exam_patient,
                                    std::span<const std::size_t> train_exams,
                                    std::span<const std::size_t> test_exams,
                                    const SelectionOptions& options, std::uint64_t seed,
                                    const SelectionLogger& logger = {});

/// One JSON object per line: each run, then a final summary record.
void write_selection_jsonl(std::ostream& out, const SelectionResult& result, const std::string& family,
                           const std::map<std::string, double>& extra_summary = {});

}  // namespace prognosis
