#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "prognosis/gbm.hpp"
#include "prognosis/selection.hpp"
#include "prognosis/synthetic.hpp"
#include "prognosis/training.hpp"

namespace prognosis {

/// Flat `key = value` run configuration. Every key has a default; unknown
/// keys are rejected. Lines starting with '#' are comments.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  void load(std::istream& in, const std::string& source = "config");
  void load_file(const std::string& path);

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;
  std::uint64_t seed() const;

  /// Every key with its current value, sorted by key.
  const std::map<std::string, std::string>& values() const { return values_; }

  PreprocessOptions preprocess() const;
  AugmentPolicy augmentation() const;
  /// Architecture and training options for the classifier or survival model.
  ImageTrainOptions image_options(ImageTask task) const;
  GbmParams gbm() const;
  LogRegParams logreg() const;
  SelectionOptions selection() const;
  /// The family's default search space with any `search.<family>.<name>` overrides.
  SearchSpace search_space(const std::string& family) const;
  SyntheticSpec synthetic() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace prognosis
