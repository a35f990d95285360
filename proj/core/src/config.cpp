#include "prognosis/config.hpp"

#include <fstream>

#include "prognosis/csv.hpp"
#include "prognosis/drc.hpp"
#include "prognosis/error.hpp"

namespace prognosis {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d{
      {"seed", "0"},
      {"out_dir", "out"},
      {"image.side", "64"},
      {"image.low_quantile", "0.01"},
      {"image.high_quantile", "0.99"},
      {"augment.flip_probability", "0.5"},
      {"augment.rotation_degrees", "45"},
      {"augment.max_translation", "0.1"},
      {"arch.saliency_side", "8"},
      {"arch.global_channels", "8,16,32,64"},
      {"arch.drc_global_channels", "8,16,32,64,64"},
      {"arch.local_channels", "8,16,32"},
      {"arch.attention_dim", "16"},
      {"arch.crop_side", "16"},
      {"arch.patch_side", "14"},
      {"arch.num_patches", "6"},
      {"gmic.lr", "0.002"},
      {"gmic.beta", "4e-5"},
      {"gmic.pool_fraction", "0.5"},
      {"drc.lr", "1.25e-4"},
      {"drc.beta", "1e-5"},
      {"drc.pool_fraction", "0.5"},
      {"train.epochs", "10"},
      {"train.batch_size", "8"},
      {"train.augment", "true"},
      {"train.tta", "10"},
      {"train.val_percent", "20"},
      {"gbm.learning_rate", "0.05"},
      {"gbm.num_trees", "200"},
      {"gbm.max_leaves", "8"},
      {"gbm.min_samples_leaf", "5"},
      {"gbm.subsample", "1"},
      {"logreg.l2", "0.001"},
      {"logreg.iterations", "500"},
      {"logreg.learning_rate", "0.5"},
      {"select.universe_percent", "100"},
      {"select.num_configs", "30"},
      {"select.num_splits", "3"},
      {"select.top_k", "3"},
      {"search.gmic.lr", "1e-6,1e-4"},
      {"search.gmic.beta", "4e-6,4e-3"},
      {"search.gmic.r", "0.2,0.8"},
      {"search.drc.beta", "1e-6,1e-4"},
      {"search.drc.r", "0.2|0.5|0.8"},
      {"search.gbm.lr", "0.01,0.1"},
      {"search.gbm.trees", "100,1000"},
      {"search.gbm.leaves", "5,15"},
      {"search.logreg.l2", "1e-4,1e-1"},
      {"eval.bootstrap_iterations", "1000"},
      {"synth.num_patients", "2000"},
      {"synth.image_side", "64"},
      {"synth.no_blob_probability", "0.5"},
      {"synth.max_blobs", "3"},
      {"synth.alpha", "-16"},
      {"synth.kappa", "14"},
      {"synth.gompertz_c", "0.05"},
      {"synth.tabular_kappa", "0"},
      {"synth.tabular_noise", "0.5"},
      {"synth.followup_probability", "0.15"},
      {"synth.exclude_probability", "0.01"},
      {"synth.test_fraction", "0.5"},
  };
  return d;
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + key + "'");
  const std::string old = it->second;
  it->second = value;
  try {
    // Type-check against the default's shape.
    const std::string& def = defaults().at(key);
    if (key == "out_dir") return;
    if (key.starts_with("search.")) {
      (void)search_space(split(key, '.')[1]);
    } else if (def.find(',') != std::string::npos) {
      (void)counts(key);
    } else if (def == "true" || def == "false") {
      (void)flag(key);
    } else {
      (void)number(key);
    }
  } catch (const Error& e) {
    it->second = old;
    throw Error("config key '" + key + "': " + e.what());
  }
}

void RunConfig::load(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(source + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(source + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  load(in, path);
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const { return parse_double(get(key), key); }

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = parse_int(get(key), key);
  if (v < 0) throw Error(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(key + " must be true or false");
}

std::vector<std::size_t> RunConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& part : split(get(key), ',')) {
    const auto v = parse_int(part, key);
    if (v <= 0) throw Error(key + " entries must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::uint64_t RunConfig::seed() const {
  const auto v = parse_int(get("seed"), "seed");
  if (v < 0) throw Error("seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

PreprocessOptions RunConfig::preprocess() const {
  PreprocessOptions p;
  p.low_quantile = number("image.low_quantile");
  p.high_quantile = number("image.high_quantile");
  if (!(p.low_quantile >= 0 && p.low_quantile < p.high_quantile && p.high_quantile <= 1)) {
    throw Error("image quantiles must satisfy 0 <= low < high <= 1");
  }
  return p;
}

AugmentPolicy RunConfig::augmentation() const {
  AugmentPolicy a;
  a.flip_probability = number("augment.flip_probability");
  const double deg = number("augment.rotation_degrees");
  a.rotation_min_degrees = -deg;
  a.rotation_max_degrees = deg;
  a.max_translation_fraction = number("augment.max_translation");
  a.validate();
  return a;
}

ImageTrainOptions RunConfig::image_options(ImageTask task) const {
  ImageTrainOptions o;
  const bool survival = task == ImageTask::Survival;
  const std::string prefix = survival ? "drc." : "gmic.";
  o.arch.input_side = count("image.side");
  o.arch.saliency_side = count("arch.saliency_side");
  o.arch.num_windows = survival ? kDrcOutputs : kNumWindows;
  o.arch.global_channels = counts(survival ? "arch.drc_global_channels" : "arch.global_channels");
  o.arch.local_channels = counts("arch.local_channels");
  o.arch.attention_dim = count("arch.attention_dim");
  o.arch.crop_side = count("arch.crop_side");
  o.arch.patch_side = count("arch.patch_side");
  o.arch.num_patches = count("arch.num_patches");
  o.arch.pool_fraction = number(prefix + "pool_fraction");
  o.arch.validate();
  o.learning_rate = number(prefix + "lr");
  o.beta = number(prefix + "beta");
  o.epochs = count("train.epochs");
  o.batch_size = count("train.batch_size");
  o.augment = flag("train.augment");
  o.augmentation = augmentation();
  o.tta = count("train.tta");
  if (!(o.learning_rate > 0)) throw Error(prefix + "lr must be positive");
  if (!(o.beta >= 0)) throw Error(prefix + "beta must be non-negative");
  return o;
}

GbmParams RunConfig::gbm() const {
  GbmParams p;
  p.learning_rate = number("gbm.learning_rate");
  p.num_trees = count("gbm.num_trees");
  p.max_leaves = count("gbm.max_leaves");
  p.min_samples_leaf = count("gbm.min_samples_leaf");
  p.subsample = number("gbm.subsample");
  p.validate();
  return p;
}

LogRegParams RunConfig::logreg() const {
  LogRegParams p;
  p.l2 = number("logreg.l2");
  p.iterations = count("logreg.iterations");
  p.learning_rate = number("logreg.learning_rate");
  return p;
}

SelectionOptions RunConfig::selection() const {
  SelectionOptions s;
  s.universe_percent = number("select.universe_percent");
  s.num_configs = count("select.num_configs");
  s.num_splits = count("select.num_splits");
  s.top_k = count("select.top_k");
  s.train_fraction = 1.0 - number("train.val_percent") / 100.0;
  if (!(s.train_fraction > 0 && s.train_fraction < 1)) throw Error("train.val_percent must lie in (0, 100)");
  return s;
}

SearchSpace RunConfig::search_space(const std::string& family) const {
  SearchSpace space;
  if (family == "gmic") {
    space = SearchSpace::gmic();
  } else if (family == "drc") {
    space = SearchSpace::drc();
  } else if (family == "gbm") {
    space = SearchSpace::gbm();
  } else if (family == "logreg") {
    space = SearchSpace::logreg();
  } else {
    throw Error("unknown model family '" + family + "'");
  }
  for (auto& p : space.params) {
    const std::string key = "search." + family + "." + p.name;
    if (!values_.contains(key)) continue;
    const std::string& v = get(key);
    if (p.law == HyperParameter::Law::Choice) {
      p.choices.clear();
      for (const auto& c : split(v, '|')) p.choices.push_back(parse_double(c, key));
    } else {
      const auto bounds = split(v, ',');
      if (bounds.size() != 2) throw Error(key + " must be 'lo,hi'");
      p.lo = parse_double(bounds[0], key);
      p.hi = parse_double(bounds[1], key);
    }
  }
  space.validate();
  return space;
}

SyntheticSpec RunConfig::synthetic() const {
  SyntheticSpec s;
  s.num_patients = count("synth.num_patients");
  s.image_side = count("synth.image_side");
  s.no_blob_probability = number("synth.no_blob_probability");
  s.max_blobs = count("synth.max_blobs");
  s.alpha = number("synth.alpha");
  s.kappa = number("synth.kappa");
  s.gompertz_c = number("synth.gompertz_c");
  s.tabular_kappa = number("synth.tabular_kappa");
  s.tabular_noise = number("synth.tabular_noise");
  s.followup_probability = number("synth.followup_probability");
  s.exclude_probability = number("synth.exclude_probability");
  s.test_fraction = number("synth.test_fraction");
  s.seed = seed();
  s.validate();
  return s;
}

}  // namespace prognosis
