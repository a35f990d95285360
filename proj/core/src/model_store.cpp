#include "prognosis/model_store.hpp"

#include <fstream>
#include <json.hpp>

#include "prognosis/checkpoint.hpp"
#include "prognosis/csv.hpp"
#include "prognosis/drc.hpp"
#include "prognosis/error.hpp"

#ifndef PROGNOSIS_VERSION_STRING
#define PROGNOSIS_VERSION_STRING "v0.0.0"
#endif

namespace prognosis {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

const char* version_string() noexcept { return PROGNOSIS_VERSION_STRING; }

namespace {

const char* tabular_extension(const std::string& family) { return family == "gbm" ? ".gbm" : ".logreg"; }

std::string tabular_file(const std::string& family, std::size_t k, std::size_t t) {
  return "member_" + std::to_string(k) + "_" + std::to_string(kWindowHours[t]) + "h" +
         tabular_extension(family);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

std::size_t StoredModel::size() const {
  if (is_image()) return image_members.size();
  if (family == "gbm") return gbm_members.size();
  return logreg_members.size();
}

ImageModel StoredModel::image_member(std::size_t k) const {
  if (!is_image() || k >= image_members.size()) throw Error("no image member " + std::to_string(k));
  return ImageModel{task(), arch, image_members[k]};
}

std::vector<double> StoredModel::predict_image(const GrayImage& image) const {
  if (!is_image()) throw Error(family + " model does not take images");
  if (image_members.empty()) throw Error("model has no members");
  std::vector<double> mean;
  for (std::size_t k = 0; k < image_members.size(); ++k) {
    const auto p = image_member(k).predict_tta(image, tta_policy, tta);
    if (mean.empty()) mean.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) mean[i] += p[i];
  }
  for (auto& v : mean) v /= static_cast<double>(image_members.size());
  return mean;
}

std::vector<double> StoredModel::predict_features(std::span<const double> features) const {
  if (is_image()) throw Error(family + " model takes images, not clinical features");
  const std::size_t n = size();
  if (n == 0) throw Error("model has no members");
  std::vector<double> mean(kNumWindows, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto p = family == "gbm" ? gbm_members[k].predict(features) : logreg_members[k].predict(features);
    for (std::size_t t = 0; t < kNumWindows; ++t) mean[t] += p[t];
  }
  for (auto& v : mean) v /= static_cast<double>(n);
  return mean;
}

std::vector<double> StoredModel::predict(const Exam& exam) const {
  if (is_image()) {
    if (exam.image.rows() == 0) throw Error("exam " + exam.exam_id + " has no image loaded");
    return predict_image(exam.image);
  }
  if (exam.features.empty()) throw Error("exam " + exam.exam_id + " has no clinical features");
  return predict_features(exam.features);
}

void save_model(const StoredModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  ordered_json j;
  j["format"] = "prognosis-model";
  j["version"] = version_string();
  j["family"] = model.family;
  if (model.is_image()) {
    j["image_side"] = model.image_side;
    j["preprocess"] = {{"low_quantile", model.preprocess.low_quantile},
                       {"high_quantile", model.preprocess.high_quantile}};
    const auto& a = model.arch;
    j["arch"] = {{"input_side", a.input_side},         {"saliency_side", a.saliency_side},
                 {"num_windows", a.num_windows},       {"global_channels", a.global_channels},
                 {"local_channels", a.local_channels}, {"attention_dim", a.attention_dim},
                 {"crop_side", a.crop_side},           {"patch_side", a.patch_side},
                 {"num_patches", a.num_patches},       {"pool_fraction", a.pool_fraction}};
    const auto& p = model.tta_policy;
    j["tta"] = model.tta;
    j["tta_policy"] = {{"flip_probability", p.flip_probability},
                       {"rotation_min_degrees", p.rotation_min_degrees},
                       {"rotation_max_degrees", p.rotation_max_degrees},
                       {"max_translation_fraction", p.max_translation_fraction},
                       {"seed", p.seed}};
  }
  ordered_json members = ordered_json::array();
  for (std::size_t k = 0; k < model.size(); ++k) {
    ordered_json m;
    if (model.is_image()) {
      const std::string file = "member_" + std::to_string(k) + ".milw";
      save_checkpoint(dir / file, model.image_members[k]);
      m["files"] = {file};
    } else {
      ordered_json files = ordered_json::array();
      for (std::size_t t = 0; t < kNumWindows; ++t) {
        const std::string file = tabular_file(model.family, k, t);
        auto out = open_out(dir / file);
        if (model.family == "gbm") {
          write_gbm(out, model.gbm_members[k].models[t]);
        } else {
          write_logreg(out, model.logreg_members[k].models[t]);
        }
        files.push_back(file);
      }
      m["files"] = files;
    }
    ordered_json hp = ordered_json::object();
    if (k < model.hyperparameters.size()) {
      for (const auto& [name, v] : model.hyperparameters[k]) hp[name] = v;
    }
    m["hyperparameters"] = hp;
    members.push_back(m);
  }
  j["members"] = members;
  auto out = open_out(dir / "model.json");
  out << j.dump(2) << "\n";
}

StoredModel load_model(const fs::path& dir) {
  ordered_json j;
  try {
    auto in = open_in(dir / "model.json");
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed " + (dir / "model.json").string() + ": " + e.what());
  }
  StoredModel model;
  try {
    if (j.at("format") != "prognosis-model") throw Error("not a model directory: " + dir.string());
    model.family = j.at("family").get<std::string>();
    if (model.family != "gmic" && model.family != "drc" && model.family != "gbm" && model.family != "logreg") {
      throw Error("unknown model family '" + model.family + "'");
    }
    if (model.is_image()) {
      model.image_side = j.at("image_side").get<std::size_t>();
      model.preprocess.low_quantile = j.at("preprocess").at("low_quantile").get<double>();
      model.preprocess.high_quantile = j.at("preprocess").at("high_quantile").get<double>();
      const auto& a = j.at("arch");
      auto& c = model.arch;
      c.input_side = a.at("input_side").get<std::size_t>();
      c.saliency_side = a.at("saliency_side").get<std::size_t>();
      c.num_windows = a.at("num_windows").get<std::size_t>();
      c.global_channels = a.at("global_channels").get<std::vector<std::size_t>>();
      c.local_channels = a.at("local_channels").get<std::vector<std::size_t>>();
      c.attention_dim = a.at("attention_dim").get<std::size_t>();
      c.crop_side = a.at("crop_side").get<std::size_t>();
      c.patch_side = a.at("patch_side").get<std::size_t>();
      c.num_patches = a.at("num_patches").get<std::size_t>();
      c.pool_fraction = a.at("pool_fraction").get<double>();
      c.validate();
      model.tta = j.at("tta").get<std::size_t>();
      const auto& p = j.at("tta_policy");
      model.tta_policy.flip_probability = p.at("flip_probability").get<double>();
      model.tta_policy.rotation_min_degrees = p.at("rotation_min_degrees").get<double>();
      model.tta_policy.rotation_max_degrees = p.at("rotation_max_degrees").get<double>();
      model.tta_policy.max_translation_fraction = p.at("max_translation_fraction").get<double>();
      model.tta_policy.seed = p.at("seed").get<std::uint64_t>();
      model.tta_policy.validate();
    }
    for (const auto& m : j.at("members")) {
      const auto files = m.at("files").get<std::vector<std::string>>();
      if (model.is_image()) {
        if (files.size() != 1) throw Error("image member needs exactly one file");
        auto params = load_checkpoint(dir / files[0]);
        check_gmic_parameters(model.arch, params);
        model.image_members.push_back(std::move(params));
      } else {
        if (files.size() != kNumWindows) throw Error("tabular member needs one file per window");
        WindowGbm gbm;
        WindowLogReg logreg;
        for (std::size_t t = 0; t < kNumWindows; ++t) {
          auto in = open_in(dir / files[t]);
          if (model.family == "gbm") {
            gbm.models[t] = read_gbm(in);
          } else {
            logreg.models[t] = read_logreg(in);
          }
        }
        if (model.family == "gbm") {
          model.gbm_members.push_back(std::move(gbm));
        } else {
          model.logreg_members.push_back(std::move(logreg));
        }
      }
      HyperConfig hp;
      for (const auto& [name, v] : m.at("hyperparameters").items()) hp[name] = v.get<double>();
      model.hyperparameters.push_back(std::move(hp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed " + (dir / "model.json").string() + ": " + e.what());
  }
  if (model.size() == 0) throw Error("model in " + dir.string() + " has no members");
  return model;
}

void write_predictions_csv(const fs::path& path, std::span<const std::string> exam_ids,
                           std::span<const std::vector<double>> predictions,
                           std::span<const std::string> columns) {
  if (exam_ids.size() != predictions.size()) throw ShapeError("exam ids and predictions differ in count");
  auto out = open_out(path);
  out << "exam_id";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < exam_ids.size(); ++i) {
    if (predictions[i].size() != columns.size()) throw ShapeError("prediction width differs from header");
    out << exam_ids[i];
    for (double v : predictions[i]) out << ',' << format_double(v);
    out << '\n';
  }
}

std::map<std::string, std::vector<double>> read_predictions_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "exam_id") throw Error(path.string() + ": first column must be exam_id");
  std::map<std::string, std::vector<double>> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(n);
    if (fields.size() != header.size()) throw Error(where + ": wrong field count");
    std::vector<double> v;
    for (std::size_t i = 1; i < fields.size(); ++i) v.push_back(parse_double(fields[i], where));
    if (!out.emplace(fields[0], std::move(v)).second) throw Error(where + ": duplicate exam " + fields[0]);
  }
  return out;
}

std::vector<std::string> prediction_columns(const std::string& family) {
  std::vector<std::string> cols;
  if (family == "drc") {
    for (double t : kTimeGrid) cols.push_back("drc_" + format_double(t) + "h");
  } else {
    for (auto w : kWindowHours) cols.push_back("p_" + std::to_string(w) + "h");
  }
  return cols;
}

void write_drc_csv(const std::filesystem::path& path, std::span<const std::string> exam_ids,
                   std::span<const std::vector<double>> curves) {
  if (exam_ids.size() != curves.size()) throw ShapeError("one risk curve per exam expected");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "exam_id,t_hours,drc_value\n";
  for (std::size_t k = 0; k < curves.size(); ++k) {
    if (curves[k].size() != kGridSize) throw ShapeError("risk curve needs one value per grid point");
    for (std::size_t i = 0; i < kGridSize; ++i)
      out << exam_ids[k] << ',' << format_double(kTimeGrid[i]) << ',' << format_double(curves[k][i]) << '\n';
  }
}

}  // namespace prognosis
