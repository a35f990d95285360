#include <cmath>
#include <fstream>

#include "commands.hpp"
#include "prognosis/csv.hpp"
#include "prognosis/drc.hpp"
#include "prognosis/ensemble.hpp"
#include "prognosis/error.hpp"
#include "prognosis/model_store.hpp"
#include "prognosis/pgm.hpp"

namespace prognosis::cli {

namespace {

StoredModel load_family(const std::string& dir, const std::string& family) {
  StoredModel m = load_model(dir);
  if (m.family != family) throw Error(dir + " holds a " + m.family + " model, expected " + family);
  return m;
}

GrayImage load_image(const std::string& path, const StoredModel& model) {
  return preprocess(read_pgm(fs::path(path)), model.image_side, model.preprocess);
}

/// Member-mean saliency maps (plain forward) and the first member's ROIs.
void export_saliency(Run& run, const StoredModel& model, const GrayImage& image) {
  std::vector<double> mean;
  RoiSet rois;
  for (std::size_t k = 0; k < model.size(); ++k) {
    const auto out = gmic_forward(image, model.arch, model.image_members[k]);
    const auto v = out.saliency.values();
    if (mean.empty()) {
      mean.assign(v.begin(), v.end());
      rois = out.rois;
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
    }
  }
  const std::size_t h = model.arch.saliency_side;
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    RawImage raw;
    raw.width = h;
    raw.height = h;
    for (std::size_t i = 0; i < h * h; ++i) {
      const double v = mean[t * h * h + i] / static_cast<double>(model.size());
      raw.pixels.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0)));
    }
    write_pgm(run.output("saliency_" + std::to_string(static_cast<int>(kWindowHours[t])) + "h.pgm"), raw);
  }
  std::ofstream out(run.output("roi.csv"));
  out << "window,rank,row,col,alpha\n";
  for (std::size_t t = 0; t < kNumWindows; ++t) {
    for (std::size_t k = 0; k < rois.positions.size(); ++k) {
      out << static_cast<int>(kWindowHours[t]) << ',' << k + 1 << ',' << rois.positions[k].row << ','
          << rois.positions[k].col << ',' << format_double(rois.attention[k]) << '\n';
    }
  }
}

}  // namespace

void predict_command(const CommonFlags& flags, const PredictInputs& in) {
  Run run = start_run("predict", flags);
  if (in.gmic.empty() && in.drc.empty()) throw Error("predict needs --gmic and/or --drc");
  if (in.image.empty()) throw Error("predict needs --image");
  run.inputs["image"] = in.image;

  std::optional<WindowScores> gmic_p, gbm_p;
  if (!in.gmic.empty()) {
    run.inputs["gmic"] = in.gmic;
    const StoredModel model = load_family(in.gmic, "gmic");
    const GrayImage image = load_image(in.image, model);
    const auto p = model.predict_image(image);
    gmic_p.emplace();
    std::copy(p.begin(), p.end(), gmic_p->begin());
    export_saliency(run, model, image);
  }
  if (!in.gbm.empty()) {
    if (in.clinical.empty() || in.patient.empty()) throw Error("--gbm needs --clinical and --patient");
    run.inputs["gbm"] = in.gbm;
    run.inputs["clinical"] = in.clinical;
    run.inputs["patient"] = in.patient;
    run.inputs["exam_time_h"] = in.exam_time_h;
    const StoredModel model = load_family(in.gbm, "gbm");
    const ClinicalTable table = read_clinical_csv(in.clinical);
    if (table.has_patient(in.patient)) {
      const auto p = model.predict_features(featurize(table.patient(in.patient), in.exam_time_h));
      gbm_p.emplace();
      std::copy(p.begin(), p.end(), gbm_p->begin());
    } else {
      log("no clinical records for " + in.patient + "; the ensemble imputes the GBM output");
    }
  }
  if (gmic_p) {
    std::optional<WindowScores> final_p = gmic_p;
    if (!in.ensemble.empty()) {
      run.inputs["ensemble"] = in.ensemble;
      std::ifstream f(in.ensemble);
      if (!f) throw Error("cannot open " + in.ensemble);
      EnsembleWeights w;
      try {
        const Json j = Json::parse(f);
        w.lambda = j.at("lambda").get<WindowScores>();
        w.gbm_imputation_mean = j.at("gbm_imputation_mean").get<WindowScores>();
      } catch (const nlohmann::json::exception& e) {
        throw Error("malformed " + in.ensemble + ": " + e.what());
      }
      w.validate();
      final_p = ensemble_predict(*gmic_p, gbm_p, w);
    }
    std::ofstream out(run.output("predictions.csv"));
    out << "window_h,probability\n";
    Json probs = Json::object();
    for (std::size_t t = 0; t < kNumWindows; ++t) {
      out << static_cast<int>(kWindowHours[t]) << ',' << format_double((*final_p)[t]) << '\n';
      probs[std::to_string(static_cast<int>(kWindowHours[t])) + "h"] = (*final_p)[t];
    }
    run.metrics["probability"] = probs;
    run.metrics["gmic"] = *gmic_p;
    if (gbm_p) run.metrics["gbm"] = *gbm_p;
  }
  if (!in.drc.empty()) {
    run.inputs["drc"] = in.drc;
    const StoredModel model = load_family(in.drc, "drc");
    const auto curve = model.predict_image(load_image(in.image, model));
    const std::string id = in.exam_id.empty() ? fs::path(in.image).stem().string() : in.exam_id;
    run.inputs["exam_id"] = id;
    write_drc_csv(run.output("drc.csv"), std::span(&id, 1), std::span(&curve, 1));
    run.metrics["drc"] = curve;
  }
  run.write_report();
}

}  // namespace prognosis::cli
