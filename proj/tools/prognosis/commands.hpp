#pragma once

#include <string>

#include "common.hpp"

namespace prognosis::cli {

void synth_command(const CommonFlags& flags);
void train_command(const CommonFlags& flags, const std::string& family, const std::string& data_dir);
void select_command(const CommonFlags& flags, const std::string& family, const std::string& data_dir);

struct EvalInputs {
  std::string data_dir;
  std::string gmic, drc, gbm, logreg;  ///< model directories, any subset
};
void eval_command(const CommonFlags& flags, const EvalInputs& inputs);

struct PredictInputs {
  std::string image;
  std::string exam_id;
  std::string gmic, drc, gbm;
  std::string ensemble;  ///< ensemble.json written by eval
  std::string clinical;  ///< clinical CSV for the GBM
  std::string patient;
  double exam_time_h = 0.0;
};
void predict_command(const CommonFlags& flags, const PredictInputs& inputs);

void export_report_command(const CommonFlags& flags, const std::string& eval_dir);

}  // namespace prognosis::cli
