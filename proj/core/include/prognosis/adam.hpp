#pragma once

#include <cstdint>

#include "prognosis/graph.hpp"

namespace prognosis {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for every parameter plus the bias-correction step counter.
struct AdamState {
  AdamOptions options;
  std::uint64_t step_count = 0;
  NamedTensors first_moment;
  NamedTensors second_moment;

  explicit AdamState(AdamOptions opts = {}) : options(opts) {}
};

/// One bias-corrected Adam update. Every parameter must have a gradient of the
/// same shape; a non-finite gradient aborts with a diagnostic naming it.
void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state);

}  // namespace prognosis
