#pragma once

// Central finite-difference gradient checks shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "prognosis/graph.hpp"
#include "prognosis/random.hpp"

namespace prognosis::testing {

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  ///< coordinates next to a kink (FD estimates disagree with each other)
  std::string worst;
};

/// Relative error with a floor on the denominator so that near-zero
/// gradients are compared on an absolute scale.
inline double rel_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences for every tensor in
/// `point` that receives a gradient. `point` must hold the values the graph
/// was built with. With max_coords > 0, that many coordinates per tensor are
/// sampled. A coordinate whose error exceeds `tol` is re-estimated with h/4;
/// if the two numeric estimates disagree by more than `tol` the function is
/// not smooth there and the coordinate is skipped.
inline GradCheck grad_check(Graph& graph, NodeRef loss, const NamedTensors& point, double tol,
                            std::size_t max_coords = 0, std::uint64_t seed = 0, double h = 1e-5) {
  graph.mark_output("__loss", loss);
  const NamedTensors grads = graph.backward(loss);
  NamedTensors feeds = point;
  auto f = [&]() { return graph.evaluate(feeds).at("__loss").item(); };
  auto numeric = [&](const std::string& name, std::size_t i, double step) {
    double& x = feeds.at(name)[i];
    const double x0 = x;
    x = x0 + step;
    const double fp = f();
    x = x0 - step;
    const double fm = f();
    x = x0;
    return (fp - fm) / (2.0 * step);
  };
  GradCheck out;
  Rng rng(seed);
  for (const auto& [name, value] : point) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    std::vector<std::size_t> coords(value.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords > 0 && coords.size() > max_coords) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(max_coords);
    }
    for (auto i : coords) {
      const double a = it->second[i];
      const double n = numeric(name, i, h);
      double rel = rel_error(a, n);
      if (rel > tol) {
        const double n_small = numeric(name, i, h / 4.0);
        if (rel_error(n, n_small) > tol) {
          ++out.skipped;
          continue;
        }
        rel = std::min(rel, rel_error(a, n_small));
      }
      ++out.checked;
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  graph.evaluate(point);
  return out;
}

}  // namespace prognosis::testing
