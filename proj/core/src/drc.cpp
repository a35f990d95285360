#include "prognosis/drc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prognosis/error.hpp"

namespace prognosis {

namespace {
double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

void check_outputs(std::span<const double> p) {
  if (p.size() < kGridSize) throw ShapeError("need at least 8 conditional probabilities");
}
}  // namespace

SurvivalLabel to_label(std::optional<double> event_time_hours, double censor_time_hours) {
  if (!(censor_time_hours >= 0.0)) throw Error("negative or invalid censor time");
  SurvivalLabel label;
  if (event_time_hours) {
    const double t = *event_time_hours;
    if (!(t >= 0.0)) throw Error("negative or invalid event time");
    if (t > censor_time_hours) throw Error("event time is after the censor time");
    for (std::size_t i = 0; i < kGridSize; ++i) {
      if (t <= kTimeGrid[i]) {
        label.event_observed = true;
        label.interval_index = static_cast<int>(i) + 1;
        return label;
      }
    }
    label.censor_index = static_cast<int>(kGridSize);
    return label;
  }
  for (std::size_t i = 0; i < kGridSize; ++i)
    if (kTimeGrid[i] <= censor_time_hours) label.censor_index = static_cast<int>(i) + 1;
  return label;
}

std::array<double, kGridSize> drc_from_conditionals(std::span<const double> p) {
  check_outputs(p);
  std::array<double, kGridSize> drc{};
  double survival = 1.0;
  for (std::size_t i = 0; i < kGridSize; ++i) {
    survival *= 1.0 - p[i];
    drc[i] = 1.0 - survival;
  }
  return drc;
}

std::pair<std::vector<double>, std::vector<double>> nll_weights(const SurvivalLabel& label) {
  std::vector<double> a(kDrcOutputs, 0.0), b(kDrcOutputs, 0.0);
  if (label.event_observed) {
    if (label.interval_index < 1 || label.interval_index > static_cast<int>(kGridSize)) {
      throw Error("event interval out of range");
    }
    for (int j = 0; j + 1 < label.interval_index; ++j) b[j] = 1.0;
    a[label.interval_index - 1] = 1.0;
  } else {
    if (label.censor_index < 0 || label.censor_index > static_cast<int>(kGridSize)) {
      throw Error("censor index out of range");
    }
    for (int j = 0; j < label.censor_index; ++j) b[j] = 1.0;
  }
  return {a, b};
}

double nll(const SurvivalLabel& label, std::span<const double> p) {
  check_outputs(p);
  const auto [a, b] = nll_weights(label);
  double total = 0.0;
  for (std::size_t j = 0; j < kGridSize; ++j) {
    const double q = clamp_prob(p[j]);
    if (a[j] != 0.0) total -= a[j] * std::log(q);
    if (b[j] != 0.0) total -= b[j] * std::log(1.0 - q);
  }
  return total;
}

NodeRef weighted_log_loss(Graph& graph, NodeRef probs, std::span<const double> a,
                          std::span<const double> b) {
  const Tensor& p = graph.value(probs);
  if (a.size() != p.numel() || b.size() != p.numel()) {
    throw ShapeError("likelihood weights do not match output size " + std::to_string(p.numel()));
  }
  Tensor ta(p.shape()), tb(p.shape());
  std::copy(a.begin(), a.end(), ta.values().begin());
  std::copy(b.begin(), b.end(), tb.values().begin());
  const NodeRef log_p = graph.log(probs);
  const NodeRef log_q = graph.log(graph.add_scalar(graph.scale(probs, -1.0), 1.0));
  const NodeRef ll = graph.add(graph.mul(log_p, graph.constant(std::move(ta))),
                               graph.mul(log_q, graph.constant(std::move(tb))));
  return graph.scale(graph.sum(ll), -1.0);
}

NodeRef nll_node(Graph& graph, NodeRef probs, const SurvivalLabel& label) {
  auto [a, b] = nll_weights(label);
  const std::size_t n = graph.value(probs).numel();
  if (n < kGridSize) throw ShapeError("need at least 8 conditional probabilities");
  a.resize(n, 0.0);
  b.resize(n, 0.0);
  return weighted_log_loss(graph, probs, a, b);
}

NodeRef mean_nll_node(Graph& graph, NodeRef probs, std::span<const SurvivalLabel> labels) {
  if (labels.empty()) throw Error("empty cohort");
  const std::size_t n = graph.value(probs).numel();
  if (n < kGridSize) throw ShapeError("need at least 8 conditional probabilities");
  std::vector<double> a(n, 0.0), b(n, 0.0);
  for (const auto& label : labels) {
    const auto [la, lb] = nll_weights(label);
    for (std::size_t j = 0; j < kGridSize; ++j) {
      a[j] += la[j];
      b[j] += lb[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(labels.size());
  for (std::size_t j = 0; j < n; ++j) {
    a[j] *= inv;
    b[j] *= inv;
  }
  return weighted_log_loss(graph, probs, a, b);
}

std::array<double, kGridSize> empirical_conditionals(std::span<const SurvivalLabel> labels) {
  std::array<double, kGridSize> events{}, survived{};
  for (const auto& label : labels) {
    const auto [a, b] = nll_weights(label);
    for (std::size_t j = 0; j < kGridSize; ++j) {
      events[j] += a[j];
      survived[j] += b[j];
    }
  }
  std::array<double, kGridSize> rate{};
  for (std::size_t j = 0; j < kGridSize; ++j) {
    const double at_risk = events[j] + survived[j];
    rate[j] = at_risk > 0 ? events[j] / at_risk : std::numeric_limits<double>::quiet_NaN();
  }
  return rate;
}

double drc_loss(const SurvivalLabel& label, std::span<const double> p_global,
                std::span<const double> p_local, std::span<const double> p_fusion,
                const SaliencyMaps& saliency, double beta) {
  if (!(beta >= 0.0)) throw Error("sparsity weight must be non-negative");
  double total = nll(label, p_global) + nll(label, p_local) + nll(label, p_fusion);
  if (beta > 0.0) {
    double l1 = 0.0;
    for (double v : saliency.values()) l1 += std::abs(v);
    total += beta * l1;
  }
  return total;
}

NodeRef drc_loss(GmicGraph& model, const SurvivalLabel& label, double beta) {
  if (!(beta >= 0.0)) throw Error("sparsity weight must be non-negative");
  Graph& g = model.graph;
  NodeRef total = g.add(g.add(nll_node(g, model.global.y_global, label),
                              nll_node(g, model.local.y_local, label)),
                        nll_node(g, model.y_fusion, label));
  if (beta > 0.0) total = g.add(total, g.scale(g.abs_sum(model.global.saliency), beta));
  return total;
}

GmicConfig default_drc_config() {
  GmicConfig cfg;
  cfg.num_windows = kDrcOutputs;
  cfg.global_channels = {8, 16, 32, 64, 64};
  return cfg;
}

GmicOutputs drc_forward(const GrayImage& image, const GmicConfig& cfg, const NamedTensors& params) {
  if (cfg.num_windows != kDrcOutputs) {
    throw ShapeError("survival model needs " + std::to_string(kDrcOutputs) + " output channels");
  }
  return gmic_forward(image, cfg, params);
}

}  // namespace prognosis
