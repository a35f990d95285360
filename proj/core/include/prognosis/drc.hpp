#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "prognosis/gmic.hpp"

namespace prognosis {

/// Boundaries t_1..t_8 in hours; t_0 = 0 is implicit.
inline constexpr std::array<double, 8> kTimeGrid{3, 12, 24, 48, 72, 96, 144, 192};
inline constexpr std::size_t kGridSize = kTimeGrid.size();
/// Model outputs: one conditional probability per interval plus the beyond-grid channel.
inline constexpr std::size_t kDrcOutputs = kGridSize + 1;

struct SurvivalLabel {
  bool event_observed = false;
  int interval_index = 0;  ///< 1..8 when an event was observed
  int censor_index = 0;    ///< 0..8 when censored
  friend bool operator==(const SurvivalLabel&, const SurvivalLabel&) = default;
};

/// Event at T -> smallest i with T <= t_i; events after t_8 count as censored
/// at index 8; no event -> largest i with t_i <= censor time.
SurvivalLabel to_label(std::optional<double> event_time_hours, double censor_time_hours);

/// DRC(t_i) = 1 - prod_{j<=i} (1 - p_j) over the first 8 entries.
std::array<double, kGridSize> drc_from_conditionals(std::span<const double> p);

/// Coefficients (a, b) with nll = -sum_j a_j ln p_j + b_j ln(1 - p_j), length 9.
std::pair<std::vector<double>, std::vector<double>> nll_weights(const SurvivalLabel& label);

double nll(const SurvivalLabel& label, std::span<const double> p);

/// -sum_j (a_j ln p_j + b_j ln(1 - p_j)); probabilities clamped to [1e-12, 1 - 1e-12].
NodeRef weighted_log_loss(Graph& graph, NodeRef probs, std::span<const double> a,
                          std::span<const double> b);
NodeRef nll_node(Graph& graph, NodeRef probs, const SurvivalLabel& label);

/// Mean nll over a cohort sharing one probability vector (constant-input head).
NodeRef mean_nll_node(Graph& graph, NodeRef probs, std::span<const SurvivalLabel> labels);

/// Closed-form maximiser of the mean nll: events / at-risk per interval (NaN when nobody is at risk).
std::array<double, kGridSize> empirical_conditionals(std::span<const SurvivalLabel> labels);

/// Three nll terms plus beta * sum of |A^m|_1 over all saliency maps.
double drc_loss(const SurvivalLabel& label, std::span<const double> p_global,
                std::span<const double> p_local, std::span<const double> p_fusion,
                const SaliencyMaps& saliency, double beta);
NodeRef drc_loss(GmicGraph& model, const SurvivalLabel& label, double beta);

/// Default survival architecture: 9 output channels and one extra global stage.
GmicConfig default_drc_config();

/// Forward pass of the survival variant; y_global/y_local/y_fusion hold the
/// 9 conditional probabilities of each head.
GmicOutputs drc_forward(const GrayImage& image, const GmicConfig& cfg, const NamedTensors& params);

}  // namespace prognosis
