#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prognosis/graph.hpp"
#include "prognosis/image.hpp"

namespace prognosis {

/// Architecture of the globally-aware multiple-instance classifier.
///
/// The global network is a stack of 3x3 conv + ReLU stages; the first
/// log2(input_side / saliency_side) stages are followed by 2x2 max pooling so
/// the feature maps come out saliency_side x saliency_side. The local network
/// maps each ROI patch to a feature vector through its own conv stages
/// (pooling after all but the last) and a spatial mean.
struct GmicConfig {
  std::size_t input_side = 64;
  std::size_t saliency_side = 8;
  std::size_t num_windows = 4;
  std::vector<std::size_t> global_channels{8, 16, 32, 64};
  std::vector<std::size_t> local_channels{8, 16, 32};
  std::size_t attention_dim = 16;
  std::size_t crop_side = 16;
  std::size_t patch_side = 14;
  std::size_t num_patches = 6;
  double pool_fraction = 0.5;
  double sparsity_weight = 0.0;

  void validate() const;

  std::size_t feature_channels() const { return global_channels.back(); }
  std::size_t local_features() const { return local_channels.back(); }
  /// Image pixels per saliency cell along one axis (H / h).
  std::size_t cell_pixels() const { return input_side / saliency_side; }
  /// ROI window side measured in saliency cells (h_c * h / H).
  std::size_t window_cells() const { return crop_side * saliency_side / input_side; }
  std::size_t pooling_stages() const;
};

/// Per-window saliency maps, shape [num_windows, h, w], entries in [0, 1].
using SaliencyMaps = Tensor;

struct RoiPosition {
  std::size_t row = 0;  ///< top-left corner in image pixels
  std::size_t col = 0;
  std::size_t cell_row = 0;  ///< top-left corner in saliency cells
  std::size_t cell_col = 0;
  friend bool operator==(const RoiPosition&, const RoiPosition&) = default;
};

struct RoiSet {
  std::vector<RoiPosition> positions;
  std::vector<GrayImage> patches;
  std::vector<double> attention;
};

struct GmicOutputs {
  std::vector<double> y_global;
  std::vector<double> y_local;
  std::vector<double> y_fusion;
  SaliencyMaps saliency;
  RoiSet rois;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation of every weight and bias.
NamedTensors init_gmic_parameters(const GmicConfig& cfg, std::uint64_t seed);

/// Checks that `params` holds exactly the tensors the architecture expects.
void check_gmic_parameters(const GmicConfig& cfg, const NamedTensors& params);

/// Adds every parameter to `graph`; returns name -> node.
std::map<std::string, NodeRef> add_parameters(Graph& graph, const NamedTensors& params);

struct GlobalNodes {
  NodeRef features;  ///< h_g, [n, h, w]
  NodeRef saliency;  ///< A, [T, h, w]
  NodeRef y_global;  ///< [T]
};

struct LocalNodes {
  NodeRef patch_features;  ///< [K, n_l]
  NodeRef attention;       ///< alpha, [K]
  NodeRef z;               ///< [n_l]
  NodeRef y_local;         ///< [T]
};

/// Global module on an image node of shape [1, H, W].
GlobalNodes global_forward(Graph& graph, NodeRef image, const GmicConfig& cfg,
                           const std::map<std::string, NodeRef>& params);

/// Local network + gated attention over patch nodes of shape [1, p, p].
LocalNodes local_attention(Graph& graph, const std::vector<NodeRef>& patches, const GmicConfig& cfg,
                           const std::map<std::string, NodeRef>& params);

/// Global max pool of h_g concatenated with z, then affine + sigmoid.
NodeRef fusion_forward(Graph& graph, NodeRef features, NodeRef z, const GmicConfig& cfg,
                       const std::map<std::string, NodeRef>& params);

/// Greedy ROI window selection on the summed, min-max normalised saliency maps.
/// Windows are window_cells() square; each pick maximises the window sum over
/// windows disjoint from earlier picks (ties: smallest row, then column). If
/// no disjoint window remains, overlapping windows become eligible again.
std::vector<RoiPosition> select_roi_windows(const SaliencyMaps& saliency, const GmicConfig& cfg);

/// Summed min-max normalised map A* of shape [h, w] (constant maps contribute 0).
std::vector<double> combined_saliency(const SaliencyMaps& saliency);

/// Window selection plus crop at crop_side and bilinear resize to patch_side.
RoiSet retrieve_rois(const SaliencyMaps& saliency, const GrayImage& image, const GmicConfig& cfg);

/// Complete forward pass recorded on one graph, ready for a loss and backward().
struct GmicGraph {
  Graph graph;
  std::map<std::string, NodeRef> params;
  NodeRef image;
  GlobalNodes global;
  LocalNodes local;
  NodeRef y_fusion;
  RoiSet rois;

  GmicOutputs outputs() const;
};

GmicGraph build_gmic(const GrayImage& image, const GmicConfig& cfg, const NamedTensors& params);

/// Convenience inference wrapper.
GmicOutputs gmic_forward(const GrayImage& image, const GmicConfig& cfg, const NamedTensors& params);

/// Binary cross-entropy summed over entries; probabilities clamped to [1e-12, 1 - 1e-12].
NodeRef bce_sum(Graph& graph, NodeRef probs, std::span<const double> labels);
double bce(double label, double prob);

/// Multi-label loss: mean over windows of the three BCE terms plus beta * |A^t|_1.
NodeRef gmic_loss(GmicGraph& model, std::span<const double> labels, double beta);
double gmic_loss(std::span<const double> labels, const GmicOutputs& outputs, double beta);

}  // namespace prognosis
