#include "prognosis/gmic.hpp"

#include <algorithm>
#include <cmath>

#include "prognosis/error.hpp"
#include "prognosis/random.hpp"
#include "prognosis/topr.hpp"

namespace prognosis {

namespace {

std::string conv_name(const char* module, std::size_t stage, const char* part) {
  return std::string(module) + ".conv" + std::to_string(stage) + "." + part;
}

const NodeRef& param(const std::map<std::string, NodeRef>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ShapeError("missing parameter '" + name + "'");
  return it->second;
}

// Expected parameter shapes, in a fixed order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const GmicConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t in = 1;
  for (std::size_t i = 0; i < cfg.global_channels.size(); ++i) {
    const std::size_t out = cfg.global_channels[i];
    layout.emplace_back(conv_name("global", i, "weight"), Shape{out, in, 3, 3});
    layout.emplace_back(conv_name("global", i, "bias"), Shape{out});
    in = out;
  }
  const std::size_t n = cfg.feature_channels();
  const std::size_t t = cfg.num_windows;
  layout.emplace_back("saliency.weight", Shape{t, n, 1, 1});
  layout.emplace_back("saliency.bias", Shape{t});
  in = 1;
  for (std::size_t i = 0; i < cfg.local_channels.size(); ++i) {
    const std::size_t out = cfg.local_channels[i];
    layout.emplace_back(conv_name("local", i, "weight"), Shape{out, in, 3, 3});
    layout.emplace_back(conv_name("local", i, "bias"), Shape{out});
    in = out;
  }
  const std::size_t nl = cfg.local_features();
  layout.emplace_back("attention.V", Shape{cfg.attention_dim, nl});
  layout.emplace_back("attention.U", Shape{cfg.attention_dim, nl});
  layout.emplace_back("attention.w", Shape{1, cfg.attention_dim});
  layout.emplace_back("local_head.weight", Shape{t, nl});
  layout.emplace_back("local_head.bias", Shape{t});
  layout.emplace_back("fusion.weight", Shape{t, n + nl});
  layout.emplace_back("fusion.bias", Shape{t});
  return layout;
}

std::size_t fan_in(const std::string& name, const Shape& shape,
                   const std::vector<std::pair<std::string, Shape>>& layout) {
  // Biases share the fan-in of their weight.
  if (name.ends_with(".bias")) {
    const std::string weight = name.substr(0, name.size() - 4) + "weight";
    for (const auto& [n, s] : layout)
      if (n == weight) return shape_numel(s) / s[0];
  }
  return shape_numel(shape) / shape[0];
}

}  // namespace

std::size_t GmicConfig::pooling_stages() const {
  std::size_t ratio = input_side / saliency_side;
  std::size_t stages = 0;
  while (ratio > 1) {
    ratio /= 2;
    ++stages;
  }
  return stages;
}

void GmicConfig::validate() const {
  if (input_side == 0 || saliency_side == 0) throw ShapeError("image and saliency sides must be positive");
  if (input_side % saliency_side != 0) throw ShapeError("input side must be divisible by saliency side");
  const std::size_t ratio = input_side / saliency_side;
  if ((ratio & (ratio - 1)) != 0) throw ShapeError("input/saliency ratio must be a power of two");
  if (global_channels.empty() || pooling_stages() > global_channels.size()) {
    throw ShapeError("not enough global stages to reach the saliency resolution");
  }
  if (local_channels.empty()) throw ShapeError("local network needs at least one stage");
  for (auto c : global_channels)
    if (c == 0) throw ShapeError("channel widths must be positive");
  for (auto c : local_channels)
    if (c == 0) throw ShapeError("channel widths must be positive");
  if (num_windows == 0) throw ShapeError("need at least one output window");
  if (num_patches == 0) throw ShapeError("need at least one ROI patch");
  if (attention_dim == 0) throw ShapeError("attention dimension must be positive");
  if (crop_side == 0 || crop_side > input_side || (crop_side * saliency_side) % input_side != 0) {
    throw ShapeError("crop side must map to a whole number of saliency cells");
  }
  std::size_t side = patch_side;
  for (std::size_t i = 0; i + 1 < local_channels.size(); ++i) {
    if (side < 2) throw ShapeError("patch side too small for the local network's pooling");
    side /= 2;
  }
  if (side == 0) throw ShapeError("patch side must be positive");
  if (!(pool_fraction > 0.0 && pool_fraction <= 1.0)) throw ShapeError("pool fraction must lie in (0, 1]");
  if (!(sparsity_weight >= 0.0)) throw ShapeError("sparsity weight must be non-negative");
}

NamedTensors init_gmic_parameters(const GmicConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto layout = parameter_layout(cfg);
  Rng rng(seed);
  NamedTensors params;
  for (const auto& [name, shape] : layout) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(name, shape, layout)));
    Tensor t(shape);
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    params.emplace(name, std::move(t));
  }
  return params;
}

void check_gmic_parameters(const GmicConfig& cfg, const NamedTensors& params) {
  const auto layout = parameter_layout(cfg);
  for (const auto& [name, shape] : layout) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + to_string(it->second.shape()) +
                       ", expected " + to_string(shape));
    }
  }
  if (params.size() != layout.size()) throw ShapeError("unexpected extra parameters for this architecture");
}

std::map<std::string, NodeRef> add_parameters(Graph& graph, const NamedTensors& params) {
  std::map<std::string, NodeRef> nodes;
  for (const auto& [name, value] : params) nodes.emplace(name, graph.parameter(name, value));
  return nodes;
}

GlobalNodes global_forward(Graph& graph, NodeRef image, const GmicConfig& cfg,
                           const std::map<std::string, NodeRef>& params) {
  const Tensor& x = graph.value(image);
  if (x.shape() != Shape{1, cfg.input_side, cfg.input_side}) {
    throw ShapeError("image shape " + to_string(x.shape()) + " does not match input side " +
                     std::to_string(cfg.input_side));
  }
  NodeRef h = image;
  const std::size_t pools = cfg.pooling_stages();
  for (std::size_t i = 0; i < cfg.global_channels.size(); ++i) {
    h = graph.conv2d(h, param(params, conv_name("global", i, "weight")),
                     param(params, conv_name("global", i, "bias")), 1, 1);
    h = graph.relu(h);
    if (i < pools) h = graph.max_pool2d(h, 2, 2);
  }
  GlobalNodes out;
  out.features = h;
  out.saliency = graph.sigmoid(
      graph.conv2d(h, param(params, "saliency.weight"), param(params, "saliency.bias"), 1, 0));
  std::vector<NodeRef> pooled;
  for (std::size_t t = 0; t < cfg.num_windows; ++t) {
    pooled.push_back(graph.topr_mean(graph.select(out.saliency, t), cfg.pool_fraction));
  }
  out.y_global = graph.concat(pooled, 0);
  return out;
}

LocalNodes local_attention(Graph& graph, const std::vector<NodeRef>& patches, const GmicConfig& cfg,
                           const std::map<std::string, NodeRef>& params) {
  if (patches.empty()) throw ShapeError("local module needs at least one patch");
  const std::size_t nl = cfg.local_features();
  std::vector<NodeRef> rows;
  for (auto patch : patches) {
    const Tensor& p = graph.value(patch);
    if (p.shape() != Shape{1, cfg.patch_side, cfg.patch_side}) {
      throw ShapeError("patch shape " + to_string(p.shape()) + " does not match patch side " +
                       std::to_string(cfg.patch_side));
    }
    NodeRef h = patch;
    for (std::size_t i = 0; i < cfg.local_channels.size(); ++i) {
      h = graph.conv2d(h, param(params, conv_name("local", i, "weight")),
                       param(params, conv_name("local", i, "bias")), 1, 1);
      h = graph.relu(h);
      if (i + 1 < cfg.local_channels.size()) h = graph.max_pool2d(h, 2, 2);
    }
    rows.push_back(graph.reshape(graph.mean(h, {1, 2}), {1, nl}));
  }
  LocalNodes out;
  const std::size_t k = patches.size();
  out.patch_features = graph.concat(rows, 0);
  // Gated attention: e_k = w^T (tanh(V h_k) * sigmoid(U h_k)).
  const NodeRef tanh_branch = graph.tanh(graph.affine(out.patch_features, param(params, "attention.V")));
  const NodeRef gate = graph.sigmoid(graph.affine(out.patch_features, param(params, "attention.U")));
  const NodeRef scores =
      graph.reshape(graph.affine(graph.mul(tanh_branch, gate), param(params, "attention.w")), {k});
  out.attention = graph.softmax(scores, 0);
  out.z = graph.reshape(graph.matmul(graph.reshape(out.attention, {1, k}), out.patch_features), {nl});
  out.y_local = graph.sigmoid(graph.affine(out.z, param(params, "local_head.weight"),
                                           param(params, "local_head.bias")));
  return out;
}

NodeRef fusion_forward(Graph& graph, NodeRef features, NodeRef z, const GmicConfig& cfg,
                       const std::map<std::string, NodeRef>& params) {
  const Tensor& hg = graph.value(features);
  if (hg.rank() != 3 || hg.dim(0) != cfg.feature_channels()) {
    throw ShapeError("fusion expects feature maps with " + std::to_string(cfg.feature_channels()) +
                     " channels, got " + to_string(hg.shape()));
  }
  if (graph.value(z).shape() != Shape{cfg.local_features()}) {
    throw ShapeError("fusion expects z of length " + std::to_string(cfg.local_features()));
  }
  const NodeRef joined = graph.concat({graph.global_max_pool(features), z}, 0);
  return graph.sigmoid(
      graph.affine(joined, param(params, "fusion.weight"), param(params, "fusion.bias")));
}

std::vector<double> combined_saliency(const SaliencyMaps& saliency) {
  if (saliency.rank() != 3) throw ShapeError("saliency maps must be [T, h, w]");
  const std::size_t plane = saliency.dim(1) * saliency.dim(2);
  std::vector<double> combined(plane, 0.0);
  for (std::size_t t = 0; t < saliency.dim(0); ++t) {
    const double* a = saliency.data() + t * plane;
    const auto [mn, mx] = std::minmax_element(a, a + plane);
    const double range = *mx - *mn;
    if (!(range > 0.0)) continue;
    for (std::size_t i = 0; i < plane; ++i) combined[i] += (a[i] - *mn) / range;
  }
  return combined;
}

std::vector<RoiPosition> select_roi_windows(const SaliencyMaps& saliency, const GmicConfig& cfg) {
  if (saliency.rank() != 3) throw ShapeError("saliency maps must be [T, h, w]");
  const std::size_t rows = saliency.dim(1), cols = saliency.dim(2);
  const std::size_t win = cfg.window_cells();
  if (win == 0 || win > rows || win > cols) throw ShapeError("ROI window larger than saliency map");
  if (cfg.num_patches == 0) throw ShapeError("need at least one ROI patch");

  std::vector<double> map = combined_saliency(saliency);
  std::vector<bool> taken(rows * cols, false);
  std::vector<RoiPosition> picks;
  for (std::size_t k = 0; k < cfg.num_patches; ++k) {
    bool found = false;
    for (int pass = 0; pass < 2 && !found; ++pass) {
      double best = 0.0;
      std::size_t best_r = 0, best_c = 0;
      for (std::size_t r = 0; r + win <= rows; ++r)
        for (std::size_t c = 0; c + win <= cols; ++c) {
          bool overlaps = false;
          double total = 0.0;
          for (std::size_t i = 0; i < win; ++i)
            for (std::size_t j = 0; j < win; ++j) {
              total += map[(r + i) * cols + c + j];
              overlaps = overlaps || taken[(r + i) * cols + c + j];
            }
          if (pass == 0 && overlaps) continue;
          if (!found || total > best) {
            best = total;
            best_r = r;
            best_c = c;
            found = true;
          }
        }
      if (found) {
        for (std::size_t i = 0; i < win; ++i)
          for (std::size_t j = 0; j < win; ++j) {
            map[(best_r + i) * cols + best_c + j] = 0.0;
            taken[(best_r + i) * cols + best_c + j] = true;
          }
        RoiPosition pos;
        pos.cell_row = best_r;
        pos.cell_col = best_c;
        pos.row = best_r * cfg.cell_pixels();
        pos.col = best_c * cfg.cell_pixels();
        picks.push_back(pos);
      }
    }
  }
  return picks;
}

RoiSet retrieve_rois(const SaliencyMaps& saliency, const GrayImage& image, const GmicConfig& cfg) {
  if (image.rows() != cfg.input_side || image.cols() != cfg.input_side) {
    throw ShapeError("image does not match configured input side");
  }
  RoiSet rois;
  rois.positions = select_roi_windows(saliency, cfg);
  for (const auto& pos : rois.positions) {
    rois.patches.push_back(resize_bilinear(crop(image, pos.row, pos.col, cfg.crop_side, cfg.crop_side),
                                           cfg.patch_side, cfg.patch_side));
  }
  return rois;
}

GmicOutputs GmicGraph::outputs() const {
  GmicOutputs out;
  auto vec = [&](NodeRef n) {
    const auto v = graph.value(n).values();
    return std::vector<double>(v.begin(), v.end());
  };
  out.y_global = vec(global.y_global);
  out.y_local = vec(local.y_local);
  out.y_fusion = vec(y_fusion);
  out.saliency = graph.value(global.saliency);
  out.rois = rois;
  out.rois.attention = vec(local.attention);
  return out;
}

GmicGraph build_gmic(const GrayImage& image, const GmicConfig& cfg, const NamedTensors& params) {
  cfg.validate();
  if (image.rows() != cfg.input_side || image.cols() != cfg.input_side) {
    throw ShapeError("image is " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                     ", model expects " + std::to_string(cfg.input_side) + "x" +
                     std::to_string(cfg.input_side));
  }
  GmicGraph m;
  m.params = add_parameters(m.graph, params);
  const auto px = image.pixels();
  m.image = m.graph.input("image", Tensor({1, cfg.input_side, cfg.input_side},
                                          std::vector<double>(px.begin(), px.end())));
  m.global = global_forward(m.graph, m.image, cfg, m.params);
  m.rois = retrieve_rois(m.graph.value(m.global.saliency), image, cfg);
  std::vector<NodeRef> patch_nodes;
  for (std::size_t k = 0; k < m.rois.patches.size(); ++k) {
    const auto pp = m.rois.patches[k].pixels();
    patch_nodes.push_back(m.graph.input("patch" + std::to_string(k),
                                        Tensor({1, cfg.patch_side, cfg.patch_side},
                                               std::vector<double>(pp.begin(), pp.end()))));
  }
  m.local = local_attention(m.graph, patch_nodes, cfg, m.params);
  m.y_fusion = fusion_forward(m.graph, m.global.features, m.local.z, cfg, m.params);
  m.rois.attention.assign(m.graph.value(m.local.attention).values().begin(),
                          m.graph.value(m.local.attention).values().end());
  return m;
}

GmicOutputs gmic_forward(const GrayImage& image, const GmicConfig& cfg, const NamedTensors& params) {
  return build_gmic(image, cfg, params).outputs();
}

double bce(double label, double prob) {
  const double p = std::clamp(prob, 1e-12, 1.0 - 1e-12);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

NodeRef bce_sum(Graph& graph, NodeRef probs, std::span<const double> labels) {
  const Tensor& p = graph.value(probs);
  if (p.numel() != labels.size()) throw ShapeError("label count does not match prediction count");
  Tensor pos(p.shape()), neg(p.shape());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    pos[i] = labels[i];
    neg[i] = 1.0 - labels[i];
  }
  const NodeRef log_p = graph.log(probs);
  const NodeRef log_q = graph.log(graph.add_scalar(graph.scale(probs, -1.0), 1.0));
  const NodeRef ll = graph.add(graph.mul(log_p, graph.constant(std::move(pos))),
                               graph.mul(log_q, graph.constant(std::move(neg))));
  return graph.scale(graph.sum(ll), -1.0);
}

namespace {
void check_labels(std::span<const double> labels, std::size_t windows) {
  if (labels.size() != windows) throw ShapeError("expected one label per window");
  for (double y : labels)
    if (y != 0.0 && y != 1.0) throw Error("labels must be binary (0 or 1)");
}
}  // namespace

NodeRef gmic_loss(GmicGraph& model, std::span<const double> labels, double beta) {
  Graph& g = model.graph;
  const std::size_t windows = g.value(model.y_fusion).numel();
  check_labels(labels, windows);
  if (!(beta >= 0.0)) throw Error("sparsity weight must be non-negative");
  NodeRef total = g.add(g.add(bce_sum(g, model.global.y_global, labels),
                              bce_sum(g, model.local.y_local, labels)),
                        bce_sum(g, model.y_fusion, labels));
  if (beta > 0.0) total = g.add(total, g.scale(g.abs_sum(model.global.saliency), beta));
  return g.scale(total, 1.0 / static_cast<double>(windows));
}

double gmic_loss(std::span<const double> labels, const GmicOutputs& outputs, double beta) {
  const std::size_t windows = outputs.y_fusion.size();
  check_labels(labels, windows);
  if (outputs.y_global.size() != windows || outputs.y_local.size() != windows) {
    throw ShapeError("head output sizes differ");
  }
  if (!(beta >= 0.0)) throw Error("sparsity weight must be non-negative");
  double total = 0.0;
  for (std::size_t t = 0; t < windows; ++t) {
    total += bce(labels[t], outputs.y_global[t]) + bce(labels[t], outputs.y_local[t]) +
             bce(labels[t], outputs.y_fusion[t]);
  }
  double l1 = 0.0;
  for (double a : outputs.saliency.values()) l1 += std::abs(a);
  return (total + beta * l1) / static_cast<double>(windows);
}

}  // namespace prognosis
