#include "prognosis/gbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>

#include "prognosis/csv.hpp"
#include "prognosis/error.hpp"
#include "prognosis/random.hpp"

namespace prognosis {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_loss(int y, double raw) {
  // -[y ln s(z) + (1 - y) ln(1 - s(z))] written stably in terms of z.
  const double softplus = raw > 0 ? raw + std::log1p(std::exp(-raw)) : std::log1p(std::exp(raw));
  return softplus - (y ? raw : 0.0);
}

struct Counts {
  std::size_t pos = 0, neg = 0;
};

Counts check_training_set(const FeatureMatrix& x, std::span<const int> y) {
  if (x.size() != y.size()) throw ShapeError("feature rows and labels differ in count");
  if (x.size() < 2) throw Error("need at least two training examples");
  const std::size_t f = x.front().size();
  Counts c;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != f) throw ShapeError("ragged feature matrix at row " + std::to_string(i));
    if (y[i] == 1) {
      ++c.pos;
    } else if (y[i] == 0) {
      ++c.neg;
    } else {
      throw Error("labels must be 0 or 1");
    }
  }
  return c;
}

double prior_log_odds(const Counts& c) {
  const double rate = std::clamp(static_cast<double>(c.pos) / static_cast<double>(c.pos + c.neg),
                                 1e-6, 1.0 - 1e-6);
  return std::log(rate / (1.0 - rate));
}

struct Split {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
};

struct Leaf {
  int node = 0;
  std::vector<std::uint32_t> rows;
  std::vector<std::vector<std::uint32_t>> sorted;  // per feature, non-missing rows by value
  double g = 0.0, h = 0.0;
  Split best;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& columns,
              const std::vector<std::vector<std::uint32_t>>& presorted, const GbmParams& params)
      : cols_(columns), presorted_(presorted), params_(params), goes_left_(columns.empty() ? 0 : columns[0].size()) {}

  Tree build(const std::vector<double>& g, const std::vector<double>& h,
             const std::vector<std::uint8_t>& in_bag) {
    g_ = &g;
    h_ = &h;
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<Leaf> leaves(1);
    Leaf& root = leaves[0];
    for (std::uint32_t i = 0; i < in_bag.size(); ++i)
      if (in_bag[i]) root.rows.push_back(i);
    root.sorted.resize(cols_.size());
    for (std::size_t f = 0; f < cols_.size(); ++f) {
      root.sorted[f].reserve(presorted_[f].size());
      for (auto i : presorted_[f])
        if (in_bag[i]) root.sorted[f].push_back(i);
    }
    finish_leaf(root);

    while (leaves.size() < params_.max_leaves) {
      std::size_t pick = leaves.size();
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (leaves[k].best.feature < 0) continue;
        if (pick == leaves.size() || leaves[k].best.gain > leaves[pick].best.gain) pick = k;
      }
      if (pick == leaves.size()) break;
      Leaf left, right;
      split(tree, leaves[pick], left, right);
      leaves[pick] = std::move(left);
      leaves.push_back(std::move(right));
    }
    for (const auto& leaf : leaves) {
      tree.nodes[leaf.node].leaf_value = -leaf.g / (leaf.h + params_.l2);
    }
    return tree;
  }

 private:
  double score(double g, double h) const { return g * g / (h + params_.l2); }

  void finish_leaf(Leaf& leaf) {
    leaf.g = leaf.h = 0.0;
    for (auto i : leaf.rows) {
      leaf.g += (*g_)[i];
      leaf.h += (*h_)[i];
    }
    leaf.best = find_split(leaf);
  }

  Split find_split(const Leaf& leaf) const {
    Split best;
    const std::size_t n = leaf.rows.size();
    const std::size_t min_leaf = std::max<std::size_t>(1, params_.min_samples_leaf);
    if (n < 2 * min_leaf) return best;
    const double parent = score(leaf.g, leaf.h);
    for (std::size_t f = 0; f < cols_.size(); ++f) {
      const auto& order = leaf.sorted[f];
      const auto& col = cols_[f];
      double gp = 0.0, hp = 0.0;
      for (auto i : order) {
        gp += (*g_)[i];
        hp += (*h_)[i];
      }
      const double gm = leaf.g - gp, hm = leaf.h - hp;
      const std::size_t nm = n - order.size();
      double gl = 0.0, hl = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        gl += (*g_)[order[k]];
        hl += (*h_)[order[k]];
        const double v = col[order[k]], next = col[order[k + 1]];
        if (!(v < next)) continue;
        const std::size_t nl = k + 1, nr = order.size() - nl;
        double threshold = v + (next - v) / 2.0;
        if (!(threshold < next)) threshold = v;
        const double gr = gp - gl, hr = hp - hl;
        // Missing rows to the left, then to the right.
        for (int side = 0; side < 2; ++side) {
          const bool miss_left = side == 0;
          if (nm == 0 && !miss_left) break;
          const std::size_t cl = nl + (miss_left ? nm : 0), cr = nr + (miss_left ? 0 : nm);
          if (cl < min_leaf || cr < min_leaf) continue;
          const double gain = miss_left ? score(gl + gm, hl + hm) + score(gr, hr) - parent
                                        : score(gl, hl) + score(gr + gm, hr + hm) - parent;
          if (gain > best.gain + 1e-12) {
            best.gain = gain;
            best.feature = static_cast<int>(f);
            best.threshold = threshold;
            // Without missing rows in training, unseen missing values follow the larger child.
            best.default_left = nm == 0 ? nl >= nr : miss_left;
          }
        }
      }
    }
    return best;
  }

  void split(Tree& tree, Leaf& parent, Leaf& left, Leaf& right) {
    const Split s = parent.best;
    const auto& col = cols_[s.feature];
    for (auto i : parent.rows) {
      const double v = col[i];
      goes_left_[i] = std::isnan(v) ? s.default_left : v <= s.threshold;
    }
    for (auto i : parent.rows) (goes_left_[i] ? left.rows : right.rows).push_back(i);
    left.sorted.resize(cols_.size());
    right.sorted.resize(cols_.size());
    for (std::size_t f = 0; f < cols_.size(); ++f) {
      for (auto i : parent.sorted[f]) (goes_left_[i] ? left.sorted[f] : right.sorted[f]).push_back(i);
      std::vector<std::uint32_t>().swap(parent.sorted[f]);
    }
    const int id = parent.node;
    const int l = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[id];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.default_left = s.default_left;
    node.left = l;
    node.right = l + 1;
    left.node = l;
    right.node = l + 1;
    finish_leaf(left);
    finish_leaf(right);
  }

  const std::vector<std::vector<double>>& cols_;
  const std::vector<std::vector<std::uint32_t>>& presorted_;
  const GbmParams& params_;
  const std::vector<double>* g_ = nullptr;
  const std::vector<double>* h_ = nullptr;
  std::vector<std::uint8_t> goes_left_;
};

}  // namespace

void GbmParams::validate() const {
  if (!(learning_rate > 0.0)) throw Error("GBM learning rate must be positive");
  if (max_leaves < 2) throw Error("GBM trees need at least 2 leaves");
  if (!(l2 >= 0.0)) throw Error("GBM l2 must be non-negative");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw Error("GBM subsample must lie in (0, 1]");
}

double Tree::predict(std::span<const double> x) const {
  std::size_t id = 0;
  while (!nodes[id].is_leaf()) {
    const TreeNode& n = nodes[id];
    const double v = x[static_cast<std::size_t>(n.feature)];
    const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
    id = static_cast<std::size_t>(left ? n.left : n.right);
  }
  return nodes[id].leaf_value;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double GbmModel::raw_score(std::span<const double> x) const {
  if (x.size() != num_features) {
    throw ShapeError("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                     std::to_string(num_features));
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return base_score + learning_rate * sum;
}

double GbmModel::predict(std::span<const double> x) const { return sigmoid(raw_score(x)); }

GbmModel fit_gbm(const FeatureMatrix& x, std::span<const int> y, const GbmParams& params,
                 std::vector<double>* loss_trace) {
  params.validate();
  const Counts counts = check_training_set(x, y);
  const std::size_t n = x.size(), nf = x.front().size();
  GbmModel model;
  model.num_features = nf;
  model.learning_rate = params.learning_rate;
  model.base_score = prior_log_odds(counts);
  if (counts.pos == 0 || counts.neg == 0) {
    model.warning = "single-class training set; model predicts the prior only";
    return model;
  }

  std::vector<std::vector<double>> cols(nf, std::vector<double>(n));
  std::vector<std::vector<std::uint32_t>> presorted(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      cols[f][i] = x[i][f];
      if (std::isinf(x[i][f])) throw Error("infinite feature value at row " + std::to_string(i));
      if (!std::isnan(x[i][f])) presorted[f].push_back(static_cast<std::uint32_t>(i));
    }
    std::stable_sort(presorted[f].begin(), presorted[f].end(),
                     [&](std::uint32_t a, std::uint32_t b) { return cols[f][a] < cols[f][b]; });
  }

  std::vector<double> raw(n, model.base_score), g(n), h(n);
  std::vector<std::uint8_t> in_bag(n, 1);
  TreeBuilder builder(cols, presorted, params);
  std::vector<std::size_t> perm(n);
  for (std::size_t round = 0; round < params.num_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(raw[i]);
      g[i] = p - y[i];
      h[i] = p * (1.0 - p);
    }
    if (params.subsample < 1.0) {
      Rng rng(derive_seed(params.seed, round));
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm.begin(), perm.end());
      const auto keep = std::max<std::size_t>(
          2, static_cast<std::size_t>(std::llround(params.subsample * static_cast<double>(n))));
      std::fill(in_bag.begin(), in_bag.end(), 0);
      for (std::size_t k = 0; k < std::min(keep, n); ++k) in_bag[perm[k]] = 1;
    }
    Tree tree = builder.build(g, h, in_bag);
    for (std::size_t i = 0; i < n; ++i) raw[i] += params.learning_rate * tree.predict(x[i]);
    model.trees.push_back(std::move(tree));
    if (loss_trace) {
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) loss += log_loss(y[i], raw[i]);
      loss_trace->push_back(loss / static_cast<double>(n));
    }
  }
  return model;
}

std::vector<std::size_t> feature_importance(const GbmModel& model) {
  std::vector<std::size_t> counts(model.num_features, 0);
  for (const auto& tree : model.trees)
    for (const auto& node : tree.nodes)
      if (!node.is_leaf()) ++counts.at(static_cast<std::size_t>(node.feature));
  return counts;
}

std::vector<std::pair<std::size_t, std::size_t>> ranked_importance(const GbmModel& model) {
  const auto counts = feature_importance(model);
  std::vector<std::pair<std::size_t, std::size_t>> ranked;
  for (std::size_t f = 0; f < counts.size(); ++f) ranked.emplace_back(f, counts[f]);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

void write_gbm(std::ostream& out, const GbmModel& model) {
  out << "gbm 1\n";
  out << "num_features " << model.num_features << '\n';
  out << "learning_rate " << format_double(model.learning_rate) << '\n';
  out << "base_score " << format_double(model.base_score) << '\n';
  out << "num_trees " << model.trees.size() << '\n';
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const auto& nodes = model.trees[t].nodes;
    out << "tree " << t << ' ' << nodes.size() << '\n';
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      out << i << ' ' << n.feature << ' ' << format_double(n.threshold) << ' '
          << (n.default_left ? 'L' : 'R') << ' ' << n.left << ' ' << n.right << ' '
          << format_double(n.leaf_value) << '\n';
    }
  }
}

namespace {

std::string read_keyed(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("model file truncated before '" + key + "'");
  std::istringstream ls(line);
  std::string k, v;
  ls >> k >> v;
  if (k != key || v.empty()) throw FormatError("expected '" + key + "' line, got '" + line + "'");
  return v;
}

}  // namespace

GbmModel read_gbm(std::istream& in) {
  if (read_keyed(in, "gbm") != "1") throw FormatError("unsupported GBM dump version");
  GbmModel model;
  model.num_features = static_cast<std::size_t>(parse_int(read_keyed(in, "num_features"), "num_features"));
  model.learning_rate = parse_double(read_keyed(in, "learning_rate"), "learning_rate");
  model.base_score = parse_double(read_keyed(in, "base_score"), "base_score");
  const auto trees = parse_int(read_keyed(in, "num_trees"), "num_trees");
  if (trees < 0) throw FormatError("negative tree count");
  for (long long t = 0; t < trees; ++t) {
    std::string line, word;
    if (!std::getline(in, line)) throw FormatError("GBM dump truncated");
    std::istringstream hs(line);
    long long index = -1, count = -1;
    hs >> word >> index >> count;
    if (word != "tree" || index != t || count <= 0) throw FormatError("bad tree header '" + line + "'");
    Tree tree;
    tree.nodes.resize(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
      if (!std::getline(in, line)) throw FormatError("GBM dump truncated");
      std::istringstream ns(line);
      std::string id, feature, threshold, dir, left, right, value;
      if (!(ns >> id >> feature >> threshold >> dir >> left >> right >> value) ||
          parse_int(id, "node_id") != i || (dir != "L" && dir != "R")) {
        throw FormatError("bad node line '" + line + "'");
      }
      TreeNode& n = tree.nodes[static_cast<std::size_t>(i)];
      n.feature = static_cast<int>(parse_int(feature, "feature"));
      n.threshold = parse_double(threshold, "threshold");
      n.default_left = dir == "L";
      n.left = static_cast<int>(parse_int(left, "left"));
      n.right = static_cast<int>(parse_int(right, "right"));
      n.leaf_value = parse_double(value, "leaf_value");
      if (!n.is_leaf()) {
        if (static_cast<std::size_t>(n.feature) >= model.num_features || n.left <= i || n.right <= i ||
            n.left >= count || n.right >= count) {
          throw FormatError("node " + id + " has out-of-range references");
        }
      }
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

LogRegModel fit_logreg(const FeatureMatrix& x, std::span<const int> y, const LogRegParams& params) {
  const Counts counts = check_training_set(x, y);
  if (!(params.l2 >= 0.0) || !(params.learning_rate > 0.0)) throw Error("invalid logistic regression settings");
  const std::size_t n = x.size(), nf = x.front().size();
  LogRegModel m;
  m.means.assign(nf, 0.0);
  m.scales.assign(nf, 1.0);
  m.weights.assign(nf, 0.0);
  m.bias = prior_log_odds(counts);
  for (std::size_t f = 0; f < nf; ++f) {
    double sum = 0.0, sq = 0.0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isnan(x[i][f])) {
        sum += x[i][f];
        ++seen;
      }
    m.means[f] = seen ? sum / static_cast<double>(seen) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = std::isnan(x[i][f]) ? m.means[f] : x[i][f];
      sq += (v - m.means[f]) * (v - m.means[f]);
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    m.scales[f] = sd > 1e-12 ? sd : 1.0;
  }
  if (counts.pos == 0 || counts.neg == 0) {
    m.warning = "single-class training set; model predicts the prior only";
    return m;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(nf));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < nf; ++f) {
      const double v = std::isnan(x[i][f]) ? m.means[f] : x[i][f];
      z[i][f] = (v - m.means[f]) / m.scales[f];
    }
  std::vector<double> grad(nf);
  for (std::size_t it = 0; it < params.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = m.bias;
      for (std::size_t f = 0; f < nf; ++f) s += m.weights[f] * z[i][f];
      const double r = sigmoid(s) - y[i];
      gb += r;
      for (std::size_t f = 0; f < nf; ++f) grad[f] += r * z[i][f];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t f = 0; f < nf; ++f) {
      m.weights[f] -= params.learning_rate * (grad[f] * inv + params.l2 * m.weights[f]);
    }
    m.bias -= params.learning_rate * gb * inv;
  }
  return m;
}

double LogRegModel::predict(std::span<const double> x) const {
  if (x.size() != weights.size()) throw ShapeError("feature vector length does not match the model");
  double s = bias;
  for (std::size_t f = 0; f < weights.size(); ++f) {
    const double v = std::isnan(x[f]) ? means[f] : x[f];
    s += weights[f] * (v - means[f]) / scales[f];
  }
  return sigmoid(s);
}

void write_logreg(std::ostream& out, const LogRegModel& model) {
  out << "logreg 1\n";
  out << "num_features " << model.weights.size() << '\n';
  out << "bias " << format_double(model.bias) << '\n';
  for (std::size_t f = 0; f < model.weights.size(); ++f) {
    out << f << ' ' << format_double(model.means[f]) << ' ' << format_double(model.scales[f]) << ' '
        << format_double(model.weights[f]) << '\n';
  }
}

LogRegModel read_logreg(std::istream& in) {
  if (read_keyed(in, "logreg") != "1") throw FormatError("unsupported logistic model version");
  LogRegModel m;
  const auto nf = parse_int(read_keyed(in, "num_features"), "num_features");
  if (nf < 0) throw FormatError("negative feature count");
  m.bias = parse_double(read_keyed(in, "bias"), "bias");
  for (long long f = 0; f < nf; ++f) {
    std::string line, id, mean, scale, weight;
    if (!std::getline(in, line)) throw FormatError("logistic model truncated");
    std::istringstream ls(line);
    if (!(ls >> id >> mean >> scale >> weight) || parse_int(id, "index") != f) {
      throw FormatError("bad coefficient line '" + line + "'");
    }
    m.means.push_back(parse_double(mean, "mean"));
    m.scales.push_back(parse_double(scale, "scale"));
    m.weights.push_back(parse_double(weight, "weight"));
  }
  return m;
}

}  // namespace prognosis
