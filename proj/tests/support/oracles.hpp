#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "prognosis/gbm.hpp"
#include "prognosis/gmic.hpp"

namespace prognosis::testing {

/// Mean of the ceil(r * n) largest values (at least one) via a full sort.
inline double topr_oracle(std::vector<double> v, double r) {
  std::sort(v.begin(), v.end(), std::greater<>());
  std::size_t k = static_cast<std::size_t>(std::ceil(r * static_cast<double>(v.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += v[i];
  return s / static_cast<double>(k);
}

/// Exhaustive ROI scan: score every window on the normalised summed map,
/// rank disjoint windows first, then by score, row and column.
inline std::vector<RoiPosition> roi_oracle(const Tensor& maps, std::size_t win, std::size_t count,
                                           std::size_t cell_pixels) {
  const std::size_t t_n = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  std::vector<double> star(h * w, 0.0);
  for (std::size_t t = 0; t < t_n; ++t) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < h * w; ++i) {
      lo = std::min(lo, maps[t * h * w + i]);
      hi = std::max(hi, maps[t * h * w + i]);
    }
    if (hi <= lo) continue;
    for (std::size_t i = 0; i < h * w; ++i) star[i] += (maps[t * h * w + i] - lo) / (hi - lo);
  }
  std::vector<bool> taken(h * w, false);
  std::vector<RoiPosition> out;
  struct Candidate {
    bool overlaps;
    double score;
    std::size_t r, c;
  };
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<Candidate> all;
    for (std::size_t r = 0; r + win <= h; ++r)
      for (std::size_t c = 0; c + win <= w; ++c) {
        Candidate cand{false, 0.0, r, c};
        for (std::size_t i = 0; i < win; ++i)
          for (std::size_t j = 0; j < win; ++j) {
            cand.score += star[(r + i) * w + c + j];
            if (taken[(r + i) * w + c + j]) cand.overlaps = true;
          }
        all.push_back(cand);
      }
    std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
      if (a.overlaps != b.overlaps) return !a.overlaps;
      if (a.score != b.score) return a.score > b.score;
      if (a.r != b.r) return a.r < b.r;
      return a.c < b.c;
    });
    const Candidate& best = all.front();
    for (std::size_t i = 0; i < win; ++i)
      for (std::size_t j = 0; j < win; ++j) {
        star[(best.r + i) * w + best.c + j] = 0.0;
        taken[(best.r + i) * w + best.c + j] = true;
      }
    out.push_back({best.r * cell_pixels, best.c * cell_pixels, best.r, best.c});
  }
  return out;
}

/// Raw score by walking every tree by hand from the root, sending NaN along
/// the default direction: base + learning_rate * sum of reached leaf values.
inline double tree_walk_oracle(const GbmModel& model, std::span<const double> x) {
  double sum = 0.0;
  for (const Tree& tree : model.trees) {
    std::size_t node = 0;
    while (tree.nodes[node].feature >= 0) {
      const TreeNode& n = tree.nodes[node];
      const double v = x[static_cast<std::size_t>(n.feature)];
      const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
      node = static_cast<std::size_t>(left ? n.left : n.right);
    }
    sum += tree.nodes[node].leaf_value;
  }
  return model.base_score + model.learning_rate * sum;
}

/// AUC by enumerating every positive/negative pair (ties count one half).
inline double auc_pairs_oracle(std::span<const double> s, std::span<const int> y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

}  // namespace prognosis::testing
