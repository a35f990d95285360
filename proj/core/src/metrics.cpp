#include "prognosis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "prognosis/error.hpp"
#include "prognosis/random.hpp"

namespace prognosis {

namespace {

struct ClassCounts {
  std::size_t pos = 0, neg = 0;
};

ClassCounts check_cohort(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  ClassCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error("non-finite score at index " + std::to_string(i));
    if (labels[i] == 1) {
      ++c.pos;
    } else if (labels[i] == 0) {
      ++c.neg;
    } else {
      throw Error("labels must be 0 or 1");
    }
  }
  return c;
}

// Indices sorted by descending score, ties by index.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto c = check_cohort(scores, labels);
  if (c.pos == 0 || c.neg == 0) throw Error("AUC needs both classes");
  const auto order = descending(scores);
  // Twice the Mann-Whitney U, kept integral so it matches pair enumeration exactly.
  std::uint64_t twice_u = 0;
  std::uint64_t pos_above = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    twice_u += 2 * pos_above * neg + pos * neg;
    pos_above += pos;
    i = j;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto c = check_cohort(scores, labels);
  if (c.pos == 0 || c.neg == 0) throw Error("ROC curve needs both classes");
  const auto order = descending(scores);
  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / c.neg, static_cast<double>(tp) / c.pos, s});
  }
  return curve;
}

std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto c = check_cohort(scores, labels);
  if (c.pos == 0) throw Error("precision-recall needs at least one positive");
  const auto order = descending(scores);
  std::vector<PrPoint> curve;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      tp += labels[order[i]] == 1 ? 1 : 0;
      ++seen;
      ++i;
    }
    curve.push_back({static_cast<double>(tp) / c.pos, static_cast<double>(tp) / seen, s});
  }
  return curve;
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto curve = pr_curve(scores, labels);
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& p : curve) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed, std::size_t iteration,
                                           std::size_t attempt, std::span<const std::string> groups) {
  Rng rng(derive_seed(seed + iteration, attempt));
  std::vector<std::size_t> idx;
  if (groups.empty()) {
    idx.reserve(n);
    for (std::size_t i = 0; i < n; ++i) idx.push_back(rng.below(n));
    return idx;
  }
  if (groups.size() != n) throw ShapeError("group labels differ in length from the cohort");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[groups[i]].push_back(i);
  std::vector<const std::vector<std::size_t>*> list;
  for (const auto& [name, m] : members) list.push_back(&m);
  for (std::size_t g = 0; g < list.size(); ++g) {
    const auto* pick = list[rng.below(list.size())];
    idx.insert(idx.end(), pick->begin(), pick->end());
  }
  return idx;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ConfidenceInterval bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                const Metric& metric, std::size_t iterations, std::uint64_t seed,
                                std::span<const std::string> groups) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  if (iterations == 0) throw Error("bootstrap needs at least one iteration");
  ConfidenceInterval ci;
  ci.point = metric(scores, labels);
  std::vector<double> values;
  std::vector<double> s;
  std::vector<int> l;
  constexpr std::size_t kMaxRedraws = 10;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t attempt = 0; attempt <= kMaxRedraws; ++attempt) {
      const auto idx = bootstrap_indices(scores.size(), seed, it, attempt, groups);
      s.clear();
      l.clear();
      for (auto i : idx) {
        s.push_back(scores[i]);
        l.push_back(labels[i]);
      }
      try {
        values.push_back(metric(s, l));
        break;
      } catch (const Error&) {
        // degenerate resample; draw again
      }
    }
  }
  if (values.empty()) throw Error("metric could not be computed on any bootstrap resample");
  ci.replicates = values.size();
  ci.lo = quantile(values, 0.025);
  ci.hi = quantile(values, 0.975);
  return ci;
}

double concordance_at(std::span<const double> risk, std::span<const double> event_times,
                      std::span<const int> event_observed) {
  if (risk.size() != event_times.size() || risk.size() != event_observed.size()) {
    throw ShapeError("concordance inputs differ in length");
  }
  std::vector<std::size_t> events;
  for (std::size_t i = 0; i < risk.size(); ++i) {
    if (event_observed[i]) {
      if (!std::isfinite(risk[i]) || !std::isfinite(event_times[i])) {
        throw Error("non-finite risk or event time at index " + std::to_string(i));
      }
      events.push_back(i);
    }
  }
  double score = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < events.size(); ++a)
    for (std::size_t b = a + 1; b < events.size(); ++b) {
      std::size_t i = events[a], j = events[b];
      if (event_times[i] == event_times[j]) continue;
      if (event_times[j] < event_times[i]) std::swap(i, j);  // i has the earlier event
      ++pairs;
      if (risk[i] > risk[j]) {
        score += 1.0;
      } else if (risk[i] == risk[j]) {
        score += 0.5;
      }
    }
  if (pairs == 0) throw Error("concordance needs at least one pair of events at distinct times");
  return score / static_cast<double>(pairs);
}

std::vector<ReliabilityRow> reliability(std::span<const double> predicted,
                                        std::span<const int> event_by_t, double t_hours) {
  const std::size_t n = predicted.size();
  if (event_by_t.size() != n) throw ShapeError("predictions and outcomes differ in length");
  constexpr std::size_t kBins = 10;
  if (n < kBins) throw Error("reliability needs at least 10 patients");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] < predicted[b]; });
  // Equal-count targets: decile d holds n / 10 items, plus one for d < n % 10.
  std::vector<std::size_t> target(n);
  for (std::size_t d = 0, pos = 0; d < kBins; ++d) {
    const std::size_t size = n / kBins + (d < n % kBins ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) target[pos++] = d;
  }
  std::vector<ReliabilityRow> rows(kBins);
  for (std::size_t d = 0; d < kBins; ++d) {
    rows[d].t_hours = t_hours;
    rows[d].decile = d + 1;
  }
  std::size_t group_bin = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 0 || predicted[order[k]] != predicted[order[k - 1]]) group_bin = target[k];
    auto& row = rows[group_bin];
    row.mean_pred += predicted[order[k]];
    row.emp_frac += event_by_t[order[k]] ? 1.0 : 0.0;
    ++row.count;
  }
  for (auto& row : rows) {
    if (row.count == 0) continue;
    row.mean_pred /= static_cast<double>(row.count);
    row.emp_frac /= static_cast<double>(row.count);
  }
  return rows;
}

double reliability_max_error(std::span<const ReliabilityRow> rows) {
  double worst = 0.0;
  for (const auto& row : rows)
    if (row.count > 0) worst = std::max(worst, std::abs(row.mean_pred - row.emp_frac));
  return worst;
}

namespace {
std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out.precision(10);
  return out;
}
}  // namespace

void write_roc_csv(const std::string& path, std::span<const RocPoint> curve) {
  auto out = open_csv(path);
  out << "fpr,tpr,threshold\n";
  for (const auto& p : curve) out << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
}

void write_pr_csv(const std::string& path, std::span<const PrPoint> curve) {
  auto out = open_csv(path);
  out << "recall,precision,threshold\n";
  for (const auto& p : curve) out << p.recall << ',' << p.precision << ',' << p.threshold << '\n';
}

void write_reliability_csv(const std::string& path, std::span<const ReliabilityRow> rows) {
  auto out = open_csv(path);
  out << "t_hours,decile,mean_pred,emp_frac,count\n";
  for (const auto& r : rows) {
    out << r.t_hours << ',' << r.decile << ',' << r.mean_pred << ',' << r.emp_frac << ',' << r.count
        << '\n';
  }
}

}  // namespace prognosis
