#include "prognosis/topr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prognosis/error.hpp"

namespace prognosis {

std::size_t topr_count(std::size_t n, double fraction) {
  if (n == 0) throw Error("top-r aggregation of an empty map");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("pool fraction must lie in (0, 1]");
  const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

std::vector<std::size_t> topr_indices(std::span<const double> values, double fraction) {
  const std::size_t k = topr_count(values.size(), fraction);
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return values[a] > values[b] || (values[a] == values[b] && a < b);
                    });
  order.resize(k);
  return order;
}

double aggregate_topr(std::span<const double> values, double fraction) {
  const auto picked = topr_indices(values, fraction);
  double acc = 0.0;
  for (auto i : picked) acc += values[i];
  return acc / static_cast<double>(picked.size());
}

}  // namespace prognosis
