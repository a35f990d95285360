#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace prognosis {

/// |H+| = ceil(fraction * n), at least 1. A 1e-9 slack absorbs binary
/// representation error so that e.g. 0.3 * 10 selects 3 entries, not 4.
std::size_t topr_count(std::size_t n, double fraction);

/// Indices of the topr_count(n, fraction) largest values, ordered by value
/// descending with ties resolved toward the lower index.
std::vector<std::size_t> topr_indices(std::span<const double> values, double fraction);

/// Mean of the r% largest entries of a saliency map.
double aggregate_topr(std::span<const double> values, double fraction);

}  // namespace prognosis
