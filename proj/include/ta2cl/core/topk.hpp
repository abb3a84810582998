// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ta2cl/core/error.hpp"

namespace ta2cl {

/// Indices of the k largest entries, ordered by descending value. Ties go to
/// the lower index, so the selection is deterministic and the subgradient at a
/// tie flows to the earliest element.
inline std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k) {
  if (k < 1 || k > values.size()) {
    throw ValueError("topk: k=" + std::to_string(k) + " outside [1, " +
                     std::to_string(values.size()) + "]");
  }
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
  idx.resize(k);
  return idx;
}

inline std::vector<double> topk_row(std::span<const double> values, std::size_t k) {
  std::vector<double> out;
  out.reserve(k);
  for (std::size_t i : topk_indices(values, k)) out.push_back(values[i]);
  return out;
}

}  // namespace ta2cl
