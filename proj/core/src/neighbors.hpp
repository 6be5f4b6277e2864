#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>

namespace nnsb::detail {

// Visits points of an ascending array in order of distance from z, calling
// visit(position, distance) until it returns false or the array is exhausted.
// Equal distances visit the left side first.
template <class Visit>
void walk_from(std::span<const double> sorted, double z, std::ptrdiff_t left, std::size_t right,
               Visit&& visit) {
  const std::size_t n = sorted.size();
  while (left >= 0 || right < n) {
    const double dl = left >= 0 ? z - sorted[static_cast<std::size_t>(left)] : 0.0;
    const double dr = right < n ? sorted[right] - z : 0.0;
    const bool take_left = left >= 0 && (right >= n || dl <= dr);
    if (take_left) {
      if (!visit(static_cast<std::size_t>(left), dl)) return;
      --left;
    } else {
      if (!visit(right, dr)) return;
      ++right;
    }
  }
}

template <class Visit>
void walk_neighbors(std::span<const double> sorted, double z, Visit&& visit) {
  const auto pos = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), z) - sorted.begin());
  walk_from(sorted, z, static_cast<std::ptrdiff_t>(pos) - 1, pos, std::forward<Visit>(visit));
}

}  // namespace nnsb::detail
