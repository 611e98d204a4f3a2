// SPDX-License-Identifier: Apache-2.0
#include "idg/hungarian.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace idg {

// Shortest-augmenting-path formulation with row/column potentials, O(G*K^2).
// Rows of the internal problem are ground truths (the side that must be fully
// covered); exact ties resolve to the lowest prediction index because column
// scans run in ascending order.
std::vector<std::pair<std::size_t, std::size_t>> hungarian(
    const Tensor<double>& cost) {
  if (cost.shape.size() != 2)
    throw std::invalid_argument("hungarian: cost must be 2-D, got " +
                                cost.shape_str());
  const std::size_t k = cost.shape[0];  // predictions
  const std::size_t g = cost.shape[1];  // ground truths
  if (k < g)
    throw std::invalid_argument("hungarian: need at least as many predictions "
                                "as ground truths");
  for (double v : cost.data)
    if (!std::isfinite(v))
      throw std::invalid_argument("hungarian: non-finite cost entry");
  if (g == 0) return {};

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays per the classic formulation.
  std::vector<double> u(g + 1, 0.0), v(k + 1, 0.0);
  std::vector<std::size_t> p(k + 1, 0), way(k + 1, 0);
  for (std::size_t i = 1; i <= g; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<bool> used(k + 1, false);
    do {
      used[j0] = true;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= k; ++j) {
        if (used[j]) continue;
        double cur = cost.at(j - 1, i0 - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= k; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 1; j <= k; ++j)
    if (p[j] != 0) out.emplace_back(j - 1, p[j] - 1);
  return out;
}

double assignment_cost(
    const Tensor<double>& cost,
    const std::vector<std::pair<std::size_t, std::size_t>>& a) {
  double s = 0.0;
  for (auto [pi, gi] : a) s += cost.at(pi, gi);
  return s;
}

}  // namespace idg
