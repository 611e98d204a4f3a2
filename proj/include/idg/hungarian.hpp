// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "idg/tensor.hpp"

namespace idg {

// Optimal assignment on a K x G cost matrix (K predictions, G ground truths,
// K >= G). Returns (pred_index, gt_index) pairs covering every column,
// minimizing total cost. Throws on non-finite entries or K < G.
std::vector<std::pair<std::size_t, std::size_t>> hungarian(
    const Tensor<double>& cost);

double assignment_cost(const Tensor<double>& cost,
                       const std::vector<std::pair<std::size_t, std::size_t>>& a);

}  // namespace idg
