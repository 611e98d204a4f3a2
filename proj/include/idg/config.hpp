// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "idg/train.hpp"

namespace idg {

// JSON config whose keys mirror TrainConfig field names. Top-level
// `dem_stages`, `alpha` and `beta` address the nested model config directly,
// matching the ablation grids. Unknown keys are errors.
TrainConfig load_train_config(const std::string& path);

std::string train_config_to_json(const TrainConfig& cfg);

}  // namespace idg
