// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "idg/metrics.hpp"
#include "idg/model.hpp"
#include "idg/set_loss.hpp"

namespace idg {

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 15;
  std::size_t batch_size = 32;  // query samples per optimizer step
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  LossWeights loss;
  ModelConfig model;
  double data_fraction = 1.0;  // {0.25, 0.5, 0.75, 1.0}
  std::set<std::string> pattern_mask = {"appearance", "replace", "remove"};
  bool deterministic = true;

  void validate() const;
};

// In-memory dataset: queries grouped per pair so the backbone runs once per
// pair per pass.
struct PairSample {
  std::string pair_id;
  std::string split;
  Image img1, img2;
  std::vector<ManifestRecord> queries;
};

struct Dataset {
  std::vector<PairSample> pairs;
  std::size_t query_count(const std::string& split) const;
};

Dataset load_dataset(const std::string& dir);

struct EpochStats {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_l1 = 0.0;
  double loss_giou = 0.0;
};

struct TrainResult {
  ParamStore<float> params;
  std::vector<EpochStats> history;
};

// Deterministic given (cfg, dataset); aborts on non-finite loss with the
// step index. Writes nothing; callers persist via save_checkpoint.
TrainResult train(const TrainConfig& cfg, const Dataset& data);

// Runs the model over every query of `split` ("all" matches every split)
// and collects one prediction per query.
std::vector<PredictionRecord> predict_split(const ParamStore<float>& params,
                                            const ModelConfig& cfg,
                                            const Dataset& data,
                                            const std::string& split);

// Center-box baseline and random-box baseline for calibration.
std::vector<PredictionRecord> random_box_predictions(const Dataset& data,
                                                     const std::string& split,
                                                     std::uint64_t seed);

std::vector<ManifestRecord> split_records(const Dataset& data,
                                          const std::string& split);

// Ablation grids (data-scale, pattern, stage, intensity).
struct AblationRow {
  std::string label;
  EvalReport report;
};

std::vector<AblationRow> ablate(const std::string& kind,
                                const TrainConfig& base_cfg,
                                const Dataset& data);

std::string format_ablation(const std::string& kind,
                            const std::vector<AblationRow>& rows);

// Gradient fidelity drivers (f64): max relative error per parameter group.
std::map<std::string, double> gradcheck_dem(std::size_t draws,
                                            std::uint64_t seed);
std::map<std::string, double> gradcheck_micro_model(std::size_t draws,
                                                    std::uint64_t seed);

}  // namespace idg
