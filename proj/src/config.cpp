// SPDX-License-Identifier: Apache-2.0
#include "idg/config.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace idg {

using nlohmann::json;

namespace {

template <typename F>
void take(json& j, const char* key, F&& apply) {
  auto it = j.find(key);
  if (it == j.end()) return;
  apply(*it);
  j.erase(it);
}

void reject_unknown(const json& j, const std::string& scope) {
  if (j.empty()) return;
  std::string keys;
  for (auto it = j.begin(); it != j.end(); ++it)
    keys += (keys.empty() ? "" : ", ") + it.key();
  throw std::invalid_argument("config: unknown key(s) in " + scope + ": " +
                              keys);
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: parse error in " + path + ": " +
                                e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("config: top level must be an object");

  TrainConfig cfg;
  take(j, "seed", [&](json& v) { cfg.seed = v.get<std::uint64_t>(); });
  take(j, "epochs", [&](json& v) { cfg.epochs = v.get<std::size_t>(); });
  take(j, "batch_size",
       [&](json& v) { cfg.batch_size = v.get<std::size_t>(); });
  take(j, "learning_rate",
       [&](json& v) { cfg.learning_rate = v.get<double>(); });
  take(j, "weight_decay",
       [&](json& v) { cfg.weight_decay = v.get<double>(); });
  take(j, "data_fraction",
       [&](json& v) { cfg.data_fraction = v.get<double>(); });
  take(j, "deterministic",
       [&](json& v) { cfg.deterministic = v.get<bool>(); });
  take(j, "pattern_mask", [&](json& v) {
    cfg.pattern_mask.clear();
    for (auto& p : v) cfg.pattern_mask.insert(p.get<std::string>());
  });
  take(j, "dem_stages", [&](json& v) {
    cfg.model.backbone.dem_stages.clear();
    for (auto& s : v) cfg.model.backbone.dem_stages.insert(s.get<std::size_t>());
  });
  take(j, "alpha", [&](json& v) { cfg.model.alpha = v.get<double>(); });
  take(j, "beta", [&](json& v) { cfg.model.beta = v.get<double>(); });
  take(j, "loss", [&](json& v) {
    take(v, "w_cls", [&](json& w) { cfg.loss.w_cls = w.get<double>(); });
    take(v, "w_l1", [&](json& w) { cfg.loss.w_l1 = w.get<double>(); });
    take(v, "w_giou", [&](json& w) { cfg.loss.w_giou = w.get<double>(); });
    take(v, "no_object_weight",
         [&](json& w) { cfg.loss.no_object_weight = w.get<double>(); });
    reject_unknown(v, "loss");
  });
  take(j, "model", [&](json& v) {
    take(v, "canvas", [&](json& w) { cfg.model.canvas = w.get<std::size_t>(); });
    take(v, "scale_attention",
         [&](json& w) { cfg.model.scale_attention = w.get<bool>(); });
    take(v, "model_dim", [&](json& w) {
      cfg.model.decoder.model_dim = w.get<std::size_t>();
      cfg.model.text.dim = cfg.model.decoder.model_dim;
    });
    take(v, "query_count", [&](json& w) {
      cfg.model.decoder.query_count = w.get<std::size_t>();
    });
    take(v, "encoder_depth", [&](json& w) {
      cfg.model.decoder.encoder_depth = w.get<std::size_t>();
    });
    take(v, "decoder_depth", [&](json& w) {
      cfg.model.decoder.decoder_depth = w.get<std::size_t>();
    });
    take(v, "channels", [&](json& w) {
      cfg.model.backbone.channels.clear();
      for (auto& c : w) cfg.model.backbone.channels.push_back(c.get<std::size_t>());
      cfg.model.backbone.stage_count = cfg.model.backbone.channels.size();
    });
    reject_unknown(v, "model");
  });
  reject_unknown(j, "top level");
  cfg.validate();
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["weight_decay"] = cfg.weight_decay;
  j["data_fraction"] = cfg.data_fraction;
  j["pattern_mask"] = cfg.pattern_mask;
  j["dem_stages"] = cfg.model.backbone.dem_stages;
  j["alpha"] = cfg.model.alpha;
  j["beta"] = cfg.model.beta;
  j["deterministic"] = cfg.deterministic;
  j["loss"] = {{"w_cls", cfg.loss.w_cls},
               {"w_l1", cfg.loss.w_l1},
               {"w_giou", cfg.loss.w_giou},
               {"no_object_weight", cfg.loss.no_object_weight}};
  j["model"] = {{"canvas", cfg.model.canvas},
                {"scale_attention", cfg.model.scale_attention},
                {"model_dim", cfg.model.decoder.model_dim},
                {"query_count", cfg.model.decoder.query_count},
                {"encoder_depth", cfg.model.decoder.encoder_depth},
                {"decoder_depth", cfg.model.decoder.decoder_depth},
                {"channels", cfg.model.backbone.channels}};
  return j.dump(2);
}

}  // namespace idg
