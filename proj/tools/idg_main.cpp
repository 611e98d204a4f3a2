// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "idg/config.hpp"
#include "idg/dataset_io.hpp"
#include "idg/datagen.hpp"
#include "idg/metrics.hpp"
#include "idg/model.hpp"
#include "idg/train.hpp"
#include "idg/viz.hpp"

namespace fs = std::filesystem;
using namespace idg;

namespace {

std::string default_out() {
  const char* env = std::getenv("IDG_OUT_DIR");
  return env ? env : "out";
}

TrainConfig make_config(const std::string& config_path, bool seed_set,
                        std::uint64_t seed) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  if (seed_set) cfg.seed = seed;
  cfg.validate();
  return cfg;
}

void write_history(const std::string& path,
                   const std::vector<EpochStats>& history) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  for (const auto& e : history) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "epoch %zu total %.6f cls %.6f l1 %.6f giou %.6f\n", e.epoch,
                  e.loss_total, e.loss_cls, e.loss_l1, e.loss_giou);
    f << buf;
  }
}

}  // namespace

int main(int argc, char** argv) {
  // Keep BLAS single-threaded: the box is small and run-to-run determinism
  // of reductions matters more than parallel gemm.
  setenv("OPENBLAS_NUM_THREADS", "1", 0);

  CLI::App app{"image difference grounding laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = default_out(), data_dir, pred_path;
  std::uint64_t seed = 1;
  bool seed_set = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "seed override")
        ->each([&](const std::string&) { seed_set = true; });
  };

  // generate
  auto* gen = app.add_subcommand("generate", "synthesize a dataset");
  std::size_t n_pairs = 2000;
  gen->add_option("--pairs", n_pairs, "number of pairs");
  add_common(gen);

  // train
  auto* tr = app.add_subcommand("train", "train a model and evaluate it");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  add_common(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "score a prediction file");
  std::string eval_split = "test";
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--pred", pred_path, "predictions JSONL")->required();
  ev->add_option("--split", eval_split, "split to score (train|test|all)");
  add_common(ev);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference verification");
  std::size_t draws = 100;
  gc->add_option("--draws", draws, "random draws per check");
  add_common(gc);

  // ablate
  auto* ab = app.add_subcommand("ablate", "run an ablation grid");
  std::string kind;
  ab->add_option("--kind", kind, "data-scale | pattern | stage | intensity")
      ->required();
  ab->add_option("--data", data_dir, "dataset directory")->required();
  add_common(ab);

  // render-viz
  auto* rv = app.add_subcommand("render-viz", "overlay boxes on a pair");
  std::string pair_id, ckpt_path;
  rv->add_option("--data", data_dir, "dataset directory")->required();
  rv->add_option("--pair", pair_id, "pair id")->required();
  rv->add_option("--pred", pred_path, "predictions JSONL");
  rv->add_option("--checkpoint", ckpt_path, "model checkpoint");
  add_common(rv);

  CLI11_PARSE(app, argc, argv);

  try {
    fs::create_directories(out_dir);

    if (gen->parsed()) {
      TrainConfig cfg = make_config(config_path, seed_set, seed);
      DatagenConfig dg;
      dg.canvas = cfg.model.canvas;
      generate_dataset(cfg.seed, n_pairs, dg, out_dir);
      std::printf("wrote %zu pairs to %s\n", n_pairs, out_dir.c_str());
      return 0;
    }

    if (tr->parsed()) {
      TrainConfig cfg = make_config(config_path, seed_set, seed);
      Dataset data = load_dataset(data_dir);
      TrainResult r = train(cfg, data);
      save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(),
                      r.params);
      write_history((fs::path(out_dir) / "train_log.txt").string(), r.history);
      auto preds = predict_split(r.params, cfg.model, data, "test");
      write_predictions((fs::path(out_dir) / "predictions.jsonl").string(),
                        preds);
      EvalReport rep = evaluate(preds, split_records(data, "test"));
      write_report((fs::path(out_dir) / "report.jsonl").string(), rep);
      std::printf("%s", format_report(rep).c_str());
      return 0;
    }

    if (ev->parsed()) {
      auto manifest = read_manifest(
          (fs::path(data_dir) / "manifest.jsonl").string());
      if (eval_split != "all") {
        std::erase_if(manifest, [&](const ManifestRecord& m) {
          return m.split != eval_split;
        });
      }
      auto preds = read_predictions(pred_path);
      EvalReport rep = evaluate(preds, manifest);
      write_report((fs::path(out_dir) / "report.jsonl").string(), rep);
      std::printf("%s", format_report(rep).c_str());
      return 0;
    }

    if (gc->parsed()) {
      std::uint64_t s = seed_set ? seed : 1;
      std::map<std::string, double> errs = gradcheck_dem(draws, s);
      for (auto [k, v] : gradcheck_micro_model(draws, s ^ 0x9e37ULL))
        errs[k] = v;
      bool ok = true;
      for (const auto& [group, err] : errs) {
        std::printf("%-24s max rel err %.3e\n", group.c_str(), err);
        if (err >= 1e-4) ok = false;
      }
      return ok ? 0 : 1;
    }

    if (ab->parsed()) {
      TrainConfig cfg = make_config(config_path, seed_set, seed);
      Dataset data = load_dataset(data_dir);
      auto rows = ablate(kind, cfg, data);
      std::string table = format_ablation(kind, rows);
      std::ofstream f((fs::path(out_dir) / ("ablation_" + kind + ".txt")));
      f << table;
      std::printf("%s", table.c_str());
      return 0;
    }

    if (rv->parsed()) {
      Dataset data = load_dataset(data_dir);
      const PairSample* pair = nullptr;
      for (const auto& p : data.pairs)
        if (p.pair_id == pair_id) pair = &p;
      if (!pair) throw std::runtime_error("pair not found: " + pair_id);

      std::map<std::string, BoxXYXY> pred_boxes;
      if (!pred_path.empty()) {
        for (const auto& p : read_predictions(pred_path))
          pred_boxes[p.query_id] = p.box;
      } else if (!ckpt_path.empty()) {
        ParamStore<float> params = load_checkpoint(ckpt_path);
        ModelConfig mc = make_config(config_path, seed_set, seed).model;
        Vocabulary vocab = build_vocabulary();
        for (const auto& q : pair->queries)
          pred_boxes[q.query_id] =
              predict(params, mc, vocab, pair->img1, pair->img2, q.text);
      } else {
        throw std::runtime_error("render-viz needs --pred or --checkpoint");
      }
      for (const auto& q : pair->queries) {
        auto it = pred_boxes.find(q.query_id);
        if (it == pred_boxes.end())
          throw std::runtime_error("no prediction for " + q.query_id);
        Image img = render_pair_overlay(pair->img1, pair->img2, q.gt_box,
                                        it->second);
        std::string path =
            (fs::path(out_dir) / (q.query_id + "_overlay.ppm")).string();
        write_image(path, img);
        std::printf("wrote %s\n", path.c_str());
      }
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
