// SPDX-License-Identifier: Apache-2.0
#include "idg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "idg/grad_check.hpp"

namespace idg {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0)
    throw std::invalid_argument("TrainConfig: epochs and batch_size must be positive");
  if (learning_rate <= 0 || weight_decay < 0)
    throw std::invalid_argument("TrainConfig: bad optimizer hyperparameters");
  if (pattern_mask.empty())
    throw std::invalid_argument("TrainConfig: pattern mask must be nonempty");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0))
    throw std::invalid_argument("TrainConfig: data_fraction outside (0, 1]");
  if (loss.w_cls < 0 || loss.w_l1 < 0 || loss.w_giou < 0 ||
      (loss.w_cls == 0 && loss.w_l1 == 0 && loss.w_giou == 0))
    throw std::invalid_argument("TrainConfig: loss weights must be nonnegative, not all zero");
}

std::size_t Dataset::query_count(const std::string& split) const {
  std::size_t n = 0;
  for (const auto& p : pairs)
    if (split == "all" || p.split == split) n += p.queries.size();
  return n;
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  auto manifest = read_manifest((fs::path(dir) / "manifest.jsonl").string());
  Dataset data;
  std::map<std::string, std::size_t> index;
  for (auto& r : manifest) {
    auto it = index.find(r.pair_id);
    if (it == index.end()) {
      PairSample p;
      p.pair_id = r.pair_id;
      p.split = r.split;
      p.img1 = read_image((fs::path(dir) / r.image1).string());
      p.img2 = read_image((fs::path(dir) / r.image2).string());
      index.emplace(r.pair_id, data.pairs.size());
      data.pairs.push_back(std::move(p));
      it = index.find(r.pair_id);
    }
    data.pairs[it->second].queries.push_back(std::move(r));
  }
  return data;
}

std::vector<ManifestRecord> split_records(const Dataset& data,
                                          const std::string& split) {
  std::vector<ManifestRecord> out;
  for (const auto& p : data.pairs)
    if (split == "all" || p.split == split)
      for (const auto& q : p.queries) out.push_back(q);
  return out;
}

namespace {

// AdamW with decoupled weight decay; moments keyed by parameter name.
class AdamW {
 public:
  AdamW(double lr, double wd) : lr_(lr), wd_(wd) {}

  void set_lr(double lr) { lr_ = lr; }

  void step(ParamStore<float>& params,
            const std::map<std::string, Tensor<double>>& grads) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& [name, g] : grads) {
      Tensor<float>& p = params.at(name);
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.numel() == 0) {
        m = Tensor<double>(p.shape);
        v = Tensor<double>(p.shape);
      }
      for (std::size_t i = 0; i < p.numel(); ++i) {
        double gi = g.data[i];
        m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * gi;
        v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * gi * gi;
        double mhat = m.data[i] / bc1;
        double vhat = v.data[i] / bc2;
        double upd = mhat / (std::sqrt(vhat) + eps_) + wd_ * double(p.data[i]);
        p.data[i] = float(double(p.data[i]) - lr_ * upd);
      }
    }
  }

 private:
  double lr_, wd_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::map<std::string, Tensor<double>> m_, v_;
};

// Deterministic pair-level subset for the data-scale ablation: order pairs by
// a seed-keyed hash and keep the first fraction.
std::vector<std::size_t> select_train_pairs(const Dataset& data,
                                            const TrainConfig& cfg) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.pairs.size(); ++i)
    if (data.pairs[i].split == "train") idx.push_back(i);
  if (cfg.data_fraction < 1.0) {
    Rng rng(cfg.seed ^ 0x5eedULL);
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    for (std::size_t i : idx) keyed.emplace_back(rng.split(i).next_u64(), i);
    std::sort(keyed.begin(), keyed.end());
    std::size_t keep = std::size_t(std::lround(cfg.data_fraction * double(idx.size())));
    keep = std::max<std::size_t>(1, std::min(keep, idx.size()));
    idx.clear();
    for (std::size_t i = 0; i < keep; ++i) idx.push_back(keyed[i].second);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

struct PairLoss {
  double total = 0, cls = 0, l1 = 0, giou = 0;
  std::size_t queries = 0;
};

// Temporary training diagnostics, enabled with IDG_DEBUG_SLOTS=1.
struct SlotDebug {
  std::vector<std::size_t> matched;
  std::vector<double> p_sum;
  std::size_t samples = 0;
  void record(std::size_t k, std::size_t slot, const std::vector<double>& p) {
    if (matched.empty()) { matched.assign(k, 0); p_sum.assign(k, 0.0); }
    matched[slot]++;
    for (std::size_t i = 0; i < k; ++i) p_sum[i] += p[i];
    samples++;
  }
  void dump(std::size_t epoch) {
    if (!samples) return;
    std::fprintf(stderr, "slots: epoch %zu matched", epoch + 1);
    for (auto m : matched) std::fprintf(stderr, " %zu", m);
    std::fprintf(stderr, " | p");
    for (auto s : p_sum) std::fprintf(stderr, " %.3f", s / double(samples));
    std::fprintf(stderr, "\n");
    std::fill(matched.begin(), matched.end(), 0);
    std::fill(p_sum.begin(), p_sum.end(), 0.0);
    samples = 0;
  }
};
SlotDebug g_slot_debug;
bool g_slot_debug_on = std::getenv("IDG_DEBUG_SLOTS") != nullptr;

// Forward + backward for one pair (all masked queries share the backbone on
// a single tape). Gradients accumulate into `grads` in f64.
PairLoss pair_step(const PairSample& pair, const TrainConfig& cfg,
                   const ParamStore<float>& params, const Vocabulary& vocab,
                   std::map<std::string, Tensor<double>>* grads) {
  std::vector<const ManifestRecord*> active;
  for (const auto& q : pair.queries)
    if (cfg.pattern_mask.count(q.pattern)) active.push_back(&q);
  PairLoss out;
  if (active.empty()) return out;

  Tape<float> t;
  BoundParams<float> p(t, params, grads != nullptr);
  Var i1 = t.constant(image_to_tensor<float>(pair.img1));
  Var i2 = t.constant(image_to_tensor<float>(pair.img2));
  auto [f1, f2] = dvb_forward(t, p, i1, i2, cfg.model);

  Var total = t.scalar(0.0f);
  for (const ManifestRecord* q : active) {
    auto ids = encode_tokens(vocab, q->text);
    Var text = encode_text_on_tape(t, p, ids, cfg.model);
    Var fused = fuse(t, p, f1, f2, text, cfg.model);
    ModelOutput<float> mo = decode(t, p, fused, cfg.model);
    auto sl = set_loss_on_tape(t, mo.boxes, mo.logits, {q->gt_box}, cfg.loss);
    if (g_slot_debug_on && !sl.assignment.empty()) {
      const auto& lv = t.val(mo.logits);
      std::size_t k = lv.shape[0];
      std::vector<double> p(k);
      for (std::size_t i = 0; i < k; ++i) {
        double a = lv.at(i, 0), b = lv.at(i, 1), m = std::max(a, b);
        p[i] = std::exp(a - m) / (std::exp(a - m) + std::exp(b - m));
      }
      g_slot_debug.record(k, sl.assignment[0].first, p);
    }
    Var query_loss = sl.total;
    // Deep supervision: the same set loss on every intermediate decoder
    // layer's outputs (reported components stay final-layer only).
    for (std::size_t a = 0; a < mo.aux_boxes.size(); ++a) {
      auto sa = set_loss_on_tape(t, mo.aux_boxes[a], mo.aux_logits[a],
                                 {q->gt_box}, cfg.loss);
      query_loss = t.add(query_loss, sa.total);
    }
    total = t.add(total, query_loss);
    out.cls += t.val(sl.cls).data[0];
    out.l1 += t.val(sl.l1).data[0];
    out.giou += t.val(sl.giou_loss).data[0];
  }
  total = t.scale(total, 1.0f / float(active.size()));
  double loss = t.val(total).data[0];
  if (!std::isfinite(loss))
    throw std::runtime_error("train: non-finite loss on pair " + pair.pair_id);
  out.total = loss;
  out.cls /= double(active.size());
  out.l1 /= double(active.size());
  out.giou /= double(active.size());
  out.queries = active.size();

  if (grads) {
    t.backward(total);
    for (auto& [name, g] : p.touched_grads()) {
      auto& acc = (*grads)[name];
      if (acc.numel() == 0) acc = Tensor<double>(g->shape);
      for (std::size_t i = 0; i < g->numel(); ++i)
        acc.data[i] += double(g->data[i]);
    }
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  Vocabulary vocab = build_vocabulary();
  TrainResult res;
  res.params = init_params<float>(cfg.model, vocab, cfg.seed);
  AdamW opt(cfg.learning_rate, cfg.weight_decay);
  std::vector<std::size_t> train_idx = select_train_pairs(data, cfg);
  if (train_idx.empty()) throw std::runtime_error("train: dataset has no train pairs");

  std::size_t pairs_per_batch =
      std::max<std::size_t>(1, cfg.batch_size / 4);
  Rng shuffle_rng(cfg.seed ^ 0xba7c4ULL);

  // Linear warmup into cosine decay; cfg.learning_rate is the peak.
  std::size_t steps_per_epoch =
      (train_idx.size() + pairs_per_batch - 1) / pairs_per_batch;
  std::size_t total_steps = std::max<std::size_t>(1, cfg.epochs * steps_per_epoch);
  std::size_t warmup_steps = std::min<std::size_t>(200, total_steps / 10 + 1);
  std::size_t step_no = 0;
  auto scheduled_lr = [&]() {
    double s = double(step_no);
    if (s < double(warmup_steps))
      return cfg.learning_rate * (s + 1.0) / double(warmup_steps);
    double prog = (s - double(warmup_steps)) /
                  std::max(1.0, double(total_steps - warmup_steps));
    return cfg.learning_rate * 0.5 * (1.0 + std::cos(3.141592653589793 * prog));
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    EpochStats stats;
    stats.epoch = epoch;
    std::size_t total_queries = 0;
    for (std::size_t b = 0; b < order.size(); b += pairs_per_batch) {
      std::size_t e = std::min(order.size(), b + pairs_per_batch);
      std::map<std::string, Tensor<double>> grads;
      std::size_t batch_queries = 0;
      for (std::size_t i = b; i < e; ++i) {
        PairLoss pl = pair_step(data.pairs[order[i]], cfg, res.params, vocab,
                                &grads);
        stats.loss_total += pl.total * double(pl.queries);
        stats.loss_cls += pl.cls * double(pl.queries);
        stats.loss_l1 += pl.l1 * double(pl.queries);
        stats.loss_giou += pl.giou * double(pl.queries);
        batch_queries += pl.queries;
        total_queries += pl.queries;
      }
      if (batch_queries == 0) continue;
      double inv = 1.0 / double(e - b);
      for (auto& [name, g] : grads)
        for (auto& v : g.data) v *= inv;
      opt.set_lr(scheduled_lr());
      ++step_no;
      opt.step(res.params, grads);
    }
    if (total_queries) {
      stats.loss_total /= double(total_queries);
      stats.loss_cls /= double(total_queries);
      stats.loss_l1 /= double(total_queries);
      stats.loss_giou /= double(total_queries);
    }
    if (g_slot_debug_on) g_slot_debug.dump(epoch);
    std::fprintf(stderr,
                 "train: epoch %zu/%zu total %.4f cls %.4f l1 %.4f giou %.4f\n",
                 stats.epoch + 1, cfg.epochs, stats.loss_total, stats.loss_cls,
                 stats.loss_l1, stats.loss_giou);
    res.history.push_back(stats);
  }
  return res;
}

std::vector<PredictionRecord> predict_split(const ParamStore<float>& params,
                                            const ModelConfig& cfg,
                                            const Dataset& data,
                                            const std::string& split) {
  Vocabulary vocab = build_vocabulary();
  std::vector<PredictionRecord> out;
  for (const auto& p : data.pairs) {
    if (split != "all" && p.split != split) continue;
    for (const auto& q : p.queries) {
      PredictionRecord r;
      r.query_id = q.query_id;
      r.box = predict(params, cfg, vocab, p.img1, p.img2, q.text, &r.p_diff);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<PredictionRecord> random_box_predictions(const Dataset& data,
                                                     const std::string& split,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PredictionRecord> out;
  for (const auto& p : data.pairs) {
    if (split != "all" && p.split != split) continue;
    for (const auto& q : p.queries) {
      double w = rng.uniform(0.10, 0.44);
      double h = rng.uniform(0.10, 0.44);
      PredictionRecord r;
      r.query_id = q.query_id;
      r.box.x1 = rng.uniform(0.0, 1.0 - w);
      r.box.y1 = rng.uniform(0.0, 1.0 - h);
      r.box.x2 = r.box.x1 + w;
      r.box.y2 = r.box.y1 + h;
      r.p_diff = rng.uniform();
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---- ablations ----

namespace {

EvalReport run_and_eval(const TrainConfig& cfg, const Dataset& data) {
  TrainResult r = train(cfg, data);
  auto preds = predict_split(r.params, cfg.model, data, "test");
  return evaluate(preds, split_records(data, "test"));
}

}  // namespace

std::vector<AblationRow> ablate(const std::string& kind,
                                const TrainConfig& base_cfg,
                                const Dataset& data) {
  std::vector<AblationRow> rows;
  if (kind == "data-scale") {
    for (double f : {0.25, 0.5, 0.75, 1.0}) {
      TrainConfig cfg = base_cfg;
      cfg.data_fraction = f;
      rows.push_back({std::to_string(int(f * 100)) + "%", run_and_eval(cfg, data)});
    }
  } else if (kind == "pattern") {
    const std::vector<std::pair<std::string, std::set<std::string>>> grid = {
        {"w/o appearance", {"replace", "remove"}},
        {"w/o remove", {"appearance", "replace"}},
        {"w/o replace", {"appearance", "remove"}},
        {"full", {"appearance", "replace", "remove"}},
    };
    for (const auto& [label, mask] : grid) {
      TrainConfig cfg = base_cfg;
      cfg.pattern_mask = mask;
      rows.push_back({label, run_and_eval(cfg, data)});
    }
  } else if (kind == "stage") {
    const std::vector<std::pair<std::string, std::set<std::size_t>>> grid = {
        {"none", {}},
        {"stage 0", {0}},
        {"stages 0-1", {0, 1}},
        {"stages 0-2", {0, 1, 2}},
        {"stages 0-3", {0, 1, 2, 3}},
    };
    for (const auto& [label, stages] : grid) {
      TrainConfig cfg = base_cfg;
      cfg.model.backbone.dem_stages = stages;
      rows.push_back({label, run_and_eval(cfg, data)});
    }
  } else if (kind == "intensity") {
    for (double ab : {0.25, 0.5, 0.75, 1.0}) {
      TrainConfig cfg = base_cfg;
      cfg.model.alpha = ab;
      cfg.model.beta = ab;
      char label[16];
      std::snprintf(label, sizeof label, "%.2f", ab);
      rows.push_back({label, run_and_eval(cfg, data)});
    }
  } else {
    throw std::invalid_argument("ablate: unknown kind '" + kind + "'");
  }
  return rows;
}

std::string format_ablation(const std::string& kind,
                            const std::vector<AblationRow>& rows) {
  std::string out = "ablation: " + kind + "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s\n", "row", "Diff-App",
                "Diff-Rem", "Diff-Rep", "Diff-All");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %8.1f %8.1f %8.1f %8.1f\n",
                  r.label.c_str(), r.report.diff_app, r.report.diff_rem,
                  r.report.diff_rep, r.report.diff_all);
    out += buf;
  }
  return out;
}

// ---- gradient fidelity drivers ----

std::map<std::string, double> gradcheck_dem(std::size_t draws,
                                            std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t it = 0; it < draws; ++it) {
    std::size_t n = 2 + rng.uniform_int(4);
    std::size_t d = 2 + rng.uniform_int(4);
    Tensor<double> f1v = Tensor<double>::randn({n, d}, rng);
    Tensor<double> f2v = Tensor<double>::randn({n, d}, rng);
    Tensor<double> r1 = Tensor<double>::randn({n, d}, rng);
    Tensor<double> r2 = Tensor<double>::randn({n, d}, rng);
    double alpha = rng.uniform(0.0, 1.0), beta = rng.uniform(0.0, 1.0);
    auto eval = [&](const std::vector<Tensor<double>>& ps,
                    std::vector<Tensor<double>>* grads) {
      Tape<double> t;
      Var vf1 = t.constant(f1v), vf2 = t.constant(f2v);
      Var wq = t.input(ps[0], true), wk = t.input(ps[1], true),
          wv = t.input(ps[2], true);
      DemVars h = dem_forward_on_tape(t, vf1, vf2, wq, wk, wv, alpha, beta);
      Var loss = t.sum(t.add(t.mul(h.f1, t.constant(r1)),
                             t.mul(h.f2, t.constant(r2))));
      if (grads) {
        t.backward(loss);
        *grads = {t.grad(wq), t.grad(wk), t.grad(wv)};
      }
      return t.val(loss).data[0];
    };
    Differentiable f;
    f.value = [&](const std::vector<Tensor<double>>& ps) {
      return eval(ps, nullptr);
    };
    f.gradients = [&](const std::vector<Tensor<double>>& ps) {
      std::vector<Tensor<double>> g;
      eval(ps, &g);
      return g;
    };
    std::vector<Tensor<double>> params = {
        Tensor<double>::randn({d, d}, rng, 0.5),
        Tensor<double>::randn({d, d}, rng, 0.5),
        Tensor<double>::randn({d, d}, rng, 0.5)};
    worst = std::max(worst,
                     finite_diff_check(f, params, 1e-6, {"Wq", "Wk", "Wv"}));
  }
  return {{"dem.Wq/Wk/Wv", worst}};
}

std::map<std::string, double> gradcheck_micro_model(std::size_t draws,
                                                    std::uint64_t seed) {
  ModelConfig cfg;
  cfg.canvas = 8;
  cfg.backbone.stage_count = 2;
  cfg.backbone.channels = {3, 4};
  cfg.backbone.dem_stages = {0, 1};
  cfg.text.dim = 8;
  cfg.text.depth = 1;
  cfg.text.max_len = 8;
  cfg.decoder.query_count = 2;
  cfg.decoder.model_dim = 8;
  cfg.decoder.encoder_depth = 1;
  cfg.decoder.decoder_depth = 1;
  cfg.decoder.ffn_mult = 2;

  Vocabulary vocab = build_vocabulary();
  Rng rng(seed);
  LossWeights lw;
  std::map<std::string, double> out;
  double worst = 0.0;

  // Rotate the checked parameter group across draws; every draw perturbs the
  // full micro-model via fresh inputs and parameters.
  for (std::size_t it = 0; it < draws; ++it) {
    ParamStore<double> ps = init_params<double>(cfg, vocab, rng.next_u64());
    Image img1(cfg.canvas, cfg.canvas), img2(cfg.canvas, cfg.canvas);
    for (auto& v : img1.px) v = float(rng.uniform());
    img2 = img1;
    // Perturb a small patch so the pair carries an actual difference.
    for (std::size_t y = 2; y < 5; ++y)
      for (std::size_t x = 2; x < 5; ++x) {
        float* p = img2.at(x, y);
        p[0] = float(rng.uniform());
      }
    BoxXYXY gt{0.2, 0.2, 0.7, 0.7};
    auto templates = query_templates(Pattern::Appearance, RemoveDirection::None);
    std::vector<int> ids =
        encode_tokens(vocab, templates[rng.uniform_int(templates.size())]);

    std::vector<std::string> names;
    for (const auto& [name, t] : ps) names.push_back(name);
    std::string target = names[it % names.size()];

    auto eval = [&](const std::vector<Tensor<double>>& pv,
                    std::vector<Tensor<double>>* grads) {
      ParamStore<double> local = ps;
      local[target] = pv[0];
      Tape<double> t;
      BoundParams<double> p(t, local, grads != nullptr);
      ModelOutput<double> mo = model_forward(t, p, img1, img2, ids, cfg);
      auto sl = set_loss_on_tape(t, mo.boxes, mo.logits, {gt}, lw);
      if (grads) {
        t.backward(sl.total);
        auto tg = p.touched_grads();
        *grads = {*tg.at(target)};
      }
      return t.val(sl.total).data[0];
    };
    Differentiable f;
    f.value = [&](const std::vector<Tensor<double>>& pv) {
      return eval(pv, nullptr);
    };
    f.gradients = [&](const std::vector<Tensor<double>>& pv) {
      std::vector<Tensor<double>> g;
      eval(pv, &g);
      return g;
    };
    double err = finite_diff_check(f, {ps.at(target)}, 1e-6, {target});
    worst = std::max(worst, err);
    out["micro." + target] = std::max(out["micro." + target], err);
  }
  out["micro.worst"] = worst;
  return out;
}

}  // namespace idg
