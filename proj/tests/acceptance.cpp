// SPDX-License-Identifier: Apache-2.0
// Acceptance gate. Three modes select criterion groups:
//   acceptance fast       -> criteria 1-5, 8 (property suites, oracles, formats)
//   acceptance learning   -> criterion 6 (memorization + benchmark)
//   acceptance ablations  -> criterion 7 (directional ablation trends)
// Each criterion prints PASS/FAIL with a one-line detail; the exit code is the
// number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "idg/config.hpp"
#include "idg/datagen.hpp"
#include "idg/dataset_io.hpp"
#include "idg/dem.hpp"
#include "idg/geometry.hpp"
#include "idg/hungarian.hpp"
#include "idg/metrics.hpp"
#include "idg/model.hpp"
#include "idg/train.hpp"

using namespace idg;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(const std::string& name, const std::function<std::string()>& fn) {
  auto t0 = clock_type::now();
  std::string detail;
  bool pass = true;
  try {
    detail = fn();
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  if (!detail.empty() && detail.rfind("FAIL", 0) == 0) pass = false;
  double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
  std::printf("%s  %-60s (%.1fs) %s\n", pass ? "PASS" : "FAIL", name.c_str(),
              secs, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fail(const std::string& why) { return "FAIL: " + why; }

// ---- criterion 1: DEM algebra ----

std::string dem_algebra() {
  Rng rng(101);
  auto t0 = clock_type::now();
  for (int it = 0; it < 1000; ++it) {
    std::size_t n = 2 + std::size_t(rng.uniform_int(15));
    std::size_t d = 1 + std::size_t(rng.uniform_int(16));
    float alpha = float(rng.uniform(0.0, 1.5));
    float beta = float(rng.uniform(0.0, 1.5));
    bool scaled = rng.uniform() < 0.5;
    DemParams<float> p = DemParams<float>::random(d, rng, alpha, beta);
    p.scale_attention = scaled;
    Tensor<float> f1 = Tensor<float>::randn({n, d}, rng, 1.0);
    Tensor<float> f2 = Tensor<float>::randn({n, d}, rng, 1.0);

    // Nullity: identical inputs give an exactly zero difference map.
    DemOut<float> same = dem_forward(f1, f1, p);
    for (float v : same.trace.ad.data)
      if (v != 0.0f) return fail("nullity violated at draw " + std::to_string(it));

    // Swap equivariance: exchanging the inputs exchanges the outputs.
    DemOut<float> ab = dem_forward(f1, f2, p);
    DemOut<float> ba = dem_forward(f2, f1, p);
    for (std::size_t i = 0; i < ab.f1.data.size(); ++i) {
      if (std::abs(ab.f1.data[i] - ba.f2.data[i]) > 1e-6f ||
          std::abs(ab.f2.data[i] - ba.f1.data[i]) > 1e-6f)
        return fail("swap equivariance violated at draw " + std::to_string(it));
    }

    // alpha = beta = 0 reduces bitwise to the value projection.
    DemParams<float> p0 = p;
    p0.alpha = 0.0f;
    p0.beta = 0.0f;
    DemOut<float> plain = dem_forward(f1, f2, p0);
    Tensor<float> v1 = matmul(f1, p.wv);
    for (std::size_t i = 0; i < v1.data.size(); ++i)
      if (plain.f1.data[i] != v1.data[i])
        return fail("alpha=beta=0 reduction not bitwise at draw " +
                    std::to_string(it));

    // Monotone alpha sensitivity (beta = 0): the difference-driven update
    // grows with alpha, elementwise in magnitude.
    DemParams<float> pa = p, pb = p;
    pa.beta = pb.beta = 0.0f;
    pa.alpha = 0.25f;
    pb.alpha = 0.75f;
    DemOut<float> lo = dem_forward(f1, f2, pa);
    DemOut<float> hi = dem_forward(f1, f2, pb);
    for (std::size_t i = 0; i < v1.data.size(); ++i) {
      float dlo = std::abs(lo.f1.data[i] - v1.data[i]);
      float dhi = std::abs(hi.f1.data[i] - v1.data[i]);
      if (dhi + 1e-6f < dlo)
        return fail("alpha monotonicity violated at draw " + std::to_string(it));
    }
  }
  double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
  if (secs >= 10.0) return fail("runtime " + std::to_string(secs) + "s >= 10s");
  return "1000 fuzz draws";
}

// ---- criterion 2: gradient fidelity ----

std::string gradient_fidelity() {
  auto t0 = clock_type::now();
  auto dem_errs = gradcheck_dem(100, 2024);
  double dem_worst = 0.0;
  for (const auto& [k, v] : dem_errs) dem_worst = std::max(dem_worst, v);
  auto micro_errs = gradcheck_micro_model(100, 4048);
  double micro_worst = 0.0;
  for (const auto& [k, v] : micro_errs) micro_worst = std::max(micro_worst, v);
  double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
  char buf[160];
  std::snprintf(buf, sizeof buf, "dem %.2e (<1e-5), micro %.2e (<1e-4)",
                dem_worst, micro_worst);
  if (dem_worst >= 1e-5) return fail(buf);
  if (micro_worst >= 1e-4) return fail(buf);
  if (secs >= 120.0) return fail("runtime " + std::to_string(secs) + "s >= 2min");
  return buf;
}

// ---- criterion 3: Hungarian oracle ----

double brute_force(const Tensor<double>& cost) {
  std::size_t k = cost.shape[0], g = cost.shape[1];
  std::vector<std::size_t> rows;
  std::vector<bool> used(k, false);
  double best = 1e300;
  // No pruning: with negative entries a partial sum bounds nothing.
  std::function<void(std::size_t, double)> rec = [&](std::size_t col, double acc) {
    if (col == g) {
      best = std::min(best, acc);
      return;
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (used[r]) continue;
      used[r] = true;
      rec(col + 1, acc + cost.at(r, col));
      used[r] = false;
    }
  };
  rec(0, 0.0);
  return best;
}

std::string hungarian_oracle() {
  Rng rng(55);
  auto t0 = clock_type::now();
  for (int it = 0; it < 1000; ++it) {
    std::size_t k = 1 + std::size_t(rng.uniform_int(7));
    std::size_t g = 1 + std::size_t(rng.uniform_int(int(k)));
    bool integers = it % 2 == 0;
    Tensor<double> cost({k, g});
    for (auto& v : cost.data)
      v = integers ? double(rng.uniform_int(20)) : rng.uniform(-5.0, 5.0);
    auto assign = hungarian(cost);
    double got = assignment_cost(cost, assign);
    double want = brute_force(cost);
    double tol = integers ? 0.0 : 1e-9;
    if (std::abs(got - want) > tol)
      return fail("cost mismatch at draw " + std::to_string(it) + ": " +
                  std::to_string(got) + " vs " + std::to_string(want));
  }
  double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
  if (secs >= 30.0) return fail("runtime " + std::to_string(secs) + "s >= 30s");
  return "1000 matrices vs brute force";
}

// ---- criterion 4: geometry oracles ----

// Exact count of lattice cell centers of an s x s grid inside [a,b] x [c,d],
// by interval arithmetic -- a closed-form rasterization.
double raster_cells(double a, double b, std::size_t s) {
  // centers at (i + 0.5)/s, inside iff a <= (i+0.5)/s <= b.
  double lo = std::ceil(a * double(s) - 0.5);
  double hi = std::floor(b * double(s) - 0.5);
  return std::max(0.0, hi - lo + 1.0);
}

double raster_box_area(const BoxXYXY& b, std::size_t s) {
  return raster_cells(b.x1, b.x2, s) * raster_cells(b.y1, b.y2, s);
}

std::string geometry_oracles() {
  BoxXYXY a{0.0, 0.0, 0.5, 0.5};
  BoxXYXY b{0.25, 0.25, 0.75, 0.75};
  if (std::abs(iou(a, b) - 1.0 / 7.0) > 1e-9) return fail("worked IoU 1/7");
  BoxXYXY c{0.0, 0.0, 0.2, 0.2};
  BoxXYXY d{0.1, 0.1, 0.3, 0.3};
  if (std::abs(giou(c, d) - (-5.0 / 63.0)) > 1e-9) return fail("worked GIoU -5/63");

  Rng rng(77);
  const std::size_t s = 1 << 14;
  for (int it = 0; it < 1000; ++it) {
    auto rand_box = [&] {
      BoxXYXY r;
      r.x1 = rng.uniform(0.0, 0.8);
      r.y1 = rng.uniform(0.0, 0.8);
      r.x2 = r.x1 + rng.uniform(0.01, 1.0 - r.x1);
      r.y2 = r.y1 + rng.uniform(0.01, 1.0 - r.y1);
      return r;
    };
    BoxXYXY p = rand_box(), q = rand_box();
    BoxXYXY inter{std::max(p.x1, q.x1), std::max(p.y1, q.y1),
                  std::min(p.x2, q.x2), std::min(p.y2, q.y2)};
    double ai = (inter.x1 < inter.x2 && inter.y1 < inter.y2)
                    ? raster_box_area(inter, s)
                    : 0.0;
    double au = raster_box_area(p, s) + raster_box_area(q, s) - ai;
    BoxXYXY hull{std::min(p.x1, q.x1), std::min(p.y1, q.y1),
                 std::max(p.x2, q.x2), std::max(p.y2, q.y2)};
    double ah = raster_box_area(hull, s);
    double iou_r = au > 0 ? ai / au : 0.0;
    double giou_r = iou_r - (ah - au) / ah;
    if (std::abs(iou(p, q) - iou_r) > 1e-3)
      return fail("rasterized IoU mismatch at draw " + std::to_string(it));
    if (std::abs(giou(p, q) - giou_r) > 1e-3)
      return fail("rasterized GIoU mismatch at draw " + std::to_string(it));
    if (giou(p, q) > iou(p, q) + 1e-12)
      return fail("GIoU > IoU at draw " + std::to_string(it));
  }
  return "worked values + 1000 rasterized pairs";
}

// ---- criterion 5: data engine contract ----

std::string data_contract() {
  DatagenConfig cfg;
  const std::size_t n = 10000;
  Rng audit(13);
  for (std::size_t idx = 0; idx < n; ++idx) {
    DifferencePair p = make_pair(1, idx, cfg);
    if (p.queries.size() != 4)
      return fail(p.pair_id + ": query count " +
                  std::to_string(p.queries.size()));
    std::multiset<Pattern> pats;
    std::set<RemoveDirection> dirs;
    double pad = 1.5 / double(cfg.canvas);
    for (const auto& q : p.queries) {
      pats.insert(q.pattern);
      if (q.pattern == Pattern::Remove) dirs.insert(q.direction);
      if (!passes_area_filter(q.gt))
        return fail(q.query_id + ": gt box outside [1%,20%] area band");
      for (const auto& tok : category_lexicon())
        for (const auto& w : tokenize(q.text))
          if (w == tok)
            return fail(q.query_id + ": category token '" + tok + "'");
    }
    if (pats.count(Pattern::Appearance) != 1 ||
        pats.count(Pattern::Replace) != 1 || pats.count(Pattern::Remove) != 2)
      return fail(p.pair_id + ": pattern multiset wrong");
    if (dirs.size() != 2) return fail(p.pair_id + ": remove directions wrong");
    for (std::size_t i = 0; i < p.queries.size(); ++i)
      for (std::size_t j = i + 1; j < p.queries.size(); ++j)
        if (iou(p.queries[i].gt, p.queries[j].gt) > 0.1)
          return fail(p.pair_id + ": gt boxes overlap with IoU > 0.1");
    // Pixel-difference locality.
    for (std::size_t y = 0; y < p.img1.height; ++y)
      for (std::size_t x = 0; x < p.img1.width; ++x) {
        const float* u = p.img1.at(x, y);
        const float* v = p.img2.at(x, y);
        if (u[0] == v[0] && u[1] == v[1] && u[2] == v[2]) continue;
        double cx = (double(x) + 0.5) / double(cfg.canvas);
        double cy = (double(y) + 0.5) / double(cfg.canvas);
        bool covered = false;
        for (const auto& q : p.queries)
          if (cx >= q.gt.x1 - pad && cx <= q.gt.x2 + pad &&
              cy >= q.gt.y1 - pad && cy <= q.gt.y2 + pad)
            covered = true;
        if (!covered)
          return fail(p.pair_id + ": pixel difference outside gt regions");
      }
    // Bitwise regeneration, sampled.
    if (audit.uniform() < 0.05) {
      DifferencePair r = make_pair(1, idx, cfg);
      if (r.img1.px != p.img1.px || r.img2.px != p.img2.px)
        return fail(p.pair_id + ": images not bitwise reproducible");
      for (std::size_t i = 0; i < 4; ++i)
        if (r.queries[i].text != p.queries[i].text ||
            r.queries[i].gt.x1 != p.queries[i].gt.x1)
          return fail(p.pair_id + ": queries not reproducible");
    }
  }
  // On-disk regeneration is byte-identical.
  std::string d1 = (fs::temp_directory_path() / "idg_acc_gen1").string();
  std::string d2 = (fs::temp_directory_path() / "idg_acc_gen2").string();
  fs::remove_all(d1);
  fs::remove_all(d2);
  generate_dataset(9, 100, cfg, d1);
  generate_dataset(9, 100, cfg, d2);
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  };
  if (slurp(fs::path(d1) / "manifest.jsonl") !=
      slurp(fs::path(d2) / "manifest.jsonl"))
    return fail("manifest regeneration not byte-identical");
  for (const auto& e : fs::directory_iterator(fs::path(d1) / "images"))
    if (slurp(e.path()) != slurp(fs::path(d2) / "images" / e.path().filename()))
      return fail("image regeneration not byte-identical");
  fs::remove_all(d1);
  fs::remove_all(d2);
  return "10000 pairs audited";
}

// ---- criterion 8: format conformance ----

std::string format_conformance() {
  // PPM golden fixture.
  Image white(1, 1);
  white.px = {1.0f, 1.0f, 1.0f};
  std::string ppm_path = (fs::temp_directory_path() / "idg_acc_white.ppm").string();
  write_image(ppm_path, white);
  std::ifstream pf(ppm_path, std::ios::binary);
  std::string ppm_bytes((std::istreambuf_iterator<char>(pf)),
                        std::istreambuf_iterator<char>());
  const std::string golden = std::string("P6\n1 1\n255\n") +
                             std::string("\xff\xff\xff", 3);
  if (ppm_bytes != golden) return fail("PPM golden fixture mismatch");

  // Manifest golden fixture.
  ManifestRecord r;
  r.pair_id = "pair_000001";
  r.image1 = "images/pair_000001_1.ppm";
  r.image2 = "images/pair_000001_2.ppm";
  r.query_id = "pair_000001_q0";
  r.text = "locate the object that changed its look";
  r.pattern = "appearance";
  r.direction = "n/a";
  r.gt_box = {0.25, 0.25, 0.5, 0.5};
  r.split = "train";
  r.template_id = 3;
  std::string man_path = (fs::temp_directory_path() / "idg_acc_man.jsonl").string();
  write_manifest(man_path, {r});
  std::ifstream mf(man_path, std::ios::binary);
  std::string man_bytes((std::istreambuf_iterator<char>(mf)),
                        std::istreambuf_iterator<char>());
  const std::string man_golden =
      R"({"pair_id":"pair_000001","image1":"images/pair_000001_1.ppm",)"
      R"("image2":"images/pair_000001_2.ppm","query_id":"pair_000001_q0",)"
      R"("text":"locate the object that changed its look",)"
      R"("pattern":"appearance","direction":"n/a",)"
      R"("gt_box":[0.25,0.25,0.5,0.5],"split":"train","template_id":3})"
      "\n";
  if (man_bytes != man_golden) return fail("manifest golden fixture mismatch");

  // Malformed predictions are rejected with an actionable message.
  std::string bad_path = (fs::temp_directory_path() / "idg_acc_bad.jsonl").string();
  std::ofstream bf(bad_path);
  bf << "{\"query_id\":\"q0\",\"box\":[0.1,0.1,0.2]}\n";
  bf.close();
  try {
    read_predictions(bad_path);
    return fail("malformed prediction file accepted");
  } catch (const std::runtime_error& e) {
    std::string what = e.what();
    if (what.find("line 1") == std::string::npos)
      return fail("rejection message lacks a line number: " + what);
  }

  // Perfect predictions print 100.0 in all four columns.
  std::vector<ManifestRecord> manifest;
  std::vector<PredictionRecord> preds;
  const char* pats[] = {"appearance", "replace", "remove", "remove"};
  for (int i = 0; i < 4; ++i) {
    ManifestRecord m = r;
    m.query_id = "pair_000001_q" + std::to_string(i);
    m.pattern = pats[i];
    m.direction = i >= 2 ? (i == 2 ? "missing-in-first" : "missing-in-second")
                         : "n/a";
    m.gt_box = {0.1 * i, 0.1, 0.1 * i + 0.2, 0.4};
    manifest.push_back(m);
    preds.push_back({m.query_id, m.gt_box, 1.0});
  }
  std::string table = format_report(evaluate(preds, manifest));
  std::size_t hits = 0;
  for (std::size_t pos = table.find("100.0"); pos != std::string::npos;
       pos = table.find("100.0", pos + 1))
    ++hits;
  if (hits != 4) return fail("perfect eval did not print four 100.0 columns");
  return "PPM + manifest goldens, rejection, perfect eval";
}

// ---- criterion 6: learning smoke ----

const std::string kCacheDir = "acceptance_cache";

Dataset benchmark_dataset() {
  std::string dir = kCacheDir + "/bench2000";
  if (!fs::exists(fs::path(dir) / "manifest.jsonl")) {
    fs::create_directories(dir);
    generate_dataset(1, 2000, DatagenConfig{}, dir);
  }
  return load_dataset(dir);
}

std::string memorization() {
  std::string dir = kCacheDir + "/memorize8";
  if (!fs::exists(fs::path(dir) / "manifest.jsonl")) {
    fs::create_directories(dir);
    generate_dataset(11, 8, DatagenConfig{}, dir);
  }
  Dataset data = load_dataset(dir);
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.epochs = 300;
  cfg.batch_size = 16;
  TrainResult r = train(cfg, data);
  auto preds = predict_split(r.params, cfg.model, data, "all");
  EvalReport rep = evaluate(preds, split_records(data, "all"));
  char buf[96];
  std::snprintf(buf, sizeof buf, "Diff-All %.1f on 8 pairs (need 100.0)",
                rep.diff_all);
  if (rep.diff_all < 100.0) return fail(buf);
  return buf;
}

std::string benchmark() {
  auto t0 = clock_type::now();
  Dataset data = benchmark_dataset();
  TrainConfig cfg;  // library defaults are the benchmark configuration
  TrainResult r = train(cfg, data);
  auto preds = predict_split(r.params, cfg.model, data, "test");
  auto records = split_records(data, "test");
  EvalReport trained = evaluate(preds, records);

  EvalReport rnd = evaluate(random_box_predictions(data, "test", 99), records);
  auto untrained_params = init_params<float>(cfg.model, build_vocabulary(), 99);
  EvalReport cold =
      evaluate(predict_split(untrained_params, cfg.model, data, "test"), records);

  double secs = std::chrono::duration<double>(clock_type::now() - t0).count();
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "Diff-All %.1f (need >=70), random %.1f, untrained %.1f (both "
                "<=15), %.0fs",
                trained.diff_all, rnd.diff_all, cold.diff_all, secs);
  if (trained.diff_all < 70.0 || rnd.diff_all > 15.0 || cold.diff_all > 15.0)
    return fail(buf);
  if (secs > 3600.0) return fail(std::string(buf) + " (over 1h)");
  return buf;
}

// ---- criterion 7: ablation trends ----

std::string ablation_trends() {
  Dataset data = benchmark_dataset();
  TrainConfig cfg;

  auto stage = ablate("stage", cfg, data);
  double none = stage.front().report.diff_all;
  double full = stage.back().report.diff_all;
  if (full - none < 10.0)
    return fail("DEM margin " + std::to_string(full - none) + " < 10 points");

  auto scale = ablate("data-scale", cfg, data);
  for (std::size_t i = 1; i < scale.size(); ++i)
    if (scale[i].report.diff_all < scale[i - 1].report.diff_all - 2.0)
      return fail("data-scale not nondecreasing at " + scale[i].label);

  auto pattern = ablate("pattern", cfg, data);
  const EvalReport& full_run = pattern.back().report;
  struct Probe {
    std::size_t row;
    double EvalReport::*excluded;
    double EvalReport::*others[2];
  };
  const Probe probes[] = {
      {0, &EvalReport::diff_app, {&EvalReport::diff_rep, &EvalReport::diff_rem}},
      {1, &EvalReport::diff_rem, {&EvalReport::diff_app, &EvalReport::diff_rep}},
      {2, &EvalReport::diff_rep, {&EvalReport::diff_app, &EvalReport::diff_rem}},
  };
  for (const auto& pr : probes) {
    const EvalReport& rep = pattern[pr.row].report;
    if (rep.*pr.excluded >= 20.0)
      return fail(pattern[pr.row].label + ": excluded subset " +
                  std::to_string(rep.*pr.excluded) + " >= 20");
    for (auto m : pr.others)
      if (std::abs(rep.*m - full_run.*m) > 10.0)
        return fail(pattern[pr.row].label + ": retained subset drifted > 10");
  }

  auto intensity = ablate("intensity", cfg, data);
  double best = 0.0;
  double at075 = 0.0;
  for (const auto& row : intensity) {
    best = std::max(best, row.report.diff_all);
    if (row.label == "0.75") at075 = row.report.diff_all;
  }
  if (best - at075 > 3.0)
    return fail("alpha=0.75 is " + std::to_string(best - at075) +
                " points behind the best setting");

  char buf[128];
  std::snprintf(buf, sizeof buf,
                "DEM +%.1f, data-scale monotone, pattern exclusions ok, "
                "alpha 0.75 within %.1f of best",
                full - none, best - at075);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = argc > 1 ? argv[1] : "fast";
  if (mode == "fast") {
    criterion("criterion 1: DEM algebra", dem_algebra);
    criterion("criterion 2: gradient fidelity", gradient_fidelity);
    criterion("criterion 3: Hungarian oracle", hungarian_oracle);
    criterion("criterion 4: geometry oracles", geometry_oracles);
    criterion("criterion 5: data engine contract", data_contract);
    criterion("criterion 8: format conformance", format_conformance);
  } else if (mode == "learning") {
    criterion("criterion 6a: memorize 8 pairs", memorization);
    criterion("criterion 6b: benchmark vs baselines", benchmark);
  } else if (mode == "ablations") {
    criterion("criterion 7: ablation trends", ablation_trends);
  } else {
    std::fprintf(stderr, "usage: acceptance [fast|learning|ablations]\n");
    return 64;
  }
  return g_failures;
}
