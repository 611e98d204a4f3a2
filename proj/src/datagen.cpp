// SPDX-License-Identifier: Apache-2.0
#include "idg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "idg/dataset_io.hpp"

namespace idg {

const float kBackgroundGray = 0.12f;

static const float kPalette[kPaletteSize][3] = {
    {0.90f, 0.15f, 0.15f},  // red
    {0.15f, 0.80f, 0.20f},  // green
    {0.20f, 0.35f, 0.90f},  // blue
    {0.95f, 0.85f, 0.15f},  // yellow
    {0.85f, 0.20f, 0.80f},  // magenta
    {0.15f, 0.80f, 0.85f},  // cyan
    {0.95f, 0.55f, 0.10f},  // orange
    {0.95f, 0.95f, 0.95f},  // white
};

const float* palette_color(std::size_t c) { return kPalette[c % kPaletteSize]; }

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Ring: return "ring";
    case ShapeKind::Cross: return "cross";
  }
  return "?";
}

const char* fill_name(FillStyle f) {
  switch (f) {
    case FillStyle::Solid: return "solid";
    case FillStyle::Hollow: return "hollow";
    case FillStyle::Striped: return "striped";
  }
  return "?";
}

const char* pattern_name(Pattern p) {
  switch (p) {
    case Pattern::Appearance: return "appearance";
    case Pattern::Replace: return "replace";
    case Pattern::Remove: return "remove";
  }
  return "?";
}

const char* direction_name(RemoveDirection d) {
  switch (d) {
    case RemoveDirection::None: return "n/a";
    case RemoveDirection::MissingInFirst: return "missing-in-first";
    case RemoveDirection::MissingInSecond: return "missing-in-second";
  }
  return "?";
}

// ---- scene sampling ----

Scene sample_scene(std::uint64_t seed, const DatagenConfig& cfg) {
  Rng rng(seed);
  Scene scene;
  scene.canvas = cfg.canvas;
  std::size_t count =
      cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
  std::size_t attempts = 0;
  while (scene.objects.size() < count) {
    if (++attempts > cfg.max_attempts)
      throw std::runtime_error(
          "sample_scene: infeasible config (placement failed after " +
          std::to_string(cfg.max_attempts) + " attempts)");
    double w = rng.uniform(0.10, 0.44);
    double h = rng.uniform(0.10, 0.44);
    double area = w * h;
    if (area < 0.01 || area > 0.20) continue;
    BoxXYXY box;
    box.x1 = rng.uniform(0.0, 1.0 - w);
    box.y1 = rng.uniform(0.0, 1.0 - h);
    box.x2 = box.x1 + w;
    box.y2 = box.y1 + h;
    bool ok = true;
    for (const auto& o : scene.objects)
      if (iou(o.box, box) > 0.1) {
        ok = false;
        break;
      }
    if (!ok) continue;
    SceneObject obj;
    obj.shape = ShapeKind(rng.uniform_int(5));
    obj.color = rng.uniform_int(kPaletteSize);
    obj.fill = FillStyle(rng.uniform_int(3));
    obj.box = box;
    scene.objects.push_back(obj);
  }
  return scene;
}

// ---- edit planning ----

EditPlan plan_edits(const Scene& scene, std::uint64_t seed) {
  if (scene.objects.size() < 4)
    throw std::invalid_argument("plan_edits: scene has fewer than 4 objects");
  Rng rng(seed);

  // Partial Fisher-Yates draw of 4 distinct targets.
  std::vector<std::size_t> idx(scene.objects.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < 4; ++i)
    std::swap(idx[i], idx[i + rng.uniform_int(idx.size() - i)]);

  EditPlan plan;
  Edit& app = plan.edits[0];
  app.kind = Pattern::Appearance;
  app.target = idx[0];
  const SceneObject& a = scene.objects[app.target];
  app.changes_color = rng.uniform_int(2) == 0;
  if (app.changes_color) {
    app.new_color = (a.color + 1 + rng.uniform_int(kPaletteSize - 1)) %
                    kPaletteSize;
    app.new_fill = a.fill;
  } else {
    app.new_color = a.color;
    app.new_fill = FillStyle((std::size_t(a.fill) + 1 + rng.uniform_int(2)) % 3);
  }

  Edit& rep = plan.edits[1];
  rep.kind = Pattern::Replace;
  rep.target = idx[1];
  const SceneObject& r = scene.objects[rep.target];
  rep.new_shape = ShapeKind((std::size_t(r.shape) + 1 + rng.uniform_int(4)) % 5);

  plan.edits[2] = Edit{Pattern::Remove, idx[2], 0};
  plan.edits[3] = Edit{Pattern::Remove, idx[3], 1};

  // Uniform over the two ways to pair the modifications with the removals.
  bool app_first = rng.uniform_int(2) == 0;
  app.branch = app_first ? 0 : 1;
  rep.branch = app_first ? 1 : 0;
  return plan;
}

// ---- rasterization ----

namespace {

// Interior test in unit box coordinates (u, v in [0,1]).
bool shape_interior(ShapeKind s, double u, double v) {
  switch (s) {
    case ShapeKind::Square:
      return u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0;
    case ShapeKind::Circle: {
      double du = (u - 0.5) / 0.5, dv = (v - 0.5) / 0.5;
      return du * du + dv * dv <= 1.0;
    }
    case ShapeKind::Triangle:
      // Apex at the top edge midpoint, base along the bottom edge.
      return v >= 0.0 && v <= 1.0 && std::abs(u - 0.5) <= v / 2.0;
    case ShapeKind::Ring: {
      double du = (u - 0.5) / 0.5, dv = (v - 0.5) / 0.5;
      double r2 = du * du + dv * dv;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    case ShapeKind::Cross:
      return (u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0) &&
             (std::abs(u - 0.5) <= 0.17 || std::abs(v - 0.5) <= 0.17);
  }
  return false;
}

bool covered(const SceneObject& obj, double u, double v, long sx, long sy) {
  if (!shape_interior(obj.shape, u, v)) return false;
  switch (obj.fill) {
    case FillStyle::Solid:
      return true;
    case FillStyle::Hollow: {
      // Border band: interior minus a 72%-scaled copy about the center.
      double su = (u - 0.5) / 0.72 + 0.5;
      double sv = (v - 0.5) / 0.72 + 0.5;
      return !shape_interior(obj.shape, su, sv);
    }
    case FillStyle::Striped:
      // Diagonal stripes in supersampled pixel space, period 8.
      return ((sx + sy) / 4) % 2 == 0;
  }
  return false;
}

void draw_object(Image& canvas, const SceneObject& obj, std::size_t ss) {
  const float* rgb = palette_color(obj.color);
  std::size_t w = canvas.width;  // supersampled extent
  long px0 = long(std::floor(obj.box.x1 * double(w)));
  long px1 = long(std::ceil(obj.box.x2 * double(w)));
  long py0 = long(std::floor(obj.box.y1 * double(w)));
  long py1 = long(std::ceil(obj.box.y2 * double(w)));
  double bw = obj.box.width(), bh = obj.box.height();
  for (long y = std::max(long(0), py0); y < std::min(long(w), py1); ++y)
    for (long x = std::max(long(0), px0); x < std::min(long(w), px1); ++x) {
      double cx = (double(x) + 0.5) / double(w);
      double cy = (double(y) + 0.5) / double(w);
      double u = (cx - obj.box.x1) / bw;
      double v = (cy - obj.box.y1) / bh;
      if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) continue;
      if (covered(obj, u, v, x, y)) {
        float* p = canvas.at(std::size_t(x), std::size_t(y));
        p[0] = rgb[0];
        p[1] = rgb[1];
        p[2] = rgb[2];
      }
    }
  (void)ss;
}

Image downsample(const Image& hi, std::size_t ss) {
  Image lo(hi.width / ss, hi.height / ss);
  float inv = 1.0f / float(ss * ss);
  for (std::size_t y = 0; y < lo.height; ++y)
    for (std::size_t x = 0; x < lo.width; ++x) {
      float acc[3] = {0, 0, 0};
      for (std::size_t dy = 0; dy < ss; ++dy)
        for (std::size_t dx = 0; dx < ss; ++dx) {
          const float* p = hi.at(x * ss + dx, y * ss + dy);
          acc[0] += p[0];
          acc[1] += p[1];
          acc[2] += p[2];
        }
      float* q = lo.at(x, y);
      q[0] = acc[0] * inv;
      q[1] = acc[1] * inv;
      q[2] = acc[2] * inv;
    }
  return lo;
}

// Renders one branch: modified / removed objects swap in their edited form.
Image render_branch(const Scene& scene, const EditPlan& plan, int branch,
                    const DatagenConfig& cfg) {
  std::size_t ss = cfg.supersample;
  Image hi(scene.canvas * ss, scene.canvas * ss);
  for (auto& v : hi.px) v = kBackgroundGray;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    SceneObject obj = scene.objects[i];
    bool removed = false;
    for (const Edit& e : plan.edits) {
      if (e.target != i || e.branch != branch) continue;
      switch (e.kind) {
        case Pattern::Remove:
          removed = true;
          break;
        case Pattern::Appearance:
          obj.color = e.new_color;
          obj.fill = e.new_fill;
          break;
        case Pattern::Replace:
          obj.shape = e.new_shape;
          break;
      }
    }
    if (!removed) draw_object(hi, obj, ss);
  }
  return downsample(hi, ss);
}

}  // namespace

RenderedPair apply_edits(const Scene& scene, const EditPlan& plan,
                         const DatagenConfig& cfg, std::uint64_t noise_seed) {
  RenderedPair out;
  out.img1 = render_branch(scene, plan, 0, cfg);
  out.img2 = render_branch(scene, plan, 1, cfg);
  // One shared noise field keeps unedited regions bitwise identical.
  Rng noise(noise_seed);
  for (std::size_t i = 0; i < out.img1.px.size(); ++i) {
    float n = float(noise.normal(0.0, cfg.noise_sigma));
    out.img1.px[i] = std::clamp(out.img1.px[i] + n, 0.0f, 1.0f);
    out.img2.px[i] = std::clamp(out.img2.px[i] + n, 0.0f, 1.0f);
  }
  for (std::size_t i = 0; i < 4; ++i)
    out.gt[i] = scene.objects[plan.edits[i].target].box;
  return out;
}

// ---- query templating ----

namespace {

const std::vector<std::string> kAppearanceTemplates = {
    "find the object whose appearance changed between the two images",
    "locate the item that looks different in the second image",
    "which object has a changed look between the images",
    "point out the object whose style was altered",
    "identify the object that appears different while staying the same kind",
    "ground the region whose visual style differs between the two images",
};

const std::vector<std::string> kReplaceTemplates = {
    "find the object that was replaced with a different kind of thing",
    "locate the item that was swapped for another object",
    "which region had its object exchanged for a different one",
    "point out the object whose category changed between the images",
    "identify the spot where one object became a different object",
    "ground the region where the original item was substituted",
};

const std::vector<std::string> kRemoveMissingSecondTemplates = {
    "locate the object present in the first image but missing from the second",
    "find the item that disappeared from the second image",
    "which object from the first image is absent in the second",
    "point out the region where something was erased in the second image",
    "identify the object that exists only in the first image",
};

const std::vector<std::string> kRemoveMissingFirstTemplates = {
    "locate the object present in the second image but missing from the first",
    "find the item that appears only in the second image",
    "which object from the second image is absent in the first",
    "point out the region where something was erased in the first image",
    "identify the object that exists only in the second image",
};

// Global template ids: appearance 0.., replace 100.., remove 200../300..
int template_base(Pattern p, RemoveDirection d) {
  if (p == Pattern::Appearance) return 0;
  if (p == Pattern::Replace) return 100;
  return d == RemoveDirection::MissingInSecond ? 200 : 300;
}

}  // namespace

std::vector<std::string> query_templates(Pattern p, RemoveDirection d) {
  switch (p) {
    case Pattern::Appearance: return kAppearanceTemplates;
    case Pattern::Replace: return kReplaceTemplates;
    case Pattern::Remove:
      return d == RemoveDirection::MissingInSecond
                 ? kRemoveMissingSecondTemplates
                 : kRemoveMissingFirstTemplates;
  }
  return {};
}

const std::vector<std::string>& category_lexicon() {
  static const std::vector<std::string> lex = {
      "circle", "square", "triangle", "ring",   "cross",  "red",
      "green",  "blue",   "yellow",   "magenta", "cyan",  "orange",
      "white",  "solid",  "hollow",   "striped"};
  return lex;
}

std::vector<Query> make_queries(const EditPlan& plan, const Scene& scene,
                                const std::string& pair_id, Rng& rng) {
  // Emission order follows the paper's T1..T4 framing: replace, appearance,
  // then the two removals (missing-in-first before missing-in-second).
  struct Slot {
    const Edit* e;
    Pattern p;
    RemoveDirection d;
  };
  const Edit& rm0 = plan.edits[2];  // branch 0: absent in image 1
  const Edit& rm1 = plan.edits[3];  // branch 1: absent in image 2
  std::vector<Slot> slots = {
      {&plan.edits[1], Pattern::Replace, RemoveDirection::None},
      {&plan.edits[0], Pattern::Appearance, RemoveDirection::None},
      {&rm0, Pattern::Remove, RemoveDirection::MissingInFirst},
      {&rm1, Pattern::Remove, RemoveDirection::MissingInSecond},
  };
  std::vector<Query> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& s = slots[i];
    auto templates = query_templates(s.p, s.d);
    std::size_t pick = rng.uniform_int(templates.size());
    Query q;
    q.query_id = pair_id + "_q" + std::to_string(i);
    q.text = templates[pick];
    q.pattern = s.p;
    q.direction = s.d;
    q.gt = scene.objects[s.e->target].box;
    q.template_id = template_base(s.p, s.d) + int(pick);
    out.push_back(std::move(q));
  }
  return out;
}

// ---- pair assembly ----

std::string pair_id_for(std::size_t pair_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%06zu", pair_index);
  return buf;
}

static std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string split_for(const std::string& pair_id) {
  return fnv1a64(pair_id) % 10 == 0 ? "test" : "train";
}

DifferencePair make_pair(std::uint64_t seed, std::size_t pair_index,
                         const DatagenConfig& cfg) {
  Rng root(seed);
  Rng pair_rng = root.split(pair_index);
  std::uint64_t scene_seed = pair_rng.split(1).next_u64();
  std::uint64_t plan_seed = pair_rng.split(2).next_u64();
  std::uint64_t noise_seed = pair_rng.split(3).next_u64();
  Rng query_rng = pair_rng.split(4);

  DifferencePair dp;
  dp.pair_id = pair_id_for(pair_index);
  Scene scene = sample_scene(scene_seed, cfg);
  EditPlan plan = plan_edits(scene, plan_seed);
  RenderedPair rendered = apply_edits(scene, plan, cfg, noise_seed);
  dp.img1 = std::move(rendered.img1);
  dp.img2 = std::move(rendered.img2);
  dp.queries = make_queries(plan, scene, dp.pair_id, query_rng);
  return dp;
}

void generate_dataset(std::uint64_t seed, std::size_t n_pairs,
                      const DatagenConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec)
    throw std::runtime_error("generate_dataset: cannot create " + out_dir +
                             "/images: " + ec.message());
  std::vector<ManifestRecord> manifest;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    DifferencePair dp = make_pair(seed, i, cfg);
    std::string rel1 = "images/" + dp.pair_id + "_1.ppm";
    std::string rel2 = "images/" + dp.pair_id + "_2.ppm";
    write_image((fs::path(out_dir) / rel1).string(), dp.img1);
    write_image((fs::path(out_dir) / rel2).string(), dp.img2);
    std::string split = split_for(dp.pair_id);
    for (const Query& q : dp.queries) {
      ManifestRecord r;
      r.pair_id = dp.pair_id;
      r.image1 = rel1;
      r.image2 = rel2;
      r.query_id = q.query_id;
      r.text = q.text;
      r.pattern = pattern_name(q.pattern);
      r.direction = direction_name(q.direction);
      r.gt_box = q.gt;
      r.split = split;
      r.template_id = q.template_id;
      manifest.push_back(std::move(r));
    }
  }
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), manifest);
}

}  // namespace idg
