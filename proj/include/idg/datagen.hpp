// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "idg/geometry.hpp"
#include "idg/image.hpp"
#include "idg/rng.hpp"

namespace idg {

enum class ShapeKind { Circle, Square, Triangle, Ring, Cross };
enum class FillStyle { Solid, Hollow, Striped };

inline constexpr std::size_t kPaletteSize = 8;

// Palette entry c as RGB triple.
const float* palette_color(std::size_t c);
extern const float kBackgroundGray;

const char* shape_name(ShapeKind s);
const char* fill_name(FillStyle f);

struct SceneObject {
  ShapeKind shape;
  std::size_t color;  // palette index
  FillStyle fill;
  BoxXYXY box;
};

struct Scene {
  std::size_t canvas = 64;
  std::vector<SceneObject> objects;
};

enum class Pattern { Appearance, Replace, Remove };
enum class RemoveDirection { None, MissingInFirst, MissingInSecond };

const char* pattern_name(Pattern p);
const char* direction_name(RemoveDirection d);

// One planned edit. branch 0 applies in image 1, branch 1 in image 2.
struct Edit {
  Pattern kind;
  std::size_t target;  // index into Scene::objects
  int branch;
  // appearance payload
  std::size_t new_color = 0;
  FillStyle new_fill = FillStyle::Solid;
  bool changes_color = false;
  // replace payload
  ShapeKind new_shape = ShapeKind::Circle;
};

// Exactly the multiset {appearance, replace, remove, remove} over four
// distinct objects; each branch carries one modification and one removal.
struct EditPlan {
  std::array<Edit, 4> edits;  // [appearance, replace, remove@branch0, remove@branch1]
};

struct Query {
  std::string query_id;
  std::string text;
  Pattern pattern;
  RemoveDirection direction;
  BoxXYXY gt;
  int template_id;
};

struct DifferencePair {
  std::string pair_id;
  Image img1, img2;
  std::vector<Query> queries;  // exactly 4: replace, appearance, remove x2
};

struct DatagenConfig {
  std::size_t canvas = 64;
  std::size_t min_objects = 6;
  std::size_t max_objects = 10;
  double noise_sigma = 0.02;
  std::size_t max_attempts = 10000;
  std::size_t supersample = 2;
};

Scene sample_scene(std::uint64_t seed, const DatagenConfig& cfg);

EditPlan plan_edits(const Scene& scene, std::uint64_t seed);

struct RenderedPair {
  Image img1, img2;
  std::array<BoxXYXY, 4> gt;  // aligned with EditPlan::edits
};

// Renders both branches; unedited objects are pixel-identical across the two
// images (shared supersampled rasterization and shared noise field).
RenderedPair apply_edits(const Scene& scene, const EditPlan& plan,
                         const DatagenConfig& cfg, std::uint64_t noise_seed);

std::vector<Query> make_queries(const EditPlan& plan, const Scene& scene,
                                const std::string& pair_id, Rng& rng);

// Fully deterministic pair synthesis: child streams derive from
// (seed, pair_index) only.
DifferencePair make_pair(std::uint64_t seed, std::size_t pair_index,
                         const DatagenConfig& cfg);

std::string pair_id_for(std::size_t pair_index);

// Train/test split as a pure function of the pair id (stable across
// regenerations); roughly 10% of ids land in "test".
std::string split_for(const std::string& pair_id);

// Template table access for audits: all query templates for a pattern and
// direction.
std::vector<std::string> query_templates(Pattern p, RemoveDirection d);

// Tokens that must never appear in query text (category lexicon).
const std::vector<std::string>& category_lexicon();

// Writes n_pairs pairs (images + manifest.jsonl) under out_dir.
void generate_dataset(std::uint64_t seed, std::size_t n_pairs,
                      const DatagenConfig& cfg, const std::string& out_dir);

}  // namespace idg
