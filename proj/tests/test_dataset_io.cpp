// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "idg/dataset_io.hpp"
#include "idg/rng.hpp"

using namespace idg;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("idg_io_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

ManifestRecord sample_record(int i) {
  ManifestRecord r;
  r.pair_id = "pair_00000" + std::to_string(i);
  r.image1 = "images/" + r.pair_id + "_1.ppm";
  r.image2 = "images/" + r.pair_id + "_2.ppm";
  r.query_id = r.pair_id + "_q0";
  r.text = "find the object whose appearance changed between the two images";
  r.pattern = "appearance";
  r.direction = "n/a";
  r.gt_box = {0.1, 0.2, 0.3, 0.4};
  r.split = "train";
  r.template_id = 0;
  return r;
}

}  // namespace

TEST_CASE("ppm 1x1 white golden bytes") {
  Image img(1, 1);
  img.px = {1.0f, 1.0f, 1.0f};
  std::string path = tmp_path("white.ppm");
  write_image(path, img);
  std::string bytes = slurp(path);
  // [DERIVED: byte-level construction from the P6 format definition]
  const std::string golden = std::string("P6\n1 1\n255\n") +
                             std::string("\xff\xff\xff", 3);
  CHECK(bytes.size() == 14);
  CHECK(bytes == golden);
}

TEST_CASE("ppm round-trip equals 8-bit quantization") {
  Rng rng(66);
  Image img(9, 5);
  for (auto& v : img.px) v = float(rng.uniform());
  std::string path = tmp_path("roundtrip.ppm");
  write_image(path, img);
  Image back = read_image(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (std::size_t i = 0; i < img.px.size(); ++i) {
    float q = float(std::lround(img.px[i] * 255.0f)) / 255.0f;
    CHECK(back.px[i] == doctest::Approx(q).epsilon(1e-6));
  }
  // Re-writing the read image is byte-stable.
  std::string path2 = tmp_path("roundtrip2.ppm");
  write_image(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("ppm truncation reports offset") {
  Image img(4, 4);
  std::string path = tmp_path("trunc.ppm");
  write_image(path, img);
  std::string bytes = slurp(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), std::streamsize(bytes.size() - 5));
  f.close();
  CHECK_THROWS_WITH_AS(read_image(path), doctest::Contains("offset"),
                       std::runtime_error);

  std::string bad = tmp_path("badmagic.ppm");
  std::ofstream g(bad, std::ios::binary);
  g << "P5\n1 1\n255\nx";
  g.close();
  CHECK_THROWS(read_image(bad));
}

TEST_CASE("manifest round-trip and golden re-serialization") {
  std::vector<ManifestRecord> records;
  for (int p = 0; p < 2; ++p) {
    for (int q = 0; q < 4; ++q) {
      ManifestRecord r = sample_record(p);
      r.query_id = r.pair_id + "_q" + std::to_string(q);
      if (q == 1) {
        r.pattern = "replace";
      } else if (q >= 2) {
        r.pattern = "remove";
        r.direction = q == 2 ? "missing-in-first" : "missing-in-second";
      }
      records.push_back(r);
    }
  }
  std::string path = tmp_path("manifest.jsonl");
  write_manifest(path, records);
  auto back = read_manifest(path);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].query_id == records[i].query_id);
    CHECK(back[i].pattern == records[i].pattern);
    CHECK(back[i].gt_box.x1 == records[i].gt_box.x1);
    CHECK(back[i].template_id == records[i].template_id);
  }
  // Byte-identical re-serialization.
  std::string path2 = tmp_path("manifest2.jsonl");
  write_manifest(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("manifest schema violations carry line numbers") {
  std::string path = tmp_path("badmanifest.jsonl");

  SUBCASE("missing gt_box") {
    std::ofstream f(path);
    f << R"({"pair_id":"p","image1":"a","image2":"b","query_id":"q",)"
      << R"("text":"t","pattern":"appearance","direction":"n/a",)"
      << R"("split":"train","template_id":0})" << "\n";
    f.close();
    CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("gt_box"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(read_manifest(path), doctest::Contains("line 1"),
                         std::runtime_error);
  }

  SUBCASE("inconsistent pattern/direction") {
    ManifestRecord r = sample_record(0);
    r.pattern = "appearance";
    r.direction = "missing-in-first";
    std::string ok = tmp_path("inconsistent.jsonl");
    write_manifest(ok, {r});
    CHECK_THROWS(read_manifest(ok));
  }

  SUBCASE("invalid box") {
    ManifestRecord r = sample_record(0);
    r.gt_box = {0.5, 0.5, 0.2, 0.2};
    std::string bad = tmp_path("badbox.jsonl");
    write_manifest(bad, {r});
    CHECK_THROWS(read_manifest(bad));
  }

  SUBCASE("bad split value") {
    ManifestRecord r = sample_record(0);
    r.split = "validation";
    std::string bad = tmp_path("badsplit.jsonl");
    write_manifest(bad, {r});
    CHECK_THROWS(read_manifest(bad));
  }
}

TEST_CASE("predictions round-trip, golden, schema errors") {
  std::vector<PredictionRecord> preds;
  for (int i = 0; i < 3; ++i) {
    PredictionRecord p;
    p.query_id = "pair_00000" + std::to_string(i) + "_q0";
    p.box = {0.1 * i, 0.1, 0.2 + 0.1 * i, 0.5};
    p.p_diff = 0.25 * i;
    preds.push_back(p);
  }
  std::string path = tmp_path("preds.jsonl");
  write_predictions(path, preds);
  auto back = read_predictions(path);
  REQUIRE(back.size() == 3);
  CHECK(back[1].box.x1 == preds[1].box.x1);
  CHECK(back[2].p_diff == preds[2].p_diff);

  std::string path2 = tmp_path("preds2.jsonl");
  write_predictions(path2, back);
  CHECK(slurp(path) == slurp(path2));

  std::ofstream f(path, std::ios::trunc);
  f << "{\"query_id\":\"q\"}\n";
  f.close();
  CHECK_THROWS_WITH_AS(read_predictions(path), doctest::Contains("line 1"),
                       std::runtime_error);
}
