// SPDX-License-Identifier: Apache-2.0
#include "idg/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace idg {

using ordered_json = nlohmann::ordered_json;

static std::uint8_t quantize(float v) {
  float c = std::clamp(v, 0.0f, 1.0f);
  return std::uint8_t(std::lround(c * 255.0f));
}

void write_image(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_image: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> buf(img.px.size());
  for (std::size_t i = 0; i < img.px.size(); ++i) buf[i] = quantize(img.px[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          std::streamsize(buf.size()));
  if (!f) throw std::runtime_error("write_image: write failed for " + path);
}

static std::string next_token(std::istream& f, const std::string& path) {
  // PPM headers allow '#' comments between tokens.
  std::string tok;
  int c;
  while ((c = f.get()) != EOF) {
    if (c == '#') {
      while ((c = f.get()) != EOF && c != '\n') {}
    } else if (!std::isspace(c)) {
      tok.push_back(char(c));
      while ((c = f.get()) != EOF && !std::isspace(c)) tok.push_back(char(c));
      return tok;
    }
  }
  throw std::runtime_error("read_image: truncated header in " + path +
                           " at offset " + std::to_string(f.tellg()));
}

Image read_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_image: cannot open " + path);
  if (next_token(f, path) != "P6")
    throw std::runtime_error("read_image: " + path + " is not a P6 PPM");
  std::size_t w, h, maxval;
  try {
    w = std::stoul(next_token(f, path));
    h = std::stoul(next_token(f, path));
    maxval = std::stoul(next_token(f, path));
  } catch (const std::logic_error&) {
    throw std::runtime_error("read_image: malformed header in " + path);
  }
  if (maxval != 255)
    throw std::runtime_error("read_image: unsupported maxval " +
                             std::to_string(maxval) + " in " + path);
  std::vector<std::uint8_t> buf(w * h * 3);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (std::size_t(f.gcount()) != buf.size())
    throw std::runtime_error(
        "read_image: truncated payload in " + path + ": expected " +
        std::to_string(buf.size()) + " bytes, got " +
        std::to_string(f.gcount()) + " (offset " +
        std::to_string(std::size_t(f.gcount())) + ")");
  Image img(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i)
    img.px[i] = float(buf[i]) / 255.0f;
  return img;
}

static ordered_json box_to_json(const BoxXYXY& b) {
  return ordered_json::array({b.x1, b.y1, b.x2, b.y2});
}

static BoxXYXY box_from_json(const ordered_json& j, std::size_t line,
                             const char* key) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error("line " + std::to_string(line) + ": key '" + key +
                             "' must be a 4-element array");
  BoxXYXY b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
            j[3].get<double>()};
  if (!b.valid())
    throw std::runtime_error("line " + std::to_string(line) + ": key '" + key +
                             "' violates box invariants");
  return b;
}

static const ordered_json& require(const ordered_json& j, const char* key,
                                   std::size_t line) {
  auto it = j.find(key);
  if (it == j.end())
    throw std::runtime_error("line " + std::to_string(line) +
                             ": missing key '" + key + "'");
  return *it;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const auto& r : records) {
    ordered_json j;
    j["pair_id"] = r.pair_id;
    j["image1"] = r.image1;
    j["image2"] = r.image2;
    j["query_id"] = r.query_id;
    j["text"] = r.text;
    j["pattern"] = r.pattern;
    j["direction"] = r.direction;
    j["gt_box"] = box_to_json(r.gt_box);
    j["split"] = r.split;
    j["template_id"] = r.template_id;
    f << j.dump() << "\n";
  }
  if (!f) throw std::runtime_error("write_manifest: write failed for " + path);
}

std::vector<ManifestRecord> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("read_manifest: " + path + " line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    ManifestRecord r;
    r.pair_id = require(j, "pair_id", lineno).get<std::string>();
    r.image1 = require(j, "image1", lineno).get<std::string>();
    r.image2 = require(j, "image2", lineno).get<std::string>();
    r.query_id = require(j, "query_id", lineno).get<std::string>();
    r.text = require(j, "text", lineno).get<std::string>();
    r.pattern = require(j, "pattern", lineno).get<std::string>();
    r.direction = require(j, "direction", lineno).get<std::string>();
    r.gt_box = box_from_json(require(j, "gt_box", lineno), lineno, "gt_box");
    r.split = require(j, "split", lineno).get<std::string>();
    r.template_id = require(j, "template_id", lineno).get<int>();
    if (r.pattern != "appearance" && r.pattern != "replace" &&
        r.pattern != "remove")
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": unknown pattern '" + r.pattern + "'");
    bool needs_dir = r.pattern == "remove";
    bool has_dir = r.direction == "missing-in-first" ||
                   r.direction == "missing-in-second";
    if (needs_dir != has_dir)
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": pattern '" + r.pattern +
                               "' inconsistent with direction '" + r.direction +
                               "'");
    if (r.split != "train" && r.split != "test")
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": unknown split '" + r.split + "'");
    out.push_back(std::move(r));
  }
  return out;
}

void write_predictions(const std::string& path,
                       const std::vector<PredictionRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_predictions: cannot open " + path);
  for (const auto& r : records) {
    ordered_json j;
    j["query_id"] = r.query_id;
    j["box"] = box_to_json(r.box);
    j["p_diff"] = r.p_diff;
    f << j.dump() << "\n";
  }
  if (!f)
    throw std::runtime_error("write_predictions: write failed for " + path);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_predictions: cannot open " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error("read_predictions: " + path + " line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    PredictionRecord r;
    r.query_id = require(j, "query_id", lineno).get<std::string>();
    r.box = box_from_json(require(j, "box", lineno), lineno, "box");
    r.p_diff = require(j, "p_diff", lineno).get<double>();
    if (!(r.p_diff >= 0.0 && r.p_diff <= 1.0))
      throw std::runtime_error("line " + std::to_string(lineno) +
                               ": p_diff outside [0,1]");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace idg
