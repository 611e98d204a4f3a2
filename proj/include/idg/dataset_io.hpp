// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "idg/geometry.hpp"
#include "idg/image.hpp"

namespace idg {

// Binary PPM (P6), 8-bit. Bit-exact and diff-able; the normative on-disk
// image format for the whole artifact.
void write_image(const std::string& path, const Image& img);
Image read_image(const std::string& path);

// One manifest line per query (JSONL, stable key order).
struct ManifestRecord {
  std::string pair_id;
  std::string image1, image2;  // relative paths
  std::string query_id;
  std::string text;
  std::string pattern;    // appearance | replace | remove
  std::string direction;  // missing-in-first | missing-in-second | n/a
  BoxXYXY gt_box;
  std::string split;  // train | test
  int template_id = 0;
};

void write_manifest(const std::string& path,
                    const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::string& path);

struct PredictionRecord {
  std::string query_id;
  BoxXYXY box;
  double p_diff = 0.0;
};

void write_predictions(const std::string& path,
                       const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_predictions(const std::string& path);

}  // namespace idg
