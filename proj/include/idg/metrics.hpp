// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "idg/dataset_io.hpp"

namespace idg {

// Precision@IoU-threshold per pattern subset and overall. With exactly one
// ground truth and one emitted box per query, AP@50 degenerates to this.
struct EvalReport {
  double diff_app = 0.0;
  double diff_rem = 0.0;
  double diff_rep = 0.0;
  double diff_all = 0.0;

  struct QueryResult {
    std::string query_id;
    std::string pattern;
    double iou = 0.0;
    bool correct = false;
  };
  std::vector<QueryResult> per_query;

  std::size_t count(const std::string& pattern) const;
};

// Scores `predictions` against every record in `manifest` (callers filter by
// split). Comparison is inclusive at the threshold and computed in f64.
// Throws on a missing or duplicate prediction, listing the offending query
// ids.
EvalReport evaluate(const std::vector<PredictionRecord>& predictions,
                    const std::vector<ManifestRecord>& manifest,
                    double threshold = 0.5);

// Table 1-style aligned text rendering (Diff-App / Diff-Rem / Diff-Rep /
// Diff-All columns).
std::string format_report(const EvalReport& r);

void write_report(const std::string& path, const EvalReport& r);

}  // namespace idg
