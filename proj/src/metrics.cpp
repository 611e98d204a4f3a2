// SPDX-License-Identifier: Apache-2.0
#include "idg/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace idg {

std::size_t EvalReport::count(const std::string& pattern) const {
  std::size_t n = 0;
  for (const auto& q : per_query)
    if (q.pattern == pattern) ++n;
  return n;
}

EvalReport evaluate(const std::vector<PredictionRecord>& predictions,
                    const std::vector<ManifestRecord>& manifest,
                    double threshold) {
  std::map<std::string, const PredictionRecord*> by_id;
  std::string duplicates;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.query_id, &p).second)
      duplicates += (duplicates.empty() ? "" : ", ") + p.query_id;
  }
  if (!duplicates.empty())
    throw std::runtime_error("evaluate: duplicate predictions for: " +
                             duplicates);
  std::string missing;
  for (const auto& m : manifest)
    if (!by_id.count(m.query_id))
      missing += (missing.empty() ? "" : ", ") + m.query_id;
  if (!missing.empty())
    throw std::runtime_error("evaluate: missing predictions for: " + missing);

  EvalReport r;
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& m : manifest) {
    const PredictionRecord& p = *by_id.at(m.query_id);
    EvalReport::QueryResult qr;
    qr.query_id = m.query_id;
    qr.pattern = m.pattern;
    qr.iou = iou(p.box, m.gt_box);
    qr.correct = qr.iou >= threshold;
    auto& [correct, total] = tally[m.pattern];
    ++total;
    if (qr.correct) ++correct;
    r.per_query.push_back(std::move(qr));
  }
  auto pct = [&](const std::string& pat) {
    auto it = tally.find(pat);
    if (it == tally.end() || it->second.second == 0) return 0.0;
    return 100.0 * double(it->second.first) / double(it->second.second);
  };
  r.diff_app = pct("appearance");
  r.diff_rem = pct("remove");
  r.diff_rep = pct("replace");
  std::size_t correct = 0;
  for (const auto& q : r.per_query)
    if (q.correct) ++correct;
  r.diff_all = r.per_query.empty()
                   ? 0.0
                   : 100.0 * double(correct) / double(r.per_query.size());
  return r;
}

std::string format_report(const EvalReport& r) {
  char buf[256];
  std::string out;
  out += "Diff-App  Diff-Rem  Diff-Rep  Diff-All\n";
  std::snprintf(buf, sizeof buf, "%8.1f  %8.1f  %8.1f  %8.1f\n", r.diff_app,
                r.diff_rem, r.diff_rep, r.diff_all);
  out += buf;
  return out;
}

void write_report(const std::string& path, const EvalReport& r) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_report: cannot open " + path);
  nlohmann::ordered_json summary;
  summary["diff_app"] = r.diff_app;
  summary["diff_rem"] = r.diff_rem;
  summary["diff_rep"] = r.diff_rep;
  summary["diff_all"] = r.diff_all;
  f << summary.dump() << "\n";
  for (const auto& q : r.per_query) {
    nlohmann::ordered_json j;
    j["query_id"] = q.query_id;
    j["pattern"] = q.pattern;
    j["iou"] = q.iou;
    j["correct"] = q.correct;
    f << j.dump() << "\n";
  }
}

}  // namespace idg
