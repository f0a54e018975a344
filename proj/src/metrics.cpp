// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "tempocoh/error.hpp"
#include "tempocoh/threading.hpp"

namespace tempocoh {

EvalRecord::EvalRecord(std::string video_id_in, Tensor scores_in, LabelSet truth_in)
    : video_id(std::move(video_id_in)), scores(std::move(scores_in)), truth(std::move(truth_in)) {
  if (scores.rank() != 1) throw ShapeError("record scores must be a vector, got " + scores.shape().to_string());
  if (truth.size() != scores.dim(0)) {
    throw ShapeError("truth size " + std::to_string(truth.size()) + " does not match " +
                     std::to_string(scores.dim(0)) + " scores");
  }
  for (int64_t k = 0; k < scores.dim(0); ++k) {
    double s = scores.at(k);
    if (!(s >= 0.0 && s <= 1.0)) {
      throw DomainError("score " + std::to_string(s) + " for label " + std::to_string(k) +
                        " of record " + video_id + " lies outside [0,1]");
    }
  }
}

namespace {

void require_nonempty(const std::vector<EvalRecord>& records, const char* what) {
  if (records.empty()) throw ContractError(std::string(what) + " needs at least one record");
}

// Label ids of record r ordered by (score desc, id asc), truncated to cap.
std::vector<int64_t> top_labels(const EvalRecord& r, int64_t cap) {
  int64_t k_total = r.scores.dim(0);
  std::vector<int64_t> ids(static_cast<size_t>(k_total));
  for (int64_t k = 0; k < k_total; ++k) ids[static_cast<size_t>(k)] = k;
  std::sort(ids.begin(), ids.end(), [&r](int64_t a, int64_t b) {
    double sa = r.scores.at(a), sb = r.scores.at(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  if (cap < k_total) ids.resize(static_cast<size_t>(cap));
  return ids;
}

}  // namespace

double global_average_precision(const std::vector<EvalRecord>& records, int64_t top_n) {
  require_nonempty(records, "global_average_precision");
  if (top_n < 1) throw ConfigError("top_n must be >= 1, got " + std::to_string(top_n));

  struct Pair {
    double score;
    bool correct;
    int64_t record;
    int64_t label;
  };
  std::vector<Pair> pool;
  int64_t denom = 0;
  for (size_t r = 0; r < records.size(); ++r) {
    const EvalRecord& rec = records[r];
    denom += std::min<int64_t>(rec.truth.count(), top_n);
    for (int64_t id : top_labels(rec, top_n)) {
      pool.push_back({rec.scores.at(id), rec.truth.test(id), static_cast<int64_t>(r), id});
    }
  }
  std::sort(pool.begin(), pool.end(), [&records](const Pair& a, const Pair& b) {
    if (a.score != b.score) return a.score > b.score;
    const std::string& va = records[static_cast<size_t>(a.record)].video_id;
    const std::string& vb = records[static_cast<size_t>(b.record)].video_id;
    if (va != vb) return va < vb;
    return a.label < b.label;
  });

  double ap_sum = 0.0;
  int64_t correct_seen = 0;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].correct) continue;
    ++correct_seen;
    ap_sum += static_cast<double>(correct_seen) / static_cast<double>(i + 1);
  }
  return denom > 0 ? ap_sum / static_cast<double>(denom) : 0.0;
}

namespace {

// AP of class k across records, or -1 when the class has no positives.
double class_average_precision(const std::vector<EvalRecord>& records, int64_t k) {
  struct Entry {
    double score;
    bool correct;
    int64_t record;
  };
  std::vector<Entry> entries;
  entries.reserve(records.size());
  int64_t positives = 0;
  for (size_t r = 0; r < records.size(); ++r) {
    bool correct = records[r].truth.test(k);
    positives += correct ? 1 : 0;
    entries.push_back({records[r].scores.at(k), correct, static_cast<int64_t>(r)});
  }
  if (positives == 0) return -1.0;
  std::sort(entries.begin(), entries.end(), [&records](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    return records[static_cast<size_t>(a.record)].video_id < records[static_cast<size_t>(b.record)].video_id;
  });
  double ap_sum = 0.0;
  int64_t correct_seen = 0;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].correct) continue;
    ++correct_seen;
    ap_sum += static_cast<double>(correct_seen) / static_cast<double>(i + 1);
  }
  return ap_sum / static_cast<double>(positives);
}

}  // namespace

double mean_average_precision(const std::vector<EvalRecord>& records) {
  require_nonempty(records, "mean_average_precision");
  int64_t k_total = records[0].scores.dim(0);
  std::vector<double> per_class(static_cast<size_t>(k_total));
  parallel_for(k_total, [&](int64_t k) { per_class[static_cast<size_t>(k)] = class_average_precision(records, k); });
  double sum = 0.0;
  int64_t used = 0;
  for (double ap : per_class) {
    if (ap < 0.0) continue;
    sum += ap;
    ++used;
  }
  if (used == 0) throw ContractError("mean_average_precision needs at least one class with a positive");
  return sum / static_cast<double>(used);
}

double precision_at_equal_recall(const std::vector<EvalRecord>& records, int64_t* skipped) {
  require_nonempty(records, "precision_at_equal_recall");
  std::vector<double> per_record(records.size(), -1.0);
  parallel_for(static_cast<int64_t>(records.size()), [&](int64_t r) {
    const EvalRecord& rec = records[static_cast<size_t>(r)];
    int64_t n = rec.truth.count();
    if (n == 0) return;
    int64_t correct = 0;
    for (int64_t id : top_labels(rec, n)) correct += rec.truth.test(id) ? 1 : 0;
    per_record[static_cast<size_t>(r)] = static_cast<double>(correct) / static_cast<double>(n);
  });
  double sum = 0.0;
  int64_t used = 0, empty = 0;
  for (double p : per_record) {
    if (p < 0.0) { ++empty; continue; }
    sum += p;
    ++used;
  }
  if (skipped != nullptr) *skipped = empty;
  return used > 0 ? sum / static_cast<double>(used) : 0.0;
}

double hit_at_one(const std::vector<EvalRecord>& records, int64_t* skipped) {
  require_nonempty(records, "hit_at_one");
  std::vector<int8_t> per_record(records.size(), -1);
  parallel_for(static_cast<int64_t>(records.size()), [&](int64_t r) {
    const EvalRecord& rec = records[static_cast<size_t>(r)];
    if (rec.truth.count() == 0) return;
    int64_t best = 0;
    for (int64_t k = 1; k < rec.scores.dim(0); ++k) {
      if (rec.scores.at(k) > rec.scores.at(best)) best = k;
    }
    per_record[static_cast<size_t>(r)] = rec.truth.test(best) ? 1 : 0;
  });
  int64_t hits = 0, used = 0, empty = 0;
  for (int8_t h : per_record) {
    if (h < 0) { ++empty; continue; }
    hits += h;
    ++used;
  }
  if (skipped != nullptr) *skipped = empty;
  return used > 0 ? static_cast<double>(hits) / static_cast<double>(used) : 0.0;
}

namespace {

MetricBlock block_for(const std::vector<EvalRecord>& records, int64_t top_n, int64_t level) {
  MetricBlock b;
  b.level = level;
  b.gap = global_average_precision(records, top_n);
  bool any_positive = false;
  for (const auto& r : records) {
    if (r.truth.any()) { any_positive = true; break; }
  }
  if (any_positive) {
    b.map = mean_average_precision(records);
  } else {
    b.map = 0.0;
    b.map_defined = false;
  }
  int64_t skipped = 0;
  b.perr = precision_at_equal_recall(records, &skipped);
  b.hit1 = hit_at_one(records, nullptr);
  b.empty_truth_skipped = skipped;
  b.records = static_cast<int64_t>(records.size()) - skipped;
  return b;
}

}  // namespace

MetricReport per_level_report(const std::vector<EvalRecord>& records, const Taxonomy& tax, int64_t top_n) {
  require_nonempty(records, "per_level_report");
  for (const auto& r : records) {
    if (r.scores.dim(0) != tax.size()) {
      throw MismatchError("record " + r.video_id + " scores " + std::to_string(r.scores.dim(0)) +
                          " labels but taxonomy has " + std::to_string(tax.size()));
    }
  }
  MetricReport report;
  report.top_n = top_n;
  report.overall = block_for(records, top_n, -1);
  for (int64_t lvl = 0; lvl <= tax.max_level(); ++lvl) {
    std::vector<int64_t> ids = tax.nodes_at_level(lvl);
    std::vector<EvalRecord> restricted;
    restricted.reserve(records.size());
    for (const auto& r : records) {
      Tensor s(Shape{static_cast<int64_t>(ids.size())});
      LabelSet t(static_cast<int64_t>(ids.size()));
      for (size_t j = 0; j < ids.size(); ++j) {
        s.at(static_cast<int64_t>(j)) = r.scores.at(ids[j]);
        t.set(static_cast<int64_t>(j), r.truth.test(ids[j]));
      }
      restricted.emplace_back(r.video_id, std::move(s), std::move(t));
    }
    report.levels.push_back(block_for(restricted, top_n, lvl));
  }
  return report;
}

namespace {

nlohmann::json block_json(const MetricBlock& b) {
  nlohmann::json j;
  j["gap"] = b.gap;
  j["map"] = b.map;
  j["map_defined"] = b.map_defined;
  j["perr"] = b.perr;
  j["hit1"] = b.hit1;
  j["records"] = b.records;
  j["empty_truth_skipped"] = b.empty_truth_skipped;
  return j;
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["report_version"] = 1;
  j["top_n"] = top_n;
  j["perr_convention"] = perr_convention;
  j["overall"] = block_json(overall);
  nlohmann::json lv = nlohmann::json::array();
  for (const auto& b : levels) {
    nlohmann::json e = block_json(b);
    e["level"] = b.level;
    lv.push_back(e);
  }
  j["levels"] = lv;
  return j.dump(2);
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "row,gap,map,perr,hit1\n";
  out << "Overall," << overall.gap << "," << overall.map << "," << overall.perr << "," << overall.hit1
      << "\n";
  for (const auto& b : levels) {
    out << "Level " << b.level << "," << b.gap << "," << b.map << "," << b.perr << "," << b.hit1 << "\n";
  }
  return out.str();
}

}  // namespace tempocoh
