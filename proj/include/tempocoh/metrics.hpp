// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tempocoh/taxonomy.hpp"
#include "tempocoh/tensor.hpp"

namespace tempocoh {

// One scored video: per-node probabilities over the dense label space plus
// the ancestor-closed ground truth.
struct EvalRecord {
  std::string video_id;
  Tensor scores;  // [K], entries in [0,1]
  LabelSet truth;

  EvalRecord(std::string video_id_in, Tensor scores_in, LabelSet truth_in);
};

// Metric block for one label-space view (overall or one taxonomy level).
struct MetricBlock {
  int64_t level = -1;  // -1 = overall (flat hierarchy)
  double gap = 0.0;
  double map = 0.0;
  double perr = 0.0;
  double hit1 = 0.0;
  int64_t records = 0;             // records contributing to PERR/Hit@1
  int64_t empty_truth_skipped = 0; // records with no truth in this view
  bool map_defined = true;         // false when no class has a positive
};

struct MetricReport {
  int64_t top_n = 20;
  std::string perr_convention = "per-record";
  MetricBlock overall;
  std::vector<MetricBlock> levels;  // index = taxonomy level

  std::string to_json() const;   // versioned report schema
  std::string to_csv() const;    // rows: Overall, Level 0..max
};

// Pooled average precision: per record the top_n highest-scoring labels
// enter a global pool, sorted by (score desc, video_id, label id); AP uses
// recall denominator sum_r min(|truth_r|, top_n).
double global_average_precision(const std::vector<EvalRecord>& records, int64_t top_n = 20);

// Mean over classes with >= 1 positive of the per-class average precision
// across all records (no per-record truncation).
double mean_average_precision(const std::vector<EvalRecord>& records);

// Mean per-record precision among the top-|truth| scored labels. Records
// with empty truth are skipped; the count lands in *skipped when given.
double precision_at_equal_recall(const std::vector<EvalRecord>& records, int64_t* skipped = nullptr);

// Fraction of records whose top-scored label (ties: lowest id) is true.
// Empty-truth records are skipped like in precision_at_equal_recall.
double hit_at_one(const std::vector<EvalRecord>& records, int64_t* skipped = nullptr);

// Overall metrics on the flat label space plus one block per taxonomy
// level, where scores and truth are restricted to nodes_at_level(l).
MetricReport per_level_report(const std::vector<EvalRecord>& records, const Taxonomy& tax,
                              int64_t top_n = 20);

}  // namespace tempocoh
