// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tempocoh/autodiff.hpp"
#include "tempocoh/taxonomy.hpp"
#include "tempocoh/tensor.hpp"

namespace tempocoh {

struct LossConfig {
  enum class Variant { literal, blended };

  double lambda = 0.0;       // weight of the label-prior term
  double epsilon = 1e-12;    // probability floor inside logs
  Variant variant = Variant::literal;

  void validate() const;
};

// N x K probability scores with a cached per-row argmax (ties broken by
// lowest id). Scores must lie in [0, 1].
struct PredictionBatch {
  Tensor scores;
  std::vector<int64_t> argmax;

  explicit PredictionBatch(Tensor scores_in);
};

// N ancestor-closed target label sets.
struct TargetBatch {
  std::vector<LabelSet> labels;

  TargetBatch(const Taxonomy& tax, std::vector<LabelSet> labels_in);
};

// Partial-credit weight for predicting node k: 2^(level(k) - deepest true
// level) when k is the predicted node, 0 otherwise. Values in (0, 1] for
// predictions on the true ancestor path.
double partial_credit(const Taxonomy& tax, const LabelSet& y, int64_t predicted, int64_t k);

// Partial-credit-weighted cross entropy. The `literal` variant is exactly
//   -(1/N) sum_i sum_k f_hier(i,k) * y_{i,k} * log(max(score_{i,k}, eps));
// it is zero whenever the argmax falls off the true path. The `blended`
// variant adds, for off-path rows only, the standard per-row multi-label
// cross entropy so wrong-branch predictions are penalized too.
// The partial-credit mask is computed from the current argmax and treated
// as a constant for differentiation.
ad::Var hier_cross_entropy(ad::Var scores, const TargetBatch& targets, const Taxonomy& tax,
                           const LossConfig& cfg);
double hier_cross_entropy(const PredictionBatch& preds, const TargetBatch& targets, const Taxonomy& tax,
                          const LossConfig& cfg);

// Mean over N*K entries of -[y log s + (1-y) log(1-s)] with eps-clamped logs.
ad::Var multilabel_cross_entropy(ad::Var scores, const TargetBatch& targets, const LossConfig& cfg);
double multilabel_cross_entropy(const PredictionBatch& preds, const TargetBatch& targets,
                                const LossConfig& cfg);

// Segment-level prediction-similarity prior: mean over segments of the
// mean pairwise squared L2 distance between per-frame prediction rows
// within the segment (0 for singleton segments). Segments are half-open
// [begin, end) ranges and must partition [0, T).
using FrameRange = std::pair<int64_t, int64_t>;
ad::Var label_prior_loss(ad::Var frame_preds, const std::vector<FrameRange>& segments);
double label_prior_loss(const Tensor& frame_preds, const std::vector<FrameRange>& segments);

// original + lambda * prior
ad::Var overall_loss(ad::Var original, ad::Var prior, const LossConfig& cfg);
double overall_loss(double original, double prior, const LossConfig& cfg);

// Half-open frame ranges implied by sorted scene start indices.
std::vector<FrameRange> segments_from_scene_starts(const std::vector<int64_t>& scene_starts, int64_t t_len);

}  // namespace tempocoh
