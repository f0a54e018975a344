// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/hier_loss.hpp"

#include <algorithm>
#include <cmath>

namespace tempocoh {

void LossConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("negative label-prior weight " + std::to_string(lambda));
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) {
    throw ConfigError("loss epsilon must lie in (0, 1e-3], got " + std::to_string(epsilon));
  }
}

PredictionBatch::PredictionBatch(Tensor scores_in) : scores(std::move(scores_in)) {
  if (scores.rank() != 2) throw ShapeError("prediction scores must be N x K, got " + scores.shape().to_string());
  int64_t n = scores.dim(0), k = scores.dim(1);
  for (int64_t i = 0; i < n * k; ++i) {
    double v = scores.at(i);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError("prediction score " + std::to_string(v) + " outside [0, 1]");
    }
  }
  argmax.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (scores.at(i, j) > scores.at(i, best)) best = j;  // ties keep the lowest id
    }
    argmax[static_cast<size_t>(i)] = best;
  }
}

TargetBatch::TargetBatch(const Taxonomy& tax, std::vector<LabelSet> labels_in) : labels(std::move(labels_in)) {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!is_ancestor_closed(tax, labels[i])) {
      throw ContractError("target row " + std::to_string(i) + " is not ancestor-closed");
    }
  }
}

double partial_credit(const Taxonomy& tax, const LabelSet& y, int64_t predicted, int64_t k) {
  tax.node(predicted);
  tax.node(k);
  if (!y.any()) throw ContractError("partial_credit with empty label set");
  if (k != predicted) return 0.0;
  return std::pow(2.0, static_cast<double>(tax.level(k) - deepest_level(tax, y)));
}

namespace {

std::vector<int64_t> argmax_rows(const Tensor& scores) {
  std::vector<int64_t> out(static_cast<size_t>(scores.dim(0)));
  for (int64_t i = 0; i < scores.dim(0); ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < scores.dim(1); ++j) {
      if (scores.at(i, j) > scores.at(i, best)) best = j;
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

void check_batch(const Tensor& scores, const TargetBatch& targets) {
  if (scores.rank() != 2) throw ShapeError("loss scores must be N x K, got " + scores.shape().to_string());
  if (scores.dim(0) == 0) throw ContractError("empty batch");
  if (static_cast<size_t>(scores.dim(0)) != targets.labels.size()) {
    throw ShapeError("batch size mismatch: " + std::to_string(scores.dim(0)) + " score rows vs " +
                     std::to_string(targets.labels.size()) + " target rows");
  }
  for (const auto& y : targets.labels) {
    if (y.size() != scores.dim(1)) throw MismatchError("target label space does not match score width");
  }
}

Tensor targets_tensor(const TargetBatch& targets, int64_t k) {
  Tensor y(Shape{static_cast<int64_t>(targets.labels.size()), k});
  for (size_t i = 0; i < targets.labels.size(); ++i) {
    for (int64_t j = 0; j < k; ++j) y.at(static_cast<int64_t>(i), j) = targets.labels[i].test(j) ? 1.0 : 0.0;
  }
  return y;
}

}  // namespace

ad::Var hier_cross_entropy(ad::Var scores, const TargetBatch& targets, const Taxonomy& tax,
                           const LossConfig& cfg) {
  cfg.validate();
  ad::Tape& tape = *scores.tape;
  const Tensor& sv = scores.value();
  check_batch(sv, targets);
  int64_t n = sv.dim(0), k = sv.dim(1);

  std::vector<int64_t> top = argmax_rows(sv);

  // Constant mask m[i][k] = f_hier(i,k) * y_{i,k}; only the argmax column
  // of each row can be nonzero, and only when that column is a true label.
  Tensor mask(Shape{n, k});
  std::vector<int64_t> off_path_rows;
  for (int64_t i = 0; i < n; ++i) {
    const LabelSet& y = targets.labels[static_cast<size_t>(i)];
    if (!y.any()) throw ContractError("target row " + std::to_string(i) + " is empty");
    int64_t pred = top[static_cast<size_t>(i)];
    if (y.test(pred)) {
      mask.at(i, pred) = partial_credit(tax, y, pred, pred);
    } else {
      off_path_rows.push_back(i);
    }
  }

  ad::Var mask_v = tape.leaf(mask);
  ad::Var log_s = ad::log(ad::clamp_min(scores, cfg.epsilon));
  ad::Var literal = ad::mul(ad::sum_all(ad::mul(mask_v, log_s)), -1.0 / static_cast<double>(n));

  if (cfg.variant == LossConfig::Variant::literal || off_path_rows.empty()) return literal;

  // Blended: add standard multi-label cross entropy on the off-path rows,
  // normalized like multilabel_cross_entropy over the entries involved.
  Tensor y = targets_tensor(targets, k);
  Tensor row_weight(Shape{n, k});
  for (int64_t i : off_path_rows) {
    for (int64_t j = 0; j < k; ++j) row_weight.at(i, j) = 1.0;
  }
  ad::Var w = tape.leaf(row_weight);
  ad::Var yv = tape.leaf(y);
  ad::Var log_1ms = ad::log(ad::clamp_min(ad::sub(1.0, scores), cfg.epsilon));
  ad::Var terms = ad::add(ad::mul(yv, log_s), ad::mul(ad::sub(1.0, yv), log_1ms));
  double denom = static_cast<double>(off_path_rows.size() * static_cast<size_t>(k));
  ad::Var extra = ad::mul(ad::sum_all(ad::mul(w, terms)), -1.0 / denom);
  return ad::add(literal, extra);
}

double hier_cross_entropy(const PredictionBatch& preds, const TargetBatch& targets, const Taxonomy& tax,
                          const LossConfig& cfg) {
  ad::Tape tape;
  return hier_cross_entropy(tape.leaf(preds.scores), targets, tax, cfg).item();
}

ad::Var multilabel_cross_entropy(ad::Var scores, const TargetBatch& targets, const LossConfig& cfg) {
  cfg.validate();
  ad::Tape& tape = *scores.tape;
  const Tensor& sv = scores.value();
  check_batch(sv, targets);
  int64_t n = sv.dim(0), k = sv.dim(1);

  ad::Var yv = tape.leaf(targets_tensor(targets, k));
  ad::Var log_s = ad::log(ad::clamp_min(scores, cfg.epsilon));
  ad::Var log_1ms = ad::log(ad::clamp_min(ad::sub(1.0, scores), cfg.epsilon));
  ad::Var terms = ad::add(ad::mul(yv, log_s), ad::mul(ad::sub(1.0, yv), log_1ms));
  return ad::mul(ad::sum_all(terms), -1.0 / static_cast<double>(n * k));
}

double multilabel_cross_entropy(const PredictionBatch& preds, const TargetBatch& targets,
                                const LossConfig& cfg) {
  ad::Tape tape;
  return multilabel_cross_entropy(tape.leaf(preds.scores), targets, cfg).item();
}

ad::Var label_prior_loss(ad::Var frame_preds, const std::vector<FrameRange>& segments) {
  ad::Tape& tape = *frame_preds.tape;
  const Tensor& pv = frame_preds.value();
  if (pv.rank() != 2) throw ShapeError("frame predictions must be T x K, got " + pv.shape().to_string());
  int64_t t_len = pv.dim(0);

  // Segments must partition [0, T) exactly.
  std::vector<FrameRange> sorted = segments;
  std::sort(sorted.begin(), sorted.end());
  int64_t cursor = 0;
  for (const auto& [b, e] : sorted) {
    if (b != cursor || e <= b) {
      throw ContractError("segments must partition [0, " + std::to_string(t_len) + "): bad range [" +
                          std::to_string(b) + ", " + std::to_string(e) + ")");
    }
    cursor = e;
  }
  if (cursor != t_len) throw ContractError("segments do not cover [0, " + std::to_string(t_len) + ")");

  ad::Var total = tape.leaf(Tensor::scalar(0.0));
  for (const auto& [b, e] : sorted) {
    int64_t len = e - b;
    if (len < 2) continue;  // singletons contribute zero
    ad::Var seg_sum = tape.leaf(Tensor::scalar(0.0));
    for (int64_t i = b; i < e; ++i) {
      for (int64_t j = i + 1; j < e; ++j) {
        ad::Var diff = ad::sub(ad::slice_row(frame_preds, i), ad::slice_row(frame_preds, j));
        seg_sum = ad::add(seg_sum, ad::sum_all(ad::mul(diff, diff)));
      }
    }
    double pairs = static_cast<double>(len * (len - 1) / 2);
    total = ad::add(total, ad::mul(seg_sum, 1.0 / pairs));
  }
  return ad::mul(total, 1.0 / static_cast<double>(sorted.size()));
}

double label_prior_loss(const Tensor& frame_preds, const std::vector<FrameRange>& segments) {
  ad::Tape tape;
  return label_prior_loss(tape.leaf(frame_preds), segments).item();
}

ad::Var overall_loss(ad::Var original, ad::Var prior, const LossConfig& cfg) {
  cfg.validate();
  return ad::add(original, ad::mul(prior, cfg.lambda));
}

double overall_loss(double original, double prior, const LossConfig& cfg) {
  cfg.validate();
  return original + cfg.lambda * prior;
}

std::vector<FrameRange> segments_from_scene_starts(const std::vector<int64_t>& scene_starts, int64_t t_len) {
  if (scene_starts.empty() || scene_starts.front() != 0) {
    throw ContractError("scene starts must begin with frame 0");
  }
  std::vector<FrameRange> out;
  for (size_t s = 0; s < scene_starts.size(); ++s) {
    int64_t b = scene_starts[s];
    int64_t e = (s + 1 < scene_starts.size()) ? scene_starts[s + 1] : t_len;
    if (e <= b || b < 0 || e > t_len) throw ContractError("invalid scene start sequence");
    out.emplace_back(b, e);
  }
  return out;
}

}  // namespace tempocoh
