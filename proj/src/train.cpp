// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/train.hpp"

#include <algorithm>
#include <cmath>

#include "tempocoh/error.hpp"
#include "tempocoh/rng.hpp"
#include "tempocoh/threading.hpp"

namespace tempocoh {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::bce: return "bce";
    case LossKind::hier_literal: return "hier";
    case LossKind::hier_blended: return "hier-blended";
  }
  throw ContractError("unknown loss kind");
}

LossKind loss_kind_from_string(const std::string& s) {
  for (LossKind k : {LossKind::bce, LossKind::hier_literal, LossKind::hier_blended}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown loss kind '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) throw ConfigError("epsilon must lie in (0, 1e-3]");
  if (gap_top_n < 1) throw ConfigError("gap_top_n must be >= 1");
}

namespace {

LossConfig loss_config(const TrainConfig& tcfg) {
  LossConfig lcfg;
  lcfg.lambda = tcfg.lambda;
  lcfg.epsilon = tcfg.epsilon;
  lcfg.variant =
      tcfg.loss == LossKind::hier_blended ? LossConfig::Variant::blended : LossConfig::Variant::literal;
  return lcfg;
}

struct SampleResult {
  double loss = 0.0;
  std::map<std::string, Tensor> grads;
  std::string error;  // non-empty when the sample threw
};

SampleResult sample_gradient(const ModelConfig& mcfg, const TrainConfig& tcfg, const ParamMap& params,
                             const FrameSequence& seq, const LabelSet& truth, const Taxonomy& tax) {
  SampleResult out;
  try {
    ad::Tape tape;
    BoundParams bp = bind_params(tape, params);
    ad::Var scores = model_forward(mcfg, bp, seq);
    ad::Var scores2d = ad::reshape(scores, Shape{1, mcfg.num_labels});
    TargetBatch targets(tax, {truth});
    LossConfig lcfg = loss_config(tcfg);
    ad::Var loss{};
    if (tcfg.loss == LossKind::bce) {
      loss = multilabel_cross_entropy(scores2d, targets, lcfg);
    } else {
      loss = hier_cross_entropy(scores2d, targets, tax, lcfg);
    }
    if (tcfg.lambda > 0.0) {
      ad::Var fp = frame_predictions(mcfg, bp, seq);
      ad::Var prior = label_prior_loss(fp, segments_from_scene_starts(seq.scene_starts, seq.frames()));
      loss = overall_loss(loss, prior, lcfg);
    }
    tape.backward(loss);
    out.loss = loss.item();
    for (const auto& [name, var] : bp.vars) out.grads.emplace(name, tape.grad(var));
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

struct AdamState {
  ParamMap m, v;
  int64_t t = 0;
};

void adam_step(ParamMap& params, const std::map<std::string, Tensor>& grads, AdamState& state, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  state.t += 1;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (int64_t i = 0; i < p.numel(); ++i) {
      double gi = g.data()[i];
      m.data()[i] = b1 * m.data()[i] + (1.0 - b1) * gi;
      v.data()[i] = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
      double mhat = m.data()[i] / c1;
      double vhat = v.data()[i] / c2;
      p.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void check_indices(const char* what, const std::vector<int64_t>& idx, int64_t n) {
  for (int64_t i : idx) {
    if (i < 0 || i >= n) {
      throw ContractError(std::string(what) + " index " + std::to_string(i) + " outside [0, " +
                          std::to_string(n) + ")");
    }
  }
}

void check_dataset(const ModelConfig& mcfg, const Dataset& data, const Taxonomy& tax) {
  int64_t fused = data.header.video_dim + data.header.audio_dim;
  if (mcfg.input_dim != fused) {
    throw MismatchError("model input_dim " + std::to_string(mcfg.input_dim) + " but dataset provides " +
                        std::to_string(fused) + " fused dims");
  }
  if (mcfg.num_labels != data.header.num_labels || mcfg.num_labels != tax.size()) {
    throw MismatchError("label spaces disagree: model " + std::to_string(mcfg.num_labels) + ", dataset " +
                        std::to_string(data.header.num_labels) + ", taxonomy " + std::to_string(tax.size()));
  }
}

TrainResult train_single(const ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& data,
                         const std::vector<int64_t>& train_idx, const std::vector<int64_t>& val_idx,
                         const Taxonomy& tax, int64_t member) {
  if (train_idx.empty()) throw ContractError("training needs at least one record");

  std::vector<FrameSequence> train_seqs;
  train_seqs.reserve(train_idx.size());
  for (int64_t i : train_idx) train_seqs.push_back(to_sequence(data.records[static_cast<size_t>(i)]));

  TrainResult result;
  result.params = init_params(mcfg, tcfg.seed);
  ParamMap params = result.params;
  AdamState adam;
  for (const auto& [name, p] : params) {
    adam.m.emplace(name, Tensor::zeros(p.shape()));
    adam.v.emplace(name, Tensor::zeros(p.shape()));
  }

  double best_gap = -1.0;
  int64_t since_improve = 0;
  for (int64_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    std::vector<size_t> order(train_idx.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle(Rng::mix(tcfg.seed, 0x45504F43ull + static_cast<uint64_t>(epoch)));
    for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i) {
      int64_t j = shuffle.uniform_int(0, i);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tcfg.batch_size)) {
      size_t stop = std::min(order.size(), start + static_cast<size_t>(tcfg.batch_size));
      int64_t batch_n = static_cast<int64_t>(stop - start);
      std::vector<SampleResult> samples(static_cast<size_t>(batch_n));
      parallel_for(batch_n, [&](int64_t s) {
        size_t pos = order[start + static_cast<size_t>(s)];
        samples[static_cast<size_t>(s)] =
            sample_gradient(mcfg, tcfg, params, train_seqs[pos],
                            data.records[static_cast<size_t>(train_idx[pos])].truth, tax);
      });

      double batch_loss = 0.0;
      std::map<std::string, Tensor> grads;
      for (const auto& [name, p] : params) grads.emplace(name, Tensor::zeros(p.shape()));
      for (int64_t s = 0; s < batch_n; ++s) {
        const SampleResult& sr = samples[static_cast<size_t>(s)];
        if (!sr.error.empty()) {
          throw NumericError("sample failed in batch " + std::to_string(batches) + " of epoch " +
                             std::to_string(epoch) + ": " + sr.error);
        }
        batch_loss += sr.loss;
        for (auto& [name, g] : grads) {
          const Tensor& sg = sr.grads.at(name);
          for (int64_t i = 0; i < g.numel(); ++i) g.data()[i] += sg.data()[i];
        }
      }
      batch_loss /= static_cast<double>(batch_n);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite loss in batch " + std::to_string(batches) + " of epoch " +
                           std::to_string(epoch));
      }
      for (auto& [name, g] : grads) {
        for (int64_t i = 0; i < g.numel(); ++i) g.data()[i] /= static_cast<double>(batch_n);
      }
      adam_step(params, grads, adam, tcfg.learning_rate);
      loss_sum += batch_loss;
      ++batches;
    }

    EpochStat stat;
    stat.member = member;
    stat.epoch = epoch;
    stat.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    if (!val_idx.empty()) {
      std::vector<EvalRecord> val_records = predict_records(mcfg, params, data, val_idx);
      stat.val_gap = global_average_precision(val_records, tcfg.gap_top_n);
      stat.has_val = true;
    }
    result.trace.push_back(stat);

    if (stat.has_val) {
      if (stat.val_gap > best_gap) {
        best_gap = stat.val_gap;
        result.params = params;
        result.best_epoch = epoch;
        since_improve = 0;
      } else if (++since_improve >= tcfg.patience) {
        break;
      }
    } else {
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  result.best_val_gap = best_gap > -1.0 ? best_gap : 0.0;
  return result;
}

}  // namespace

TrainResult train_model(const ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& data,
                        const std::vector<int64_t>& train_idx, const std::vector<int64_t>& val_idx,
                        const Taxonomy& tax) {
  mcfg.validate();
  tcfg.validate();
  check_dataset(mcfg, data, tax);
  check_indices("train", train_idx, static_cast<int64_t>(data.records.size()));
  check_indices("val", val_idx, static_cast<int64_t>(data.records.size()));

  if (!is_ensemble(mcfg.kind)) {
    return train_single(mcfg, tcfg, data, train_idx, val_idx, tax, -1);
  }

  TrainResult result;
  std::vector<ModelKind> members = ensemble_members(mcfg.kind);
  for (size_t m = 0; m < members.size(); ++m) {
    ModelConfig mc = member_config(mcfg, static_cast<int64_t>(m));
    TrainConfig tc = tcfg;
    tc.seed = Rng::mix(tcfg.seed, m);
    TrainResult mr = train_single(mc, tc, data, train_idx, val_idx, tax, static_cast<int64_t>(m));
    for (auto& [name, tensor] : mr.params) {
      result.params.emplace("m" + std::to_string(m) + "." + name, std::move(tensor));
    }
    for (const auto& stat : mr.trace) result.trace.push_back(stat);
  }
  if (!val_idx.empty()) {
    std::vector<EvalRecord> val_records = predict_records(mcfg, result.params, data, val_idx);
    result.best_val_gap = global_average_precision(val_records, tcfg.gap_top_n);
  }
  return result;
}

std::vector<EvalRecord> predict_records(const ModelConfig& mcfg, const ParamMap& params,
                                        const Dataset& data, const std::vector<int64_t>& idx) {
  check_indices("record", idx, static_cast<int64_t>(data.records.size()));
  std::vector<Tensor> scores(idx.size());
  std::vector<std::string> errors(idx.size());
  parallel_for(static_cast<int64_t>(idx.size()), [&](int64_t i) {
    try {
      const VideoRecord& rec = data.records[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      scores[static_cast<size_t>(i)] = predict(mcfg, params, to_sequence(rec));
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(i)] = e.what();
    }
  });
  std::vector<EvalRecord> out;
  out.reserve(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (!errors[i].empty()) throw NumericError("prediction failed for record " + std::to_string(idx[i]) + ": " + errors[i]);
    const VideoRecord& rec = data.records[static_cast<size_t>(idx[i])];
    out.emplace_back(rec.video_id, std::move(scores[i]), rec.truth);
  }
  return out;
}

}  // namespace tempocoh
