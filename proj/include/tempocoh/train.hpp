// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "tempocoh/dataio.hpp"
#include "tempocoh/hier_loss.hpp"
#include "tempocoh/metrics.hpp"
#include "tempocoh/models.hpp"

namespace tempocoh {

enum class LossKind { bce, hier_literal, hier_blended };
std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 0.0002;
  int64_t batch_size = 16;      // production default 128
  int64_t max_epochs = 10;
  int64_t patience = 3;         // early-stopping window on validation GAP
  LossKind loss = LossKind::bce;
  double lambda = 0.0;          // segment prediction-similarity prior weight
  double epsilon = 1e-12;
  int64_t gap_top_n = 20;
  uint64_t seed = 1;

  void validate() const;
};

struct EpochStat {
  int64_t member = -1;  // ensemble member index, -1 for single models
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_gap = 0.0;
  bool has_val = false;
};

struct TrainResult {
  ParamMap params;      // parameters of the best validation epoch
  std::vector<EpochStat> trace;
  int64_t best_epoch = -1;  // -1 = initialization (no epoch improved)
  double best_val_gap = 0.0;
};

// Deterministic training: fixed init from cfg.seed, fixed per-epoch
// shuffles, per-sample gradients accumulated in index order. Ensembles
// train each member independently with member-derived seeds.
TrainResult train_model(const ModelConfig& mcfg, const TrainConfig& tcfg, const Dataset& data,
                        const std::vector<int64_t>& train_idx, const std::vector<int64_t>& val_idx,
                        const Taxonomy& tax);

// Per-record predictions as evaluation records, parallel over records.
std::vector<EvalRecord> predict_records(const ModelConfig& mcfg, const ParamMap& params,
                                        const Dataset& data, const std::vector<int64_t>& idx);

}  // namespace tempocoh
