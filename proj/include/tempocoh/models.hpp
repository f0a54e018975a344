// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tempocoh/autodiff.hpp"
#include "tempocoh/checkpoint.hpp"
#include "tempocoh/tc_ops.hpp"
#include "tempocoh/tensor.hpp"

namespace tempocoh {

enum class ModelKind { dnn, netvlad, tc_netvlad, rnn, rnn_attn, tc_rnn, tm, tc_tm, ensemble, tc_ens };
enum class TCMode { exact, gated, learned_conv };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(TCMode mode);
TCMode tc_mode_from_string(const std::string& s);

bool is_tc(ModelKind kind);
bool is_ensemble(ModelKind kind);
// tc_netvlad -> netvlad etc.; identity for non-TC kinds.
ModelKind vanilla_counterpart(ModelKind kind);
// Member kinds for the two ensembles, empty otherwise.
std::vector<ModelKind> ensemble_members(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::netvlad;
  int64_t input_dim = 20;   // fused per-frame dimension
  int64_t num_labels = 0;
  int64_t clusters = 8;     // NetVLAD centers
  int64_t hidden = 32;      // GRU width, also attention and DNN hidden width
  int64_t heads = 2;
  int64_t model_width = 16; // transformer width, divisible by heads
  int64_t L = 2;            // temporal neighborhood radius
  TCMode tc_mode = TCMode::learned_conv;
  int64_t kernel_width = 5;
  int64_t feature_maps = 4;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Uniform [-0.05, 0.05] init keyed by (seed, parameter name). Coherence
// kernels instead start at delta + uniform noise so the temporal path is
// pass-through at init and the reduction identities hold approximately.
ParamMap init_params(const ModelConfig& cfg, uint64_t seed);

// Parameters registered as leaves on one tape.
struct BoundParams {
  ad::Tape* tape = nullptr;
  std::map<std::string, ad::Var> vars;

  ad::Var at(const std::string& name) const;
};
BoundParams bind_params(ad::Tape& tape, const ParamMap& params);

// Per-sequence probability scores [K]; differentiable w.r.t. parameters.
ad::Var model_forward(const ModelConfig& cfg, const BoundParams& params, const FrameSequence& seq);
Tensor predict(const ModelConfig& cfg, const ParamMap& params, const FrameSequence& seq);

// Per-frame probability scores [T x K] from the model's pre-pooling frame
// representations; feeds the segment-similarity prior.
ad::Var frame_predictions(const ModelConfig& cfg, const BoundParams& params, const FrameSequence& seq);

// Attention vector [T] of the attention-pooling models. with_tc = false
// evaluates the same parameters with coherence disabled.
Tensor attention_weights(const ModelConfig& cfg, const ParamMap& params, const FrameSequence& seq,
                         bool with_tc);

// Kernel-bank name prefixes present in this model's parameter map, e.g.
// {"tc_bank"} or {"m2.k_bank", "m2.v_bank"}.
std::vector<std::string> kernel_banks(const ModelConfig& cfg);

// Unweighted mean of member probabilities. Members must agree on K.
Tensor ensemble_forward(const std::vector<std::pair<ModelConfig, ParamMap>>& members,
                        const FrameSequence& seq);

ModelConfig member_config(const ModelConfig& cfg, int64_t member);
ParamMap member_params(const ParamMap& params, int64_t member);

}  // namespace tempocoh
