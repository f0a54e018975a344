// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "tempocoh/autodiff.hpp"
#include "tempocoh/tensor.hpp"

namespace tempocoh {

// Per-frame features with scene segmentation. scene_starts is strictly
// increasing, lives in [0, T) and always begins with frame 0.
struct FrameSequence {
  Tensor features;  // T x D
  std::vector<int64_t> scene_starts;

  FrameSequence(Tensor features_in, std::vector<int64_t> scene_starts_in);
  int64_t frames() const { return features.dim(0); }
};

// Pairwise frame affinity d_ij = exp(-||x_i - x_j||_2), materialized only
// inside the band |i - j| <= radius (diagonal is exp(0) = 1, entries
// outside the band are zero and never read).
struct Affinity {
  Tensor values;  // T x T
  int64_t radius = 0;
};

// Pairwise scene gates: z_ij = 1 iff frames i and j share a segment.
struct GateMatrix {
  Tensor values;  // T x T, entries in {0,1} (external) or [0,1] (learned)
};

// Bank of learnable coherence kernels: F parallel 1-D kernels of shared
// odd width W whose outputs are averaged.
struct TCKernel {
  std::vector<Tensor> maps;

  static TCKernel delta(int64_t feature_maps, int64_t width);
  int64_t width() const { return maps.empty() ? 0 : maps[0].dim(0); }
  void validate() const;
};

// ---- affinities and gates --------------------------------------------------

Affinity affinity(const Tensor& features, int64_t radius);
Affinity affinity(const FrameSequence& seq, int64_t radius);
GateMatrix gates_from_scenes(const std::vector<int64_t>& scene_starts, int64_t t_len);

// ---- soft assignment (T x K cluster logits q) ------------------------------

// Row-wise softmax of cluster logits.
Tensor vanilla_assignment(const Tensor& q);
ad::Var vanilla_assignment(ad::Var q);

// Coherent assignment: frame i's logit for cluster k becomes
// q_ik + sum_{j in [i-L, i+L], j != i} q_jk * d_ij, then row softmax.
Tensor tc_assignment(const Tensor& q, const Affinity& d, int64_t radius);
ad::Var tc_assignment(ad::Var q, const Affinity& d, int64_t radius);

// Same with scene gates z applied to each neighbor term; z == 0 recovers
// the vanilla assignment exactly, z == 1 recovers tc_assignment.
Tensor tc_assignment_gated(const Tensor& q, const Affinity& d, const GateMatrix& z, int64_t radius);
ad::Var tc_assignment_gated(ad::Var q, const Affinity& d, const GateMatrix& z, int64_t radius);

// Convolution form: logit_ik = w_k . (sum_{j=i-L}^{i+L} x_j * d_ij) + b_k
// with d_ii = 1. Matches tc_assignment exactly when b = 0; with nonzero b
// the two forms differ by b_k * sum_{j != i} d_ij in the exponent.
Tensor tc_assignment_conv(const Tensor& x, const Tensor& w, const Tensor& b, const Affinity& d,
                          int64_t radius);
ad::Var tc_assignment_conv(ad::Var x, ad::Var w, ad::Var b, const Affinity& d, int64_t radius);

// ---- attention (length-T scores e over hidden states h) --------------------

// Coherent attention: alpha_i proportional to
// exp(e_i + sum_{j in [i-L,i+L], j != i} e_j * exp(-||h_i - h_j||_2)).
// Differentiable through both e and h.
Tensor tc_attention(const Tensor& e, const Tensor& h, int64_t radius);
ad::Var tc_attention(ad::Var e, ad::Var h, int64_t radius);

// Window form over a precomputed hidden-state affinity. When include_self
// is set the window sum runs over the full [j-L, j+L] band including the
// unit diagonal, so e_j enters twice (once via d'_jj, once standalone);
// with include_self = false the diagonal is dropped and the result equals
// tc_attention.
Tensor tc_attention_conv(const Tensor& e, const Affinity& dprime, int64_t radius,
                         bool include_self = true);

// ---- learned coherence layer -----------------------------------------------

// Applies each kernel in the bank depthwise along time and averages the F
// outputs. Differentiable w.r.t. both the sequence and the kernels.
Tensor tc_conv_layer(const Tensor& seq, const TCKernel& kernel);
ad::Var tc_conv_layer(ad::Var seq, const std::vector<ad::Var>& maps);

}  // namespace tempocoh
