// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "tempocoh/metrics.hpp"
#include "tempocoh/taxonomy.hpp"
#include "tempocoh/tensor.hpp"

namespace tempocoh::oracle {

// Independent reference implementations, written as direct scalar loops
// over the defining formulas. They share no code with the library paths
// they check.

// Dense pairwise exp(-||x_i - x_j||_2), all entries.
Tensor affinity_full(const Tensor& features);

// Coherent assignment in probability space: numerator
// exp(q_ik) * exp(sum_{j in band, j != i} q_jk * d_ij), normalized over k.
Tensor tc_assignment(const Tensor& q, const Tensor& d_full, int64_t radius);
Tensor tc_assignment_gated(const Tensor& q, const Tensor& d_full, const Tensor& z, int64_t radius);

// Coherent attention in probability space over scores e and states h.
Tensor tc_attention(const Tensor& e, const Tensor& h, int64_t radius);

Tensor conv1d_same(const Tensor& seq, const Tensor& kernel);
Tensor matmul(const Tensor& a, const Tensor& b);

// NetVLAD forward as one scalar pipeline: logits, row softmax, residual
// aggregation, intra + global L2 normalization, affine head, sigmoid.
Tensor netvlad_scores(const Tensor& x, const Tensor& w, const Tensor& b, const Tensor& c,
                      const Tensor& cls_w, const Tensor& cls_b);

// Metric twins (selection-sort ranking, explicit precision-recall walks).
double gap(const std::vector<EvalRecord>& records, int64_t top_n);
double map(const std::vector<EvalRecord>& records);
double perr(const std::vector<EvalRecord>& records);
double hit1(const std::vector<EvalRecord>& records);

// Closure by fixpoint iteration: add parents until nothing changes.
LabelSet ancestor_closure(const Taxonomy& tax, const LabelSet& members);

}  // namespace tempocoh::oracle
