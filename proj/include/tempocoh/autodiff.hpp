// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "tempocoh/tensor.hpp"

namespace tempocoh::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  const Tensor& value() const;
  double item() const { return value().item(); }
};

// Append-only record of operations for reverse-mode differentiation.
// Parents always precede children, and recorded values are never mutated,
// so one reverse sweep fills exactly one adjoint per node.
class Tape {
 public:
  using PullFn = std::function<void(Tape&, int32_t self)>;

  // Registers a leaf (input or parameter). Leaves have no pull function.
  Var leaf(const Tensor& value);

  // Records an op result. `pull` reads adjoint(self) and accumulates into
  // the parents' adjoints.
  Var record(Tensor value, PullFn pull);

  // Reverse sweep from a scalar root. May be called again after new ops
  // are recorded; adjoints are reset each time.
  void backward(Var root);

  // Adjoint of a node after backward(). Zero tensor if the node does not
  // influence the root.
  const Tensor& grad(Var v) const;

  const Tensor& value_of(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor& adjoint(int32_t id) { return nodes_[static_cast<size_t>(id)].adjoint; }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor adjoint;
    PullFn pull;  // empty for leaves
  };
  std::vector<Node> nodes_;
};

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b);
Var add(Var a, double s);
Var sub(Var a, Var b);
Var sub(Var a, double s);
Var sub(double s, Var a);
Var mul(Var a, Var b);
Var mul(Var a, double s);
Var divide(Var a, Var b);
Var divide(double s, Var a);
Var negate(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
// Sub-gradient: zero where the input was clamped.
Var clamp_min(Var a, double lo);

// ---- linear algebra --------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var row_sums(Var a);
Var col_sums(Var a);
Var sum_all(Var a);  // -> shape [1]
Var add_rowvec(Var a, Var v);
Var rows_scale(Var a, Var s);
// Scales every element of a by the one-element tensor s.
Var scale_by_scalar(Var a, Var s);

// ---- structural ------------------------------------------------------------

Var reshape(Var a, Shape shape);
Var slice_row(Var a, int64_t row);
Var stack_rows(const std::vector<Var>& rows);
Var concat_cols(const std::vector<Var>& parts);

// ---- neural primitives -----------------------------------------------------

Var softmax_lastdim(Var a);
Var conv1d_same(Var seq, Var kernel);

// Pairwise affinity exp(-||h_i - h_j||_2) for |i - j| <= radius, zero
// outside the band. The diagonal is the constant exp(0) = 1 when
// unit_diag is set, zero otherwise; either way it carries no gradient.
Var banded_affinity(Var h, int64_t radius, bool unit_diag);

// ---- oracle ----------------------------------------------------------------

// Central-difference gradient estimate of a scalar function, one
// coordinate at a time. Independent of the tape machinery.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step = 1e-5);

}  // namespace tempocoh::ad
