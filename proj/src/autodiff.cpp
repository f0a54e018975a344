// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace tempocoh::ad {

namespace {

void check_tape(Var a) {
  if (a.tape == nullptr || a.id < 0) throw ContractError("Var is not bound to a tape");
}

void check_same_tape(Var a, Var b) {
  check_tape(a);
  check_tape(b);
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (int64_t i = 0; i < dst.numel(); ++i) dst.at(i) += src.at(i);
}

}  // namespace

const Tensor& Var::value() const {
  check_tape(*this);
  return tape->value_of(id);
}

Var Tape::leaf(const Tensor& value) {
  nodes_.push_back(Node{value, Tensor(), {}});
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, PullFn pull) {
  nodes_.push_back(Node{std::move(value), Tensor(), std::move(pull)});
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var root) {
  check_tape(root);
  if (root.tape != this) throw ContractError("backward root belongs to a different tape");
  if (value_of(root.id).numel() != 1) {
    throw ContractError("backward root must be scalar, got shape " +
                        value_of(root.id).shape().to_string());
  }
  for (auto& n : nodes_) n.adjoint = Tensor::zeros(n.value.shape());
  nodes_[static_cast<size_t>(root.id)].adjoint.at(0) = 1.0;
  for (int32_t id = root.id; id >= 0; --id) {
    auto& node = nodes_[static_cast<size_t>(id)];
    if (node.pull) node.pull(*this, id);
  }
}

const Tensor& Tape::grad(Var v) const {
  check_tape(v);
  const Tensor& adj = nodes_[static_cast<size_t>(v.id)].adjoint;
  if (adj.numel() == 0) throw ContractError("grad() before backward()");
  return adj;
}

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  int32_t ia = a.id, ib = b.id;
  return t.record(tempocoh::add(t.value_of(ia), t.value_of(ib)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tp.adjoint(self));
    accumulate(tp.adjoint(ib), tp.adjoint(self));
  });
}

Var add(Var a, double s) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::add(t.value_of(ia), s), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tp.adjoint(self));
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  int32_t ia = a.id, ib = b.id;
  return t.record(tempocoh::sub(t.value_of(ia), t.value_of(ib)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tp.adjoint(self));
    accumulate(tp.adjoint(ib), tempocoh::negate(tp.adjoint(self)));
  });
}

Var sub(Var a, double s) { return add(a, -s); }

Var sub(double s, Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::sub(s, t.value_of(ia)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tempocoh::negate(tp.adjoint(self)));
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  int32_t ia = a.id, ib = b.id;
  return t.record(tempocoh::mul(t.value_of(ia), t.value_of(ib)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tempocoh::mul(tp.adjoint(self), tp.value_of(ib)));
    accumulate(tp.adjoint(ib), tempocoh::mul(tp.adjoint(self), tp.value_of(ia)));
  });
}

Var mul(Var a, double s) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::mul(t.value_of(ia), s), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tempocoh::mul(tp.adjoint(self), s));
  });
}

Var divide(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  int32_t ia = a.id, ib = b.id;
  return t.record(tempocoh::divide(t.value_of(ia), t.value_of(ib)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& bv = tp.value_of(ib);
    accumulate(tp.adjoint(ia), tempocoh::divide(g, bv));
    // d/db (a/b) = -a / b^2
    Tensor gb = tempocoh::mul(g, tempocoh::divide(tempocoh::negate(tp.value_of(ia)), tempocoh::mul(bv, bv)));
    accumulate(tp.adjoint(ib), gb);
  });
}

Var divide(double s, Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::divide(s, t.value_of(ia)), [=](Tape& tp, int32_t self) {
    const Tensor& av = tp.value_of(ia);
    Tensor ga = tempocoh::mul(tp.adjoint(self), tempocoh::divide(-s, tempocoh::mul(av, av)));
    accumulate(tp.adjoint(ia), ga);
  });
}

Var negate(Var a) { return sub(0.0, a); }

Var exp(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::exp(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tempocoh::mul(tp.adjoint(self), tp.value_of(self)));
  });
}

Var log(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::log(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tempocoh::divide(tp.adjoint(self), tp.value_of(ia)));
  });
}

Var sqrt(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::sqrt(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    Tensor ga = tempocoh::divide(tp.adjoint(self), tempocoh::mul(tp.value_of(self), 2.0));
    accumulate(tp.adjoint(ia), ga);
  });
}

Var tanh(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::tanh(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    const Tensor& y = tp.value_of(self);
    Tensor ga = tempocoh::mul(tp.adjoint(self), tempocoh::sub(1.0, tempocoh::mul(y, y)));
    accumulate(tp.adjoint(ia), ga);
  });
}

Var sigmoid(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::sigmoid(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    const Tensor& y = tp.value_of(self);
    Tensor ga = tempocoh::mul(tp.adjoint(self), tempocoh::mul(y, tempocoh::sub(1.0, y)));
    accumulate(tp.adjoint(ia), ga);
  });
}

Var clamp_min(Var a, double lo) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::clamp_min(t.value_of(ia), lo), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& av = tp.value_of(ia);
    Tensor& dst = tp.adjoint(ia);
    for (int64_t i = 0; i < dst.numel(); ++i) {
      if (av.at(i) > lo) dst.at(i) += g.at(i);
    }
  });
}

// ---- linear algebra --------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  int32_t ia = a.id, ib = b.id;
  return t.record(tempocoh::matmul(t.value_of(ia), t.value_of(ib)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    accumulate(tp.adjoint(ia), tempocoh::matmul(g, tempocoh::transpose(tp.value_of(ib))));
    accumulate(tp.adjoint(ib), tempocoh::matmul(tempocoh::transpose(tp.value_of(ia)), g));
  });
}

Var transpose(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::transpose(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tempocoh::transpose(tp.adjoint(self)));
  });
}

Var row_sums(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::row_sums(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor& dst = tp.adjoint(ia);
    for (int64_t i = 0; i < dst.dim(0); ++i)
      for (int64_t j = 0; j < dst.dim(1); ++j) dst.at(i, j) += g.at(i);
  });
}

Var col_sums(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::col_sums(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor& dst = tp.adjoint(ia);
    for (int64_t i = 0; i < dst.dim(0); ++i)
      for (int64_t j = 0; j < dst.dim(1); ++j) dst.at(i, j) += g.at(j);
  });
}

Var sum_all(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(Tensor::scalar(tempocoh::sum_all(t.value_of(ia))), [=](Tape& tp, int32_t self) {
    double g = tp.adjoint(self).at(0);
    Tensor& dst = tp.adjoint(ia);
    for (int64_t i = 0; i < dst.numel(); ++i) dst.at(i) += g;
  });
}

Var add_rowvec(Var a, Var v) {
  check_same_tape(a, v);
  Tape& t = *a.tape;
  int32_t ia = a.id, iv = v.id;
  return t.record(tempocoh::add_rowvec(t.value_of(ia), t.value_of(iv)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    accumulate(tp.adjoint(ia), g);
    accumulate(tp.adjoint(iv), tempocoh::col_sums(g));
  });
}

Var rows_scale(Var a, Var s) {
  check_same_tape(a, s);
  Tape& t = *a.tape;
  int32_t ia = a.id, is = s.id;
  return t.record(tempocoh::rows_scale(t.value_of(ia), t.value_of(is)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    accumulate(tp.adjoint(ia), tempocoh::rows_scale(g, tp.value_of(is)));
    accumulate(tp.adjoint(is), tempocoh::row_sums(tempocoh::mul(g, tp.value_of(ia))));
  });
}

Var scale_by_scalar(Var a, Var s) {
  check_same_tape(a, s);
  Tape& t = *a.tape;
  if (t.value_of(s.id).numel() != 1) throw ContractError("scale_by_scalar: scale must have one element");
  int32_t ia = a.id, is = s.id;
  return t.record(tempocoh::mul(t.value_of(ia), t.value_of(is).at(0)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    accumulate(tp.adjoint(ia), tempocoh::mul(g, tp.value_of(is).at(0)));
    tp.adjoint(is).at(0) += tempocoh::sum_all(tempocoh::mul(g, tp.value_of(ia)));
  });
}

// ---- structural ------------------------------------------------------------

Var reshape(Var a, Shape shape) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  Shape saved = t.value_of(ia).shape();
  return t.record(tempocoh::reshape(t.value_of(ia), std::move(shape)), [=](Tape& tp, int32_t self) {
    accumulate(tp.adjoint(ia), tempocoh::reshape(tp.adjoint(self), saved));
  });
}

Var slice_row(Var a, int64_t row) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::slice_row(t.value_of(ia), row), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    Tensor& dst = tp.adjoint(ia);
    for (int64_t j = 0; j < g.numel(); ++j) dst.at(row, j) += g.at(j);
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ContractError("stack_rows on empty list");
  Tape& t = *rows[0].tape;
  std::vector<int32_t> ids;
  std::vector<Tensor> vals;
  for (Var r : rows) {
    check_same_tape(rows[0], r);
    ids.push_back(r.id);
    vals.push_back(t.value_of(r.id));
  }
  return t.record(tempocoh::stack_rows(vals), [ids = std::move(ids)](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    for (size_t i = 0; i < ids.size(); ++i) {
      Tensor& dst = tp.adjoint(ids[i]);
      for (int64_t j = 0; j < dst.numel(); ++j) dst.at(j) += g.at(static_cast<int64_t>(i), j);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols on empty list");
  Tape& t = *parts[0].tape;
  std::vector<int32_t> ids;
  std::vector<Tensor> vals;
  std::vector<int64_t> widths;
  for (Var p : parts) {
    check_same_tape(parts[0], p);
    ids.push_back(p.id);
    vals.push_back(t.value_of(p.id));
    widths.push_back(vals.back().dim(1));
  }
  return t.record(tempocoh::concat_cols(vals),
                  [ids = std::move(ids), widths = std::move(widths)](Tape& tp, int32_t self) {
                    const Tensor& g = tp.adjoint(self);
                    int64_t off = 0;
                    for (size_t p = 0; p < ids.size(); ++p) {
                      Tensor& dst = tp.adjoint(ids[p]);
                      for (int64_t i = 0; i < dst.dim(0); ++i)
                        for (int64_t j = 0; j < widths[p]; ++j) dst.at(i, j) += g.at(i, off + j);
                      off += widths[p];
                    }
                  });
}

// ---- neural primitives -----------------------------------------------------

Var softmax_lastdim(Var a) {
  check_tape(a);
  Tape& t = *a.tape;
  int32_t ia = a.id;
  return t.record(tempocoh::softmax_lastdim(t.value_of(ia)), [=](Tape& tp, int32_t self) {
    const Tensor& y = tp.value_of(self);
    const Tensor& g = tp.adjoint(self);
    Tensor& dst = tp.adjoint(ia);
    int64_t n = y.dim(static_cast<size_t>(y.rank() - 1));
    int64_t slices = y.numel() / n;
    // dx = y * (g - <g, y>) per slice
    for (int64_t s = 0; s < slices; ++s) {
      const double* yv = y.data() + s * n;
      const double* gv = g.data() + s * n;
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += gv[j] * yv[j];
      double* d = dst.data() + s * n;
      for (int64_t j = 0; j < n; ++j) d[j] += yv[j] * (gv[j] - dot);
    }
  });
}

Var conv1d_same(Var seq, Var kernel) {
  check_same_tape(seq, kernel);
  Tape& t = *seq.tape;
  int32_t is = seq.id, ik = kernel.id;
  return t.record(tempocoh::conv1d_same(t.value_of(is), t.value_of(ik)), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& x = tp.value_of(is);
    const Tensor& k = tp.value_of(ik);
    Tensor& dx = tp.adjoint(is);
    Tensor& dk = tp.adjoint(ik);
    int64_t t_len = x.dim(0), d_len = x.dim(1);
    int64_t radius = (k.dim(0) - 1) / 2;
    for (int64_t o = -radius; o <= radius; ++o) {
      double kv = k.at(o + radius);
      double ksum = 0.0;
      for (int64_t tt = 0; tt < t_len; ++tt) {
        int64_t src = tt + o;
        if (src < 0 || src >= t_len) continue;
        for (int64_t d = 0; d < d_len; ++d) {
          // out[tt] consumed x[tt + o]; push adjoint back along both paths
          dx.at(src, d) += kv * g.at(tt, d);
          ksum += g.at(tt, d) * x.at(src, d);
        }
      }
      dk.at(o + radius) += ksum;
    }
  });
}

Var banded_affinity(Var h, int64_t radius, bool unit_diag) {
  check_tape(h);
  Tape& t = *h.tape;
  int32_t ih = h.id;
  const Tensor& hv = t.value_of(ih);
  if (hv.rank() != 2) throw ShapeError("banded_affinity requires rank-2 input, got " + hv.shape().to_string());
  int64_t rows = hv.dim(0), cols = hv.dim(1);
  Tensor out(Shape{rows, rows});
  for (int64_t i = 0; i < rows; ++i) {
    if (unit_diag) out.at(i, i) = 1.0;
    for (int64_t j = std::max<int64_t>(0, i - radius); j <= std::min(rows - 1, i + radius); ++j) {
      if (j == i) continue;
      double ss = 0.0;
      for (int64_t d = 0; d < cols; ++d) {
        double r = hv.at(i, d) - hv.at(j, d);
        ss += r * r;
      }
      out.at(i, j) = std::exp(-std::sqrt(ss));
    }
  }
  return t.record(std::move(out), [=](Tape& tp, int32_t self) {
    const Tensor& g = tp.adjoint(self);
    const Tensor& hh = tp.value_of(ih);
    const Tensor& d = tp.value_of(self);
    Tensor& dst = tp.adjoint(ih);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = std::max<int64_t>(0, i - radius); j <= std::min(rows - 1, i + radius); ++j) {
        if (j == i || g.at(i, j) == 0.0) continue;
        double ss = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          double r = hh.at(i, c) - hh.at(j, c);
          ss += r * r;
        }
        double nrm = std::sqrt(ss);
        if (nrm == 0.0) continue;  // kink of the norm; treat as zero slope
        double coef = -g.at(i, j) * d.at(i, j) / nrm;
        for (int64_t c = 0; c < cols; ++c) {
          double r = hh.at(i, c) - hh.at(j, c);
          dst.at(i, c) += coef * r;
          dst.at(j, c) -= coef * r;
        }
      }
    }
  });
}

// ---- oracle ----------------------------------------------------------------

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double step) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = probe.at(i);
    probe.at(i) = orig + step;
    double fp = f(probe);
    probe.at(i) = orig - step;
    double fm = f(probe);
    probe.at(i) = orig;
    grad.at(i) = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace tempocoh::ad
