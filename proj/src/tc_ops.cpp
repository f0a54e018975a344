// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/tc_ops.hpp"

#include <algorithm>
#include <cmath>

namespace tempocoh {

FrameSequence::FrameSequence(Tensor features_in, std::vector<int64_t> scene_starts_in)
    : features(std::move(features_in)), scene_starts(std::move(scene_starts_in)) {
  if (features.rank() != 2) throw ShapeError("frame features must be T x D, got " + features.shape().to_string());
  if (scene_starts.empty() || scene_starts.front() != 0) {
    throw ContractError("scene starts must begin with frame 0");
  }
  for (size_t i = 0; i < scene_starts.size(); ++i) {
    if (scene_starts[i] < 0 || scene_starts[i] >= frames() ||
        (i > 0 && scene_starts[i] <= scene_starts[i - 1])) {
      throw ContractError("scene starts must be strictly increasing within [0, T)");
    }
  }
}

TCKernel TCKernel::delta(int64_t feature_maps, int64_t width) {
  if (width % 2 == 0) throw ConfigError("kernel width must be odd, got " + std::to_string(width));
  TCKernel k;
  for (int64_t f = 0; f < feature_maps; ++f) {
    Tensor m(Shape{width});
    m.at((width - 1) / 2) = 1.0;
    k.maps.push_back(std::move(m));
  }
  return k;
}

void TCKernel::validate() const {
  if (maps.empty()) throw ConfigError("kernel bank must hold at least one feature map");
  for (const auto& m : maps) {
    if (m.rank() != 1 || m.dim(0) % 2 == 0) {
      throw ConfigError("kernel maps must be odd-width vectors, got " + m.shape().to_string());
    }
    if (m.dim(0) != maps[0].dim(0)) throw ConfigError("kernel maps must share one width");
  }
}

Affinity affinity(const Tensor& features, int64_t radius) {
  if (features.rank() != 2) throw ShapeError("affinity input must be T x D, got " + features.shape().to_string());
  if (radius < 0) throw ConfigError("affinity radius must be non-negative");
  int64_t t_len = features.dim(0), d_len = features.dim(1);
  Affinity a;
  a.radius = radius;
  a.values = Tensor(Shape{t_len, t_len});
  for (int64_t i = 0; i < t_len; ++i) {
    a.values.at(i, i) = 1.0;
    for (int64_t j = std::max<int64_t>(0, i - radius); j <= std::min(t_len - 1, i + radius); ++j) {
      if (j == i) continue;
      double ss = 0.0;
      for (int64_t d = 0; d < d_len; ++d) {
        double r = features.at(i, d) - features.at(j, d);
        ss += r * r;
      }
      a.values.at(i, j) = std::exp(-std::sqrt(ss));
    }
  }
  return a;
}

Affinity affinity(const FrameSequence& seq, int64_t radius) { return affinity(seq.features, radius); }

GateMatrix gates_from_scenes(const std::vector<int64_t>& scene_starts, int64_t t_len) {
  if (scene_starts.empty() || scene_starts.front() != 0) {
    throw ContractError("scene starts must begin with frame 0");
  }
  std::vector<int64_t> segment_of(static_cast<size_t>(t_len), 0);
  size_t seg = 0;
  for (int64_t t = 0; t < t_len; ++t) {
    while (seg + 1 < scene_starts.size() && scene_starts[seg + 1] <= t) ++seg;
    segment_of[static_cast<size_t>(t)] = static_cast<int64_t>(seg);
  }
  GateMatrix z;
  z.values = Tensor(Shape{t_len, t_len});
  for (int64_t i = 0; i < t_len; ++i)
    for (int64_t j = 0; j < t_len; ++j)
      z.values.at(i, j) = segment_of[static_cast<size_t>(i)] == segment_of[static_cast<size_t>(j)] ? 1.0 : 0.0;
  return z;
}

namespace {

void check_affinity(const Affinity& d, int64_t t_len, int64_t radius) {
  if (d.values.rank() != 2 || d.values.dim(0) != t_len || d.values.dim(1) != t_len) {
    throw ShapeError("affinity shape " + d.values.shape().to_string() + " does not match T = " +
                     std::to_string(t_len));
  }
  if (radius > d.radius) {
    throw ContractError("requested neighborhood radius " + std::to_string(radius) +
                        " exceeds affinity band " + std::to_string(d.radius));
  }
  if (radius < 0) throw ConfigError("neighborhood radius must be non-negative");
}

// Off-diagonal banded neighbor weights, optionally gated. Multiplying the
// logit matrix by this from the left realizes the neighbor sums of the
// coherent assignment update.
Tensor neighbor_weights(const Affinity& d, const GateMatrix* z, int64_t t_len, int64_t radius) {
  Tensor w(Shape{t_len, t_len});
  for (int64_t i = 0; i < t_len; ++i) {
    for (int64_t j = std::max<int64_t>(0, i - radius); j <= std::min(t_len - 1, i + radius); ++j) {
      if (j == i) continue;
      double v = d.values.at(i, j);
      if (z != nullptr) v *= z->values.at(i, j);
      w.at(i, j) = v;
    }
  }
  return w;
}

}  // namespace

Tensor vanilla_assignment(const Tensor& q) { return softmax_lastdim(q); }
ad::Var vanilla_assignment(ad::Var q) { return ad::softmax_lastdim(q); }

ad::Var tc_assignment(ad::Var q, const Affinity& d, int64_t radius) {
  const Tensor& qv = q.value();
  check_affinity(d, qv.dim(0), radius);
  ad::Tape& tape = *q.tape;
  ad::Var w = tape.leaf(neighbor_weights(d, nullptr, qv.dim(0), radius));
  return ad::softmax_lastdim(ad::add(q, ad::matmul(w, q)));
}

Tensor tc_assignment(const Tensor& q, const Affinity& d, int64_t radius) {
  ad::Tape tape;
  return tc_assignment(tape.leaf(q), d, radius).value();
}

ad::Var tc_assignment_gated(ad::Var q, const Affinity& d, const GateMatrix& z, int64_t radius) {
  const Tensor& qv = q.value();
  check_affinity(d, qv.dim(0), radius);
  if (!z.values.same_shape(d.values)) {
    throw ShapeError("gate shape " + z.values.shape().to_string() + " does not match affinity " +
                     d.values.shape().to_string());
  }
  ad::Tape& tape = *q.tape;
  ad::Var w = tape.leaf(neighbor_weights(d, &z, qv.dim(0), radius));
  return ad::softmax_lastdim(ad::add(q, ad::matmul(w, q)));
}

Tensor tc_assignment_gated(const Tensor& q, const Affinity& d, const GateMatrix& z, int64_t radius) {
  ad::Tape tape;
  return tc_assignment_gated(tape.leaf(q), d, z, radius).value();
}

ad::Var tc_assignment_conv(ad::Var x, ad::Var w, ad::Var b, const Affinity& d, int64_t radius) {
  const Tensor& xv = x.value();
  check_affinity(d, xv.dim(0), radius);
  int64_t t_len = xv.dim(0);
  ad::Tape& tape = *x.tape;

  // Banded window weights including the unit diagonal: row i holds d_ij
  // for the full window [i-L, i+L].
  Tensor win(Shape{t_len, t_len});
  for (int64_t i = 0; i < t_len; ++i) {
    for (int64_t j = std::max<int64_t>(0, i - radius); j <= std::min(t_len - 1, i + radius); ++j) {
      win.at(i, j) = (j == i) ? 1.0 : d.values.at(i, j);
    }
  }
  ad::Var smoothed = ad::matmul(tape.leaf(win), x);                // T x D
  ad::Var logits = ad::add_rowvec(ad::matmul(smoothed, ad::transpose(w)), b);  // T x K
  return ad::softmax_lastdim(logits);
}

Tensor tc_assignment_conv(const Tensor& x, const Tensor& w, const Tensor& b, const Affinity& d,
                          int64_t radius) {
  ad::Tape tape;
  return tc_assignment_conv(tape.leaf(x), tape.leaf(w), tape.leaf(b), d, radius).value();
}

ad::Var tc_attention(ad::Var e, ad::Var h, int64_t radius) {
  const Tensor& ev = e.value();
  if (ev.rank() != 1) throw ShapeError("attention scores must be a vector, got " + ev.shape().to_string());
  int64_t t_len = ev.dim(0);
  if (h.value().dim(0) != t_len) {
    throw ShapeError("hidden states " + h.value().shape().to_string() + " do not match " +
                     std::to_string(t_len) + " scores");
  }
  if (radius < 0) throw ConfigError("neighborhood radius must be non-negative");
  ad::Var dprime = ad::banded_affinity(h, radius, /*unit_diag=*/false);
  ad::Var neighbor = ad::reshape(ad::matmul(dprime, ad::reshape(e, Shape{t_len, 1})), Shape{t_len});
  return ad::softmax_lastdim(ad::add(e, neighbor));
}

Tensor tc_attention(const Tensor& e, const Tensor& h, int64_t radius) {
  ad::Tape tape;
  return tc_attention(tape.leaf(e), tape.leaf(h), radius).value();
}

Tensor tc_attention_conv(const Tensor& e, const Affinity& dprime, int64_t radius, bool include_self) {
  if (e.rank() != 1) throw ShapeError("attention scores must be a vector, got " + e.shape().to_string());
  int64_t t_len = e.dim(0);
  check_affinity(dprime, t_len, radius);
  Tensor logits(Shape{t_len});
  for (int64_t j = 0; j < t_len; ++j) {
    double s = 0.0;
    for (int64_t i = std::max<int64_t>(0, j - radius); i <= std::min(t_len - 1, j + radius); ++i) {
      if (i == j && !include_self) continue;
      s += e.at(i) * dprime.values.at(i, j);
    }
    logits.at(j) = s + e.at(j);
  }
  return softmax_lastdim(logits);
}

ad::Var tc_conv_layer(ad::Var seq, const std::vector<ad::Var>& maps) {
  if (maps.empty()) throw ConfigError("kernel bank must hold at least one feature map");
  ad::Var acc = ad::conv1d_same(seq, maps[0]);
  for (size_t f = 1; f < maps.size(); ++f) acc = ad::add(acc, ad::conv1d_same(seq, maps[f]));
  return ad::mul(acc, 1.0 / static_cast<double>(maps.size()));
}

Tensor tc_conv_layer(const Tensor& seq, const TCKernel& kernel) {
  kernel.validate();
  ad::Tape tape;
  std::vector<ad::Var> maps;
  for (const auto& m : kernel.maps) maps.push_back(tape.leaf(m));
  return tc_conv_layer(tape.leaf(seq), maps).value();
}

}  // namespace tempocoh
