// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tempocoh/autodiff.hpp"
#include "tempocoh/hier_loss.hpp"
#include "tempocoh/metrics.hpp"
#include "tempocoh/models.hpp"
#include "tempocoh/oracles.hpp"
#include "tempocoh/rng.hpp"
#include "tempocoh/tc_ops.hpp"

namespace tempocoh {

bool VerifyReport::all_pass() const {
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

namespace {

double max_rel_err(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double x = a.data()[i], y = b.data()[i];
    double scale = std::max({1.0, std::abs(x), std::abs(y)});
    worst = std::max(worst, std::abs(x - y) / scale);
  }
  return worst;
}

// Running max deviation together with the seed index that produced it.
struct Worst {
  double dev = 0.0;
  int64_t seed = -1;

  void update(double d, int64_t s) {
    if (d > dev || seed < 0) {
      dev = d;
      seed = s;
    }
  }
};

CheckResult gate(std::string name, const Worst& w, double tolerance, std::string note = "") {
  CheckResult c;
  c.name = std::move(name);
  c.deviation = w.dev;
  c.tolerance = tolerance;
  c.pass = w.dev <= tolerance;
  c.worst_seed = w.seed;
  c.note = std::move(note);
  return c;
}

CheckResult gate(std::string name, double deviation, double tolerance, std::string note = "") {
  Worst w;
  w.dev = deviation;
  return gate(std::move(name), w, tolerance, std::move(note));
}

struct Dims {
  int64_t t, k, d, radius;
};

Dims random_dims(Rng& rng) {
  return {rng.uniform_int(2, 16), rng.uniform_int(1, 8), rng.uniform_int(1, 8), rng.uniform_int(0, 3)};
}

}  // namespace

CheckResult check_conv_equivalence(int64_t seeds) {
  Worst worst;
  for (int64_t s = 0; s < seeds; ++s) {
    Rng rng(Rng::mix(0xE001, static_cast<uint64_t>(s)));
    Dims dm = random_dims(rng);
    Tensor x = Tensor::uniform(Shape{dm.t, dm.d}, rng);
    Tensor w = Tensor::uniform(Shape{dm.k, dm.d}, rng);
    Tensor b0 = Tensor::zeros(Shape{dm.k});
    Affinity d = affinity(x, dm.radius);
    Tensor q = add_rowvec(matmul(x, transpose(w)), b0);
    Tensor direct = tc_assignment(q, d, dm.radius);
    Tensor conv = tc_assignment_conv(x, w, b0, d, dm.radius);
    worst.update(max_abs_diff(direct, conv), s);
  }
  return gate("assignment conv form vs set form (b = 0)", worst, 1e-10);
}

CheckResult check_conv_bias_note(int64_t seeds) {
  Worst worst;
  for (int64_t s = 0; s < seeds; ++s) {
    Rng rng(Rng::mix(0xE002, static_cast<uint64_t>(s)));
    Dims dm = random_dims(rng);
    if (dm.radius == 0 || dm.t < 2) dm.radius = 1;
    Tensor x = Tensor::uniform(Shape{dm.t, dm.d}, rng);
    Tensor w = Tensor::uniform(Shape{dm.k, dm.d}, rng);
    Tensor b = Tensor::uniform(Shape{dm.k}, rng);
    Affinity d = affinity(x, dm.radius);
    Tensor q = add_rowvec(matmul(x, transpose(w)), b);
    worst.update(max_abs_diff(tc_assignment(q, d, dm.radius), tc_assignment_conv(x, w, b, d, dm.radius)), s);
  }
  CheckResult c = gate("assignment conv form bias sensitivity (b != 0)", worst, 0.0);
  c.pass = worst.dev > 0.0;
  c.note = "expected nonzero: the two forms differ by b_k * sum_{j != i} d_ij in the exponent";
  return c;
}

CheckResult check_attention_window(int64_t seeds) {
  Worst worst;
  for (int64_t s = 0; s < seeds; ++s) {
    Rng rng(Rng::mix(0xE003, static_cast<uint64_t>(s)));
    int64_t t = rng.uniform_int(2, 16), h_dim = rng.uniform_int(1, 8), radius = rng.uniform_int(0, 3);
    Tensor e = Tensor::uniform(Shape{t}, rng);
    Tensor h = Tensor::uniform(Shape{t, h_dim}, rng);
    Tensor set_form = tc_attention(e, h, radius);
    Tensor window = tc_attention_conv(e, affinity(h, radius), radius, /*include_self=*/false);
    worst.update(max_abs_diff(set_form, window), s);
  }
  return gate("attention window form vs set form (self excluded)", worst, 1e-12);
}

CheckResult check_attention_self_note(int64_t seeds) {
  Worst worst;
  for (int64_t s = 0; s < seeds; ++s) {
    Rng rng(Rng::mix(0xE004, static_cast<uint64_t>(s)));
    int64_t t = rng.uniform_int(2, 16), h_dim = rng.uniform_int(1, 8), radius = rng.uniform_int(1, 3);
    Tensor e = Tensor::uniform(Shape{t}, rng);
    Tensor h = Tensor::uniform(Shape{t, h_dim}, rng);
    Tensor literal = tc_attention_conv(e, affinity(h, radius), radius, /*include_self=*/true);
    worst.update(max_abs_diff(tc_attention(e, h, radius), literal), s);
  }
  CheckResult c = gate("attention window form as written (self included)", worst, 0.0);
  c.pass = true;
  c.note = "informational: the as-written window sum counts e_j twice (once via the unit diagonal)";
  return c;
}

namespace {

FrameSequence random_sequence(Rng& rng, int64_t t, int64_t d, bool two_scenes) {
  Tensor x = Tensor::uniform(Shape{t, d}, rng);
  std::vector<int64_t> starts{0};
  if (two_scenes && t > 2) starts.push_back(t / 2);
  return FrameSequence(std::move(x), std::move(starts));
}

ParamMap with_delta_banks(const ModelConfig& cfg, ParamMap params) {
  for (const auto& bank : kernel_banks(cfg)) {
    for (int64_t f = 0; f < cfg.feature_maps; ++f) {
      Tensor delta = Tensor::zeros(Shape{cfg.kernel_width});
      delta.at((cfg.kernel_width - 1) / 2) = 1.0;
      params[bank + ".kernel" + std::to_string(f)] = delta;
    }
  }
  return params;
}

ModelConfig toy_config(ModelKind kind, TCMode mode) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.input_dim = 3;
  cfg.num_labels = 4;
  cfg.clusters = 2;
  cfg.hidden = 3;
  cfg.heads = 2;
  cfg.model_width = 4;
  cfg.L = 2;
  cfg.tc_mode = mode;
  cfg.kernel_width = 5;
  cfg.feature_maps = 2;
  return cfg;
}

}  // namespace

std::vector<CheckResult> check_reductions(int64_t seeds) {
  Worst op_l0, op_z0, op_z1, op_delta;
  Worst m_nv_exact, m_nv_gated0, m_nv_gated1, m_nv_delta;
  Worst m_rnn_exact, m_rnn_delta, m_tm_delta;

  for (int64_t s = 0; s < seeds; ++s) {
    Rng rng(Rng::mix(0xE005, static_cast<uint64_t>(s)));
    Dims dm = random_dims(rng);

    Tensor q = Tensor::uniform(Shape{dm.t, dm.k}, rng);
    Tensor x = Tensor::uniform(Shape{dm.t, dm.d}, rng);
    Affinity d0 = affinity(x, 0);
    op_l0.update(max_abs_diff(tc_assignment(q, d0, 0), vanilla_assignment(q)), s);

    Affinity d = affinity(x, dm.radius);
    GateMatrix z_off, z_on;
    z_off.values = Tensor::zeros(Shape{dm.t, dm.t});
    z_on.values = Tensor::full(Shape{dm.t, dm.t}, 1.0);
    op_z0.update(max_abs_diff(tc_assignment_gated(q, d, z_off, dm.radius), vanilla_assignment(q)), s);
    op_z1.update(max_abs_diff(tc_assignment_gated(q, d, z_on, dm.radius), tc_assignment(q, d, dm.radius)), s);

    TCKernel delta = TCKernel::delta(4, 5);
    op_delta.update(max_abs_diff(tc_conv_layer(x, delta), x), s);

    int64_t t_len = rng.uniform_int(4, 8);
    FrameSequence seq = random_sequence(rng, t_len, 3, true);
    uint64_t mseed = Rng::mix(0xE006, static_cast<uint64_t>(s));

    // NetVLAD family: L = 0, single-frame scenes (gates off), one scene
    // (gates fully on), delta kernels.
    {
      ModelConfig nv = toy_config(ModelKind::netvlad, TCMode::exact);
      ParamMap nv_params = init_params(nv, mseed);
      Tensor base = predict(nv, nv_params, seq);

      ModelConfig tc0 = toy_config(ModelKind::tc_netvlad, TCMode::exact);
      tc0.L = 0;
      m_nv_exact.update(max_abs_diff(predict(tc0, init_params(tc0, mseed), seq), base), s);

      ModelConfig tcg = toy_config(ModelKind::tc_netvlad, TCMode::gated);
      std::vector<int64_t> singleton_starts;
      for (int64_t t = 0; t < t_len; ++t) singleton_starts.push_back(t);
      FrameSequence frag(seq.features, singleton_starts);
      m_nv_gated0.update(max_abs_diff(predict(tcg, init_params(tcg, mseed), frag), base), s);

      ModelConfig tce = toy_config(ModelKind::tc_netvlad, TCMode::exact);
      FrameSequence whole(seq.features, {0});
      m_nv_gated1.update(max_abs_diff(predict(tcg, init_params(tcg, mseed), whole),
                                      predict(tce, init_params(tce, mseed), whole)),
                         s);

      ModelConfig tcl = toy_config(ModelKind::tc_netvlad, TCMode::learned_conv);
      ParamMap lp = with_delta_banks(tcl, init_params(tcl, mseed));
      m_nv_delta.update(max_abs_diff(predict(tcl, lp, seq), base), s);
    }

    // RNN family: L = 0 exact and delta kernels reduce to plain attention.
    {
      ModelConfig ra = toy_config(ModelKind::rnn_attn, TCMode::exact);
      Tensor base = predict(ra, init_params(ra, mseed), seq);

      ModelConfig tc0 = toy_config(ModelKind::tc_rnn, TCMode::exact);
      tc0.L = 0;
      m_rnn_exact.update(max_abs_diff(predict(tc0, init_params(tc0, mseed), seq), base), s);

      ModelConfig tcl = toy_config(ModelKind::tc_rnn, TCMode::learned_conv);
      ParamMap lp = with_delta_banks(tcl, init_params(tcl, mseed));
      m_rnn_delta.update(max_abs_diff(predict(tcl, lp, seq), base), s);
    }

    // Transformer: delta kernels on K and V reduce to the plain encoder.
    {
      ModelConfig tm = toy_config(ModelKind::tm, TCMode::learned_conv);
      Tensor base = predict(tm, init_params(tm, mseed), seq);
      ModelConfig tctm = toy_config(ModelKind::tc_tm, TCMode::learned_conv);
      ParamMap lp = with_delta_banks(tctm, init_params(tctm, mseed));
      m_tm_delta.update(max_abs_diff(predict(tctm, lp, seq), base), s);
    }
  }

  return {
      gate("reduction: tc_assignment at L = 0 equals vanilla", op_l0, 1e-12),
      gate("reduction: gates all zero equal vanilla", op_z0, 1e-12),
      gate("reduction: gates all one equal ungated", op_z1, 1e-12),
      gate("reduction: delta kernel bank is the identity", op_delta, 1e-12),
      gate("reduction: tc-netvlad exact L = 0 equals netvlad", m_nv_exact, 1e-12),
      gate("reduction: tc-netvlad gated single-frame scenes equals netvlad", m_nv_gated0, 1e-12),
      gate("reduction: tc-netvlad gated one scene equals exact", m_nv_gated1, 1e-12),
      gate("reduction: tc-netvlad delta kernels equals netvlad", m_nv_delta, 1e-12),
      gate("reduction: tc-rnn exact L = 0 equals rnn-attn", m_rnn_exact, 1e-12),
      gate("reduction: tc-rnn delta kernels equals rnn-attn", m_rnn_delta, 1e-12),
      gate("reduction: tc-tm delta kernels equals tm", m_tm_delta, 1e-12),
  };
}

CheckResult check_normalization(int64_t seeds) {
  Worst worst;
  auto row_sum_dev = [](const Tensor& m) {
    double dev = 0.0;
    if (m.rank() == 1) {
      double s = 0.0;
      for (int64_t i = 0; i < m.dim(0); ++i) s += m.at(i);
      return std::abs(s - 1.0);
    }
    for (int64_t i = 0; i < m.dim(0); ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < m.dim(1); ++j) s += m.at(i, j);
      dev = std::max(dev, std::abs(s - 1.0));
    }
    return dev;
  };
  for (int64_t s = 0; s < seeds; ++s) {
    Rng rng(Rng::mix(0xE007, static_cast<uint64_t>(s)));
    Dims dm = random_dims(rng);
    Tensor x = Tensor::uniform(Shape{dm.t, dm.d}, rng);
    Tensor q = Tensor::uniform(Shape{dm.t, dm.k}, rng, -3.0, 3.0);
    Affinity d = affinity(x, dm.radius);
    GateMatrix z;
    z.values = Tensor(Shape{dm.t, dm.t});
    for (int64_t i = 0; i < dm.t * dm.t; ++i) z.values.at(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Tensor w = Tensor::uniform(Shape{dm.k, dm.d}, rng);
    Tensor b = Tensor::uniform(Shape{dm.k}, rng);
    Tensor e = Tensor::uniform(Shape{dm.t}, rng, -2.0, 2.0);

    worst.update(row_sum_dev(vanilla_assignment(q)), s);
    worst.update(row_sum_dev(tc_assignment(q, d, dm.radius)), s);
    worst.update(row_sum_dev(tc_assignment_gated(q, d, z, dm.radius)), s);
    worst.update(row_sum_dev(tc_assignment_conv(x, w, b, d, dm.radius)), s);
    worst.update(row_sum_dev(tc_attention(e, x, dm.radius)), s);
    worst.update(row_sum_dev(tc_attention_conv(e, affinity(x, dm.radius), dm.radius)), s);
  }
  return gate("normalization: assignment rows and attention sum to 1", worst, 1e-12);
}

std::vector<CheckResult> check_symmetry() {
  // Two frames, identical features and scores, mutual neighbors.
  Tensor h = Tensor::from_rows({{0.3, -0.7, 1.1}, {0.3, -0.7, 1.1}});
  Tensor e = Tensor::from_vector({0.42, 0.42});
  Tensor alpha = tc_attention(e, h, 1);
  double att_dev = std::abs(alpha.at(0) - alpha.at(1));

  Tensor q = Tensor::from_rows({{0.5, -0.2, 0.9}, {0.5, -0.2, 0.9}});
  Tensor a = tc_assignment(q, affinity(h, 1), 1);
  double asg_dev = 0.0;
  for (int64_t k = 0; k < q.dim(1); ++k) asg_dev = std::max(asg_dev, std::abs(a.at(0, k) - a.at(1, k)));

  return {
      gate("symmetry: two-frame attention weights are equal", att_dev, 0.0),
      gate("symmetry: two-frame assignment rows are equal", asg_dev, 0.0),
  };
}

// ---- gradients -------------------------------------------------------------

namespace {

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

double grad_check(const Builder& build, const std::vector<Tensor>& inputs) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(inputs.size());
  for (const auto& x : inputs) vars.push_back(tape.leaf(x));
  ad::Var y = build(tape, vars);
  tape.backward(y);
  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Tensor adg = tape.grad(vars[i]);
    Tensor fdg = ad::finite_difference_gradient(
        [&](const Tensor& xp) {
          ad::Tape t2;
          std::vector<ad::Var> vs;
          vs.reserve(inputs.size());
          for (size_t j = 0; j < inputs.size(); ++j) vs.push_back(t2.leaf(j == i ? xp : inputs[j]));
          return build(t2, vs).item();
        },
        inputs[i]);
    worst = std::max(worst, max_rel_err(adg, fdg));
  }
  return worst;
}

// Deterministic weights turning a tensor output into a scalar objective.
Builder weighted(std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)> op, Tensor weights) {
  return [op = std::move(op), weights = std::move(weights)](ad::Tape& tape, const std::vector<ad::Var>& vs) {
    ad::Var out = op(tape, vs);
    return ad::sum_all(ad::mul(out, tape.leaf(weights)));
  };
}

Tensor away_from_zero(Tensor t, double margin) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    if (std::abs(t.data()[i]) < margin) t.data()[i] += t.data()[i] >= 0 ? margin : -margin;
  }
  return t;
}

// Probabilities with per-row argmax safely separated from the runner-up,
// so a finite-difference step cannot flip the partial-credit mask.
Tensor tie_free_scores(Rng& rng, int64_t n, int64_t k) {
  Tensor s(Shape{n, k});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < k; ++j) s.at(i, j) = rng.uniform(0.1, 0.9);
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (s.at(i, j) > s.at(i, best)) best = j;
    }
    s.at(i, best) = std::min(0.95, s.at(i, best) + 0.05);
  }
  return s;
}

double model_gradient_case(ModelKind kind, TCMode mode, uint64_t seed) {
  ModelConfig cfg = toy_config(kind, mode);
  Rng rng(Rng::mix(seed, 0xF00D));
  FrameSequence seq = random_sequence(rng, 6, cfg.input_dim, true);
  ParamMap params = init_params(cfg, Rng::mix(seed, 17));
  std::vector<std::string> names;
  std::vector<Tensor> inputs;
  for (const auto& [name, tensor] : params) {
    names.push_back(name);
    inputs.push_back(tensor);
  }
  Tensor w_out = Tensor::uniform(Shape{cfg.num_labels}, rng);
  Builder build = [cfg, seq, names, w_out](ad::Tape& tape, const std::vector<ad::Var>& vs) {
    BoundParams bp;
    bp.tape = &tape;
    for (size_t i = 0; i < names.size(); ++i) bp.vars.emplace(names[i], vs[i]);
    ad::Var scores = model_forward(cfg, bp, seq);
    return ad::sum_all(ad::mul(scores, tape.leaf(w_out)));
  };
  return grad_check(build, inputs);
}

}  // namespace

std::vector<CheckResult> check_gradients(int64_t seeds) {
  struct Case {
    std::string name;
    std::function<double(uint64_t)> run;
  };
  std::vector<Case> cases;

  auto add_case = [&cases](std::string name, std::function<double(uint64_t)> run) {
    cases.push_back({std::move(name), std::move(run)});
  };

  // Elementwise and reduction primitives.
  auto unary_case = [](std::function<ad::Var(ad::Var)> op, double lo, double hi) {
    return [op = std::move(op), lo, hi](uint64_t seed) {
      Rng rng(Rng::mix(seed, 0xA1));
      Tensor x = Tensor::uniform(Shape{3, 4}, rng, lo, hi);
      Tensor w = Tensor::uniform(Shape{3, 4}, rng);
      return grad_check(weighted([op](ad::Tape&, const std::vector<ad::Var>& vs) { return op(vs[0]); }, w),
                        {x});
    };
  };
  add_case("grad: exp", unary_case([](ad::Var v) { return ad::exp(v); }, -1.0, 1.0));
  add_case("grad: log", unary_case([](ad::Var v) { return ad::log(v); }, 0.5, 2.0));
  add_case("grad: sqrt", unary_case([](ad::Var v) { return ad::sqrt(v); }, 0.5, 2.0));
  add_case("grad: tanh", unary_case([](ad::Var v) { return ad::tanh(v); }, -1.0, 1.0));
  add_case("grad: sigmoid", unary_case([](ad::Var v) { return ad::sigmoid(v); }, -1.0, 1.0));
  add_case("grad: negate", unary_case([](ad::Var v) { return ad::negate(v); }, -1.0, 1.0));

  add_case("grad: clamp_min", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA2));
    Tensor x = away_from_zero(Tensor::uniform(Shape{3, 4}, rng), 0.05);
    Tensor w = Tensor::uniform(Shape{3, 4}, rng);
    return grad_check(
        weighted([](ad::Tape&, const std::vector<ad::Var>& vs) { return ad::clamp_min(vs[0], 0.0); }, w), {x});
  });

  add_case("grad: add/sub/mul/divide", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA3));
    Tensor a = Tensor::uniform(Shape{3, 4}, rng);
    Tensor b = Tensor::uniform(Shape{3, 4}, rng, 0.5, 2.0);
    Tensor w = Tensor::uniform(Shape{3, 4}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return ad::divide(ad::mul(ad::add(vs[0], vs[1]), ad::sub(vs[0], 2.0)), vs[1]);
                          },
                          w),
                      {a, b});
  });

  add_case("grad: matmul + transpose", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA4));
    Tensor a = Tensor::uniform(Shape{3, 4}, rng);
    Tensor b = Tensor::uniform(Shape{4, 2}, rng);
    Tensor w = Tensor::uniform(Shape{2, 3}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return ad::transpose(ad::matmul(vs[0], vs[1]));
                          },
                          w),
                      {a, b});
  });

  add_case("grad: row/col sums + add_rowvec + rows_scale", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA5));
    Tensor a = Tensor::uniform(Shape{3, 4}, rng);
    Tensor v = Tensor::uniform(Shape{4}, rng);
    Tensor s = Tensor::uniform(Shape{3}, rng, 0.5, 1.5);
    Tensor w = Tensor::uniform(Shape{4}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return ad::col_sums(ad::rows_scale(ad::add_rowvec(vs[0], vs[1]), vs[2]));
                          },
                          w),
                      {a, v, s});
  });

  add_case("grad: structural (reshape/slice/stack/concat)", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA6));
    Tensor a = Tensor::uniform(Shape{3, 4}, rng);
    Tensor b = Tensor::uniform(Shape{3, 2}, rng);
    Tensor w = Tensor::uniform(Shape{2, 6}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            ad::Var joined = ad::concat_cols({vs[0], vs[1]});  // 3 x 6
                            ad::Var r0 = ad::slice_row(joined, 0);
                            ad::Var r2 = ad::slice_row(joined, 2);
                            return ad::reshape(ad::stack_rows({r0, r2}), Shape{2, 6});
                          },
                          w),
                      {a, b});
  });

  add_case("grad: softmax_lastdim", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA7));
    Tensor x = Tensor::uniform(Shape{3, 5}, rng, -2.0, 2.0);
    Tensor w = Tensor::uniform(Shape{3, 5}, rng);
    return grad_check(
        weighted([](ad::Tape&, const std::vector<ad::Var>& vs) { return ad::softmax_lastdim(vs[0]); }, w),
        {x});
  });

  add_case("grad: conv1d_same", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA8));
    Tensor seq = Tensor::uniform(Shape{6, 3}, rng);
    Tensor kernel = Tensor::uniform(Shape{5}, rng);
    Tensor w = Tensor::uniform(Shape{6, 3}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return ad::conv1d_same(vs[0], vs[1]);
                          },
                          w),
                      {seq, kernel});
  });

  add_case("grad: banded_affinity", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xA9));
    Tensor h = Tensor::uniform(Shape{5, 3}, rng);
    Tensor w = Tensor::uniform(Shape{5, 5}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return ad::banded_affinity(vs[0], 2, false);
                          },
                          w),
                      {h});
  });

  add_case("grad: tc_assignment", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xAA));
    Tensor x = Tensor::uniform(Shape{5, 3}, rng);
    Tensor q = Tensor::uniform(Shape{5, 4}, rng);
    Tensor w = Tensor::uniform(Shape{5, 4}, rng);
    Affinity d = affinity(x, 2);
    return grad_check(weighted(
                          [d](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return tc_assignment(vs[0], d, 2);
                          },
                          w),
                      {q});
  });

  add_case("grad: tc_attention (through e and h)", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xAB));
    Tensor e = Tensor::uniform(Shape{5}, rng);
    Tensor h = Tensor::uniform(Shape{5, 3}, rng);
    Tensor w = Tensor::uniform(Shape{5}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return tc_attention(vs[0], vs[1], 2);
                          },
                          w),
                      {e, h});
  });

  add_case("grad: tc_conv_layer", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xAC));
    Tensor seq = Tensor::uniform(Shape{6, 3}, rng);
    Tensor k0 = Tensor::uniform(Shape{5}, rng);
    Tensor k1 = Tensor::uniform(Shape{5}, rng);
    Tensor w = Tensor::uniform(Shape{6, 3}, rng);
    return grad_check(weighted(
                          [](ad::Tape&, const std::vector<ad::Var>& vs) {
                            return tc_conv_layer(vs[0], {vs[1], vs[2]});
                          },
                          w),
                      {seq, k0, k1});
  });

  // Losses.
  add_case("grad: multilabel cross entropy", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xAD));
    Taxonomy tax = Taxonomy::load({"0\t-1\ta", "1\t0\tb", "2\t0\tc"});
    Tensor s = tie_free_scores(rng, 2, 3);
    LabelSet y0 = ancestor_closure(tax, std::vector<int64_t>{1});
    LabelSet y1 = ancestor_closure(tax, std::vector<int64_t>{2});
    TargetBatch targets(tax, {y0, y1});
    LossConfig lcfg;
    return grad_check(
        [targets, lcfg](ad::Tape&, const std::vector<ad::Var>& vs) {
          return multilabel_cross_entropy(vs[0], targets, lcfg);
        },
        {s});
  });

  add_case("grad: hierarchical cross entropy (both variants)", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xAE));
    Taxonomy tax = Taxonomy::load({"0\t-1\ta", "1\t0\tb", "2\t1\tc", "3\t0\td"});
    Tensor s = tie_free_scores(rng, 2, 4);
    TargetBatch targets(tax, {ancestor_closure(tax, std::vector<int64_t>{2}),
                              ancestor_closure(tax, std::vector<int64_t>{3})});
    LossConfig lit;
    lit.variant = LossConfig::Variant::literal;
    LossConfig blend;
    blend.variant = LossConfig::Variant::blended;
    double a = grad_check(
        [targets, lit, &tax](ad::Tape&, const std::vector<ad::Var>& vs) {
          return hier_cross_entropy(vs[0], targets, tax, lit);
        },
        {s});
    double b = grad_check(
        [targets, blend, &tax](ad::Tape&, const std::vector<ad::Var>& vs) {
          return hier_cross_entropy(vs[0], targets, tax, blend);
        },
        {s});
    return std::max(a, b);
  });

  add_case("grad: segment prediction prior", [](uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xAF));
    Tensor fp = Tensor::uniform(Shape{6, 3}, rng, 0.1, 0.9);
    std::vector<FrameRange> segments{{0, 2}, {2, 6}};
    return grad_check(
        [segments](ad::Tape&, const std::vector<ad::Var>& vs) {
          return label_prior_loss(vs[0], segments);
        },
        {fp});
  });

  // Full model forwards.
  struct ModelCase {
    const char* name;
    ModelKind kind;
    TCMode mode;
  };
  for (ModelCase mc : {ModelCase{"dnn", ModelKind::dnn, TCMode::exact},
                       ModelCase{"netvlad", ModelKind::netvlad, TCMode::exact},
                       ModelCase{"tc-netvlad exact", ModelKind::tc_netvlad, TCMode::exact},
                       ModelCase{"tc-netvlad gated", ModelKind::tc_netvlad, TCMode::gated},
                       ModelCase{"tc-netvlad learned-conv", ModelKind::tc_netvlad, TCMode::learned_conv},
                       ModelCase{"rnn", ModelKind::rnn, TCMode::exact},
                       ModelCase{"rnn-attn", ModelKind::rnn_attn, TCMode::exact},
                       ModelCase{"tc-rnn exact", ModelKind::tc_rnn, TCMode::exact},
                       ModelCase{"tc-rnn learned-conv", ModelKind::tc_rnn, TCMode::learned_conv},
                       ModelCase{"tm", ModelKind::tm, TCMode::learned_conv},
                       ModelCase{"tc-tm", ModelKind::tc_tm, TCMode::learned_conv}}) {
    add_case(std::string("grad: model forward ") + mc.name,
             [mc](uint64_t seed) { return model_gradient_case(mc.kind, mc.mode, seed); });
  }

  std::vector<CheckResult> results;
  results.reserve(cases.size());
  for (const auto& c : cases) {
    Worst worst;
    for (int64_t s = 0; s < seeds; ++s) worst.update(c.run(Rng::mix(0xE008, static_cast<uint64_t>(s))), s);
    results.push_back(gate(c.name, worst, 1e-5));
  }
  return results;
}

// ---- metric oracles --------------------------------------------------------

std::vector<CheckResult> check_metric_oracles(int64_t sets) {
  Worst dev_gap, dev_map, dev_perr, dev_hit;
  for (int64_t s = 0; s < sets; ++s) {
    Rng rng(Rng::mix(0xE009, static_cast<uint64_t>(s)));
    int64_t n = rng.uniform_int(1, 6), k = rng.uniform_int(1, 5);
    std::vector<EvalRecord> records;
    bool any_positive = false;
    for (int64_t r = 0; r < n; ++r) {
      Tensor scores(Shape{k});
      // Quarter-step quantization produces frequent exact ties.
      for (int64_t j = 0; j < k; ++j) scores.at(j) = static_cast<double>(rng.uniform_int(0, 4)) / 4.0;
      LabelSet truth(k);
      for (int64_t j = 0; j < k; ++j) truth.set(j, rng.uniform() < 0.4);
      any_positive |= truth.any();
      records.emplace_back("v" + std::to_string(r), std::move(scores), std::move(truth));
    }
    if (!any_positive) {
      LabelSet forced(k);
      forced.set(0);
      records[0] = EvalRecord(records[0].video_id, records[0].scores, forced);
    }
    int64_t top_n = rng.uniform() < 0.5 ? 20 : rng.uniform_int(1, 3);
    dev_gap.update(std::abs(global_average_precision(records, top_n) - oracle::gap(records, top_n)), s);
    dev_map.update(std::abs(mean_average_precision(records) - oracle::map(records)), s);
    dev_perr.update(std::abs(precision_at_equal_recall(records) - oracle::perr(records)), s);
    dev_hit.update(std::abs(hit_at_one(records) - oracle::hit1(records)), s);
  }

  // Hand anchors from first principles.
  std::vector<EvalRecord> perfect;
  LabelSet t1(2);
  t1.set(0);
  perfect.emplace_back("a", Tensor::from_vector({0.9, 0.1}), t1);
  double hand_perfect = std::abs(global_average_precision(perfect, 20) - 1.0);

  std::vector<EvalRecord> below;
  LabelSet t2(2);
  t2.set(1);
  below.emplace_back("a", Tensor::from_vector({0.9, 0.4}), t2);
  double hand_below = std::abs(global_average_precision(below, 20) - 0.5);

  // One class, positives ranked 1 and 3 of 3: AP = (1 + 2/3) / 2.
  std::vector<EvalRecord> ranked;
  LabelSet yes(1), no(1);
  yes.set(0);
  ranked.emplace_back("a", Tensor::from_vector({0.9}), yes);
  ranked.emplace_back("b", Tensor::from_vector({0.6}), no);
  ranked.emplace_back("c", Tensor::from_vector({0.3}), yes);
  double hand_map = std::abs(mean_average_precision(ranked) - (1.0 + 2.0 / 3.0) / 2.0);

  return {
      gate("metrics: pooled AP matches oracle", dev_gap, 1e-12),
      gate("metrics: per-class AP matches oracle", dev_map, 1e-12),
      gate("metrics: top-|truth| precision matches oracle", dev_perr, 1e-12),
      gate("metrics: hit@1 matches oracle", dev_hit, 1e-12),
      gate("metrics: hand case perfect ranking", hand_perfect, 1e-15),
      gate("metrics: hand case false positive above", hand_below, 1e-15),
      gate("metrics: hand case positives at ranks 1 and 3", hand_map, 1e-15),
  };
}

std::vector<CheckResult> check_hier_cases() {
  std::vector<CheckResult> out;

  Taxonomy chain2 = Taxonomy::load({"0\t-1\ttop", "1\t0\tleaf"});
  LossConfig literal;
  literal.variant = LossConfig::Variant::literal;
  LossConfig blended;
  blended.variant = LossConfig::Variant::blended;

  {
    PredictionBatch preds(Tensor::from_rows({{0.9, 1.0}}));
    TargetBatch targets(chain2, {ancestor_closure(chain2, std::vector<int64_t>{1})});
    double loss = hier_cross_entropy(preds, targets, chain2, literal);
    out.push_back(gate("hier loss: perfect deepest prediction is zero", std::abs(loss), 1e-15));
  }
  {
    PredictionBatch preds(Tensor::from_rows({{0.8, 0.2}}));
    TargetBatch targets(chain2, {ancestor_closure(chain2, std::vector<int64_t>{1})});
    double loss = hier_cross_entropy(preds, targets, chain2, literal);
    out.push_back(gate("hier loss: parent at 0.8 one level up", std::abs(loss - 0.11157177565710488), 1e-6));
  }
  {
    Taxonomy branch = Taxonomy::load({"0\t-1\ttop", "1\t0\tleft", "2\t0\tright"});
    PredictionBatch preds(Tensor::from_rows({{0.3, 0.2, 0.9}}));
    TargetBatch targets(branch, {ancestor_closure(branch, std::vector<int64_t>{1})});
    double lit = hier_cross_entropy(preds, targets, branch, literal);
    double blend = hier_cross_entropy(preds, targets, branch, blended);
    out.push_back(gate("hier loss: off-path argmax scores zero (literal)", std::abs(lit), 1e-15));
    // Deviation is the shortfall below the penalty floor, zero when penalized.
    CheckResult c = gate("hier loss: off-path argmax penalized (blended)", std::max(0.0, 1e-6 - blend), 0.0,
                         "blended variant adds per-row cross entropy for off-path rows");
    out.push_back(c);
  }
  {
    Taxonomy chain4 = Taxonomy::load({"0\t-1\ta", "1\t0\tb", "2\t1\tc", "3\t2\td"});
    LabelSet y = ancestor_closure(chain4, std::vector<int64_t>{3});
    double violation = 0.0;
    double prev = 0.0;
    for (int64_t k = 0; k < 4; ++k) {
      double f = partial_credit(chain4, y, k, k);
      if (k > 0 && f <= prev) violation = std::max(violation, prev - f + 1e-9);
      prev = f;
    }
    violation = std::max(violation, std::abs(prev - 1.0));
    out.push_back(gate("hier loss: partial credit grows along a 4-level chain to 1", violation, 1e-15));
  }
  return out;
}

VerifyReport run_verify(int64_t seeds) {
  if (seeds < 1) seeds = 1;
  VerifyReport report;
  report.checks.push_back(check_conv_equivalence(seeds));
  report.checks.push_back(check_conv_bias_note(std::min<int64_t>(seeds, 20)));
  report.checks.push_back(check_attention_window(seeds));
  report.checks.push_back(check_attention_self_note(std::min<int64_t>(seeds, 20)));
  for (auto& c : check_reductions(seeds)) report.checks.push_back(std::move(c));
  report.checks.push_back(check_normalization(10 * seeds));
  for (auto& c : check_symmetry()) report.checks.push_back(std::move(c));
  for (auto& c : check_gradients(std::max<int64_t>(1, seeds / 5))) report.checks.push_back(std::move(c));
  for (auto& c : check_metric_oracles(2 * seeds)) report.checks.push_back(std::move(c));
  for (auto& c : check_hier_cases()) report.checks.push_back(std::move(c));
  return report;
}

}  // namespace tempocoh
