// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "tempocoh/tc_ops.hpp"
#include "test_util.hpp"

using namespace tempocoh;

namespace {

Tensor random_matrix(int64_t rows, int64_t cols, uint64_t seed) {
  Rng rng(seed);
  return Tensor::uniform(Shape{rows, cols}, rng, -1.0, 1.0);
}

}  // namespace

TEST_CASE("frame sequence validates scene starts") {
  Tensor feats = random_matrix(4, 2, 1);
  CHECK(FrameSequence(feats, {0, 2}).frames() == 4);
  CHECK_THROWS_AS(FrameSequence(feats, {1, 2}), ContractError);
  CHECK_THROWS_AS(FrameSequence(feats, {0, 2, 2}), ContractError);
  CHECK_THROWS_AS(FrameSequence(feats, {0, 4}), ContractError);
  CHECK_THROWS_AS(FrameSequence(feats, {}), ContractError);
}

TEST_CASE("affinity is banded, symmetric, unit on the diagonal") {
  Tensor feats = Tensor::from_rows({{0.0, 0.0}, {3.0, 4.0}, {3.0, 4.0}, {10.0, 0.0}});
  Affinity d = affinity(feats, 1);
  CHECK(d.radius == 1);
  CHECK(d.values.dim(0) == 4);
  CHECK(d.values.at(2, 2) == 1.0);
  CHECK(testutil::rel_err(d.values.at(0, 1), std::exp(-5.0)) < 1e-15);  // ||(3,4)|| = 5
  CHECK(d.values.at(1, 0) == d.values.at(0, 1));
  CHECK(d.values.at(1, 2) == 1.0);  // identical frames
  CHECK(d.values.at(0, 2) == 0.0);  // outside band
  CHECK(d.values.at(0, 3) == 0.0);
}

TEST_CASE("gates mark frames that share a scene") {
  GateMatrix z = gates_from_scenes({0, 2, 3}, 5);
  // scenes: {0,1} {2} {3,4}
  CHECK(z.values.at(0, 1) == 1.0);
  CHECK(z.values.at(1, 0) == 1.0);
  CHECK(z.values.at(0, 0) == 1.0);
  CHECK(z.values.at(1, 2) == 0.0);
  CHECK(z.values.at(2, 3) == 0.0);
  CHECK(z.values.at(3, 4) == 1.0);
  CHECK(z.values.at(0, 4) == 0.0);
}

TEST_CASE("vanilla assignment is a row softmax") {
  Tensor q = Tensor::from_rows({{0.0, 0.0}, {1.0, 3.0}});
  Tensor a = vanilla_assignment(q);
  CHECK(a.at(0, 0) == 0.5);
  double e1 = std::exp(1.0), e3 = std::exp(3.0);
  CHECK(testutil::rel_err(a.at(1, 1), e3 / (e1 + e3)) < 1e-15);
}

TEST_CASE("tc assignment matches a hand computation at T=2") {
  // d_01 = exp(-||x0 - x1||) with x from the same features used for q.
  Tensor feats = Tensor::from_rows({{0.0}, {1.0}});
  Affinity d = affinity(feats, 1);
  double d01 = std::exp(-1.0);
  Tensor q = Tensor::from_rows({{0.2, -0.4}, {0.5, 0.1}});
  Tensor a = tc_assignment(q, d, 1);

  // Row 0 logits: q_0k + q_1k * d01.
  double l00 = 0.2 + 0.5 * d01, l01 = -0.4 + 0.1 * d01;
  double expect00 = std::exp(l00) / (std::exp(l00) + std::exp(l01));
  CHECK(testutil::rel_err(a.at(0, 0), expect00) < 1e-14);
  CHECK(testutil::rel_err(a.at(0, 0) + a.at(0, 1), 1.0) < 1e-15);
}

TEST_CASE("radius zero reduces tc assignment to vanilla") {
  Tensor feats = random_matrix(5, 3, 2);
  Tensor q = random_matrix(5, 4, 3);
  Affinity d = affinity(feats, 0);
  CHECK(max_abs_diff(tc_assignment(q, d, 0), vanilla_assignment(q)) < 1e-15);
  // The affinity band must cover the requested radius.
  CHECK_THROWS_AS(tc_assignment(q, d, 2), ContractError);
}

TEST_CASE("gates at zero and one bracket the gated assignment") {
  Tensor feats = random_matrix(6, 3, 4);
  Tensor q = random_matrix(6, 4, 5);
  Affinity d = affinity(feats, 2);

  GateMatrix all_off{Tensor(Shape{6, 6}, 0.0)};
  CHECK(max_abs_diff(tc_assignment_gated(q, d, all_off, 2), vanilla_assignment(q)) < 1e-15);

  GateMatrix all_on{Tensor(Shape{6, 6}, 1.0)};
  CHECK(max_abs_diff(tc_assignment_gated(q, d, all_on, 2), tc_assignment(q, d, 2)) < 1e-15);
}

TEST_CASE("conv form equals set form only at zero bias") {
  int64_t t = 7, dim = 3, k = 4, radius = 2;
  Tensor x = random_matrix(t, dim, 6);
  Tensor w = random_matrix(k, dim, 7);  // one row of weights per cluster
  Affinity d = affinity(x, radius);
  Tensor q = matmul(x, transpose(w));  // zero-bias logits

  Tensor zero_b(Shape{k}, 0.0);
  CHECK(max_abs_diff(tc_assignment_conv(x, w, zero_b, d, radius),
                     tc_assignment(q, d, radius)) < 1e-12);

  Tensor b = Tensor::from_vector({0.5, -0.2, 0.1, 0.3});
  Tensor q_b = add_rowvec(q, b);
  double dev = max_abs_diff(tc_assignment_conv(x, w, b, d, radius), tc_assignment(q_b, d, radius));
  CHECK(dev > 1e-6);  // the bias picks up the window weight sum_j d_ij
}

TEST_CASE("tc attention matches a hand computation at T=2") {
  Tensor h = Tensor::from_rows({{0.0}, {2.0}});
  double d01 = std::exp(-2.0);
  Tensor e = Tensor::from_vector({0.3, -0.1});
  Tensor alpha = tc_attention(e, h, 1);

  double g0 = 0.3 + (-0.1) * d01;
  double g1 = -0.1 + 0.3 * d01;
  double expect0 = std::exp(g0) / (std::exp(g0) + std::exp(g1));
  CHECK(testutil::rel_err(alpha.at(0), expect0) < 1e-14);
  CHECK(testutil::rel_err(alpha.at(0) + alpha.at(1), 1.0) < 1e-15);

  Tensor plain = tc_attention(e, h, 0);
  double s0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-0.1));
  CHECK(testutil::rel_err(plain.at(0), s0) < 1e-14);
}

TEST_CASE("attention window form vs set form") {
  Rng rng(8);
  Tensor h = Tensor::uniform(Shape{6, 3}, rng, -1.0, 1.0);
  Tensor e = Tensor::uniform(Shape{6}, rng, -1.0, 1.0);
  int64_t radius = 2;
  Affinity dprime = affinity(h, radius);

  // Without the diagonal the window sum is exactly the set-form neighbor sum.
  CHECK(max_abs_diff(tc_attention_conv(e, dprime, radius, false),
                     tc_attention(e, h, radius)) < 1e-12);

  // With the diagonal e_j is double counted, so the forms drift apart.
  CHECK(max_abs_diff(tc_attention_conv(e, dprime, radius, true),
                     tc_attention(e, h, radius)) > 1e-6);
}

TEST_CASE("tape tc ops agree with eager and differentiate") {
  Rng rng(9);
  Tensor feats = Tensor::uniform(Shape{5, 3}, rng, -1.0, 1.0);
  Tensor q = Tensor::uniform(Shape{5, 2}, rng, -1.0, 1.0);
  Tensor weight = Tensor::uniform(Shape{5, 2}, rng, -1.0, 1.0);
  Affinity d = affinity(feats, 1);

  ad::Tape tape;
  ad::Var qv = tape.leaf(q);
  ad::Var a = tc_assignment(qv, d, 1);
  CHECK(max_abs_diff(a.value(), tc_assignment(q, d, 1)) < 1e-15);

  ad::Var loss = ad::sum_all(ad::mul(a, tape.leaf(weight)));
  tape.backward(loss);
  Tensor numeric = ad::finite_difference_gradient(
      [&](const Tensor& probe) {
        ad::Tape t2;
        ad::Var av = tc_assignment(t2.leaf(probe), d, 1);
        return ad::sum_all(ad::mul(av, t2.leaf(weight))).value().item();
      },
      q);
  CHECK(max_abs_diff(tape.grad(qv), numeric) < 2e-6);
}

TEST_CASE("tc attention gradient flows through hidden states") {
  Rng rng(10);
  Tensor h = Tensor::uniform(Shape{4, 2}, rng, -1.0, 1.0);
  Tensor e = Tensor::uniform(Shape{4}, rng, -1.0, 1.0);
  Tensor weight = Tensor::uniform(Shape{4}, rng, -1.0, 1.0);

  ad::Tape tape;
  ad::Var hv = tape.leaf(h);
  ad::Var ev = tape.leaf(e);
  ad::Var alpha = tc_attention(ev, hv, 1);
  CHECK(max_abs_diff(alpha.value(), tc_attention(e, h, 1)) < 1e-15);

  ad::Var loss = ad::sum_all(ad::mul(alpha, tape.leaf(weight)));
  tape.backward(loss);
  Tensor numeric_h = ad::finite_difference_gradient(
      [&](const Tensor& probe) {
        ad::Tape t2;
        ad::Var av = tc_attention(t2.leaf(e), t2.leaf(probe), 1);
        return ad::sum_all(ad::mul(av, t2.leaf(weight))).value().item();
      },
      h);
  CHECK(max_abs_diff(tape.grad(hv), numeric_h) < 2e-6);
}

TEST_CASE("kernel bank delta, validation and conv layer") {
  TCKernel delta = TCKernel::delta(3, 5);
  REQUIRE(delta.maps.size() == 3);
  CHECK(delta.width() == 5);
  CHECK(delta.maps[0].at(2) == 1.0);
  CHECK(delta.maps[0].at(0) == 0.0);
  CHECK_NOTHROW(delta.validate());

  TCKernel even;
  even.maps.push_back(Tensor::from_vector({1.0, 2.0}));
  CHECK_THROWS_AS(even.validate(), ConfigError);
  TCKernel empty;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
  TCKernel ragged;
  ragged.maps.push_back(Tensor::from_vector({1.0, 2.0, 3.0}));
  ragged.maps.push_back(Tensor::from_vector({1.0, 2.0, 3.0, 4.0, 5.0}));
  CHECK_THROWS_AS(ragged.validate(), ConfigError);

  // Delta bank is the identity map up to one rounding in the map average.
  Tensor seq = random_matrix(6, 2, 11);
  CHECK(max_abs_diff(tc_conv_layer(seq, delta), seq) < 1e-15);

  // Two maps average: (conv(k0) + conv(k1)) / 2.
  TCKernel bank;
  bank.maps.push_back(Tensor::from_vector({0.0, 1.0, 0.0}));
  bank.maps.push_back(Tensor::from_vector({1.0, 0.0, 0.0}));  // shift: out[t] = seq[t-1]
  Tensor out = tc_conv_layer(seq, bank);
  CHECK(testutil::rel_err(out.at(3, 0), 0.5 * (seq.at(3, 0) + seq.at(2, 0))) < 1e-15);
  CHECK(testutil::rel_err(out.at(0, 1), 0.5 * seq.at(0, 1)) < 1e-15);  // zero padding

  // Tape version agrees and differentiates w.r.t. the kernels.
  ad::Tape tape;
  ad::Var seq_v = tape.leaf(seq);
  std::vector<ad::Var> maps = {tape.leaf(bank.maps[0]), tape.leaf(bank.maps[1])};
  ad::Var out_v = tc_conv_layer(seq_v, maps);
  CHECK(max_abs_diff(out_v.value(), out) < 1e-15);

  ad::Var loss = ad::sum_all(ad::mul(out_v, out_v));
  tape.backward(loss);
  Tensor numeric_k = ad::finite_difference_gradient(
      [&](const Tensor& probe) {
        ad::Tape t2;
        std::vector<ad::Var> m2 = {t2.leaf(probe), t2.leaf(bank.maps[1])};
        ad::Var o = tc_conv_layer(t2.leaf(seq), m2);
        return ad::sum_all(ad::mul(o, o)).value().item();
      },
      bank.maps[0]);
  CHECK(max_abs_diff(tape.grad(maps[0]), numeric_k) < 2e-6);
}
