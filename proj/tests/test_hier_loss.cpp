// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "tempocoh/hier_loss.hpp"
#include "test_util.hpp"

using namespace tempocoh;

namespace {

// 0 A -> 1 A.x -> 2 A.x.i ; 3 B -> 4 B.x
Taxonomy chain_tax() {
  return Taxonomy::load({"0\t-1\tA", "1\t0\tA.x", "2\t1\tA.x.i", "3\t-1\tB", "4\t3\tB.x"});
}

TargetBatch targets_of(const Taxonomy& tax, const std::vector<std::vector<int64_t>>& members) {
  std::vector<LabelSet> sets;
  for (const auto& m : members) sets.push_back(ancestor_closure(tax, m));
  return TargetBatch(tax, sets);
}

}  // namespace

TEST_CASE("prediction batch caches argmax with lowest-id tie break") {
  PredictionBatch p(Tensor::from_rows({{0.1, 0.9, 0.2}, {0.4, 0.4, 0.1}}));
  CHECK(p.argmax == std::vector<int64_t>{1, 0});
  CHECK_THROWS_AS(PredictionBatch(Tensor::from_rows({{1.2, 0.0, 0.0}})), ContractError);
  CHECK_THROWS_AS(PredictionBatch(Tensor::from_rows({{-0.1, 0.0, 0.0}})), ContractError);
}

TEST_CASE("target batch rejects sets that are not ancestor-closed") {
  Taxonomy tax = chain_tax();
  LabelSet orphan(5);
  orphan.set(2);
  CHECK_THROWS_AS(TargetBatch(tax, {orphan}), ContractError);
  CHECK_NOTHROW(TargetBatch(tax, {ancestor_closure(tax, {2})}));
}

TEST_CASE("partial credit halves per level of generalization") {
  Taxonomy tax = chain_tax();
  LabelSet y = ancestor_closure(tax, {2});  // {0,1,2}, deepest level 2
  CHECK(partial_credit(tax, y, 2, 2) == 1.0);
  CHECK(partial_credit(tax, y, 1, 1) == 0.5);
  CHECK(partial_credit(tax, y, 0, 0) == 0.25);
  CHECK(partial_credit(tax, y, 2, 1) == 0.0);  // only the predicted node carries weight
  // Membership gating (y_{i,k}) is applied by the loss, not by the weight.
  CHECK(partial_credit(tax, y, 3, 3) == 0.25);
  CHECK_THROWS_AS(partial_credit(tax, LabelSet(5), 2, 2), ContractError);
}

TEST_CASE("literal loss hand values") {
  Taxonomy tax = chain_tax();
  LossConfig cfg;

  SUBCASE("perfect prediction gives zero loss") {
    TargetBatch t = targets_of(tax, {{2}});
    PredictionBatch p(Tensor::from_rows({{1.0, 1.0, 1.0, 0.0, 0.0}}));
    CHECK(hier_cross_entropy(p, t, tax, cfg) == 0.0);
  }

  SUBCASE("parent argmax at 0.8 gives 0.5 * -ln 0.8") {
    TargetBatch t = targets_of(tax, {{2}});
    PredictionBatch p(Tensor::from_rows({{0.3, 0.8, 0.2, 0.0, 0.0}}));
    double expect = 0.5 * -std::log(0.8);
    CHECK(testutil::rel_err(hier_cross_entropy(p, t, tax, cfg), expect) < 1e-15);
    CHECK(testutil::rel_err(expect, 0.11157177565710488) < 1e-15);
  }

  SUBCASE("off-path argmax zeroes the literal loss") {
    TargetBatch t = targets_of(tax, {{2}});
    PredictionBatch p(Tensor::from_rows({{0.3, 0.2, 0.1, 0.9, 0.0}}));
    CHECK(hier_cross_entropy(p, t, tax, cfg) == 0.0);
  }

  SUBCASE("rows average over the batch") {
    TargetBatch t = targets_of(tax, {{2}, {2}});
    PredictionBatch p(Tensor::from_rows({{0.3, 0.8, 0.2, 0.0, 0.0},
                                         {0.3, 0.2, 0.1, 0.9, 0.0}}));
    double expect = 0.5 * (0.5 * -std::log(0.8));
    CHECK(testutil::rel_err(hier_cross_entropy(p, t, tax, cfg), expect) < 1e-15);
  }
}

TEST_CASE("blended variant penalizes off-path rows, literal does not") {
  Taxonomy tax = chain_tax();
  TargetBatch t = targets_of(tax, {{2}});
  PredictionBatch p(Tensor::from_rows({{0.3, 0.2, 0.1, 0.9, 0.0}}));

  LossConfig literal;
  CHECK(hier_cross_entropy(p, t, tax, literal) == 0.0);

  LossConfig blended;
  blended.variant = LossConfig::Variant::blended;
  double loss = hier_cross_entropy(p, t, tax, blended);
  CHECK(loss > 1e-6);

  // Off-path penalty for one row: plain multi-label cross entropy of that row.
  double expect = (-std::log(0.3) - std::log(0.2) - std::log(0.1)  // true ids 0,1,2
                   - std::log(1.0 - 0.9) - std::log(1.0 - 0.0)) /  // false ids 3,4
                  5.0;
  CHECK(testutil::rel_err(loss, expect) < 1e-12);
}

TEST_CASE("tape and eager losses agree and differentiate") {
  Taxonomy tax = chain_tax();
  TargetBatch t = targets_of(tax, {{2}, {4}});
  // Row 0 argmax on path (node 1), row 1 argmax off path (node 1 vs truth {3,4})
  // so the blended variant takes its extra branch.
  Tensor scores = Tensor::from_rows({{0.3, 0.8, 0.2, 0.1, 0.05},
                                     {0.2, 0.7, 0.05, 0.1, 0.6}});
  for (auto variant : {LossConfig::Variant::literal, LossConfig::Variant::blended}) {
    LossConfig cfg;
    cfg.variant = variant;
    double eager = hier_cross_entropy(PredictionBatch(scores), t, tax, cfg);

    ad::Tape tape;
    ad::Var s = tape.leaf(scores);
    ad::Var loss = hier_cross_entropy(s, t, tax, cfg);
    CHECK(testutil::rel_err(loss.item(), eager) < 1e-14);

    tape.backward(loss);
    Tensor analytic = tape.grad(s);
    Tensor numeric = ad::finite_difference_gradient(
        [&](const Tensor& probe) {
          ad::Tape t2;
          return hier_cross_entropy(t2.leaf(probe), t, tax, cfg).value().item();
        },
        scores);
    CHECK(max_abs_diff(analytic, numeric) < 2e-6);
  }
}

TEST_CASE("multilabel cross entropy hand value and gradient") {
  Taxonomy tax = chain_tax();
  TargetBatch t = targets_of(tax, {{0}});
  Tensor scores = Tensor::from_rows({{0.9, 0.2, 0.1, 0.3, 0.4}});
  LossConfig cfg;
  double expect = (-std::log(0.9) - std::log(0.8) - std::log(0.9) - std::log(0.7) -
                   std::log(0.6)) /
                  5.0;
  CHECK(testutil::rel_err(multilabel_cross_entropy(PredictionBatch(scores), t, cfg), expect) <
        1e-14);

  ad::Tape tape;
  ad::Var s = tape.leaf(scores);
  ad::Var loss = multilabel_cross_entropy(s, t, cfg);
  tape.backward(loss);
  Tensor numeric = ad::finite_difference_gradient(
      [&](const Tensor& probe) {
        ad::Tape t2;
        return multilabel_cross_entropy(t2.leaf(probe), t, cfg).value().item();
      },
      scores);
  CHECK(max_abs_diff(tape.grad(s), numeric) < 2e-6);
}

TEST_CASE("label prior loss hand values") {
  // Two frames in one segment: mean pairwise squared distance = ||r0-r1||^2.
  Tensor preds = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}});
  std::vector<FrameRange> segs = {{0, 2}, {2, 3}};
  double expect = 0.5 * (2.0 + 0.0);  // mean over segments; singleton contributes 0
  CHECK(testutil::rel_err(label_prior_loss(preds, segs), expect) < 1e-15);

  ad::Tape tape;
  ad::Var p = tape.leaf(preds);
  ad::Var prior = label_prior_loss(p, segs);
  CHECK(testutil::rel_err(prior.item(), expect) < 1e-15);
  tape.backward(prior);
  Tensor numeric = ad::finite_difference_gradient(
      [&](const Tensor& probe) {
        ad::Tape t2;
        return label_prior_loss(t2.leaf(probe), segs).value().item();
      },
      preds);
  CHECK(max_abs_diff(tape.grad(p), numeric) < 2e-6);

  CHECK_THROWS_AS(label_prior_loss(preds, std::vector<FrameRange>{{0, 2}}), ContractError);
}

TEST_CASE("overall loss blends with lambda") {
  LossConfig cfg;
  cfg.lambda = 0.25;
  CHECK(overall_loss(2.0, 4.0, cfg) == 3.0);
  ad::Tape tape;
  ad::Var orig = tape.leaf(Tensor::scalar(2.0));
  ad::Var prior = tape.leaf(Tensor::scalar(4.0));
  CHECK(overall_loss(orig, prior, cfg).item() == 3.0);
}

TEST_CASE("segments derive from scene starts") {
  auto segs = segments_from_scene_starts({0, 3, 5}, 8);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0] == FrameRange{0, 3});
  CHECK(segs[1] == FrameRange{3, 5});
  CHECK(segs[2] == FrameRange{5, 8});
  CHECK_THROWS_AS(segments_from_scene_starts({1, 3}, 8), ContractError);   // must start at 0
  CHECK_THROWS_AS(segments_from_scene_starts({0, 9}, 8), ContractError);   // start past end
  CHECK_THROWS_AS(segments_from_scene_starts({0, 3, 3}, 8), ContractError);  // strictly increasing
}

TEST_CASE("loss config validation") {
  LossConfig bad;
  bad.lambda = -0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.lambda = 0.0;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
