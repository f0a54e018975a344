// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <optional>
#include <string>
#include <vector>

#include "tempocoh/models.hpp"
#include "test_util.hpp"

using namespace tempocoh;

namespace {

// tc-tm accepts only the learned-conv mode, so kinds containing one default to it.
ModelConfig toy(ModelKind kind, std::optional<TCMode> mode = std::nullopt) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.input_dim = 3;
  cfg.num_labels = 4;
  cfg.clusters = 2;
  cfg.hidden = 3;
  cfg.heads = 2;
  cfg.model_width = 4;
  cfg.L = 2;
  bool needs_conv = kind == ModelKind::tc_tm || kind == ModelKind::tc_ens;
  cfg.tc_mode = mode.value_or(needs_conv ? TCMode::learned_conv : TCMode::exact);
  cfg.kernel_width = 5;
  cfg.feature_maps = 2;
  return cfg;
}

FrameSequence toy_seq(uint64_t seed = 3, int64_t t = 6) {
  Rng rng(seed);
  return FrameSequence(Tensor::uniform(Shape{t, 3}, rng, -1.0, 1.0), {0, 2, 4});
}

const std::vector<ModelKind> kAllKinds = {
    ModelKind::dnn,      ModelKind::netvlad, ModelKind::tc_netvlad, ModelKind::rnn,
    ModelKind::rnn_attn, ModelKind::tc_rnn,  ModelKind::tm,         ModelKind::tc_tm,
    ModelKind::ensemble, ModelKind::tc_ens};

}  // namespace

TEST_CASE("kind and mode string round-trips") {
  for (ModelKind kind : kAllKinds) {
    CHECK(model_kind_from_string(to_string(kind)) == kind);
  }
  for (TCMode mode : {TCMode::exact, TCMode::gated, TCMode::learned_conv}) {
    CHECK(tc_mode_from_string(to_string(mode)) == mode);
  }
  CHECK_THROWS_AS(model_kind_from_string("not-a-model"), ConfigError);
  CHECK_THROWS_AS(tc_mode_from_string("nope"), ConfigError);
}

TEST_CASE("kind predicates and counterparts") {
  CHECK(is_tc(ModelKind::tc_netvlad));
  CHECK(is_tc(ModelKind::tc_ens));
  CHECK_FALSE(is_tc(ModelKind::netvlad));
  CHECK(is_ensemble(ModelKind::ensemble));
  CHECK(is_ensemble(ModelKind::tc_ens));
  CHECK_FALSE(is_ensemble(ModelKind::tc_tm));

  CHECK(vanilla_counterpart(ModelKind::tc_netvlad) == ModelKind::netvlad);
  CHECK(vanilla_counterpart(ModelKind::tc_rnn) == ModelKind::rnn_attn);
  CHECK(vanilla_counterpart(ModelKind::tc_tm) == ModelKind::tm);
  CHECK(vanilla_counterpart(ModelKind::tc_ens) == ModelKind::ensemble);
  CHECK(vanilla_counterpart(ModelKind::dnn) == ModelKind::dnn);

  CHECK(ensemble_members(ModelKind::dnn).empty());
  auto vanilla_members = ensemble_members(ModelKind::ensemble);
  auto tc_members = ensemble_members(ModelKind::tc_ens);
  CHECK(vanilla_members.size() == tc_members.size());
  CHECK(vanilla_members.size() >= 2);
  for (ModelKind m : tc_members) CHECK((is_tc(m) || m == ModelKind::dnn));
}

TEST_CASE("config validation and json round-trip") {
  ModelConfig cfg = toy(ModelKind::tc_tm);
  CHECK_NOTHROW(cfg.validate());

  ModelConfig bad = cfg;
  bad.num_labels = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.model_width = 5;  // not divisible by heads
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.kernel_width = 4;  // outside the supported width family
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.feature_maps = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy(ModelKind::tc_tm, TCMode::exact);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy(ModelKind::tc_rnn, TCMode::gated);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.L = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig back = ModelConfig::from_json(cfg.to_json());
  CHECK(back.kind == cfg.kind);
  CHECK(back.input_dim == cfg.input_dim);
  CHECK(back.num_labels == cfg.num_labels);
  CHECK(back.tc_mode == cfg.tc_mode);
  CHECK(back.kernel_width == cfg.kernel_width);
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS_AS(ModelConfig::from_json("not json"), ParseError);
}

TEST_CASE("init is deterministic per seed and name") {
  ModelConfig cfg = toy(ModelKind::tc_netvlad, TCMode::learned_conv);
  ParamMap a = init_params(cfg, 7);
  ParamMap b = init_params(cfg, 7);
  ParamMap c = init_params(cfg, 8);

  REQUIRE(!a.empty());
  CHECK(a.size() == b.size());
  for (const auto& [name, tensor] : a) {
    CHECK(max_abs_diff(tensor, b.at(name)) == 0.0);
  }
  bool any_diff = false;
  for (const auto& [name, tensor] : a) {
    if (max_abs_diff(tensor, c.at(name)) != 0.0) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("kernel parameters start near delta") {
  ModelConfig cfg = toy(ModelKind::tc_netvlad, TCMode::learned_conv);
  ParamMap params = init_params(cfg, 7);
  int64_t mid = cfg.kernel_width / 2;
  bool saw_kernel = false;
  for (const auto& [name, tensor] : params) {
    if (name.find(".kernel") == std::string::npos) continue;
    saw_kernel = true;
    REQUIRE(tensor.rank() == 1);
    for (int64_t i = 0; i < tensor.dim(0); ++i) {
      double target = (i == mid) ? 1.0 : 0.0;
      CHECK(std::abs(tensor.at(i) - target) < 0.1);  // delta plus small noise
      CHECK(tensor.at(i) != target);                 // noise breaks exact symmetry
    }
  }
  CHECK(saw_kernel);
}

TEST_CASE("forward yields probability rows for every kind") {
  FrameSequence seq = toy_seq();
  for (ModelKind kind : kAllKinds) {
    CAPTURE(to_string(kind));
    ModelConfig cfg = toy(kind);
    ParamMap params = init_params(cfg, 5);
    Tensor scores = predict(cfg, params, seq);
    REQUIRE(scores.rank() == 1);
    CHECK(scores.dim(0) == cfg.num_labels);
    CHECK(scores.all_finite());
    for (int64_t k = 0; k < scores.dim(0); ++k) {
      CHECK(scores.at(k) >= 0.0);
      CHECK(scores.at(k) <= 1.0);
    }

    // Tape forward agrees with the eager wrapper.
    ad::Tape tape;
    BoundParams bound = bind_params(tape, params);
    Tensor via_tape = model_forward(cfg, bound, seq).value();
    CHECK(max_abs_diff(via_tape, scores) == 0.0);
  }
}

TEST_CASE("frame predictions are per-frame probability rows") {
  FrameSequence seq = toy_seq();
  for (ModelKind kind : {ModelKind::netvlad, ModelKind::tc_rnn, ModelKind::tc_tm}) {
    CAPTURE(to_string(kind));
    ModelConfig cfg = toy(kind);
    ParamMap params = init_params(cfg, 5);
    ad::Tape tape;
    BoundParams bound = bind_params(tape, params);
    Tensor fp = frame_predictions(cfg, bound, seq).value();
    REQUIRE(fp.rank() == 2);
    CHECK(fp.dim(0) == seq.frames());
    CHECK(fp.dim(1) == cfg.num_labels);
    for (int64_t i = 0; i < fp.numel(); ++i) {
      CHECK(fp.at(i) >= 0.0);
      CHECK(fp.at(i) <= 1.0);
    }
  }
}

TEST_CASE("attention weights exist only for attention models") {
  FrameSequence seq = toy_seq();
  for (ModelKind kind : {ModelKind::rnn_attn, ModelKind::tc_rnn}) {
    CAPTURE(to_string(kind));
    ModelConfig cfg = toy(kind);
    ParamMap params = init_params(cfg, 5);
    Tensor with_tc = attention_weights(cfg, params, seq, true);
    Tensor without = attention_weights(cfg, params, seq, false);
    REQUIRE(with_tc.rank() == 1);
    CHECK(with_tc.dim(0) == seq.frames());
    double sum = 0.0, sum2 = 0.0;
    for (int64_t i = 0; i < seq.frames(); ++i) {
      CHECK(with_tc.at(i) >= 0.0);
      sum += with_tc.at(i);
      sum2 += without.at(i);
    }
    CHECK(testutil::rel_err(sum, 1.0) < 1e-12);
    CHECK(testutil::rel_err(sum2, 1.0) < 1e-12);
    if (kind == ModelKind::tc_rnn) {
      // Coherence shifts the distribution for a TC model.
      CHECK(max_abs_diff(with_tc, without) > 0.0);
    } else {
      CHECK(max_abs_diff(with_tc, without) == 0.0);
    }
  }
  CHECK_THROWS_AS(
      attention_weights(toy(ModelKind::netvlad), init_params(toy(ModelKind::netvlad), 5), seq, true),
      ContractError);
}

TEST_CASE("kernel banks per kind") {
  CHECK(kernel_banks(toy(ModelKind::netvlad)).empty());
  CHECK(kernel_banks(toy(ModelKind::tc_netvlad, TCMode::exact)).empty());
  CHECK(kernel_banks(toy(ModelKind::tc_netvlad, TCMode::learned_conv)) ==
        std::vector<std::string>{"tc_bank"});
  CHECK(kernel_banks(toy(ModelKind::tc_rnn, TCMode::learned_conv)) ==
        std::vector<std::string>{"tc_bank"});
  CHECK(kernel_banks(toy(ModelKind::tc_tm)) ==
        std::vector<std::string>{"k_bank", "v_bank"});

  auto ens_banks = kernel_banks(toy(ModelKind::tc_ens, TCMode::learned_conv));
  CHECK(!ens_banks.empty());
  for (const auto& b : ens_banks) CHECK(b.find("m") == 0);  // member-prefixed
}

TEST_CASE("bank names map onto parameters with a .kernel suffix") {
  ModelConfig cfg = toy(ModelKind::tc_tm);
  ParamMap params = init_params(cfg, 2);
  for (const auto& bank : kernel_banks(cfg)) {
    int64_t maps = 0;
    for (const auto& [name, tensor] : params) {
      if (name.rfind(bank + ".", 0) == 0 && name.find(".kernel") != std::string::npos) {
        ++maps;
        CHECK(tensor.dim(0) == cfg.kernel_width);
      }
    }
    CHECK(maps == cfg.feature_maps);
  }
}

TEST_CASE("ensemble forward averages member scores") {
  FrameSequence seq = toy_seq();
  ModelConfig cfg = toy(ModelKind::ensemble);
  ParamMap params = init_params(cfg, 5);
  Tensor combined = predict(cfg, params, seq);

  auto members = ensemble_members(cfg.kind);
  Tensor manual(Shape{cfg.num_labels}, 0.0);
  for (int64_t m = 0; m < static_cast<int64_t>(members.size()); ++m) {
    ModelConfig mc = member_config(cfg, m);
    CHECK(mc.kind == members[static_cast<size_t>(m)]);
    ParamMap mp = member_params(params, m);
    CHECK(!mp.empty());
    manual = add(manual, predict(mc, mp, seq));
  }
  manual = mul(manual, Tensor(Shape{cfg.num_labels}, 1.0 / static_cast<double>(members.size())));
  CHECK(max_abs_diff(combined, manual) < 1e-15);

  // The generic helper agrees as well.
  std::vector<std::pair<ModelConfig, ParamMap>> pairs;
  for (int64_t m = 0; m < static_cast<int64_t>(members.size()); ++m) {
    pairs.emplace_back(member_config(cfg, m), member_params(params, m));
  }
  CHECK(max_abs_diff(ensemble_forward(pairs, seq), combined) < 1e-15);
}

TEST_CASE("forward is deterministic and sensitive to inputs") {
  ModelConfig cfg = toy(ModelKind::tc_rnn);
  ParamMap params = init_params(cfg, 5);
  FrameSequence seq = toy_seq(3);
  Tensor a = predict(cfg, params, seq);
  Tensor b = predict(cfg, params, seq);
  CHECK(max_abs_diff(a, b) == 0.0);

  FrameSequence other = toy_seq(4);
  CHECK(max_abs_diff(a, predict(cfg, params, other)) > 0.0);
}

TEST_CASE("input dimension mismatch is rejected") {
  ModelConfig cfg = toy(ModelKind::dnn);
  ParamMap params = init_params(cfg, 5);
  Rng rng(1);
  FrameSequence wide(Tensor::uniform(Shape{4, 5}, rng, -1.0, 1.0), {0});
  CHECK_THROWS_AS(predict(cfg, params, wide), Error);
}
