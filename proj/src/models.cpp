// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/models.hpp"

#include <cmath>

#include <json.hpp>

#include "tempocoh/error.hpp"
#include "tempocoh/rng.hpp"
#include "tempocoh/taxonomy.hpp"

namespace tempocoh {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::dnn: return "dnn";
    case ModelKind::netvlad: return "netvlad";
    case ModelKind::tc_netvlad: return "tc-netvlad";
    case ModelKind::rnn: return "rnn";
    case ModelKind::rnn_attn: return "rnn-attn";
    case ModelKind::tc_rnn: return "tc-rnn";
    case ModelKind::tm: return "tm";
    case ModelKind::tc_tm: return "tc-tm";
    case ModelKind::ensemble: return "ensemble";
    case ModelKind::tc_ens: return "tc-ens";
  }
  throw ContractError("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  for (ModelKind k : {ModelKind::dnn, ModelKind::netvlad, ModelKind::tc_netvlad, ModelKind::rnn,
                      ModelKind::rnn_attn, ModelKind::tc_rnn, ModelKind::tm, ModelKind::tc_tm,
                      ModelKind::ensemble, ModelKind::tc_ens}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown model kind '" + s + "'");
}

std::string to_string(TCMode mode) {
  switch (mode) {
    case TCMode::exact: return "exact";
    case TCMode::gated: return "gated";
    case TCMode::learned_conv: return "learned-conv";
  }
  throw ContractError("unknown tc mode");
}

TCMode tc_mode_from_string(const std::string& s) {
  for (TCMode m : {TCMode::exact, TCMode::gated, TCMode::learned_conv}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown tc mode '" + s + "'");
}

bool is_tc(ModelKind kind) {
  return kind == ModelKind::tc_netvlad || kind == ModelKind::tc_rnn || kind == ModelKind::tc_tm ||
         kind == ModelKind::tc_ens;
}

bool is_ensemble(ModelKind kind) { return kind == ModelKind::ensemble || kind == ModelKind::tc_ens; }

ModelKind vanilla_counterpart(ModelKind kind) {
  switch (kind) {
    case ModelKind::tc_netvlad: return ModelKind::netvlad;
    case ModelKind::tc_rnn: return ModelKind::rnn_attn;
    case ModelKind::tc_tm: return ModelKind::tm;
    case ModelKind::tc_ens: return ModelKind::ensemble;
    default: return kind;
  }
}

std::vector<ModelKind> ensemble_members(ModelKind kind) {
  if (kind == ModelKind::ensemble) return {ModelKind::netvlad, ModelKind::rnn_attn, ModelKind::tm};
  if (kind == ModelKind::tc_ens) return {ModelKind::tc_netvlad, ModelKind::tc_rnn, ModelKind::tc_tm};
  return {};
}

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (num_labels < 1) throw ConfigError("num_labels must be >= 1");
  if (clusters < 1) throw ConfigError("clusters must be >= 1");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (heads < 1) throw ConfigError("heads must be >= 1");
  if (model_width < heads || model_width % heads != 0) {
    throw ConfigError("model_width " + std::to_string(model_width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (L < 0) throw ConfigError("L must be >= 0");
  bool width_ok = false;
  for (int64_t w : {5, 9, 13, 17, 21}) width_ok |= kernel_width == w;
  if (!width_ok) throw ConfigError("kernel_width must be one of {5,9,13,17,21}");
  bool maps_ok = false;
  for (int64_t f : {1, 2, 4, 8, 16}) maps_ok |= feature_maps == f;
  if (!maps_ok) throw ConfigError("feature_maps must be one of {1,2,4,8,16}");
  if (kind == ModelKind::tc_rnn && tc_mode == TCMode::gated) {
    throw ConfigError("gated mode applies to assignment models only");
  }
  if (kind == ModelKind::tc_tm && tc_mode != TCMode::learned_conv) {
    throw ConfigError("tc-tm supports only learned-conv mode");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  j["input_dim"] = input_dim;
  j["num_labels"] = num_labels;
  j["clusters"] = clusters;
  j["hidden"] = hidden;
  j["heads"] = heads;
  j["model_width"] = model_width;
  j["L"] = L;
  j["tc_mode"] = to_string(tc_mode);
  j["kernel_width"] = kernel_width;
  j["feature_maps"] = feature_maps;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
    cfg.input_dim = j.at("input_dim").get<int64_t>();
    cfg.num_labels = j.at("num_labels").get<int64_t>();
    cfg.clusters = j.at("clusters").get<int64_t>();
    cfg.hidden = j.at("hidden").get<int64_t>();
    cfg.heads = j.at("heads").get<int64_t>();
    cfg.model_width = j.at("model_width").get<int64_t>();
    cfg.L = j.at("L").get<int64_t>();
    cfg.tc_mode = tc_mode_from_string(j.at("tc_mode").get<std::string>());
    cfg.kernel_width = j.at("kernel_width").get<int64_t>();
    cfg.feature_maps = j.at("feature_maps").get<int64_t>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model config json: ") + e.what());
  }
}

// ---- parameter initialization ----------------------------------------------

namespace {

bool is_kernel_name(const std::string& name) { return name.find(".kernel") != std::string::npos; }

Tensor init_tensor(const std::string& name, Shape shape, uint64_t seed) {
  Rng rng(Rng::mix(seed, fnv1a64(name.data(), name.size())));
  Tensor t = Tensor::uniform(std::move(shape), rng, -0.05, 0.05);
  if (is_kernel_name(name)) t.at((t.dim(0) - 1) / 2) += 1.0;
  return t;
}

void add_bank(std::map<std::string, Shape>& shapes, const ModelConfig& cfg, const std::string& bank) {
  for (int64_t f = 0; f < cfg.feature_maps; ++f) {
    shapes.emplace(bank + ".kernel" + std::to_string(f), Shape{cfg.kernel_width});
  }
}

std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
  std::map<std::string, Shape> s;
  int64_t d = cfg.input_dim, k = cfg.num_labels, h = cfg.hidden;
  switch (cfg.kind) {
    case ModelKind::dnn:
      s.emplace("h_w", Shape{h, d});
      s.emplace("h_b", Shape{h});
      s.emplace("cls_w", Shape{k, h});
      s.emplace("cls_b", Shape{k});
      break;
    case ModelKind::netvlad:
    case ModelKind::tc_netvlad:
      s.emplace("w", Shape{cfg.clusters, d});
      s.emplace("b", Shape{cfg.clusters});
      s.emplace("c", Shape{cfg.clusters, d});
      s.emplace("cls_w", Shape{k, cfg.clusters * d});
      s.emplace("cls_b", Shape{k});
      if (cfg.kind == ModelKind::tc_netvlad && cfg.tc_mode == TCMode::learned_conv) add_bank(s, cfg, "tc_bank");
      break;
    case ModelKind::rnn:
    case ModelKind::rnn_attn:
    case ModelKind::tc_rnn:
      for (const char* g : {"gru_wz", "gru_wr", "gru_wh"}) s.emplace(g, Shape{h, d + h});
      for (const char* g : {"gru_bz", "gru_br", "gru_bh"}) s.emplace(g, Shape{h});
      if (cfg.kind != ModelKind::rnn) {
        s.emplace("att_w", Shape{h, h});
        s.emplace("att_b", Shape{h});
        s.emplace("att_v", Shape{h});
      }
      s.emplace("cls_w", Shape{k, h});
      s.emplace("cls_b", Shape{k});
      if (cfg.kind == ModelKind::tc_rnn && cfg.tc_mode == TCMode::learned_conv) add_bank(s, cfg, "tc_bank");
      break;
    case ModelKind::tm:
    case ModelKind::tc_tm: {
      int64_t m = cfg.model_width, dk = m / cfg.heads;
      s.emplace("in_w", Shape{m, d});
      s.emplace("in_b", Shape{m});
      for (int64_t head = 0; head < cfg.heads; ++head) {
        s.emplace("tm_wq" + std::to_string(head), Shape{m, dk});
        s.emplace("tm_wk" + std::to_string(head), Shape{m, dk});
        s.emplace("tm_wv" + std::to_string(head), Shape{m, dk});
      }
      s.emplace("cls_w", Shape{k, m});
      s.emplace("cls_b", Shape{k});
      if (cfg.kind == ModelKind::tc_tm) {
        add_bank(s, cfg, "k_bank");
        add_bank(s, cfg, "v_bank");
      }
      break;
    }
    case ModelKind::ensemble:
    case ModelKind::tc_ens:
      throw ContractError("ensemble parameter shapes are built per member");
  }
  return s;
}

}  // namespace

ParamMap init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParamMap out;
  if (is_ensemble(cfg.kind)) {
    std::vector<ModelKind> members = ensemble_members(cfg.kind);
    for (size_t m = 0; m < members.size(); ++m) {
      ModelConfig mc = member_config(cfg, static_cast<int64_t>(m));
      ParamMap mp = init_params(mc, Rng::mix(seed, m));
      for (auto& [name, tensor] : mp) {
        out.emplace("m" + std::to_string(m) + "." + name, std::move(tensor));
      }
    }
    return out;
  }
  for (auto& [name, shape] : param_shapes(cfg)) out.emplace(name, init_tensor(name, shape, seed));
  return out;
}

ad::Var BoundParams::at(const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw ContractError("missing model parameter '" + name + "'");
  return it->second;
}

BoundParams bind_params(ad::Tape& tape, const ParamMap& params) {
  BoundParams bp;
  bp.tape = &tape;
  for (const auto& [name, tensor] : params) bp.vars.emplace(name, tape.leaf(tensor));
  return bp;
}

// ---- shared forward pieces -------------------------------------------------

namespace {

ad::Var l2_normalize_rows(ad::Var m) {
  ad::Var ss = ad::row_sums(ad::mul(m, m));
  ad::Var inv = ad::divide(1.0, ad::sqrt(ad::add(ss, 1e-24)));
  return ad::rows_scale(m, inv);
}

ad::Var classifier(const BoundParams& p, const std::string& pre, ad::Var rep) {
  return ad::sigmoid(
      ad::add_rowvec(ad::matmul(rep, ad::transpose(p.at(pre + "cls_w"))), p.at(pre + "cls_b")));
}

std::vector<ad::Var> bank_maps(const BoundParams& p, const std::string& pre, const std::string& bank,
                               int64_t feature_maps) {
  std::vector<ad::Var> maps;
  for (int64_t f = 0; f < feature_maps; ++f) maps.push_back(p.at(pre + bank + ".kernel" + std::to_string(f)));
  return maps;
}

// GRU over the frame rows; returns all hidden states [T x H].
ad::Var gru_states(const BoundParams& p, const std::string& pre, ad::Var x) {
  ad::Tape& tape = *p.tape;
  int64_t t_len = x.value().dim(0), d = x.value().dim(1);
  ad::Var wz = ad::transpose(p.at(pre + "gru_wz"));
  ad::Var wr = ad::transpose(p.at(pre + "gru_wr"));
  ad::Var wh = ad::transpose(p.at(pre + "gru_wh"));
  ad::Var bz = p.at(pre + "gru_bz"), br = p.at(pre + "gru_br"), bh = p.at(pre + "gru_bh");
  int64_t h_dim = bz.value().dim(0);
  ad::Var h = tape.leaf(Tensor(Shape{1, h_dim}));
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<size_t>(t_len));
  for (int64_t t = 0; t < t_len; ++t) {
    ad::Var xt = ad::reshape(ad::slice_row(x, t), Shape{1, d});
    ad::Var in = ad::concat_cols({xt, h});
    ad::Var z = ad::sigmoid(ad::add_rowvec(ad::matmul(in, wz), bz));
    ad::Var r = ad::sigmoid(ad::add_rowvec(ad::matmul(in, wr), br));
    ad::Var in2 = ad::concat_cols({xt, ad::mul(r, h)});
    ad::Var hc = ad::tanh(ad::add_rowvec(ad::matmul(in2, wh), bh));
    h = ad::add(ad::sub(h, ad::mul(z, h)), ad::mul(z, hc));
    rows.push_back(ad::reshape(h, Shape{h_dim}));
  }
  return ad::stack_rows(rows);
}

// Additive attention scores e_i = v . tanh(W h_i + b), one per frame.
ad::Var additive_scores(const BoundParams& p, const std::string& pre, ad::Var h) {
  int64_t t_len = h.value().dim(0);
  ad::Var u = ad::tanh(ad::add_rowvec(ad::matmul(h, ad::transpose(p.at(pre + "att_w"))), p.at(pre + "att_b")));
  ad::Var v = ad::reshape(p.at(pre + "att_v"), Shape{p.at(pre + "att_v").value().dim(0), 1});
  return ad::reshape(ad::matmul(u, v), Shape{t_len});
}

// Soft assignment over clusters, coherent or not, for the NetVLAD family.
ad::Var assignment(const ModelConfig& cfg, const BoundParams& p, const std::string& pre, ad::Var x,
                   const FrameSequence& seq, bool use_tc) {
  ad::Var w_t = ad::transpose(p.at(pre + "w"));
  ad::Var b = p.at(pre + "b");
  if (!use_tc) return vanilla_assignment(ad::add_rowvec(ad::matmul(x, w_t), b));
  switch (cfg.tc_mode) {
    case TCMode::exact: {
      ad::Var q = ad::add_rowvec(ad::matmul(x, w_t), b);
      return tc_assignment(q, affinity(seq, cfg.L), cfg.L);
    }
    case TCMode::gated: {
      ad::Var q = ad::add_rowvec(ad::matmul(x, w_t), b);
      GateMatrix z = gates_from_scenes(seq.scene_starts, seq.frames());
      return tc_assignment_gated(q, affinity(seq, cfg.L), z, cfg.L);
    }
    case TCMode::learned_conv: {
      // Kernels smooth the assignment branch only; residuals keep raw x.
      ad::Var xs = tc_conv_layer(x, bank_maps(p, pre, "tc_bank", cfg.feature_maps));
      return vanilla_assignment(ad::add_rowvec(ad::matmul(xs, w_t), b));
    }
  }
  throw ContractError("unknown tc mode");
}

// VLAD descriptor from an assignment: flattened, intra- then L2-normalized.
ad::Var vlad_descriptor(const BoundParams& p, const std::string& pre, ad::Var alpha, ad::Var x) {
  ad::Var c = p.at(pre + "c");
  ad::Var v = ad::sub(ad::matmul(ad::transpose(alpha), x), ad::rows_scale(c, ad::col_sums(alpha)));
  ad::Var intra = l2_normalize_rows(v);
  ad::Var flat = ad::reshape(intra, Shape{1, v.value().dim(0) * v.value().dim(1)});
  return l2_normalize_rows(flat);
}

ad::Var netvlad_forward(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                        const FrameSequence& seq, bool use_tc) {
  ad::Var x = p.tape->leaf(seq.features);
  ad::Var alpha = assignment(cfg, p, pre, x, seq, use_tc);
  ad::Var desc = vlad_descriptor(p, pre, alpha, x);
  return ad::reshape(classifier(p, pre, desc), Shape{cfg.num_labels});
}

ad::Var rnn_forward(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                    const FrameSequence& seq, bool attention, bool use_tc) {
  ad::Var x = p.tape->leaf(seq.features);
  ad::Var h = gru_states(p, pre, x);
  int64_t t_len = seq.frames(), h_dim = cfg.hidden;
  ad::Var pooled{};
  if (!attention) {
    pooled = ad::reshape(ad::slice_row(h, t_len - 1), Shape{1, h_dim});
  } else if (use_tc && cfg.tc_mode == TCMode::learned_conv) {
    ad::Var hs = tc_conv_layer(h, bank_maps(p, pre, "tc_bank", cfg.feature_maps));
    ad::Var alpha = ad::softmax_lastdim(additive_scores(p, pre, hs));
    pooled = ad::matmul(ad::reshape(alpha, Shape{1, t_len}), hs);
  } else {
    ad::Var e = additive_scores(p, pre, h);
    ad::Var alpha = use_tc ? tc_attention(e, h, cfg.L) : ad::softmax_lastdim(e);
    pooled = ad::matmul(ad::reshape(alpha, Shape{1, t_len}), h);
  }
  return ad::reshape(classifier(p, pre, pooled), Shape{cfg.num_labels});
}

// Transformer encoder rows [T x M]: per-head scaled dot-product attention
// with optional coherence kernels on the K and V streams.
ad::Var tm_encode(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                  const FrameSequence& seq, bool use_tc) {
  ad::Var x = p.tape->leaf(seq.features);
  ad::Var xp = ad::add_rowvec(ad::matmul(x, ad::transpose(p.at(pre + "in_w"))), p.at(pre + "in_b"));
  int64_t dk = cfg.model_width / cfg.heads;
  std::vector<ad::Var> k_maps, v_maps;
  if (use_tc) {
    k_maps = bank_maps(p, pre, "k_bank", cfg.feature_maps);
    v_maps = bank_maps(p, pre, "v_bank", cfg.feature_maps);
  }
  std::vector<ad::Var> heads;
  for (int64_t head = 0; head < cfg.heads; ++head) {
    std::string suffix = std::to_string(head);
    ad::Var q = ad::matmul(xp, p.at(pre + "tm_wq" + suffix));
    ad::Var k = ad::matmul(xp, p.at(pre + "tm_wk" + suffix));
    ad::Var v = ad::matmul(xp, p.at(pre + "tm_wv" + suffix));
    if (use_tc) {
      k = tc_conv_layer(k, k_maps);
      v = tc_conv_layer(v, v_maps);
    }
    ad::Var att = ad::softmax_lastdim(ad::mul(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk))));
    heads.push_back(ad::matmul(att, v));
  }
  return ad::concat_cols(heads);
}

ad::Var tm_forward(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                   const FrameSequence& seq, bool use_tc) {
  ad::Var o = tm_encode(cfg, p, pre, seq, use_tc);
  ad::Var pooled = ad::mul(ad::reshape(ad::col_sums(o), Shape{1, cfg.model_width}),
                           1.0 / static_cast<double>(seq.frames()));
  return ad::reshape(classifier(p, pre, pooled), Shape{cfg.num_labels});
}

ad::Var dnn_forward(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                    const FrameSequence& seq) {
  ad::Var x = p.tape->leaf(seq.features);
  ad::Var mean = ad::mul(ad::reshape(ad::col_sums(x), Shape{1, cfg.input_dim}),
                         1.0 / static_cast<double>(seq.frames()));
  ad::Var hidden = ad::tanh(ad::add_rowvec(ad::matmul(mean, ad::transpose(p.at(pre + "h_w"))), p.at(pre + "h_b")));
  return ad::reshape(classifier(p, pre, hidden), Shape{cfg.num_labels});
}

ad::Var forward_with_prefix(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                            const FrameSequence& seq) {
  switch (cfg.kind) {
    case ModelKind::dnn: return dnn_forward(cfg, p, pre, seq);
    case ModelKind::netvlad: return netvlad_forward(cfg, p, pre, seq, false);
    case ModelKind::tc_netvlad: return netvlad_forward(cfg, p, pre, seq, true);
    case ModelKind::rnn: return rnn_forward(cfg, p, pre, seq, false, false);
    case ModelKind::rnn_attn: return rnn_forward(cfg, p, pre, seq, true, false);
    case ModelKind::tc_rnn: return rnn_forward(cfg, p, pre, seq, true, true);
    case ModelKind::tm: return tm_forward(cfg, p, pre, seq, false);
    case ModelKind::tc_tm: return tm_forward(cfg, p, pre, seq, true);
    case ModelKind::ensemble:
    case ModelKind::tc_ens: {
      std::vector<ModelKind> members = ensemble_members(cfg.kind);
      ad::Var acc{};
      for (size_t m = 0; m < members.size(); ++m) {
        ModelConfig mc = member_config(cfg, static_cast<int64_t>(m));
        ad::Var out = forward_with_prefix(mc, p, pre + "m" + std::to_string(m) + ".", seq);
        acc = (m == 0) ? out : ad::add(acc, out);
      }
      return ad::mul(acc, 1.0 / static_cast<double>(members.size()));
    }
  }
  throw ContractError("unknown model kind");
}

// Per-frame VLAD contributions, normalized like the pooled descriptor.
ad::Var netvlad_frame_rows(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                           const FrameSequence& seq, bool use_tc) {
  ad::Var x = p.tape->leaf(seq.features);
  ad::Var alpha = assignment(cfg, p, pre, x, seq, use_tc);
  ad::Var c = p.at(pre + "c");
  int64_t t_len = seq.frames(), flat_dim = cfg.clusters * cfg.input_dim;
  std::vector<ad::Var> rows;
  for (int64_t t = 0; t < t_len; ++t) {
    ad::Var resid = ad::add_rowvec(ad::negate(c), ad::slice_row(x, t));
    ad::Var contrib = ad::rows_scale(resid, ad::slice_row(alpha, t));
    ad::Var flat = ad::reshape(l2_normalize_rows(contrib), Shape{1, flat_dim});
    rows.push_back(ad::reshape(l2_normalize_rows(flat), Shape{flat_dim}));
  }
  return ad::stack_rows(rows);
}

ad::Var frame_rows(const ModelConfig& cfg, const BoundParams& p, const std::string& pre,
                   const FrameSequence& seq) {
  switch (cfg.kind) {
    case ModelKind::dnn: {
      ad::Var x = p.tape->leaf(seq.features);
      return ad::tanh(ad::add_rowvec(ad::matmul(x, ad::transpose(p.at(pre + "h_w"))), p.at(pre + "h_b")));
    }
    case ModelKind::netvlad: return netvlad_frame_rows(cfg, p, pre, seq, false);
    case ModelKind::tc_netvlad: return netvlad_frame_rows(cfg, p, pre, seq, true);
    case ModelKind::rnn:
    case ModelKind::rnn_attn: {
      ad::Var x = p.tape->leaf(seq.features);
      return gru_states(p, pre, x);
    }
    case ModelKind::tc_rnn: {
      ad::Var x = p.tape->leaf(seq.features);
      ad::Var h = gru_states(p, pre, x);
      if (cfg.tc_mode == TCMode::learned_conv) h = tc_conv_layer(h, bank_maps(p, pre, "tc_bank", cfg.feature_maps));
      return h;
    }
    case ModelKind::tm: return tm_encode(cfg, p, pre, seq, false);
    case ModelKind::tc_tm: return tm_encode(cfg, p, pre, seq, true);
    case ModelKind::ensemble:
    case ModelKind::tc_ens:
      throw ContractError("per-frame rows are built per ensemble member");
  }
  throw ContractError("unknown model kind");
}

}  // namespace

ad::Var model_forward(const ModelConfig& cfg, const BoundParams& params, const FrameSequence& seq) {
  if (seq.features.dim(1) != cfg.input_dim) {
    throw MismatchError("sequence dim " + std::to_string(seq.features.dim(1)) +
                        " does not match model input_dim " + std::to_string(cfg.input_dim));
  }
  return forward_with_prefix(cfg, params, "", seq);
}

Tensor predict(const ModelConfig& cfg, const ParamMap& params, const FrameSequence& seq) {
  ad::Tape tape;
  BoundParams bp = bind_params(tape, params);
  return model_forward(cfg, bp, seq).value();
}

ad::Var frame_predictions(const ModelConfig& cfg, const BoundParams& params, const FrameSequence& seq) {
  if (is_ensemble(cfg.kind)) {
    std::vector<ModelKind> members = ensemble_members(cfg.kind);
    ad::Var acc{};
    for (size_t m = 0; m < members.size(); ++m) {
      ModelConfig mc = member_config(cfg, static_cast<int64_t>(m));
      ad::Var rows = frame_rows(mc, params, "m" + std::to_string(m) + ".", seq);
      ad::Var scores = classifier(params, "m" + std::to_string(m) + ".", rows);
      acc = (m == 0) ? scores : ad::add(acc, scores);
    }
    return ad::mul(acc, 1.0 / static_cast<double>(members.size()));
  }
  return classifier(params, "", frame_rows(cfg, params, "", seq));
}

Tensor attention_weights(const ModelConfig& cfg, const ParamMap& params, const FrameSequence& seq,
                         bool with_tc) {
  if (cfg.kind != ModelKind::rnn_attn && cfg.kind != ModelKind::tc_rnn) {
    throw ContractError("model " + to_string(cfg.kind) + " has no frame attention vector");
  }
  ad::Tape tape;
  BoundParams p = bind_params(tape, params);
  ad::Var x = tape.leaf(seq.features);
  ad::Var h = gru_states(p, "", x);
  bool use_tc = with_tc && cfg.kind == ModelKind::tc_rnn;
  if (use_tc && cfg.tc_mode == TCMode::learned_conv) {
    ad::Var hs = tc_conv_layer(h, bank_maps(p, "", "tc_bank", cfg.feature_maps));
    return ad::softmax_lastdim(additive_scores(p, "", hs)).value();
  }
  ad::Var e = additive_scores(p, "", h);
  if (use_tc) return tc_attention(e, h, cfg.L).value();
  return ad::softmax_lastdim(e).value();
}

std::vector<std::string> kernel_banks(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::tc_netvlad:
    case ModelKind::tc_rnn:
      return cfg.tc_mode == TCMode::learned_conv ? std::vector<std::string>{"tc_bank"}
                                                 : std::vector<std::string>{};
    case ModelKind::tc_tm: return {"k_bank", "v_bank"};
    case ModelKind::ensemble:
    case ModelKind::tc_ens: {
      std::vector<std::string> banks;
      std::vector<ModelKind> members = ensemble_members(cfg.kind);
      for (size_t m = 0; m < members.size(); ++m) {
        for (const auto& b : kernel_banks(member_config(cfg, static_cast<int64_t>(m)))) {
          banks.push_back("m" + std::to_string(m) + "." + b);
        }
      }
      return banks;
    }
    default: return {};
  }
}

Tensor ensemble_forward(const std::vector<std::pair<ModelConfig, ParamMap>>& members,
                        const FrameSequence& seq) {
  if (members.size() < 2) throw ContractError("ensemble needs at least 2 members");
  Tensor acc;
  for (size_t m = 0; m < members.size(); ++m) {
    Tensor out = predict(members[m].first, members[m].second, seq);
    if (m == 0) {
      acc = std::move(out);
    } else {
      if (!acc.same_shape(out)) {
        throw ContractError("ensemble members disagree on label count: " + acc.shape().to_string() +
                            " vs " + out.shape().to_string());
      }
      acc = add(acc, out);
    }
  }
  return mul(acc, 1.0 / static_cast<double>(members.size()));
}

ModelConfig member_config(const ModelConfig& cfg, int64_t member) {
  std::vector<ModelKind> members = ensemble_members(cfg.kind);
  if (members.empty()) throw ContractError(to_string(cfg.kind) + " has no ensemble members");
  if (member < 0 || member >= static_cast<int64_t>(members.size())) {
    throw ContractError("ensemble member index " + std::to_string(member) + " out of range");
  }
  ModelConfig mc = cfg;
  mc.kind = members[static_cast<size_t>(member)];
  return mc;
}

ParamMap member_params(const ParamMap& params, int64_t member) {
  std::string prefix = "m" + std::to_string(member) + ".";
  ParamMap out;
  for (const auto& [name, tensor] : params) {
    if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), tensor);
  }
  if (out.empty()) throw ContractError("no parameters found for ensemble member " + std::to_string(member));
  return out;
}

}  // namespace tempocoh
