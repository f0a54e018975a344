// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tempocoh/checkpoint.hpp"
#include "tempocoh/dataio.hpp"
#include "tempocoh/error.hpp"
#include "tempocoh/manifest.hpp"
#include "tempocoh/metrics.hpp"
#include "tempocoh/models.hpp"
#include "tempocoh/taxonomy.hpp"
#include "tempocoh/train.hpp"
#include "tempocoh/verify.hpp"

namespace {

using namespace tempocoh;
using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("failed writing: " + path);
}

json parse_meta(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("checkpoint meta is not valid JSON: ") + e.what());
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- gen-data --------------------------------------------------------------

struct GenDataOpts {
  std::string taxonomy, out;
  SynthConfig synth;
};

json synth_json(const SynthConfig& s) {
  return {{"num_videos", s.num_videos},   {"min_frames", s.min_frames},
          {"max_frames", s.max_frames},   {"min_scenes", s.min_scenes},
          {"max_scenes", s.max_scenes},   {"video_dim", s.video_dim},
          {"audio_dim", s.audio_dim},     {"sigma", s.sigma},
          {"audio_correlation", s.audio_correlation}, {"seed", s.seed}};
}

int run_gen_data(const GenDataOpts& o, const std::vector<std::string>& args) {
  Taxonomy tax = Taxonomy::load_file(o.taxonomy);
  if (static_cast<int64_t>(tax.leaves().size()) < 2) {
    throw ConfigError("taxonomy needs at least two leaf classes for scene sampling");
  }
  uint64_t checksum = fnv1a64_file(o.taxonomy);
  o.synth.validate();
  Dataset ds = generate_synthetic(o.synth, tax, checksum);
  write_dataset(o.out, ds);

  RunManifest m;
  m.command = "gen-data";
  m.args = args;
  m.config = {{"taxonomy", o.taxonomy}, {"out", o.out}, {"synth", synth_json(o.synth)}};
  m.seeds = {o.synth.seed};
  m.outputs = {{"dataset", o.out},
               {"records", ds.header.num_records},
               {"video_dim", ds.header.video_dim},
               {"audio_dim", ds.header.audio_dim},
               {"num_labels", ds.header.num_labels},
               {"taxonomy_checksum", checksum}};
  m.write(o.out + ".manifest.json");
  std::printf("wrote %s: %lld records, %lld labels, video %lld-d + audio %lld-d\n", o.out.c_str(),
              static_cast<long long>(ds.header.num_records), static_cast<long long>(ds.header.num_labels),
              static_cast<long long>(ds.header.video_dim), static_cast<long long>(ds.header.audio_dim));
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainOpts {
  std::string model = "tc-netvlad";
  std::string data, taxonomy, out, trace;
  std::string tc_mode = "learned-conv";
  std::string loss = "bce";
  TrainConfig tcfg;
  int64_t clusters = 8, hidden = 32, heads = 2, model_width = 16, L = 2;
  int64_t kernel_width = 5, feature_maps = 4;
  double lambda = 0.0;
  double val_fraction = 0.2;
};

json train_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},       {"patience", t.patience},
          {"loss", to_string(t.loss)},        {"lambda", t.lambda},
          {"epsilon", t.epsilon},             {"gap_top_n", t.gap_top_n},
          {"seed", t.seed}};
}

void check_dataset_taxonomy(const Dataset& ds, const Taxonomy& tax, uint64_t checksum) {
  if (ds.header.taxonomy_checksum != checksum) {
    throw MismatchError("dataset was generated against a different taxonomy (checksum " +
                        std::to_string(ds.header.taxonomy_checksum) + " vs " + std::to_string(checksum) + ")");
  }
  if (ds.header.num_labels != tax.size()) {
    throw MismatchError("dataset has " + std::to_string(ds.header.num_labels) + " labels, taxonomy has " +
                        std::to_string(tax.size()));
  }
}

int run_train(const TrainOpts& o, const std::vector<std::string>& args) {
  Taxonomy tax = Taxonomy::load_file(o.taxonomy);
  uint64_t checksum = fnv1a64_file(o.taxonomy);
  Dataset ds = read_dataset(o.data);
  check_dataset_taxonomy(ds, tax, checksum);

  ModelConfig mcfg;
  mcfg.kind = model_kind_from_string(o.model);
  mcfg.input_dim = ds.header.video_dim + ds.header.audio_dim;
  mcfg.num_labels = tax.size();
  mcfg.clusters = o.clusters;
  mcfg.hidden = o.hidden;
  mcfg.heads = o.heads;
  mcfg.model_width = o.model_width;
  mcfg.L = o.L;
  mcfg.tc_mode = tc_mode_from_string(o.tc_mode);
  mcfg.kernel_width = o.kernel_width;
  mcfg.feature_maps = o.feature_maps;
  mcfg.validate();

  TrainConfig tcfg = o.tcfg;
  tcfg.loss = loss_kind_from_string(o.loss);
  tcfg.lambda = o.lambda;
  tcfg.validate();

  SplitIndices sp = split(ds.header.num_records, 1.0 - o.val_fraction, o.val_fraction, 0.0, tcfg.seed);
  TrainResult res = train_model(mcfg, tcfg, ds, sp.train, sp.val, tax);

  json meta;
  meta["library"] = library_version();
  meta["model"] = json::parse(mcfg.to_json());
  meta["train"] = train_json(tcfg);
  meta["taxonomy_checksum"] = checksum;
  meta["best_epoch"] = res.best_epoch;
  meta["best_val_gap"] = res.best_val_gap;
  save_checkpoint(o.out, Checkpoint{meta.dump(), res.params});

  std::string trace_path = o.trace.empty() ? o.out + ".trace.csv" : o.trace;
  std::ostringstream csv;
  csv << "member,epoch,train_loss,val_gap\n";
  for (const EpochStat& st : res.trace) {
    csv << st.member << "," << st.epoch << "," << fmt(st.train_loss) << ",";
    if (st.has_val) csv << fmt(st.val_gap);
    csv << "\n";
    std::printf("member %lld epoch %lld train_loss %.6f val_gap %s\n", static_cast<long long>(st.member),
                static_cast<long long>(st.epoch), st.train_loss,
                st.has_val ? fmt(st.val_gap).c_str() : "-");
  }
  write_text(trace_path, csv.str());
  std::printf("best epoch %lld val GAP %.6f; checkpoint %s\n", static_cast<long long>(res.best_epoch),
              res.best_val_gap, o.out.c_str());

  RunManifest m;
  m.command = "train";
  m.args = args;
  m.config = {{"model", json::parse(mcfg.to_json())},
              {"train", train_json(tcfg)},
              {"data", o.data},
              {"taxonomy", o.taxonomy},
              {"val_fraction", o.val_fraction}};
  m.seeds = {tcfg.seed};
  m.outputs = {{"checkpoint", o.out},
               {"trace", trace_path},
               {"best_epoch", res.best_epoch},
               {"best_val_gap", res.best_val_gap},
               {"epochs_run", res.trace.size()}};
  m.write(o.out + ".manifest.json");
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvalOpts {
  std::string checkpoint, data, taxonomy, json_out, csv_out;
  int64_t top_n = 20;
};

void print_block(const char* name, const MetricBlock& b) {
  std::printf("%-10s", name);
  std::printf(" %8.4f", b.gap);
  if (b.map_defined) {
    std::printf(" %8.4f", b.map);
  } else {
    std::printf(" %8s", "n/a");
  }
  std::printf(" %8.4f %8.4f %8lld %8lld\n", b.perr, b.hit1, static_cast<long long>(b.records),
              static_cast<long long>(b.empty_truth_skipped));
}

int run_evaluate(const EvalOpts& o, const std::vector<std::string>& args) {
  Taxonomy tax = Taxonomy::load_file(o.taxonomy);
  uint64_t checksum = fnv1a64_file(o.taxonomy);
  Checkpoint cp = load_checkpoint(o.checkpoint);
  json meta = parse_meta(cp.meta_json);
  if (!meta.contains("model")) throw ParseError("checkpoint meta lacks a model section");
  if (meta.value("taxonomy_checksum", uint64_t{0}) != checksum) {
    throw MismatchError("checkpoint was trained against a different taxonomy");
  }
  Dataset ds = read_dataset(o.data);
  check_dataset_taxonomy(ds, tax, checksum);

  ModelConfig mcfg = ModelConfig::from_json(meta["model"].dump());
  if (mcfg.num_labels != tax.size()) {
    throw MismatchError("checkpoint label space (" + std::to_string(mcfg.num_labels) +
                        ") does not match taxonomy (" + std::to_string(tax.size()) + ")");
  }
  if (mcfg.input_dim != ds.header.video_dim + ds.header.audio_dim) {
    throw MismatchError("checkpoint input dim (" + std::to_string(mcfg.input_dim) +
                        ") does not match dataset frames (" +
                        std::to_string(ds.header.video_dim + ds.header.audio_dim) + ")");
  }

  std::vector<int64_t> idx(static_cast<size_t>(ds.header.num_records));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<EvalRecord> records = predict_records(mcfg, cp.params, ds, idx);
  MetricReport report = per_level_report(records, tax, o.top_n);

  std::printf("%-10s %8s %8s %8s %8s %8s %8s\n", "view", "GAP", "MAP", "PERR", "Hit@1", "records",
              "skipped");
  print_block("Overall", report.overall);
  for (const MetricBlock& b : report.levels) {
    std::string label = "Level " + std::to_string(b.level);
    print_block(label.c_str(), b);
  }

  if (!o.json_out.empty()) write_text(o.json_out, report.to_json());
  if (!o.csv_out.empty()) write_text(o.csv_out, report.to_csv());

  RunManifest m;
  m.command = "evaluate";
  m.args = args;
  m.config = {{"checkpoint", o.checkpoint}, {"data", o.data},      {"taxonomy", o.taxonomy},
              {"gap_top_n", o.top_n},       {"json", o.json_out},  {"csv", o.csv_out}};
  m.outputs = json::parse(report.to_json());
  m.write((o.json_out.empty() ? o.checkpoint + ".eval" : o.json_out) + ".manifest.json");
  return 0;
}

// ---- verify ----------------------------------------------------------------

struct VerifyOpts {
  int64_t seeds = 100;
  std::string manifest = "tempocoh-verify.manifest.json";
};

int run_verify_cmd(const VerifyOpts& o, const std::vector<std::string>& args) {
  VerifyReport rep = run_verify(o.seeds);
  for (const CheckResult& c : rep.checks) {
    std::printf("%s  %-64s max dev %.6e (tol %.1e, worst seed %lld)\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.deviation, c.tolerance, static_cast<long long>(c.worst_seed));
    if (!c.note.empty()) std::printf("      note: %s\n", c.note.c_str());
  }

  json checks = json::array();
  for (const CheckResult& c : rep.checks) {
    checks.push_back({{"name", c.name},
                      {"deviation", c.deviation},
                      {"tolerance", c.tolerance},
                      {"pass", c.pass},
                      {"worst_seed", c.worst_seed},
                      {"note", c.note}});
  }
  RunManifest m;
  m.command = "verify";
  m.args = args;
  m.config = {{"seeds", o.seeds}};
  m.seeds = {static_cast<uint64_t>(o.seeds)};
  m.outputs = {{"checks", checks}, {"all_pass", rep.all_pass()}};
  m.write(o.manifest);

  if (!rep.all_pass()) {
    for (const CheckResult& c : rep.checks) {
      if (!c.pass) {
        std::printf("verification FAILED: %s (deviation %.6e, seed %lld)\n", c.name.c_str(), c.deviation,
                    static_cast<long long>(c.worst_seed));
      }
    }
    return 1;
  }
  std::printf("all %zu checks passed\n", rep.checks.size());
  return 0;
}

// ---- inspect ---------------------------------------------------------------

struct InspectOpts {
  std::string checkpoint, out_dir = ".", data, record;
};

int run_inspect(const InspectOpts& o, const std::vector<std::string>& args) {
  std::error_code ec;
  std::filesystem::create_directories(o.out_dir, ec);
  if (ec) throw IoError("cannot create --out-dir " + o.out_dir + ": " + ec.message());
  Checkpoint cp = load_checkpoint(o.checkpoint);
  json meta = parse_meta(cp.meta_json);
  if (!meta.contains("model")) throw ParseError("checkpoint meta lacks a model section");
  ModelConfig mcfg = ModelConfig::from_json(meta["model"].dump());

  json outputs;
  outputs["kernel_csv"] = json::array();
  std::vector<std::string> banks = kernel_banks(mcfg);
  for (const std::string& bank : banks) {
    std::vector<const Tensor*> maps;
    for (int64_t f = 0; f < mcfg.feature_maps; ++f) {
      auto it = cp.params.find(bank + ".kernel" + std::to_string(f));
      if (it == cp.params.end()) throw ParseError("checkpoint lacks kernel " + bank + ".kernel" + std::to_string(f));
      maps.push_back(&it->second);
    }
    int64_t width = maps[0]->dim(0);
    int64_t c = (width - 1) / 2;
    std::ostringstream csv;
    csv << "map,offset,weight\n";
    std::vector<double> avg(static_cast<size_t>(width), 0.0);
    for (size_t f = 0; f < maps.size(); ++f) {
      for (int64_t w = 0; w < width; ++w) {
        csv << f << "," << (w - c) << "," << fmt(maps[f]->at(w)) << "\n";
        avg[static_cast<size_t>(w)] += maps[f]->at(w) / static_cast<double>(maps.size());
      }
    }
    // Averaged kernel, rescaled so the largest magnitude is 1.
    double norm = 0.0;
    for (double v : avg) norm = std::max(norm, std::abs(v));
    for (int64_t w = 0; w < width; ++w) {
      double v = norm > 0.0 ? avg[static_cast<size_t>(w)] / norm : avg[static_cast<size_t>(w)];
      csv << "avg," << (w - c) << "," << fmt(v) << "\n";
    }
    std::string path = o.out_dir + "/" + bank + ".kernel.csv";
    write_text(path, csv.str());
    outputs["kernel_csv"].push_back(path);
    std::printf("wrote %s (%lld maps, width %lld)\n", path.c_str(), static_cast<long long>(maps.size()),
                static_cast<long long>(width));
  }
  if (banks.empty()) std::printf("model %s has no learned coherence kernels\n", to_string(mcfg.kind).c_str());

  if (!o.record.empty()) {
    if (o.data.empty()) throw ConfigError("--record requires --data");
    if (mcfg.kind != ModelKind::rnn_attn && mcfg.kind != ModelKind::tc_rnn) {
      throw ConfigError("model " + to_string(mcfg.kind) + " has no attention vector; use rnn-attn or tc-rnn");
    }
    DatasetReader reader(o.data);
    VideoRecord rec;
    bool found = false;
    while (reader.next(rec)) {
      if (rec.video_id == o.record) {
        found = true;
        break;
      }
    }
    if (!found) throw MismatchError("unknown record id: " + o.record);
    FrameSequence seq = to_sequence(rec);
    Tensor vanilla = attention_weights(mcfg, cp.params, seq, false);
    Tensor coherent = attention_weights(mcfg, cp.params, seq, true);
    std::ostringstream csv;
    csv << "frame,vanilla,tc\n";
    for (int64_t t = 0; t < seq.frames(); ++t) {
      csv << t << "," << fmt(vanilla.at(t)) << "," << fmt(coherent.at(t)) << "\n";
    }
    std::string path = o.out_dir + "/attention_" + o.record + ".csv";
    write_text(path, csv.str());
    outputs["attention_csv"] = path;
    std::printf("wrote %s (%lld frames)\n", path.c_str(), static_cast<long long>(seq.frames()));
  }

  RunManifest m;
  m.command = "inspect";
  m.args = args;
  m.config = {{"checkpoint", o.checkpoint}, {"out_dir", o.out_dir}, {"data", o.data}, {"record", o.record}};
  m.outputs = outputs;
  m.write(o.out_dir + "/inspect.manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal-coherence sequence aggregation toolkit"};
  app.require_subcommand(1);

  GenDataOpts g;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scene-structured dataset");
  gen->add_option("--taxonomy", g.taxonomy, "taxonomy TSV file")->required();
  gen->add_option("--out", g.out, "output dataset path")->required();
  gen->add_option("--videos", g.synth.num_videos, "number of records")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", g.synth.seed, "generator seed")->required();
  gen->add_option("--min-frames", g.synth.min_frames, "shortest sequence")->check(CLI::PositiveNumber);
  gen->add_option("--max-frames", g.synth.max_frames, "longest sequence")->check(CLI::PositiveNumber);
  gen->add_option("--min-scenes", g.synth.min_scenes, "fewest scenes per record")->check(CLI::PositiveNumber);
  gen->add_option("--max-scenes", g.synth.max_scenes, "most scenes per record")->check(CLI::PositiveNumber);
  gen->add_option("--video-dim", g.synth.video_dim, "video feature width")->check(CLI::PositiveNumber);
  gen->add_option("--audio-dim", g.synth.audio_dim, "audio feature width")->check(CLI::PositiveNumber);
  gen->add_option("--sigma", g.synth.sigma, "frame noise around class centroids");
  gen->add_option("--audio-correlation", g.synth.audio_correlation, "audio-to-class correlation")
      ->check(CLI::Range(0.0, 1.0));
  gen->set_config("--config");

  TrainOpts t;
  CLI::App* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  tr->add_option("--model", t.model, "model kind")
      ->required()
      ->check(CLI::IsMember({"dnn", "netvlad", "tc-netvlad", "rnn", "rnn-attn", "tc-rnn", "tm", "tc-tm",
                             "ensemble", "tc-ens"}));
  tr->add_option("--data", t.data, "dataset path")->required();
  tr->add_option("--taxonomy", t.taxonomy, "taxonomy TSV file")->required();
  tr->add_option("--out", t.out, "checkpoint output path")->required();
  tr->add_option("--trace", t.trace, "loss trace CSV path (default <out>.trace.csv)");
  tr->add_option("--epochs", t.tcfg.max_epochs, "training epochs")->check(CLI::NonNegativeNumber);
  tr->add_option("--batch", t.tcfg.batch_size, "batch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", t.tcfg.learning_rate, "Adam learning rate");
  tr->add_option("--patience", t.tcfg.patience, "early-stopping patience on validation GAP");
  tr->add_option("--loss", t.loss, "training loss")->check(CLI::IsMember({"bce", "hier", "hier-blended"}));
  tr->add_option("--lambda", t.lambda, "segment prediction-similarity prior weight");
  tr->add_option("--gap-top-n", t.tcfg.gap_top_n, "per-record pool size for validation GAP")
      ->check(CLI::PositiveNumber);
  tr->add_option("--seed", t.tcfg.seed, "training seed");
  tr->add_option("--val-fraction", t.val_fraction, "validation split fraction")
      ->check(CLI::Range(0.0, 0.9));
  tr->add_option("--clusters", t.clusters, "NetVLAD clusters")->check(CLI::PositiveNumber);
  tr->add_option("--hidden", t.hidden, "GRU/DNN hidden width")->check(CLI::PositiveNumber);
  tr->add_option("--heads", t.heads, "transformer heads")->check(CLI::PositiveNumber);
  tr->add_option("--model-width", t.model_width, "transformer width")->check(CLI::PositiveNumber);
  tr->add_option("--L", t.L, "temporal neighborhood radius")->check(CLI::NonNegativeNumber);
  tr->add_option("--tc-mode", t.tc_mode, "coherence mode")
      ->check(CLI::IsMember({"exact", "gated", "learned-conv"}));
  tr->add_option("--kernel-width", t.kernel_width, "coherence kernel width");
  tr->add_option("--feature-maps", t.feature_maps, "coherence kernel maps");
  tr->set_config("--config");

  EvalOpts e;
  CLI::App* ev = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", e.checkpoint, "checkpoint path")->required();
  ev->add_option("--data", e.data, "dataset path")->required();
  ev->add_option("--taxonomy", e.taxonomy, "taxonomy TSV file")->required();
  ev->add_option("--json", e.json_out, "metric report JSON path");
  ev->add_option("--csv", e.csv_out, "metric report CSV path");
  ev->add_option("--gap-top-n", e.top_n, "per-record pool size for GAP")->check(CLI::PositiveNumber);
  ev->set_config("--config");

  VerifyOpts v;
  CLI::App* vf = app.add_subcommand("verify", "run the oracle verification suites");
  vf->add_option("--seeds", v.seeds, "random instances per suite")->check(CLI::PositiveNumber);
  vf->add_option("--manifest", v.manifest, "manifest output path");
  vf->set_config("--config");

  InspectOpts i;
  CLI::App* in = app.add_subcommand("inspect", "dump kernels and attention for offline plotting");
  in->add_option("--checkpoint", i.checkpoint, "checkpoint path")->required();
  in->add_option("--out-dir", i.out_dir, "directory for CSV dumps");
  in->add_option("--data", i.data, "dataset path (for --record)");
  in->add_option("--record", i.record, "video id whose attention to dump");
  in->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (gen->parsed()) return run_gen_data(g, args);
    if (tr->parsed()) return run_train(t, args);
    if (ev->parsed()) return run_evaluate(e, args);
    if (vf->parsed()) return run_verify_cmd(v, args);
    if (in->parsed()) return run_inspect(i, args);
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return 2;
  } catch (const MismatchError& err) {
    std::fprintf(stderr, "input mismatch: %s\n", err.what());
    return 5;
  } catch (const NumericError& err) {
    std::fprintf(stderr, "numeric abort: %s\n", err.what());
    return 4;
  } catch (const IoError& err) {
    std::fprintf(stderr, "i/o error: %s\n", err.what());
    return 3;
  } catch (const ParseError& err) {
    std::fprintf(stderr, "parse error: %s\n", err.what());
    return 3;
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 2;
}
