// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tempocoh/checkpoint.hpp"
#include "tempocoh/dataio.hpp"
#include "tempocoh/models.hpp"
#include "tempocoh/taxonomy.hpp"
#include "test_util.hpp"

using namespace tempocoh;
namespace fs = std::filesystem;

namespace {

// Both paths are injected by the build so the binary works from any CWD.
const std::string kCli = TEMPOCOH_CLI_PATH;
const std::string kTax = TEMPOCOH_TAXONOMY_PATH;
const std::string kDir = "cli_scratch";

int run(const std::string& cmd) {
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
#ifdef _WIN32
  return status;
#else
  return WEXITSTATUS(status);
#endif
}

std::string p(const std::string& name) { return kDir + "/" + name; }

// Small dataset shared by the CLI cases; generated once per test binary run.
const std::string& shared_data() {
  static std::string path = [] {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
    std::string out = p("base.tcd");
    REQUIRE(run(kCli + " gen-data --taxonomy " + kTax + " --out " + out +
                " --videos 12 --seed 3 --min-frames 4 --max-frames 8 --video-dim 5 --audio-dim 3" +
                " > /dev/null 2>&1") == 0);
    return out;
  }();
  return path;
}

std::string small_train_flags() {
  return " --clusters 2 --hidden 3 --model-width 4 --kernel-width 5 --feature-maps 2 --batch 4";
}

std::map<int64_t, double> avg_kernel_rows(const std::string& csv_path) {
  std::istringstream in(testutil::read_file(csv_path));
  std::map<int64_t, double> avg;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("avg,", 0) != 0) continue;
    size_t c1 = line.find(',');
    size_t c2 = line.find(',', c1 + 1);
    avg[std::stoll(line.substr(c1 + 1, c2 - c1 - 1))] = std::stod(line.substr(c2 + 1));
  }
  return avg;
}

}  // namespace

TEST_CASE("usage errors exit 2 and help exits 0") {
  CHECK(run(kCli + " --help > /dev/null 2>&1") == 0);
  CHECK(run(kCli + " gen-data --help > /dev/null 2>&1") == 0);
  CHECK(run(kCli + " > /dev/null 2>&1") == 2);                   // subcommand required
  CHECK(run(kCli + " no-such-command > /dev/null 2>&1") == 2);
  CHECK(run(kCli + " gen-data --out x.tcd > /dev/null 2>&1") == 2);  // missing required flags
  CHECK(run(kCli + " gen-data --taxonomy " + kTax +
            " --out x.tcd --videos 0 --seed 1 > /dev/null 2>&1") == 2);
  CHECK(run(kCli + " train --model wrong --data x --taxonomy " + kTax +
            " --out y > /dev/null 2>&1") == 2);
}

TEST_CASE("gen-data writes a bound dataset plus manifest, reruns bit-identically") {
  const std::string& data = shared_data();
  Dataset ds = read_dataset(data);
  CHECK(ds.header.num_records == 12);
  CHECK(ds.header.video_dim == 5);
  CHECK(ds.header.audio_dim == 3);
  CHECK(ds.header.taxonomy_checksum == fnv1a64_file(kTax));
  CHECK(ds.header.num_labels == Taxonomy::load_file(kTax).size());

  nlohmann::json manifest = nlohmann::json::parse(testutil::read_file(data + ".manifest.json"));
  CHECK(manifest.at("command") == "gen-data");
  CHECK(manifest.at("manifest_version") == 1);
  CHECK(manifest.at("outputs").at("records") == 12);
  CHECK(manifest.at("seeds")[0] == 3);
  CHECK(manifest.contains("conventions"));

  std::string again = p("base_again.tcd");
  REQUIRE(run(kCli + " gen-data --taxonomy " + kTax + " --out " + again +
              " --videos 12 --seed 3 --min-frames 4 --max-frames 8 --video-dim 5 --audio-dim 3" +
              " > /dev/null 2>&1") == 0);
  CHECK(testutil::read_file(data) == testutil::read_file(again));
}

TEST_CASE("missing or corrupt inputs exit 3") {
  CHECK(run(kCli + " gen-data --taxonomy " + p("nope.tsv") +
            " --out " + p("x.tcd") + " --videos 4 --seed 1 > /dev/null 2>&1") == 3);
  CHECK(run(kCli + " train --model netvlad --data " + p("nope.tcd") + " --taxonomy " + kTax +
            " --out " + p("x.tcm") + " > /dev/null 2>&1") == 3);
  CHECK(run(kCli + " evaluate --checkpoint " + p("nope.tcm") + " --data " + shared_data() +
            " --taxonomy " + kTax + " > /dev/null 2>&1") == 3);

  std::string garbage = p("garbage.tcd");
  testutil::write_file(garbage, "definitely not a dataset");
  CHECK(run(kCli + " train --model netvlad --data " + garbage + " --taxonomy " + kTax +
            " --out " + p("x.tcm") + " > /dev/null 2>&1") == 3);
}

TEST_CASE("taxonomy swaps are caught by the checksum and exit 5") {
  // Same structure, one renamed node: different bytes, same label count.
  std::string edited = p("edited.tsv");
  std::string text = testutil::read_file(kTax);
  size_t pos = text.find("Music");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 5, "Husic");
  testutil::write_file(edited, text);

  CHECK(run(kCli + " train --model netvlad --data " + shared_data() + " --taxonomy " + edited +
            " --out " + p("x.tcm") + " --epochs 1" + small_train_flags() +
            " > /dev/null 2>&1") == 5);
}

TEST_CASE("epochs 0 checkpoint equals the seeded initialization") {
  std::string out = p("init.tcm");
  REQUIRE(run(kCli + " train --model netvlad --data " + shared_data() + " --taxonomy " + kTax +
              " --out " + out + " --epochs 0 --seed 9" + small_train_flags() +
              " > /dev/null 2>&1") == 0);

  Checkpoint cp = load_checkpoint(out);
  nlohmann::json meta = nlohmann::json::parse(cp.meta_json);
  CHECK(meta.at("best_epoch") == -1);
  CHECK(meta.at("taxonomy_checksum") == fnv1a64_file(kTax));

  ModelConfig mcfg = ModelConfig::from_json(meta.at("model").dump());
  CHECK(mcfg.kind == ModelKind::netvlad);
  CHECK(mcfg.input_dim == 8);
  ParamMap init = init_params(mcfg, 9);
  REQUIRE(cp.params.size() == init.size());
  for (const auto& [name, tensor] : init) {
    CHECK(max_abs_diff(cp.params.at(name), tensor) == 0.0);
  }

  // Trace exists and holds only the header line (no epochs ran).
  CHECK(testutil::read_file(out + ".trace.csv") == "member,epoch,train_loss,val_gap\n");
}

TEST_CASE("train, evaluate and re-evaluate deterministically") {
  std::string out = p("model.tcm");
  REQUIRE(run(kCli + " train --model tc-netvlad --data " + shared_data() + " --taxonomy " + kTax +
              " --out " + out + " --epochs 2 --lr 0.01 --seed 4" + small_train_flags() +
              " > " + p("train.log") + " 2>&1") == 0);
  std::string log = testutil::read_file(p("train.log"));
  CHECK(log.find("epoch 0") != std::string::npos);
  CHECK(log.find("best epoch") != std::string::npos);

  // Trace CSV: header plus one row per epoch with a validation column.
  std::istringstream trace(testutil::read_file(out + ".trace.csv"));
  std::string line;
  std::getline(trace, line);
  CHECK(line == "member,epoch,train_loss,val_gap");
  int rows = 0;
  while (std::getline(trace, line)) {
    if (line.empty()) continue;
    CHECK(line.rfind("-1,", 0) == 0);
    CHECK(line.back() != ',');  // val fraction defaulted on, so val_gap is filled
    ++rows;
  }
  CHECK(rows == 2);

  REQUIRE(run(kCli + " evaluate --checkpoint " + out + " --data " + shared_data() +
              " --taxonomy " + kTax + " --json " + p("eval1.json") + " --csv " + p("eval1.csv") +
              " > " + p("eval.log") + " 2>&1") == 0);
  std::string eval_log = testutil::read_file(p("eval.log"));
  CHECK(eval_log.find("Overall") != std::string::npos);
  CHECK(eval_log.find("Level 2") != std::string::npos);

  nlohmann::json report = nlohmann::json::parse(testutil::read_file(p("eval1.json")));
  CHECK(report.at("top_n") == 20);
  CHECK(report.at("overall").at("gap").get<double>() >= 0.0);
  CHECK(report.at("levels").size() == 3);
  CHECK(testutil::read_file(p("eval1.csv")).find("Overall") != std::string::npos);
  CHECK(fs::exists(p("eval1.json") + ".manifest.json"));

  REQUIRE(run(kCli + " evaluate --checkpoint " + out + " --data " + shared_data() +
              " --taxonomy " + kTax + " --json " + p("eval2.json") +
              " > /dev/null 2>&1") == 0);
  CHECK(testutil::read_file(p("eval1.json")) == testutil::read_file(p("eval2.json")));
}

TEST_CASE("tc-netvlad with radius zero scores like netvlad") {
  std::string flags = " --epochs 1 --lr 0.01 --seed 6" + small_train_flags();
  REQUIRE(run(kCli + " train --model netvlad --data " + shared_data() + " --taxonomy " + kTax +
              " --out " + p("nv.tcm") + flags + " > /dev/null 2>&1") == 0);
  REQUIRE(run(kCli + " train --model tc-netvlad --tc-mode exact --L 0 --data " + shared_data() +
              " --taxonomy " + kTax + " --out " + p("tcnv.tcm") + flags +
              " > /dev/null 2>&1") == 0);

  REQUIRE(run(kCli + " evaluate --checkpoint " + p("nv.tcm") + " --data " + shared_data() +
              " --taxonomy " + kTax + " --json " + p("nv.json") + " > /dev/null 2>&1") == 0);
  REQUIRE(run(kCli + " evaluate --checkpoint " + p("tcnv.tcm") + " --data " + shared_data() +
              " --taxonomy " + kTax + " --json " + p("tcnv.json") + " > /dev/null 2>&1") == 0);

  nlohmann::json nv = nlohmann::json::parse(testutil::read_file(p("nv.json")));
  nlohmann::json tc = nlohmann::json::parse(testutil::read_file(p("tcnv.json")));
  for (const char* metric : {"gap", "map", "perr", "hit1"}) {
    CAPTURE(metric);
    CHECK(testutil::rel_err(nv.at("overall").at(metric).get<double>(),
                            tc.at("overall").at(metric).get<double>()) < 1e-9);
  }
}

TEST_CASE("inspect dumps an exact delta bank as a spike at offset zero") {
  ModelConfig mcfg;
  mcfg.kind = ModelKind::tc_netvlad;
  mcfg.input_dim = 8;
  mcfg.num_labels = 20;
  mcfg.tc_mode = TCMode::learned_conv;
  mcfg.kernel_width = 5;
  mcfg.feature_maps = 2;

  Checkpoint cp;
  cp.meta_json = nlohmann::json{{"model", nlohmann::json::parse(mcfg.to_json())}}.dump();
  TCKernel delta = TCKernel::delta(mcfg.feature_maps, mcfg.kernel_width);
  for (int64_t f = 0; f < mcfg.feature_maps; ++f) {
    cp.params["tc_bank.kernel" + std::to_string(f)] = delta.maps[static_cast<size_t>(f)];
  }
  std::string ckpt = p("delta.tcm");
  save_checkpoint(ckpt, cp);

  REQUIRE(run(kCli + " inspect --checkpoint " + ckpt + " --out-dir " + kDir +
              " > /dev/null 2>&1") == 0);
  auto avg = avg_kernel_rows(p("tc_bank.kernel.csv"));
  REQUIRE(avg.size() == 5);
  CHECK(avg.at(0) == 1.0);
  CHECK(avg.at(-2) == 0.0);
  CHECK(avg.at(-1) == 0.0);
  CHECK(avg.at(1) == 0.0);
  CHECK(avg.at(2) == 0.0);
  CHECK(fs::exists(p("inspect.manifest.json")));
}

TEST_CASE("inspect dumps attention for attention models only") {
  std::string ckpt = p("attn.tcm");
  REQUIRE(run(kCli + " train --model tc-rnn --tc-mode exact --data " + shared_data() +
              " --taxonomy " + kTax + " --out " + ckpt + " --epochs 0 --seed 2" +
              small_train_flags() + " > /dev/null 2>&1") == 0);

  REQUIRE(run(kCli + " inspect --checkpoint " + ckpt + " --out-dir " + kDir +
              " --data " + shared_data() + " --record v000002 > /dev/null 2>&1") == 0);
  std::istringstream csv(testutil::read_file(p("attention_v000002.csv")));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "frame,vanilla,tc");
  int frames = 0;
  bool differs = false;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (line.substr(c1 + 1, c2 - c1 - 1) != line.substr(c2 + 1)) differs = true;
    ++frames;
  }
  CHECK(frames >= 4);
  CHECK(differs);  // coherence reweights at least one frame

  // Unknown record id is an input mismatch.
  CHECK(run(kCli + " inspect --checkpoint " + ckpt + " --out-dir " + kDir + " --data " +
            shared_data() + " --record v999999 > /dev/null 2>&1") == 5);
  // --record without --data is a usage error.
  CHECK(run(kCli + " inspect --checkpoint " + ckpt + " --record v000002 > /dev/null 2>&1") == 2);
  // Non-attention models cannot dump attention.
  CHECK(run(kCli + " inspect --checkpoint " + p("init.tcm") + " --out-dir " + kDir + " --data " +
            shared_data() + " --record v000002 > /dev/null 2>&1") == 2);
}

TEST_CASE("verify subcommand runs green and writes its manifest") {
  std::string manifest = p("verify.manifest.json");
  REQUIRE(run(kCli + " verify --seeds 2 --manifest " + manifest + " > " + p("verify.log") +
              " 2>&1") == 0);
  std::string log = testutil::read_file(p("verify.log"));
  CHECK(log.find("PASS") != std::string::npos);
  CHECK(log.find("FAIL") == std::string::npos);

  nlohmann::json m = nlohmann::json::parse(testutil::read_file(manifest));
  CHECK(m.at("command") == "verify");
  CHECK(m.at("outputs").at("all_pass") == true);
  CHECK(m.at("outputs").at("checks").size() >= 20);
  for (const auto& c : m.at("outputs").at("checks")) {
    CHECK(c.at("pass") == true);
  }
}
