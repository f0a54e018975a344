// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <string>

#include "tempocoh/checkpoint.hpp"
#include "tempocoh/error.hpp"
#include "test_util.hpp"

using namespace tempocoh;

namespace {

Checkpoint sample() {
  Checkpoint cp;
  cp.meta_json = R"({"model":"demo","note":"round trip"})";
  Rng rng(21);
  cp.params["w.matrix"] = Tensor::uniform(Shape{3, 4}, rng, -2.0, 2.0);
  cp.params["b.vector"] = Tensor::uniform(Shape{4}, rng, -1.0, 1.0);
  cp.params["s.scalar"] = Tensor::scalar(0.125);
  return cp;
}

}  // namespace

TEST_CASE("checkpoint round-trips params and metadata") {
  Checkpoint cp = sample();
  std::string path = testutil::tmp_path("ckpt_roundtrip.tcm");
  save_checkpoint(path, cp);

  Checkpoint back = load_checkpoint(path);
  CHECK(back.meta_json == cp.meta_json);
  REQUIRE(back.params.size() == cp.params.size());
  for (const auto& [name, tensor] : cp.params) {
    REQUIRE(back.params.count(name) == 1);
    CHECK(back.params.at(name).shape() == tensor.shape());
    CHECK(max_abs_diff(back.params.at(name), tensor) == 0.0);
  }

  // Save -> load -> save reproduces the bytes exactly.
  std::string path2 = testutil::tmp_path("ckpt_rewrite.tcm");
  save_checkpoint(path2, back);
  CHECK(testutil::read_file(path) == testutil::read_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("missing and corrupt checkpoints raise IoError") {
  CHECK_THROWS_AS(load_checkpoint(testutil::tmp_path("ckpt_missing.tcm")), IoError);

  Checkpoint cp = sample();
  std::string path = testutil::tmp_path("ckpt_corrupt.tcm");
  save_checkpoint(path, cp);
  std::string bytes = testutil::read_file(path);

  std::string bad_magic = bytes;
  bad_magic[1] = '?';
  testutil::write_file(path, bad_magic);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);

  testutil::write_file(path, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), IoError);

  std::remove(path.c_str());
}

TEST_CASE("empty parameter map still round-trips") {
  Checkpoint cp;
  cp.meta_json = "{}";
  std::string path = testutil::tmp_path("ckpt_empty.tcm");
  save_checkpoint(path, cp);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.meta_json == "{}");
  CHECK(back.params.empty());
  std::remove(path.c_str());
}
