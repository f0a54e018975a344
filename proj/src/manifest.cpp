// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/manifest.hpp"

#include <fstream>

#include "tempocoh/error.hpp"

namespace tempocoh {

std::string library_version() { return "tempocoh 1.0.0"; }

nlohmann::json convention_flags() {
  return {
      {"conv_form_bias", "set form and conv form coincide only at b = 0"},
      {"attention_window_self", "window form keeps the unit diagonal; verify reports the double count"},
      {"gap_top_n", 20},
      {"hit1_ties", "lowest label id wins"},
      {"loss_variants", {"bce", "hier", "hier-blended"}},
      {"vlad_normalization", "intra-cluster L2 then global L2"},
      {"kernel_init", "delta at the center plus uniform noise"},
  };
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["manifest_version"] = 1;
  j["library"] = library_version();
  j["command"] = command;
  j["args"] = args;
  j["config"] = config;
  j["seeds"] = seeds;
  j["conventions"] = convention_flags();
  j["outputs"] = outputs;
  return j;
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  out << to_json().dump(2) << "\n";
  if (!out) throw IoError("failed writing manifest: " + path);
}

}  // namespace tempocoh
