// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace tempocoh {

std::string library_version();

// Fixed modeling conventions that affect numbers; recorded in every
// manifest so a result can be interpreted without reading the code.
nlohmann::json convention_flags();

// One manifest per CLI run, written next to the primary output.  Together
// with the library version it pins everything needed to reproduce the run
// bit-exactly: the argument vector, the resolved configuration, and the
// seeds actually used.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  nlohmann::json config;
  std::vector<uint64_t> seeds;
  nlohmann::json outputs;

  nlohmann::json to_json() const;
  void write(const std::string& path) const;
};

}  // namespace tempocoh
