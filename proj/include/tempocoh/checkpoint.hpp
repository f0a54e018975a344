// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "tempocoh/tensor.hpp"

namespace tempocoh {

// Named model parameters, ordered by name so serialization is canonical.
using ParamMap = std::map<std::string, Tensor>;

// Versioned binary container "TCM1": a JSON metadata blob (model kind,
// config snapshot) plus shape-prefixed float64 arrays, little-endian.
struct Checkpoint {
  std::string meta_json;
  ParamMap params;
};

void save_checkpoint(const std::string& path, const Checkpoint& cp);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tempocoh
