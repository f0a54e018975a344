// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tempocoh {

// One verified property: worst observed deviation against its tolerance.
// Informational checks carry a note and their own pass rule.
struct CheckResult {
  std::string name;
  double deviation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  int64_t worst_seed = -1;  // seed index of the worst deviation, -1 for hand cases
  std::string note;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_pass() const;
};

// Individual suites. `seeds` scales the number of random instances.
CheckResult check_conv_equivalence(int64_t seeds);
CheckResult check_conv_bias_note(int64_t seeds);
CheckResult check_attention_window(int64_t seeds);
CheckResult check_attention_self_note(int64_t seeds);
std::vector<CheckResult> check_reductions(int64_t seeds);
CheckResult check_normalization(int64_t seeds);
std::vector<CheckResult> check_symmetry();
std::vector<CheckResult> check_gradients(int64_t seeds);
std::vector<CheckResult> check_metric_oracles(int64_t sets);
std::vector<CheckResult> check_hier_cases();

// Full sweep with per-suite instance counts derived from `seeds`
// (normalization runs 10x, gradients seeds/5, metric oracles 2x).
VerifyReport run_verify(int64_t seeds);

}  // namespace tempocoh
