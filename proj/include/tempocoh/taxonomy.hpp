// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tempocoh/error.hpp"

namespace tempocoh {

// Sentinel parent id for top-level nodes. The root itself is virtual and
// never part of the label space.
inline constexpr int64_t kRootParent = -1;

struct TaxonomyNode {
  int64_t id = 0;
  std::string name;
  int64_t parent = kRootParent;
  int64_t level = 0;  // top-level nodes sit at level 0
};

// Multi-hot label vector over the dense id space [0, K). Label sets used
// for training targets are ancestor-closed: a set bit implies its parent
// bit is set too.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(int64_t num_labels) : bits_(static_cast<size_t>(num_labels), 0) {}

  int64_t size() const { return static_cast<int64_t>(bits_.size()); }
  bool test(int64_t id) const { return bits_[static_cast<size_t>(id)] != 0; }
  void set(int64_t id, bool v = true) { bits_[static_cast<size_t>(id)] = v ? 1 : 0; }
  int64_t count() const;
  bool any() const { return count() > 0; }
  std::vector<int64_t> ids() const;  // set bits, ascending

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<uint8_t> bits_;
};

// Immutable rooted label tree with per-node levels, loaded once and then
// shared read-only.
class Taxonomy {
 public:
  // One node per line: "id<TAB>parent<TAB>name", parent -1 for top-level.
  // Lines starting with '#' and blank lines are skipped.
  static Taxonomy load(const std::vector<std::string>& lines);
  static Taxonomy load_file(const std::string& path);

  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }
  int64_t max_level() const { return max_level_; }
  const TaxonomyNode& node(int64_t id) const;
  int64_t level(int64_t id) const { return node(id).level; }
  int64_t parent(int64_t id) const { return node(id).parent; }
  const std::string& name(int64_t id) const { return node(id).name; }
  const std::vector<int64_t>& children(int64_t id) const;

  // All ids at a level, ascending. Throws on out-of-range level.
  std::vector<int64_t> nodes_at_level(int64_t level) const;

  // Nodes without children, ascending.
  std::vector<int64_t> leaves() const;

 private:
  std::vector<TaxonomyNode> nodes_;
  std::vector<std::vector<int64_t>> children_;
  int64_t max_level_ = 0;
};

// Smallest ancestor-closed set containing `members`: each member plus all
// its proper ancestors (the virtual root excluded by construction).
LabelSet ancestor_closure(const Taxonomy& tax, const std::vector<int64_t>& members);

// Deepest level present in a non-empty label set.
int64_t deepest_level(const Taxonomy& tax, const LabelSet& y);

// True when every set bit's parent bit is also set.
bool is_ancestor_closed(const Taxonomy& tax, const LabelSet& y);

// FNV-1a 64-bit hash; used to bind datasets to the taxonomy file they
// were generated against.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64_file(const std::string& path);

}  // namespace tempocoh
