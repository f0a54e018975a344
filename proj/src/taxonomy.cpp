// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace tempocoh {

int64_t LabelSet::count() const {
  int64_t n = 0;
  for (uint8_t b : bits_) n += b;
  return n;
}

std::vector<int64_t> LabelSet::ids() const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(static_cast<int64_t>(i));
  }
  return out;
}

Taxonomy Taxonomy::load(const std::vector<std::string>& lines) {
  struct Parsed {
    int64_t id, parent;
    std::string name;
    size_t line_no;
  };
  std::map<int64_t, Parsed> by_id;
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty() || line[0] == '#') continue;
    size_t t1 = line.find('\t');
    size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw ParseError("taxonomy line " + std::to_string(ln + 1) + ": expected id<TAB>parent<TAB>name");
    }
    Parsed p;
    p.line_no = ln + 1;
    try {
      p.id = std::stoll(line.substr(0, t1));
      p.parent = std::stoll(line.substr(t1 + 1, t2 - t1 - 1));
    } catch (const std::exception&) {
      throw ParseError("taxonomy line " + std::to_string(ln + 1) + ": non-numeric id or parent");
    }
    p.name = line.substr(t2 + 1);
    if (p.id < 0) throw ParseError("taxonomy line " + std::to_string(ln + 1) + ": negative id");
    if (by_id.count(p.id)) {
      throw ParseError("taxonomy line " + std::to_string(ln + 1) + ": duplicate id " + std::to_string(p.id));
    }
    int64_t pid = p.id;
    by_id[pid] = std::move(p);
  }
  if (by_id.empty()) throw ParseError("taxonomy: no nodes");

  int64_t k = static_cast<int64_t>(by_id.size());
  for (int64_t i = 0; i < k; ++i) {
    if (!by_id.count(i)) {
      throw ParseError("taxonomy: ids must be dense in [0, " + std::to_string(k) + "), missing " +
                       std::to_string(i));
    }
  }

  Taxonomy tax;
  tax.nodes_.resize(static_cast<size_t>(k));
  tax.children_.resize(static_cast<size_t>(k));
  for (auto& [id, p] : by_id) {
    if (p.parent != kRootParent && (p.parent < 0 || p.parent >= k)) {
      throw ParseError("taxonomy line " + std::to_string(p.line_no) + ": dangling parent " +
                       std::to_string(p.parent));
    }
    tax.nodes_[static_cast<size_t>(id)] = TaxonomyNode{id, p.name, p.parent, 0};
  }

  // Levels by parent walk; a walk longer than K nodes means a cycle.
  for (int64_t id = 0; id < k; ++id) {
    int64_t steps = 0;
    int64_t cur = id;
    while (tax.nodes_[static_cast<size_t>(cur)].parent != kRootParent) {
      cur = tax.nodes_[static_cast<size_t>(cur)].parent;
      if (++steps > k) {
        throw ParseError("taxonomy line " + std::to_string(by_id[id].line_no) + ": cycle involving id " +
                         std::to_string(id));
      }
    }
    tax.nodes_[static_cast<size_t>(id)].level = steps;
    tax.max_level_ = std::max(tax.max_level_, steps);
  }
  for (int64_t id = 0; id < k; ++id) {
    int64_t p = tax.nodes_[static_cast<size_t>(id)].parent;
    if (p != kRootParent) tax.children_[static_cast<size_t>(p)].push_back(id);
  }
  return tax;
}

Taxonomy Taxonomy::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open taxonomy file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return load(lines);
}

const TaxonomyNode& Taxonomy::node(int64_t id) const {
  if (id < 0 || id >= size()) throw MismatchError("unknown taxonomy id " + std::to_string(id));
  return nodes_[static_cast<size_t>(id)];
}

const std::vector<int64_t>& Taxonomy::children(int64_t id) const {
  node(id);  // range check
  return children_[static_cast<size_t>(id)];
}

std::vector<int64_t> Taxonomy::nodes_at_level(int64_t level) const {
  if (level < 0 || level > max_level_) {
    throw ContractError("level " + std::to_string(level) + " out of range [0, " +
                        std::to_string(max_level_) + "]");
  }
  std::vector<int64_t> out;
  for (const auto& n : nodes_) {
    if (n.level == level) out.push_back(n.id);
  }
  return out;
}

std::vector<int64_t> Taxonomy::leaves() const {
  std::vector<int64_t> out;
  for (const auto& n : nodes_) {
    if (children_[static_cast<size_t>(n.id)].empty()) out.push_back(n.id);
  }
  return out;
}

LabelSet ancestor_closure(const Taxonomy& tax, const std::vector<int64_t>& members) {
  LabelSet out(tax.size());
  for (int64_t id : members) {
    int64_t cur = id;
    while (cur != kRootParent) {
      out.set(tax.node(cur).id);
      cur = tax.parent(cur);
    }
  }
  return out;
}

int64_t deepest_level(const Taxonomy& tax, const LabelSet& y) {
  if (y.size() != tax.size()) throw MismatchError("label set size does not match taxonomy");
  int64_t best = -1;
  for (int64_t id = 0; id < tax.size(); ++id) {
    if (y.test(id)) best = std::max(best, tax.level(id));
  }
  if (best < 0) throw ContractError("deepest_level of empty label set");
  return best;
}

bool is_ancestor_closed(const Taxonomy& tax, const LabelSet& y) {
  if (y.size() != tax.size()) return false;
  for (int64_t id = 0; id < tax.size(); ++id) {
    if (!y.test(id)) continue;
    int64_t p = tax.parent(id);
    if (p != kRootParent && !y.test(p)) return false;
  }
  return true;
}

uint64_t fnv1a64(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xCBF29CE484222325ull;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for checksum: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace tempocoh
