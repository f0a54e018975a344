// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "tempocoh/taxonomy.hpp"
#include "test_util.hpp"

using namespace tempocoh;

namespace {

// 0 A            3 B
// |- 1 A.x       |- 4 B.x
// |  |- 2 A.x.i
const std::vector<std::string> kLines = {
    "# id\tparent\tname",
    "0\t-1\tA",
    "",
    "1\t0\tA.x",
    "2\t1\tA.x.i",
    "3\t-1\tB",
    "4\t3\tB.x",
};

}  // namespace

TEST_CASE("load assigns levels, children and leaves") {
  Taxonomy tax = Taxonomy::load(kLines);
  CHECK(tax.size() == 5);
  CHECK(tax.max_level() == 2);
  CHECK(tax.level(0) == 0);
  CHECK(tax.level(2) == 2);
  CHECK(tax.parent(2) == 1);
  CHECK(tax.parent(3) == kRootParent);
  CHECK(tax.name(4) == "B.x");
  CHECK(tax.children(0) == std::vector<int64_t>{1});
  CHECK(tax.children(2).empty());
  CHECK(tax.nodes_at_level(0) == std::vector<int64_t>{0, 3});
  CHECK(tax.nodes_at_level(2) == std::vector<int64_t>{2});
  CHECK(tax.leaves() == std::vector<int64_t>{2, 4});
  CHECK_THROWS_AS(tax.nodes_at_level(3), Error);
  CHECK_THROWS_AS(tax.node(5), Error);
}

TEST_CASE("malformed lines raise ParseError") {
  CHECK_THROWS_AS(Taxonomy::load({"0\t-1"}), ParseError);
  CHECK_THROWS_AS(Taxonomy::load({"zero\t-1\tA"}), ParseError);
  // Forward references are fine (load is two-pass); dangling parents and cycles are not.
  CHECK(Taxonomy::load({"0\t1\tA", "1\t-1\tB"}).level(0) == 1);
  CHECK_THROWS_AS(Taxonomy::load({"0\t3\tA"}), ParseError);
  CHECK_THROWS_AS(Taxonomy::load({"0\t1\tA", "1\t0\tB"}), ParseError);
  CHECK_THROWS_AS(Taxonomy::load({"1\t-1\tA"}), ParseError);  // ids must be dense from 0
}

TEST_CASE("load_file round-trips and missing file raises IoError") {
  std::string path = testutil::tmp_path("tax_roundtrip.tsv");
  std::string text;
  for (const auto& line : kLines) text += line + "\n";
  testutil::write_file(path, text);
  Taxonomy tax = Taxonomy::load_file(path);
  CHECK(tax.size() == 5);
  CHECK(tax.name(2) == "A.x.i");
  std::remove(path.c_str());
  CHECK_THROWS_AS(Taxonomy::load_file(path), IoError);
}

TEST_CASE("label set bit operations") {
  LabelSet y(4);
  CHECK(y.size() == 4);
  CHECK_FALSE(y.any());
  y.set(1);
  y.set(3);
  CHECK(y.count() == 2);
  CHECK(y.test(3));
  CHECK_FALSE(y.test(0));
  CHECK(y.ids() == std::vector<int64_t>{1, 3});
  y.set(1, false);
  CHECK(y.count() == 1);

  LabelSet same(4);
  same.set(3);
  CHECK(y == same);
  same.set(0);
  CHECK(y != same);
}

TEST_CASE("ancestor closure adds every proper ancestor once") {
  Taxonomy tax = Taxonomy::load(kLines);
  LabelSet y = ancestor_closure(tax, {2, 4});
  CHECK(y.ids() == std::vector<int64_t>{0, 1, 2, 3, 4});
  CHECK(is_ancestor_closed(tax, y));

  LabelSet top = ancestor_closure(tax, {3});
  CHECK(top.ids() == std::vector<int64_t>{3});

  LabelSet leafless(5);
  leafless.set(2);
  CHECK_FALSE(is_ancestor_closed(tax, leafless));
}

TEST_CASE("deepest level of a label set") {
  Taxonomy tax = Taxonomy::load(kLines);
  CHECK(deepest_level(tax, ancestor_closure(tax, {2})) == 2);
  CHECK(deepest_level(tax, ancestor_closure(tax, {4})) == 1);
  CHECK(deepest_level(tax, ancestor_closure(tax, {0})) == 0);
  CHECK_THROWS_AS(deepest_level(tax, LabelSet(5)), Error);
}

TEST_CASE("fnv1a64 matches published vectors and hashes files by content") {
  // Reference values for the standard 64-bit FNV-1a offset basis and prime.
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);

  std::string path = testutil::tmp_path("tax_hash.bin");
  testutil::write_file(path, "foobar");
  CHECK(fnv1a64_file(path) == 0x85944171f73967e8ULL);
  std::remove(path.c_str());
  CHECK_THROWS_AS(fnv1a64_file(path), IoError);
}
