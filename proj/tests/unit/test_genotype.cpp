#include "../support/oracles.hpp"
#include "auxskip/genotype.hpp"
#include "auxskip/rng.hpp"
#include "doctest.h"

using namespace auxskip;

namespace {

SearchSpaceSpec darts_like() {
  SearchSpaceSpec sp;
  sp.num_inputs = 2;
  sp.num_nodes = 4;
  sp.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3, OpKind::AvgPool3x3, OpKind::SepConv};
  return sp;
}

ArchParams from_rows(const SearchSpaceSpec& sp, std::vector<double> normal) {
  ArchParams a = ArchParams::constant(sp);
  a.normal = ad::Tensor({sp.num_edges(), sp.num_ops()}, std::move(normal));
  return a;
}

}  // namespace

TEST_CASE("top-k derivation keeps the strongest non-none edges per node") {
  SearchSpaceSpec sp;
  sp.num_inputs = 1;
  sp.num_nodes = 2;
  sp.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3};
  // Edges (0,1), (0,2), (1,2). 'none' dominates edge (0,2) but can never be picked.
  const auto a = from_rows(sp, {0, 2, 1,   //
                                9, 0, 1,   //
                                0, 0, 3});
  const auto g = derive_genotype(a, sp, 1);
  REQUIRE(g.normal.size() == 2);
  CHECK(g.normal[0] == GenotypeEdge{1, 0, OpKind::Skip});
  CHECK(g.normal[1] == GenotypeEdge{2, 1, OpKind::Conv3x3});
  CHECK(g.retained_per_node() == 1);
  CHECK(count_parametric(g) == 1);
  CHECK(count_skips(g) == 1);
}

TEST_CASE("dense derivation takes the argmax on every edge, none included") {
  SearchSpaceSpec sp;
  sp.num_inputs = 1;
  sp.num_nodes = 2;
  sp.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3};
  const auto a = from_rows(sp, {0, 2, 1,  //
                                9, 0, 1,  //
                                1, 1, 1});
  const auto g = derive_dense_genotype(a, sp);
  REQUIRE(g.normal.size() == 3);
  CHECK(g.normal[0].op == OpKind::Skip);
  CHECK(g.normal[1].op == OpKind::None);
  CHECK(g.normal[2].op == OpKind::None);  // three-way tie -> lowest op index
}

TEST_CASE("ties resolve to the lower edge, then the lower op") {
  SearchSpaceSpec sp = darts_like();
  const auto a = ArchParams::constant(sp, 0.0);
  const auto g = derive_genotype(a, sp, 2);
  for (const auto& e : g.normal) {
    CHECK(e.op == OpKind::Skip);  // first non-none op
    CHECK(e.from < 2);            // two lowest edges of every node
  }
}

TEST_CASE("derive_genotype agrees with the exhaustive oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    SearchSpaceSpec sp = darts_like();
    sp.has_reduction = trial % 2 == 0;
    const int k = 1 + trial % 2;
    ArchParams a = ArchParams::constant(sp);
    for (auto* t : {&a.normal, &a.reduce}) {
      if (!t->defined()) continue;
      for (auto& v : t->mutable_data()) v = trial % 3 == 0 ? static_cast<double>(rng.below(3)) : rng.normal();
    }
    const auto g = derive_genotype(a, sp, k);
    const auto expect_n = oracle::brute_force_cell(softmax_rows(a.normal), sp, k);
    REQUIRE_FALSE(expect_n.empty());
    CHECK(g.normal == expect_n);
    if (a.has_reduce()) CHECK(g.reduce == oracle::brute_force_cell(softmax_rows(a.reduce), sp, k));
  }
}

TEST_CASE("k larger than the in-degree is rejected") {
  SearchSpaceSpec sp = darts_like();
  const auto a = ArchParams::constant(sp);
  CHECK_THROWS_AS(derive_genotype(a, sp, 3), std::invalid_argument);
  CHECK_THROWS_AS(derive_genotype(a, sp, 0), std::invalid_argument);
}

TEST_CASE("serialize and parse round trip") {
  Rng rng(12);
  SearchSpaceSpec sp = darts_like();
  sp.has_reduction = true;
  for (int i = 0; i < 20; ++i) {
    const auto a = ArchParams::random(sp, rng, 1.0);
    const auto g = derive_genotype(a, sp, 2);
    CHECK(parse_genotype(serialize_genotype(g)) == g);
    CHECK(parse_genotype(genotype_key(g)) == g);
    CHECK_NOTHROW(check_genotype(g, sp));
  }
}

TEST_CASE("parser accepts comments, blank lines and any record order") {
  const auto g = parse_genotype(
      "# header\n"
      "\n"
      "cell=normal; node=2; from=1; op=conv3x3\n"
      "  cell=normal; node=1; from=0; op=skip  \n");
  REQUIRE(g.normal.size() == 2);
  CHECK(g.normal[0] == GenotypeEdge{1, 0, OpKind::Skip});
  CHECK(serialize_genotype(g) == "cell=normal; node=1; from=0; op=skip\ncell=normal; node=2; from=1; op=conv3x3\n");
}

TEST_CASE("parse errors carry line and column") {
  auto where = [](std::string_view text) {
    try {
      parse_genotype(text);
    } catch (const GenotypeParseError& e) {
      return std::pair{e.line(), e.column()};
    }
    return std::pair<std::size_t, std::size_t>{0, 0};
  };
  CHECK(where("cell=normal; node=1; from=0; op=skip\ncell=normal; node=2; from=0; op=maxpool") == std::pair<std::size_t, std::size_t>{2, 33});
  CHECK(where("cell=middle; node=1; from=0; op=skip").first == 1);
  CHECK(where("cell=normal; node=1; from=0; op=skip\n# c\ncell=normal; node=x; from=0; op=skip").first == 3);
  CHECK(where("cell=normal; node=1; from=1; op=skip").first == 1);
  CHECK(where("cell=normal; node=1; from=0; op=skip\ncell=normal; node=1; from=0; op=conv3x3").first == 2);
  CHECK(where("cell=normal; node=1; op=skip").first == 1);
  CHECK(where("cell=normal; node=1; from=0; op=skip; extra=1").first == 1);
}

TEST_CASE("check_genotype rejects edges and ops outside the space") {
  SearchSpaceSpec sp;
  sp.num_inputs = 1;
  sp.num_nodes = 2;
  sp.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3};
  CHECK_NOTHROW(check_genotype(parse_genotype("cell=normal; node=2; from=1; op=conv3x3"), sp));
  CHECK_THROWS(check_genotype(parse_genotype("cell=normal; node=3; from=1; op=conv3x3"), sp));
  CHECK_THROWS(check_genotype(parse_genotype("cell=normal; node=2; from=1; op=sepconv"), sp));
  CHECK_THROWS(check_genotype(parse_genotype("cell=reduce; node=2; from=1; op=skip"), sp));
}

TEST_CASE("discretization names") {
  CHECK(discretization_from_name("topk") == Discretization::TopK);
  CHECK(discretization_from_name(discretization_name(Discretization::Dense)) == Discretization::Dense);
  CHECK_THROWS(discretization_from_name("argmax"));
}
