#include <cmath>

#include "auxskip/space.hpp"
#include "doctest.h"

using namespace auxskip;

TEST_CASE("edges form the fully connected DAG in canonical order") {
  SearchSpaceSpec sp;
  sp.num_inputs = 2;
  sp.num_nodes = 3;
  const auto edges = sp.edges();
  REQUIRE(edges.size() == 2 + 3 + 4);
  CHECK(sp.num_edges() == edges.size());
  CHECK(edges.front() == Edge{0, 2});
  CHECK(edges[2] == Edge{0, 3});
  CHECK(edges.back() == Edge{3, 4});
  for (const auto& e : edges) CHECK(e.from < e.to);

  sp.num_inputs = 1;
  sp.num_nodes = 2;
  CHECK(sp.num_edges() == 3);
}

TEST_CASE("space validation") {
  SearchSpaceSpec sp;
  CHECK_NOTHROW(sp.validate());
  auto bad = [](auto mutate) {
    SearchSpaceSpec s;
    mutate(s);
    return s;
  };
  CHECK_THROWS(bad([](auto& s) { s.candidate_ops = {OpKind::None, OpKind::Conv3x3}; }).validate());
  CHECK_THROWS(bad([](auto& s) { s.candidate_ops.clear(); }).validate());
  CHECK_THROWS(bad([](auto& s) { s.candidate_ops = {OpKind::Skip, OpKind::Skip}; }).validate());
  CHECK_THROWS(bad([](auto& s) { s.num_inputs = 3; }).validate());
  CHECK_THROWS(bad([](auto& s) { s.num_cells = 0; }).validate());
  CHECK_THROWS(bad([](auto& s) { s.channels = 0; }).validate());
  CHECK_THROWS(bad([](auto& s) { s.num_nodes = 0; }).validate());
}

TEST_CASE("op names round trip and parametric ops are the convolutions") {
  for (OpKind op : {OpKind::None, OpKind::Skip, OpKind::Conv1x1, OpKind::Conv3x3, OpKind::AvgPool3x3, OpKind::SepConv}) {
    CHECK(op_from_name(op_name(op)) == op);
  }
  CHECK_THROWS_AS(op_from_name("maxpool"), std::invalid_argument);
  CHECK(is_parametric(OpKind::Conv3x3));
  CHECK(is_parametric(OpKind::SepConv));
  CHECK_FALSE(is_parametric(OpKind::Skip));
  CHECK_FALSE(is_parametric(OpKind::AvgPool3x3));
}

TEST_CASE("reduction cells sit at one and two thirds of the depth") {
  SearchSpaceSpec sp;
  sp.num_cells = 6;
  sp.has_reduction = true;
  const auto l = sp.layout();
  CHECK(l[2] == CellType::Reduce);
  CHECK(l[4] == CellType::Reduce);
  CHECK(std::count(l.begin(), l.end(), CellType::Reduce) == 2);
}

TEST_CASE("softmax rows sum to one") {
  SearchSpaceSpec sp;
  sp.has_reduction = true;
  Rng rng(4);
  const auto a = ArchParams::random(sp, rng, 3.0);
  for (const auto* t : {&a.normal, &a.reduce}) {
    const auto w = softmax_rows(*t);
    for (std::size_t r = 0; r < sp.num_edges(); ++r) {
      double s = 0.0;
      for (std::size_t o = 0; o < sp.num_ops(); ++o) s += w[r * sp.num_ops() + o];
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("arch params flatten and rebuild") {
  SearchSpaceSpec sp;
  sp.has_reduction = true;
  Rng rng(5);
  const auto a = ArchParams::random(sp, rng);
  CHECK(a.size() == 2 * sp.num_edges() * sp.num_ops());
  const auto b = a.with_flat(a.flatten());
  CHECK(b.flatten() == a.flatten());
  CHECK_NOTHROW(a.check(sp));
  CHECK_THROWS(a.with_flat(std::vector<double>(3, 0.0)));
  SearchSpaceSpec other = sp;
  other.has_reduction = false;
  CHECK_THROWS(a.check(other));
  auto c = a;
  c.normal.mutable_data()[0] = std::nan("");
  CHECK_THROWS(c.check(sp));
}

TEST_CASE("canonical text distinguishes spaces") {
  SearchSpaceSpec a, b;
  CHECK(a.canonical() == b.canonical());
  b.channels = 16;
  CHECK(a.canonical() != b.canonical());
}
