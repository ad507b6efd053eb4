#include <cmath>
#include <map>

#include "../support/oracles.hpp"
#include "auxskip/dataset.hpp"
#include "auxskip/network.hpp"
#include "doctest.h"

using namespace auxskip;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor random_tensor(ad::Shape shape, Rng& rng) {
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

SearchSpaceSpec rich_space(bool reduction, Aggregation agg) {
  SearchSpaceSpec sp;
  sp.num_inputs = 2;
  sp.num_nodes = 2;
  sp.num_cells = 3;
  sp.channels = 4;
  sp.has_reduction = reduction;
  sp.aggregation = agg;
  sp.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv1x1, OpKind::Conv3x3, OpKind::AvgPool3x3, OpKind::SepConv};
  return sp;
}

}  // namespace

TEST_CASE("supernet at beta = 0 matches the plain mixed-op reference, values and alpha gradients") {
  for (bool reduction : {false, true}) {
    for (auto agg : {Aggregation::Sum, Aggregation::Concat}) {
      const auto sp = rich_space(reduction, agg);
      Rng init(7);
      const auto net = Network::supernet({sp, 1, 3, AuxBranch::IdentitySkip}, init);
      Rng rng(8);
      const auto arch = ArchParams::random(sp, rng, 1.0);
      const Tensor images = random_tensor({4, 1, 8, 8}, rng);

      Tape t1;
      ArchParams va = arch;
      va.normal = t1.variable(arch.normal);
      if (reduction) va.reduce = t1.variable(arch.reduce);
      const Tensor y1 = net.logits(t1, net.weights(), &va, 0.0, images);
      const auto g1 = t1.backward(t1.sum(y1));

      Tape t2;
      std::map<std::string, Tensor> w;
      for (std::size_t i = 0; i < net.weights().size(); ++i) w[net.weight_names()[i]] = net.weights()[i];
      const Tensor an = t2.variable(arch.normal);
      const Tensor ar = reduction ? t2.variable(arch.reduce) : Tensor();
      const Tensor y2 = oracle::darts_logits(t2, sp, w, an, ar, images);
      const auto g2 = t2.backward(t2.sum(y2));

      CHECK(max_abs_diff(y1.data(), y2.data()) <= 1e-12);
      CHECK(max_abs_diff(g1.raw(va.normal), g2.raw(an)) <= 1e-12);
      if (reduction) CHECK(max_abs_diff(g1.raw(va.reduce), g2.raw(ar)) <= 1e-12);
    }
  }
}

TEST_CASE("a skip-only edge with beta = 1 doubles its input") {
  Rng rng(1);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  const std::vector<OpInstance> ops{{OpKind::Skip, {}, 1}};
  Tape t;
  const Tensor y = mixed_edge_forward(t, x, Tensor({1}, {0.3}), 1.0, ops, AuxInstance{});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == 2.0 * x[i]);
}

TEST_CASE("uniform alpha over seven ops with one skip gives (beta + 1/7) x") {
  Rng rng(2);
  const Tensor x = random_tensor({2, 2, 4, 4}, rng);
  std::vector<OpInstance> ops(7, OpInstance{OpKind::None, {}, 1});
  ops[3].kind = OpKind::Skip;
  Tape t;
  const Tensor y = mixed_edge_forward(t, x, Tensor::zeros({7}), 1.0, ops, AuxInstance{});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == doctest::Approx((1.0 + 1.0 / 7.0) * x[i]).epsilon(1e-14));
}

TEST_CASE("the auxiliary branch contributes beta times the identity Jacobian") {
  Rng rng(3);
  const std::vector<OpInstance> ops{{OpKind::None, {}, 1}};
  for (double beta : {0.25, 1.0}) {
    Tape t;
    const Tensor x = t.variable(random_tensor({1, 2, 3, 3}, rng));
    const Tensor y = mixed_edge_forward(t, x, Tensor({1}, {0.0}), beta, ops, AuxInstance{});
    const auto g = t.backward(t.sum(y));
    for (double v : g.raw(x)) CHECK(v == beta);
  }
}

TEST_CASE("stride-2 skip and auxiliary branch are 3x3 average pools") {
  Rng rng(4);
  const Tensor x = random_tensor({1, 2, 6, 6}, rng);
  Tape t;
  const Tensor pooled = t.avg_pool(x, 3, 2, 1);
  const Tensor skip = apply_op(t, {OpKind::Skip, {}, 2}, x);
  CHECK(max_abs_diff(skip.data(), pooled.data()) == 0.0);
  const std::vector<OpInstance> none{{OpKind::None, {}, 2}};
  const Tensor aux = mixed_edge_forward(t, x, Tensor({1}, {0.0}), 1.0, none, AuxInstance{AuxBranch::IdentitySkip, {}, 2});
  CHECK(max_abs_diff(aux.data(), pooled.data()) == 0.0);
  const Tensor zero = apply_op(t, {OpKind::None, {}, 2}, x);
  CHECK(zero.shape() == ad::Shape{1, 2, 3, 3});
}

TEST_CASE("the learnable projection starts as the identity skip") {
  const auto sp = rich_space(true, Aggregation::Concat);
  Rng i1(5), i2(5);
  const auto id = Network::supernet({sp, 1, 4, AuxBranch::IdentitySkip}, i1);
  const auto proj = Network::supernet({sp, 1, 4, AuxBranch::LearnableProjection}, i2);
  CHECK(proj.weights().size() > id.weights().size());
  Rng rng(6);
  const auto arch = ArchParams::random(sp, rng, 1.0);
  const Tensor images = random_tensor({3, 1, 8, 8}, rng);
  Tape t;
  const Tensor a = id.logits(t, id.weights(), &arch, 0.6, images);
  const Tensor b = proj.logits(t, proj.weights(), &arch, 0.6, images);
  CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
}

TEST_CASE("adding a constant to an alpha row leaves the supernet unchanged") {
  const auto sp = rich_space(false, Aggregation::Sum);
  Rng init(9);
  const auto net = Network::supernet({sp, 1, 4, AuxBranch::IdentitySkip}, init);
  Rng rng(10);
  const auto arch = ArchParams::random(sp, rng, 1.0);
  auto shifted = arch;
  auto d = shifted.normal.mutable_data();
  for (std::size_t r = 0; r < sp.num_edges(); ++r)
    for (std::size_t o = 0; o < sp.num_ops(); ++o) d[r * sp.num_ops() + o] += 3.0 * static_cast<double>(r) - 1.0;
  const Tensor images = random_tensor({2, 1, 8, 8}, rng);
  Tape t;
  const Tensor a = net.logits(t, net.weights(), &arch, 0.5, images);
  const Tensor b = net.logits(t, net.weights(), &shifted, 0.5, images);
  CHECK(max_abs_diff(a.data(), b.data()) <= 1e-12);
}

TEST_CASE("weight names follow the cell/edge/op scheme") {
  const auto sp = rich_space(false, Aggregation::Concat);
  Rng init(1);
  const auto net = Network::supernet({sp, 1, 4, AuxBranch::LearnableProjection}, init);
  const auto& n = net.weight_names();
  auto has = [&](const std::string& s) { return std::find(n.begin(), n.end(), s) != n.end(); };
  CHECK(n.front() == "stem.w");
  CHECK(has("stem.b"));
  CHECK(has("cell0.edge0_2.conv3x3.w"));
  CHECK(has("cell2.edge2_3.sepconv.w0"));
  CHECK(has("cell2.edge2_3.sepconv.w1"));
  CHECK(has("cell1.edge1_3.aux"));
  CHECK(has("cell1.proj"));
  CHECK(has("head.w"));
  CHECK(has("head.b"));
  CHECK_FALSE(has("cell0.edge0_2.skip.w"));
  std::size_t total = 0;
  for (const auto& w : net.weights()) total += w.numel();
  CHECK(net.num_weight_values() == total);
}

TEST_CASE("single-input cells ignore s0") {
  SearchSpaceSpec sp = rich_space(false, Aggregation::Sum);
  sp.num_inputs = 1;
  Rng init(2);
  const auto net = Network::supernet({sp, 1, 4, AuxBranch::IdentitySkip}, init);
  Rng rng(3);
  const auto arch = ArchParams::random(sp, rng, 1.0);
  const Tensor s1 = random_tensor({2, 4, 8, 8}, rng);
  Tape t;
  const Tensor a = net.cell_forward(t, net.weights(), 1, random_tensor({2, 4, 8, 8}, rng), s1, &arch, 0.3);
  const Tensor b = net.cell_forward(t, net.weights(), 1, random_tensor({2, 4, 8, 8}, rng), s1, &arch, 0.3);
  CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
}

TEST_CASE("discrete networks hold only the genotype's weights") {
  SearchSpaceSpec sp;
  sp.num_inputs = 1;
  sp.num_nodes = 2;
  sp.num_cells = 2;
  sp.aggregation = Aggregation::Sum;
  sp.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3};
  const auto g = parse_genotype("cell=normal; node=1; from=0; op=conv3x3\ncell=normal; node=2; from=1; op=skip\n");
  Rng init(4);
  const auto net = Network::discrete({sp, 1, 4, AuxBranch::IdentitySkip}, g, init);
  CHECK_FALSE(net.is_supernet());
  std::vector<std::string> expect{"stem.w", "stem.b", "cell0.edge0_1.conv3x3.w", "cell1.edge0_1.conv3x3.w", "head.w",
                                  "head.b"};
  CHECK(net.weight_names() == expect);
  ConcentricSpec ds;
  ds.num_samples = 8;
  const auto data = make_concentric(ds, 1);
  Tape t;
  const auto r = net.forward(t, net.weights(), nullptr, 0.0, data.images, data.labels);
  CHECK(r.logits.shape() == ad::Shape{8, 4});
  CHECK(std::isfinite(r.loss.item()));
}

TEST_CASE("supernets require architecture parameters of the right shape") {
  const auto sp = rich_space(false, Aggregation::Sum);
  Rng init(1);
  const auto net = Network::supernet({sp, 1, 4, AuxBranch::IdentitySkip}, init);
  Rng rng(2);
  const Tensor images = random_tensor({1, 1, 8, 8}, rng);
  Tape t;
  CHECK_THROWS(net.logits(t, net.weights(), nullptr, 0.0, images));
  SearchSpaceSpec other = sp;
  other.num_nodes = 3;
  const auto wrong = ArchParams::constant(other);
  CHECK_THROWS(net.logits(t, net.weights(), &wrong, 0.0, images));
}

TEST_CASE("accuracy uses the lowest index on ties") {
  const Tensor logits({3, 2}, {1.0, 1.0, 0.0, 2.0, 5.0, -1.0});
  CHECK(accuracy(logits, {0, 1, 0}) == 1.0);
  CHECK(accuracy(logits, {1, 1, 1}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("aux branch names round trip") {
  for (auto a : {AuxBranch::Off, AuxBranch::IdentitySkip, AuxBranch::LearnableProjection})
    CHECK(aux_branch_from_name(aux_branch_name(a)) == a);
  CHECK_THROWS(aux_branch_from_name("gate"));
}
