#include <cmath>
#include <set>
#include <sstream>

#include "auxskip/search.hpp"
#include "doctest.h"

using namespace auxskip;

namespace {

SearchConfig tiny_config(int epochs) {
  SearchConfig c;
  c.space.num_inputs = 1;
  c.space.num_nodes = 2;
  c.space.num_cells = 1;
  c.space.channels = 4;
  c.space.aggregation = Aggregation::Sum;
  c.space.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3};
  c.epochs = epochs;
  c.batch_size = 8;
  c.schedule.kind = DecayKind::Linear;
  c.schedule.beta0 = 1.0;
  c.schedule.total_epochs = epochs;
  c.seed = 3;
  c.split_seed = 3;
  c.a_lr = 0.01;
  return c;
}

Dataset tiny_data(int n = 32) {
  ConcentricSpec spec;
  spec.num_samples = n;
  return make_concentric(spec, 1);
}

}  // namespace

TEST_CASE("with a zero architecture learning rate alpha stays at its initialization") {
  auto c = tiny_config(1);
  c.a_lr = 0.0;
  c.a_weight_decay = 0.0;
  const auto r = run_search(c, tiny_data());
  Rng init(c.seed, "init");
  const auto net = Network::supernet({c.space, 1, 4, c.aux}, init);
  const auto expect = ArchParams::random(c.space, init, c.alpha_init_scale);
  CHECK(r.final_arch.flatten() == expect.flatten());
  CHECK(r.trajectory.size() == 1);
}

TEST_CASE("search is deterministic for a fixed seed and varies across seeds") {
  const auto data = tiny_data();
  const auto a = run_search(tiny_config(2), data);
  const auto b = run_search(tiny_config(2), data);
  CHECK(a.final_arch.flatten() == b.final_arch.flatten());
  CHECK(a.best_epoch == b.best_epoch);
  std::ostringstream sa, sb;
  write_trajectory_csv(sa, tiny_config(2).space, a.trajectory);
  write_trajectory_csv(sb, tiny_config(2).space, b.trajectory);
  CHECK(sa.str() == sb.str());
  auto c = tiny_config(2);
  c.seed = 4;
  CHECK(run_search(c, data).final_arch.flatten() != a.final_arch.flatten());
}

TEST_CASE("weight steps see only training samples and arch steps only validation samples") {
  auto c = tiny_config(2);
  const auto data = tiny_data();
  const auto [train, val] = split_dataset(data, c.split_ratio, c.split_seed);
  const std::set<std::size_t> train_ids(train.origin.begin(), train.origin.end());
  const std::set<std::size_t> val_ids(val.origin.begin(), val.origin.end());
  int weight_steps = 0, arch_steps = 0;
  std::vector<double> betas;
  c.observer = [&](const StepEvent& ev) {
    CHECK(ev.samples.size() == 8);
    for (auto i : ev.samples) CHECK((ev.phase == StepPhase::Weight ? train_ids : val_ids).count(i) == 1);
    (ev.phase == StepPhase::Weight ? weight_steps : arch_steps)++;
    betas.push_back(ev.beta);
  };
  run_search(c, data);
  CHECK(weight_steps == 4);  // 16 / 8 steps per epoch, two epochs
  CHECK(arch_steps == 4);
  CHECK(betas.front() == 1.0);
  CHECK(betas.back() == 0.5);
}

TEST_CASE("trajectory has one record per epoch with the scheduled beta") {
  auto c = tiny_config(3);
  c.track_hessian = true;
  c.hessian_iters = 5;
  const auto r = run_search(c, tiny_data());
  REQUIRE(r.trajectory.size() == 3);
  for (int e = 0; e < 3; ++e) {
    const auto& rec = r.trajectory[static_cast<std::size_t>(e)];
    CHECK(rec.epoch == e + 1);
    CHECK(rec.beta == doctest::Approx(1.0 - e / 3.0));
    CHECK(std::isfinite(rec.max_eig));
    CHECK(rec.normal_weights.size() == c.space.num_edges() * c.space.num_ops());
  }
  CHECK(r.best_epoch >= 1);
  CHECK(r.best_val_acc == r.trajectory[static_cast<std::size_t>(r.best_epoch - 1)].val_acc);
  for (const auto& rec : r.trajectory) CHECK(rec.val_acc <= r.best_val_acc);
  CHECK(r.final_beta == r.trajectory.back().beta);
}

TEST_CASE("arch_gradient matches central differences") {
  auto c = tiny_config(1);
  Rng init(1, "init");
  const auto net = Network::supernet({c.space, 1, 4, AuxBranch::IdentitySkip}, init);
  const auto arch = ArchParams::random(c.space, init, 0.5);
  const auto batch = tiny_data(8);
  std::vector<double> g;
  arch_gradient(net, arch, 0.4, batch, &g);
  auto flat = arch.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double h = 1e-5, x0 = flat[i];
    flat[i] = x0 + h;
    const double fp = arch_gradient(net, arch.with_flat(flat), 0.4, batch, nullptr);
    flat[i] = x0 - h;
    const double fm = arch_gradient(net, arch.with_flat(flat), 0.4, batch, nullptr);
    flat[i] = x0;
    CHECK(std::abs((fp - fm) / (2 * h) - g[i]) <= 1e-6);
  }
}

TEST_CASE("non-finite data raises a divergence error with its location") {
  auto data = tiny_data();
  for (auto& v : data.images.mutable_data()) v = std::nan("");
  try {
    run_search(tiny_config(1), data);
    FAIL("expected divergence");
  } catch (const SearchDivergence& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.step() == 0);
  }
}

TEST_CASE("configuration errors") {
  auto c = tiny_config(2);
  c.schedule.total_epochs = 3;
  CHECK_THROWS(run_search(c, tiny_data()));
  auto big = tiny_config(1);
  big.batch_size = 64;
  CHECK_THROWS_AS(run_search(big, tiny_data()), std::invalid_argument);
}

TEST_CASE("trajectory columns name every edge and op") {
  auto c = tiny_config(1);
  const auto cols = trajectory_columns(c.space);
  CHECK(cols.size() == 7 + 3 * 3);
  CHECK(cols[7] == "edge0_none");
  CHECK(cols.back() == "edge2_conv3x3");
  c.space.has_reduction = true;
  CHECK(trajectory_columns(c.space).back() == "reduce_edge2_conv3x3");
}
