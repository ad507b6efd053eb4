#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "auxskip/rng.hpp"
#include "auxskip/schedule.hpp"
#include "doctest.h"

using namespace auxskip;

namespace {
BetaSchedule make(DecayKind kind, double beta0, int E) {
  BetaSchedule s;
  s.kind = kind;
  s.beta0 = beta0;
  s.total_epochs = E;
  s.step_epoch = std::min(45, E);
  s.hold_until = std::min(100, E - 1);
  return s;
}
}  // namespace

TEST_CASE("linear decay endpoints") {
  const auto s = make(DecayKind::Linear, 1.0, 50);
  CHECK(beta_at(s, 0) == 1.0);
  CHECK(beta_at(s, 50) == 0.0);
  CHECK(beta_at(s, 25) == 0.5);
}

TEST_CASE("step decay switches exactly at step_epoch") {
  const auto s = make(DecayKind::Step, 1.0, 50);
  CHECK(beta_at(s, 44) == 1.0);
  CHECK(beta_at(s, 45) == 0.0);
  CHECK(beta_at(s, 50) == 0.0);
}

TEST_CASE("cosine decay is half at mid-horizon and zero at the end") {
  const auto s = make(DecayKind::Cosine, 1.0, 50);
  CHECK(beta_at(s, 25) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(beta_at(s, 0) == 1.0);
  CHECK(beta_at(s, 50) == 0.0);
}

TEST_CASE("hold-then-linear keeps beta0 and then decays over the remaining epochs") {
  const auto s = make(DecayKind::HoldThenLinear, 1.0, 150);
  CHECK(beta_at(s, 99) == 1.0);
  CHECK(beta_at(s, 100) == 1.0);
  CHECK(beta_at(s, 125) == 0.5);
  CHECK(beta_at(s, 150) == 0.0);
}

TEST_CASE("constant schedule") {
  const auto s = make(DecayKind::Constant, 0.4, 10);
  for (int e = 0; e <= 10; ++e) CHECK(beta_at(s, e) == 0.4);
}

TEST_CASE("beta0 = 0 is identically zero for every kind") {
  for (auto k : {DecayKind::Linear, DecayKind::Cosine, DecayKind::Step, DecayKind::HoldThenLinear, DecayKind::Constant}) {
    const auto s = make(k, 0.0, 20);
    for (int e = 0; e <= 20; ++e) CHECK(beta_at(s, e) == 0.0);
  }
}

TEST_CASE("randomized schedules are monotone and bounded") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const int E = 1 + static_cast<int>(rng.below(200));
    auto s = make(static_cast<DecayKind>(rng.below(5)), rng.uniform(), E);
    s.step_epoch = static_cast<int>(rng.below(static_cast<std::uint64_t>(E) + 1));
    s.hold_until = static_cast<int>(rng.below(static_cast<std::uint64_t>(E)));
    double prev = beta_at(s, 0);
    if (s.kind != DecayKind::Step || s.step_epoch > 0) CHECK(prev == s.beta0);
    for (int e = 1; e <= E; ++e) {
      const double b = beta_at(s, e);
      CHECK(b <= prev);
      CHECK(b >= 0.0);
      prev = b;
    }
    if (s.kind != DecayKind::Constant) CHECK(beta_at(s, E) == 0.0);
  }
}

TEST_CASE("schedule errors") {
  auto s = make(DecayKind::Linear, 1.0, 10);
  CHECK_THROWS_AS(beta_at(s, -1), std::out_of_range);
  CHECK_THROWS_AS(beta_at(s, 11), std::out_of_range);
  s.beta0 = 1.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  auto h = make(DecayKind::HoldThenLinear, 1.0, 10);
  h.hold_until = 10;
  CHECK_THROWS(h.validate());
  auto st = make(DecayKind::Step, 1.0, 10);
  st.step_epoch = 11;
  CHECK_THROWS(st.validate());
}

TEST_CASE("decay kind names round trip") {
  for (auto k : {DecayKind::Linear, DecayKind::Cosine, DecayKind::Step, DecayKind::HoldThenLinear, DecayKind::Constant}) {
    CHECK(decay_kind_from_name(decay_kind_name(k)) == k);
  }
  CHECK_THROWS(decay_kind_from_name("exponential"));
}
