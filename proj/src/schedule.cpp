#include "auxskip/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace auxskip {

std::string_view decay_kind_name(DecayKind k) {
  switch (k) {
    case DecayKind::Linear:
      return "linear";
    case DecayKind::Cosine:
      return "cosine";
    case DecayKind::Step:
      return "step";
    case DecayKind::HoldThenLinear:
      return "hold-then-linear";
    case DecayKind::Constant:
      return "constant";
  }
  return "?";
}

DecayKind decay_kind_from_name(std::string_view name) {
  for (auto k : {DecayKind::Linear, DecayKind::Cosine, DecayKind::Step, DecayKind::HoldThenLinear, DecayKind::Constant})
    if (decay_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown decay kind '" + std::string(name) +
                              "' (expected linear, cosine, step, hold-then-linear or constant)");
}

void BetaSchedule::validate() const {
  if (!(beta0 >= 0.0 && beta0 <= 1.0)) throw std::invalid_argument("decay.beta0 must lie in [0, 1]");
  if (total_epochs < 1) throw std::invalid_argument("decay: total epochs must be >= 1");
  if (kind == DecayKind::Step && (step_epoch < 0 || step_epoch > total_epochs)) {
    throw std::invalid_argument("decay.step_epoch must lie in [0, " + std::to_string(total_epochs) + "]");
  }
  if (kind == DecayKind::HoldThenLinear && (hold_until < 0 || hold_until >= total_epochs)) {
    throw std::invalid_argument("decay.hold_until must lie in [0, " + std::to_string(total_epochs - 1) + "]");
  }
}

double beta_at(const BetaSchedule& s, int e) {
  s.validate();
  const int E = s.total_epochs;
  if (e < 0 || e > E) throw std::out_of_range("epoch " + std::to_string(e) + " outside [0, " + std::to_string(E) + "]");
  switch (s.kind) {
    case DecayKind::Linear:
      return s.beta0 * (1.0 - static_cast<double>(e) / E);
    case DecayKind::Cosine:
      if (e == E) return 0.0;
      return s.beta0 * (1.0 + std::cos(std::numbers::pi * e / E)) / 2.0;
    case DecayKind::Step:
      return e < s.step_epoch ? s.beta0 : 0.0;
    case DecayKind::HoldThenLinear:
      if (e < s.hold_until) return s.beta0;
      return s.beta0 * (static_cast<double>(E - e) / static_cast<double>(E - s.hold_until));
    case DecayKind::Constant:
      return s.beta0;
  }
  return 0.0;
}

}  // namespace auxskip
