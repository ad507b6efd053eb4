#pragma once

#include <string_view>

namespace auxskip {

enum class DecayKind { Linear, Cosine, Step, HoldThenLinear, Constant };

std::string_view decay_kind_name(DecayKind k);
DecayKind decay_kind_from_name(std::string_view name);

struct BetaSchedule {
  DecayKind kind = DecayKind::Linear;
  double beta0 = 1.0;
  int total_epochs = 50;
  int step_epoch = 45;   // Step only
  int hold_until = 100;  // HoldThenLinear only

  // Checks beta0 in [0, 1], E >= 1 and the breakpoints of the active kind.
  void validate() const;
};

// beta for epoch e in [0, E]:
//   linear            beta0 * (1 - e/E)
//   cosine            beta0 * (1 + cos(pi e / E)) / 2
//   step              beta0 while e < step_epoch, then 0
//   hold-then-linear  beta0 while e < hold_until, then beta0 * (E - e) / (E - hold_until)
//   constant          beta0
double beta_at(const BetaSchedule& s, int epoch);

}  // namespace auxskip
