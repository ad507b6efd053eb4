#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "auxskip/dataset.hpp"
#include "auxskip/network.hpp"
#include "auxskip/schedule.hpp"
#include "auxskip/space.hpp"

namespace auxskip {

enum class StepPhase { Weight, Arch };

// Emitted before every optimizer step; `samples` are indices into the
// dataset handed to run_search.
struct StepEvent {
  int epoch = 0;
  int step = 0;
  StepPhase phase = StepPhase::Weight;
  std::vector<std::size_t> samples;
  double beta = 0.0;
};

struct SearchConfig {
  SearchSpaceSpec space;
  AuxBranch aux = AuxBranch::IdentitySkip;
  BetaSchedule schedule;  // total_epochs must equal `epochs`

  int epochs = 50;
  int batch_size = 32;
  double split_ratio = 0.5;

  // Weights: SGD with momentum, learning rate cosine-annealed per epoch from
  // w_lr to w_lr_min, gradients clipped to grad_clip in joint L2 norm.
  double w_lr = 0.025;
  double w_lr_min = 0.001;
  double w_momentum = 0.9;
  double w_weight_decay = 3e-4;
  double grad_clip = 5.0;

  // Architecture parameters: Adam.
  double a_lr = 1e-3;
  double a_beta1 = 0.5;
  double a_beta2 = 0.999;
  double a_eps = 1e-8;
  double a_weight_decay = 1e-3;
  double alpha_init_scale = 1e-3;

  // `seed` drives weight/alpha initialization and batching, `split_seed` the
  // train/validation split.
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;

  bool track_hessian = false;
  int hessian_iters = 50;
  double hessian_tol = 1e-4;
  int hessian_samples = 512;

  std::function<void(const StepEvent&)> observer;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double beta = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double max_eig = std::numeric_limits<double>::quiet_NaN();  // only with track_hessian
  double eig_residual = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> normal_weights;  // softmax(alpha), edge-major
  std::vector<double> reduce_weights;
};

struct SearchResult {
  ArchParams final_arch;
  ArchParams best_arch;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::vector<EpochRecord> trajectory;
  // Supernet state after the last epoch.
  Network network;
  double final_beta = 0.0;
};

class SearchDivergence : public std::runtime_error {
 public:
  SearchDivergence(int epoch, int step, const std::string& what);
  int epoch() const { return epoch_; }
  int step() const { return step_; }

 private:
  int epoch_;
  int step_;
};

// First-order alternating bi-level search. Each epoch e = 1..E uses
// beta = beta_at(schedule, e - 1) and runs floor(min(|train|, |val|) / batch)
// paired steps: one weight step on a training batch with alpha fixed, then one
// Adam step on alpha with a validation batch and fixed weights.
SearchResult run_search(const SearchConfig& config, const Dataset& data);

// Validation loss and its gradient with respect to alpha (flattened in
// ArchParams::flatten order) for fixed weights.
double arch_gradient(const Network& net, const ArchParams& arch, double beta, const Dataset& batch,
                     std::vector<double>* grad);

// Accuracy and loss of the network on `data` evaluated as one batch.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(const Network& net, const ArchParams* arch, double beta, const Dataset& data);

// Column names of the trajectory CSV.
std::vector<std::string> trajectory_columns(const SearchSpaceSpec& space);
void write_trajectory_csv(std::ostream& os, const SearchSpaceSpec& space, const std::vector<EpochRecord>& records);

}  // namespace auxskip
