#pragma once

#include <span>
#include <vector>

namespace auxskip {

// Heavy-ball SGD with coupled weight decay:
//   d = g + wd * p;  buf = momentum * buf + d;  p -= lr * buf
// `buf` starts at zero.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> buf, double lr,
              double momentum, double weight_decay);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Adam with L2 weight decay added to the gradient:
//   p -= lr / (1 - b1^t) * m / (sqrt(v) / sqrt(1 - b2^t) + eps)
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double b1,
               double b2, double eps, double weight_decay = 0.0);

// Scales `grads` in place so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm);

}  // namespace auxskip
