#include "auxskip/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace auxskip {

namespace {

void check(std::size_t np, std::size_t ng, std::size_t ns, const char* who) {
  if (np != ng || np != ns) {
    throw std::invalid_argument(std::string(who) + ": size mismatch (" + std::to_string(np) + " params, " +
                                std::to_string(ng) + " grads, " + std::to_string(ns) + " state)");
  }
}

void check_finite(std::span<const double> g, const char* who) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i])) throw std::domain_error(std::string(who) + ": non-finite gradient at index " + std::to_string(i));
}

}  // namespace

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> buf, double lr,
              double momentum, double weight_decay) {
  check(params.size(), grads.size(), buf.size(), "sgd_step");
  check_finite(grads, "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double d = grads[i] + weight_decay * params[i];
    buf[i] = momentum * buf[i] + d;
    params[i] -= lr * buf[i];
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, double lr, double b1,
               double b2, double eps, double weight_decay) {
  check(params.size(), grads.size(), st.m.size(), "adam_step");
  check(params.size(), grads.size(), st.v.size(), "adam_step");
  check_finite(grads, "adam_step");
  ++st.step;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  const double step_size = lr / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
    st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
    params[i] -= step_size * st.m[i] / (std::sqrt(st.v[i]) / sqrt_bc2 + eps);
  }
}

double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / (norm + 1e-6);
    for (const auto& g : grads)
      for (double& v : g) v *= f;
  }
  return norm;
}

}  // namespace auxskip
