#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "auxskip/dataset.hpp"
#include "auxskip/network.hpp"
#include "auxskip/rng.hpp"
#include "auxskip/space.hpp"

namespace auxskip {

// ---- Hessian spectrum -------------------------------------------------------

using GradFn = std::function<std::vector<double>(std::span<const double>)>;

struct EigenEstimate {
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;  // ||Hv - value * v|| / ||v||
  bool converged = false;
};

// Hessian-vector product by central differences of the gradient:
// (g(x + eps v) - g(x - eps v)) / (2 eps) with eps = 1e-3 / ||v||.
std::vector<double> hessian_vector_product(const GradFn& grad, std::span<const double> x, std::span<const double> v);

// Power iteration for the eigenvalue of largest magnitude. The start vector
// is drawn from `rng`; the estimate is the Rayleigh quotient and iteration
// stops once the residual falls to `tol`.
EigenEstimate power_iteration(const GradFn& grad, std::span<const double> x, int iters, double tol, Rng& rng);

// Dominant eigenvalue of the validation-loss Hessian with respect to alpha,
// on a fixed batch, for fixed supernet weights.
EigenEstimate hessian_max_eig(const Network& net, const ArchParams& arch, double beta, const Dataset& batch, int iters,
                              double tol, std::uint64_t seed);

// ---- Accuracy landscape -----------------------------------------------------

struct LandscapeGrid {
  double radius = 0.0;
  int resolution = 0;
  std::vector<double> offsets;              // resolution values from -radius to radius
  std::vector<std::vector<double>> values;  // values[i][j] at alpha + offsets[i] d1 + offsets[j] d2
  std::pair<std::uint64_t, std::uint64_t> direction_seeds;
  double center = 0.0;                      // unperturbed accuracy
};

using AccuracyFn = std::function<double(const ArchParams&)>;

// Two random Gaussian directions, each rescaled per edge row to the norm of
// the matching alpha row. The centre offset is exactly zero so the centre cell
// evaluates the unperturbed alpha.
LandscapeGrid landscape_probe(const AccuracyFn& accuracy, const ArchParams& arch, double radius, int resolution,
                              std::uint64_t seed);

// ---- Convergence-ratio proxy -------------------------------------------------

// Weights keyed by (from, to) node indices.
using EdgeWeights = std::map<std::pair<int, int>, double>;

// sum_{i=0}^{h-2} conv(i, h-1)^2 * prod_{t=0}^{i-1} (skip(t, i) + beta)^2,
// with the proportionality constant taken as 1.
double lambda_proxy(const EdgeWeights& conv, const EdgeWeights& skip, double beta, int h);

// ---- Trainable residual coefficient -----------------------------------------

struct ResBetaConfig {
  double init_beta = 0.0;
  int depth = 8;
  int epochs = 40;
  int width = 8;
  int samples = 256;
  int batch_size = 32;
  double lr = 0.01;
  double beta_lr = -1.0;  // < 0: same as lr; 0 freezes beta
  std::uint64_t seed = 0;
};

struct ResBetaTrace {
  double init_beta = 0.0;
  std::vector<double> betas;   // after each epoch
  std::vector<double> losses;  // mean training loss per epoch
};

// Trains y = f(x) + beta * x, where f is `depth` layers relu(h W + b) followed
// by a linear layer and beta is a single trainable scalar, on the regression
// target x + tanh(x M) for a fixed random M. Plain SGD on the mean squared error.
ResBetaTrace resnet_beta_demo(const ResBetaConfig& config);

// ---- Gradient flow through a linear residual chain ---------------------------

enum class BlockKind { Random, Identity, Contractive };

struct GradientFlowReport {
  double max_relative_error = 0.0;
  // ||dL/dX_i|| for i = 0..depth, autodiff values.
  std::vector<double> grad_norms;
};

// X_{i+1} = X_i A_i + beta X_i with L = sum(X_depth * G). Compares the
// autodiff gradient at every layer with G (A_{d-1}^T + beta I) ... (A_i^T + beta I).
GradientFlowReport gradient_flow_check(int depth, double beta, BlockKind blocks = BlockKind::Random, int width = 6,
                                       std::uint64_t seed = 0);

}  // namespace auxskip
