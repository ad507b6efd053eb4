#include "auxskip/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "auxskip/search.hpp"

namespace auxskip {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::domain_error(std::string(what) + ": non-finite gradient");
}

}  // namespace

std::vector<double> hessian_vector_product(const GradFn& grad, std::span<const double> x, std::span<const double> v) {
  if (x.size() != v.size()) throw std::invalid_argument("hessian_vector_product: point and direction differ in size");
  const double nv = norm2(v);
  if (nv == 0.0) return std::vector<double>(x.size(), 0.0);
  const double eps = 1e-3 / nv;
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] += eps * v[i];
    xm[i] -= eps * v[i];
  }
  const auto gp = grad(xp);
  const auto gm = grad(xm);
  if (gp.size() != x.size() || gm.size() != x.size()) throw std::invalid_argument("hessian_vector_product: gradient has wrong size");
  require_finite(gp, "hessian_vector_product");
  require_finite(gm, "hessian_vector_product");
  std::vector<double> hv(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) hv[i] = (gp[i] - gm[i]) / (2.0 * eps);
  return hv;
}

EigenEstimate power_iteration(const GradFn& grad, std::span<const double> x, int iters, double tol, Rng& rng) {
  if (iters < 1) throw std::invalid_argument("power_iteration: iters must be >= 1");
  if (x.empty()) throw std::invalid_argument("power_iteration: empty parameter vector");
  std::vector<double> v(x.size());
  for (auto& e : v) e = rng.normal();
  const double n0 = norm2(v);
  for (auto& e : v) e /= n0;

  EigenEstimate est;
  for (int it = 1; it <= iters; ++it) {
    const auto hv = hessian_vector_product(grad, x, v);
    double lambda = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) lambda += v[i] * hv[i];
    double r2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) r2 += (hv[i] - lambda * v[i]) * (hv[i] - lambda * v[i]);
    est = {lambda, it, std::sqrt(r2), false};
    if (est.residual <= tol) {
      est.converged = true;
      break;
    }
    const double nh = norm2(hv);
    if (nh == 0.0) break;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = hv[i] / nh;
  }
  return est;
}

EigenEstimate hessian_max_eig(const Network& net, const ArchParams& arch, double beta, const Dataset& batch, int iters,
                              double tol, std::uint64_t seed) {
  const auto flat = arch.flatten();
  auto grad = [&](std::span<const double> point) {
    std::vector<double> g;
    arch_gradient(net, arch.with_flat(point), beta, batch, &g);
    return g;
  };
  Rng rng(seed, "hessian");
  return power_iteration(grad, flat, iters, tol, rng);
}

LandscapeGrid landscape_probe(const AccuracyFn& accuracy, const ArchParams& arch, double radius, int resolution,
                              std::uint64_t seed) {
  if (resolution < 3 || resolution % 2 == 0) throw std::invalid_argument("landscape_probe: resolution must be odd and >= 3");
  if (!(radius >= 0.0) || !std::isfinite(radius)) throw std::invalid_argument("landscape_probe: radius must be finite and >= 0");
  LandscapeGrid grid;
  grid.radius = radius;
  grid.resolution = resolution;
  grid.direction_seeds = {2 * seed, 2 * seed + 1};

  const auto alpha = arch.flatten();
  const std::size_t cols = arch.normal.dim(1);
  auto direction = [&](std::uint64_t s) {
    Rng rng(s, "directions");
    std::vector<double> d(alpha.size());
    for (auto& e : d) e = rng.normal();
    for (std::size_t r = 0; r < d.size(); r += cols) {
      const double na = norm2(std::span<const double>(alpha).subspan(r, cols));
      const double nd = norm2(std::span<const double>(d).subspan(r, cols));
      for (std::size_t j = 0; j < cols; ++j) d[r + j] = nd > 0.0 ? d[r + j] * na / nd : 0.0;
    }
    return d;
  };
  const auto d1 = direction(grid.direction_seeds.first);
  const auto d2 = direction(grid.direction_seeds.second);

  const auto n = static_cast<std::size_t>(resolution);
  for (std::size_t i = 0; i < n; ++i) {
    grid.offsets.push_back(radius * (2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0) + 0.0);  // no -0
  }
  grid.center = accuracy(arch);
  grid.values.assign(n, std::vector<double>(n, 0.0));
  std::vector<double> point(alpha.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = grid.offsets[i], b = grid.offsets[j];
      if (a == 0.0 && b == 0.0) {
        grid.values[i][j] = accuracy(arch);
        continue;
      }
      for (std::size_t k = 0; k < alpha.size(); ++k) point[k] = alpha[k] + a * d1[k] + b * d2[k];
      grid.values[i][j] = accuracy(arch.with_flat(point));
    }
  }
  return grid;
}

double lambda_proxy(const EdgeWeights& conv, const EdgeWeights& skip, double beta, int h) {
  if (h < 2) throw std::invalid_argument("lambda_proxy: h must be >= 2");
  auto get = [](const EdgeWeights& w, int i, int j, const char* name) {
    const auto it = w.find({i, j});
    if (it == w.end()) {
      throw std::out_of_range(std::string("lambda_proxy: missing ") + name + " weight for edge (" + std::to_string(i) +
                              ", " + std::to_string(j) + ")");
    }
    return it->second;
  };
  double total = 0.0;
  for (int i = 0; i <= h - 2; ++i) {
    const double c = get(conv, i, h - 1, "conv");
    double prod = 1.0;
    for (int t = 0; t < i; ++t) {
      const double s = get(skip, t, i, "skip") + beta;
      prod *= s * s;
    }
    total += c * c * prod;
  }
  return total;
}

ResBetaTrace resnet_beta_demo(const ResBetaConfig& cfg) {
  if (cfg.init_beta < 0.0 || cfg.init_beta > 1.5) throw std::invalid_argument("resnet_beta_demo: init_beta must lie in [0, 1.5]");
  if (cfg.depth < 4) throw std::invalid_argument("resnet_beta_demo: depth must be >= 4");
  if (cfg.epochs < 1 || cfg.width < 1 || cfg.samples < cfg.batch_size || cfg.batch_size < 1) {
    throw std::invalid_argument("resnet_beta_demo: invalid budget");
  }
  const auto w = static_cast<std::size_t>(cfg.width);
  const auto n = static_cast<std::size_t>(cfg.samples);
  const auto B = static_cast<std::size_t>(cfg.batch_size);

  // Regression onto a fixed near-identity map of the input.
  Rng data(cfg.seed, "data");
  ad::Tensor x = ad::Tensor::zeros({n, w});
  for (auto& v : x.mutable_data()) v = data.normal();
  ad::Tensor mix = ad::Tensor::zeros({w, w});
  for (auto& v : mix.mutable_data()) v = 0.3 * data.normal() / std::sqrt(static_cast<double>(w));
  ad::Tensor y = x.detach();
  {
    auto yd = y.mutable_data();
    const auto xd = x.data();
    const auto md = mix.data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < w; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < w; ++k) s += xd[r * w + k] * md[k * w + j];
        yd[r * w + j] += std::tanh(s);
      }
  }

  Rng init(cfg.seed, "init");
  const double bound = 1.0 / std::sqrt(static_cast<double>(w));
  auto uniform = [&](ad::Shape shape) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape));
    for (auto& v : t.mutable_data()) v = init.uniform(-bound, bound);
    return t;
  };
  // depth hidden layers, then the linear output layer.
  std::vector<ad::Tensor> params;
  for (int l = 0; l <= cfg.depth; ++l) {
    params.push_back(uniform({w, w}));
    params.push_back(uniform({w}));
  }
  ad::Tensor beta = ad::Tensor::scalar(cfg.init_beta);
  const double beta_lr = cfg.beta_lr < 0.0 ? cfg.lr : cfg.beta_lr;

  Rng order(cfg.seed, "search");
  ResBetaTrace trace;
  trace.init_beta = cfg.init_beta;
  const std::size_t steps = n / B;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    order.shuffle(perm.begin(), perm.end());
    double total = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<double> xb(B * w), yb(B * w);
      for (std::size_t r = 0; r < B; ++r) {
        const auto i = perm[s * B + r];
        std::copy_n(x.data().data() + i * w, w, xb.data() + r * w);
        std::copy_n(y.data().data() + i * w, w, yb.data() + r * w);
      }
      ad::Tape tape;
      std::vector<ad::Tensor> p;
      for (const auto& t : params) p.push_back(tape.variable(t));
      const ad::Tensor bt = tape.variable(beta);
      const ad::Tensor input(ad::Shape{B, w}, xb);
      ad::Tensor h = input;
      for (int l = 0; l < cfg.depth; ++l) {
        const auto li = static_cast<std::size_t>(2 * l);
        h = tape.relu(tape.bias_add(tape.matmul(h, p[li]), p[li + 1]));
      }
      const auto lo = static_cast<std::size_t>(2 * cfg.depth);
      const ad::Tensor f = tape.bias_add(tape.matmul(h, p[lo]), p[lo + 1]);
      const ad::Tensor pred = tape.add(f, tape.scale_by(input, bt));
      const ad::Tensor loss = tape.mse(pred, ad::Tensor(ad::Shape{B, w}, yb));
      const double lv = loss.item();
      if (!std::isfinite(lv)) throw std::domain_error("resnet_beta_demo: loss diverged at epoch " + std::to_string(e + 1));
      total += lv;
      const auto g = tape.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto gi = g.raw(p[i]);
        auto pd = params[i].mutable_data();
        for (std::size_t k = 0; k < pd.size(); ++k) pd[k] -= cfg.lr * gi[k];
      }
      beta.mutable_data()[0] -= beta_lr * g.raw(bt)[0];
      if (!std::isfinite(beta.item())) throw std::domain_error("resnet_beta_demo: beta diverged at epoch " + std::to_string(e + 1));
    }
    trace.betas.push_back(beta.item());
    trace.losses.push_back(total / static_cast<double>(steps));
  }
  return trace;
}

GradientFlowReport gradient_flow_check(int depth, double beta, BlockKind blocks, int width, std::uint64_t seed) {
  if (depth < 1 || width < 1) throw std::invalid_argument("gradient_flow_check: depth and width must be >= 1");
  const auto w = static_cast<std::size_t>(width);
  constexpr std::size_t kRows = 3;
  Rng rng(seed, "gradflow");
  using Mat = Eigen::MatrixXd;
  auto random_mat = [&](std::size_t r, std::size_t c, double scale) {
    Mat m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
    return m;
  };
  auto to_tensor = [](const Mat& m) {
    std::vector<double> d;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) d.push_back(m(i, j));
    return ad::Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(d));
  };

  std::vector<Mat> A;
  for (int l = 0; l < depth; ++l) {
    switch (blocks) {
      case BlockKind::Random:
        A.push_back(random_mat(w, w, 1.0 / std::sqrt(static_cast<double>(w))));
        break;
      case BlockKind::Identity:
        A.push_back(Mat::Identity(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(w)));
        break;
      case BlockKind::Contractive:
        A.push_back(random_mat(w, w, 0.3 / std::sqrt(static_cast<double>(w))));
        break;
    }
  }
  const Mat X0 = random_mat(kRows, w, 1.0);
  const Mat G = random_mat(kRows, w, 1.0);

  ad::Tape tape;
  std::vector<ad::Tensor> X{tape.variable(to_tensor(X0))};
  for (int l = 0; l < depth; ++l) {
    const auto& h = X.back();
    X.push_back(tape.add(tape.matmul(h, to_tensor(A[static_cast<std::size_t>(l)])), tape.scale(h, beta)));
  }
  const ad::Tensor loss = tape.sum(tape.mul(X.back(), to_tensor(G)));
  const auto grads = tape.backward(loss);

  GradientFlowReport rep;
  const auto I = Mat::Identity(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(w));
  for (int i = 0; i <= depth; ++i) {
    Mat P = I;
    for (int j = depth - 1; j >= i; --j) P = P * (A[static_cast<std::size_t>(j)].transpose() + beta * I);
    const Mat expected = G * P;
    const auto got = grads.raw(X[static_cast<std::size_t>(i)]);
    double diff = 0.0, scale = 0.0, sq = 0.0;
    for (Eigen::Index r = 0; r < expected.rows(); ++r)
      for (Eigen::Index c = 0; c < expected.cols(); ++c) {
        const double g = got[static_cast<std::size_t>(r * expected.cols() + c)];
        diff = std::max(diff, std::abs(g - expected(r, c)));
        scale = std::max(scale, std::abs(expected(r, c)));
        sq += g * g;
      }
    rep.max_relative_error = std::max(rep.max_relative_error, scale > 0.0 ? diff / scale : diff);
    rep.grad_norms.push_back(std::sqrt(sq));
  }
  return rep;
}

}  // namespace auxskip
