#include <Eigen/Dense>
#include <cmath>

#include "../support/oracles.hpp"
#include "auxskip/diagnostics.hpp"
#include "auxskip/search.hpp"
#include "doctest.h"

using namespace auxskip;

namespace {

Eigen::MatrixXd spd_with_spectrum(const std::vector<double>& eig, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(eig.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) d(i) = eig[static_cast<std::size_t>(i)];
  return q * d.asDiagonal() * q.transpose();
}

GradFn quadratic_grad(const Eigen::MatrixXd& a) {
  return [a](std::span<const double> x) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd g = a * v;
    return std::vector<double>(g.data(), g.data() + g.size());
  };
}

EdgeWeights uniform_weights(int h, double value) {
  EdgeWeights w;
  for (int j = 1; j < h; ++j)
    for (int i = 0; i < j; ++i) w[{i, j}] = value;
  return w;
}

}  // namespace

TEST_CASE("finite-difference HVP is exact for a quadratic") {
  Rng rng(1);
  const auto a = spd_with_spectrum({4.0, 2.0, 1.0, 0.5, 0.1}, rng);
  const std::vector<double> x{0.3, -1.0, 2.0, 0.0, 1.5}, v{1.0, 2.0, -1.0, 0.5, 0.0};
  const auto hv = hessian_vector_product(quadratic_grad(a), x, v);
  const Eigen::Map<const Eigen::VectorXd> vv(v.data(), 5);
  const Eigen::VectorXd expect = a * vv;
  for (int i = 0; i < 5; ++i) CHECK(hv[static_cast<std::size_t>(i)] == doctest::Approx(expect(i)).epsilon(1e-9));
  CHECK(hessian_vector_product(quadratic_grad(a), x, std::vector<double>(5, 0.0)) == std::vector<double>(5, 0.0));
}

TEST_CASE("power iteration finds the dominant eigenvalue computed by Eigen") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> spec{3.0 + trial, 1.5, 1.0, -0.5, 0.25, 0.1};
    const auto a = spd_with_spectrum(spec, rng);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const double expect = es.eigenvalues().cwiseAbs().maxCoeff();
    Rng start(static_cast<std::uint64_t>(trial));
    const auto est = power_iteration(quadratic_grad(a), std::vector<double>(6, 0.2), 500, 1e-9, start);
    CHECK(est.converged);
    CHECK(est.value == doctest::Approx(expect).epsilon(1e-8));
    CHECK(est.residual <= 1e-9);
  }
}

TEST_CASE("hessian_max_eig agrees with the dense Hessian of the architecture loss") {
  SearchSpaceSpec sp;
  sp.num_inputs = 1;
  sp.num_nodes = 2;
  sp.num_cells = 1;
  sp.channels = 4;
  sp.aggregation = Aggregation::Sum;
  sp.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3};
  Rng init(3, "init");
  const auto net = Network::supernet({sp, 1, 4, AuxBranch::IdentitySkip}, init);
  const auto arch = ArchParams::random(sp, init, 1.0);
  ConcentricSpec ds;
  ds.num_samples = 16;
  const auto batch = make_concentric(ds, 4);

  // Dense Hessian column by column from central differences of the gradient.
  const auto x = arch.flatten();
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd h(n, n);
  const double step = 1e-4;
  for (Eigen::Index j = 0; j < n; ++j) {
    auto xp = x, xm = x;
    xp[static_cast<std::size_t>(j)] += step;
    xm[static_cast<std::size_t>(j)] -= step;
    std::vector<double> gp, gm;
    arch_gradient(net, arch.with_flat(xp), 0.5, batch, &gp);
    arch_gradient(net, arch.with_flat(xm), 0.5, batch, &gm);
    for (Eigen::Index i = 0; i < n; ++i) h(i, j) = (gp[static_cast<std::size_t>(i)] - gm[static_cast<std::size_t>(i)]) / (2 * step);
  }
  const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const auto& ev = es.eigenvalues();
  const double expect = std::abs(ev(0)) > std::abs(ev(n - 1)) ? ev(0) : ev(n - 1);

  const auto est = hessian_max_eig(net, arch, 0.5, batch, 2000, 1e-8, 5);
  CHECK(est.value == doctest::Approx(expect).epsilon(1e-3));
}

TEST_CASE("convergence-ratio proxy hand case") {
  const auto conv = uniform_weights(3, 0.5), skip = uniform_weights(3, 0.15);
  // 0.5^2 + 0.5^2 * (0.15 + 1)^2
  CHECK(lambda_proxy(conv, skip, 1.0, 3) == doctest::Approx(0.580625).epsilon(1e-14));
  CHECK(lambda_proxy(conv, skip, 0.0, 3) == doctest::Approx(0.25 + 0.25 * 0.0225).epsilon(1e-14));
}

TEST_CASE("proxy at beta = 0 matches the plain formula and grows with beta") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = 2 + trial % 6;
    EdgeWeights conv, skip;
    for (int j = 1; j < h; ++j)
      for (int i = 0; i < j; ++i) {
        conv[{i, j}] = rng.uniform(0.01, 1.0);
        skip[{i, j}] = rng.uniform(0.0, 1.0);
      }
    CHECK(lambda_proxy(conv, skip, 0.0, h) == doctest::Approx(oracle::theory_lambda(conv, skip, h)).epsilon(1e-13));
    double prev = lambda_proxy(conv, skip, 0.0, h);
    for (double b = 0.1; b <= 1.0; b += 0.1) {
      const double cur = lambda_proxy(conv, skip, b, h);
      CHECK(cur >= prev);
      prev = cur;
    }
  }
}

TEST_CASE("skip weights barely matter at beta = 0 and open deep paths at beta = 1") {
  const int h = 5;
  const auto conv = uniform_weights(h, 0.5);
  const auto skip = uniform_weights(h, 0.05);
  const double direct = 0.25;  // the i = 0 term alone
  CHECK((lambda_proxy(conv, skip, 0.0, h) - direct) / direct < 0.01);
  CHECK(lambda_proxy(conv, skip, 1.0, h) / direct > 4.0);
  // At beta = 1 a 100x change of every skip weight moves the proxy by less than 2x.
  const double lo = lambda_proxy(conv, uniform_weights(h, 1e-3), 1.0, h);
  const double hi = lambda_proxy(conv, uniform_weights(h, 0.1), 1.0, h);
  CHECK(hi / lo < 2.0);
}

TEST_CASE("proxy errors") {
  const auto w = uniform_weights(3, 0.5);
  CHECK_THROWS(lambda_proxy(w, w, 0.0, 1));
  CHECK_THROWS_AS(lambda_proxy(w, w, 0.0, 4), std::out_of_range);
}

TEST_CASE("gradient flow through identity blocks doubles per layer") {
  const int depth = 10;
  const auto rep = gradient_flow_check(depth, 1.0, BlockKind::Identity);
  CHECK(rep.max_relative_error <= 1e-12);
  REQUIRE(rep.grad_norms.size() == static_cast<std::size_t>(depth + 1));
  for (int i = 0; i <= depth; ++i)
    CHECK(rep.grad_norms[static_cast<std::size_t>(i)] / rep.grad_norms.back() ==
          doctest::Approx(std::ldexp(1.0, depth - i)).epsilon(1e-12));
}

TEST_CASE("autodiff matches the closed-form product for random blocks") {
  for (double beta : {0.0, 0.5, 1.0})
    for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(gradient_flow_check(12, beta, BlockKind::Random, 6, seed).max_relative_error <= 1e-10);
}

TEST_CASE("contractive blocks vanish without the skip and not with it") {
  const auto plain = gradient_flow_check(12, 0.0, BlockKind::Contractive);
  const auto skip = gradient_flow_check(12, 1.0, BlockKind::Contractive);
  CHECK(plain.grad_norms.front() / plain.grad_norms.back() < 1e-4);
  CHECK(skip.grad_norms.front() / skip.grad_norms.back() > 1.0);
}

TEST_CASE("landscape centre is the unperturbed accuracy and radius 0 is flat") {
  SearchSpaceSpec sp;
  sp.has_reduction = true;
  Rng rng(6);
  const auto arch = ArchParams::random(sp, rng, 1.0);
  auto f = [](const ArchParams& a) {
    double s = 0.0;
    for (double v : a.flatten()) s += std::sin(v);
    return s;
  };
  const auto g = landscape_probe(f, arch, 0.7, 5, 3);
  CHECK(g.center == f(arch));
  CHECK(g.values[2][2] == f(arch));
  CHECK(g.offsets[2] == 0.0);
  CHECK(g.offsets.front() == -0.7);
  CHECK(g.offsets.back() == 0.7);
  CHECK(g.direction_seeds == std::pair<std::uint64_t, std::uint64_t>{6, 7});

  const auto flat = landscape_probe(f, arch, 0.0, 3, 3);
  for (const auto& row : flat.values)
    for (double v : row) CHECK(v == f(arch));
}

TEST_CASE("landscape directions are rescaled to the alpha row norms") {
  SearchSpaceSpec sp;
  Rng rng(7);
  const auto arch = ArchParams::random(sp, rng, 1.0);
  const auto alpha = arch.flatten();
  std::vector<std::vector<double>> seen;
  auto record = [&](const ArchParams& a) {
    seen.push_back(a.flatten());
    return 0.0;
  };
  const auto g = landscape_probe(record, arch, 2.0, 3, 1);
  // Visit order: centre first, then row-major over the grid; (i=2, j=1) is +2 d1.
  const auto& p = seen[1 + 2 * 3 + 1];
  const auto cols = sp.num_ops();
  for (std::size_t r = 0; r < alpha.size(); r += cols) {
    double na = 0.0, nd = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      na += alpha[r + j] * alpha[r + j];
      const double d = (p[r + j] - alpha[r + j]) / 2.0;
      nd += d * d;
    }
    CHECK(std::sqrt(nd) == doctest::Approx(std::sqrt(na)).epsilon(1e-10));
  }
  CHECK_THROWS(landscape_probe(record, arch, 1.0, 4, 1));
  CHECK_THROWS(landscape_probe(record, arch, -1.0, 3, 1));
}

TEST_CASE("trainable residual coefficient demo is deterministic") {
  ResBetaConfig c;
  c.epochs = 2;
  c.samples = 64;
  const auto a = resnet_beta_demo(c);
  const auto b = resnet_beta_demo(c);
  CHECK(a.betas == b.betas);
  CHECK(a.betas.size() == 2);
  c.beta_lr = 0.0;
  c.init_beta = 0.7;
  for (double v : resnet_beta_demo(c).betas) CHECK(v == 0.7);
  c.init_beta = 2.0;
  CHECK_THROWS(resnet_beta_demo(c));
}
