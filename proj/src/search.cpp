#include "auxskip/search.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include "auxskip/csv.hpp"
#include "auxskip/diagnostics.hpp"
#include "auxskip/optim.hpp"

namespace auxskip {

void SearchConfig::validate() const {
  space.validate();
  schedule.validate();
  auto fail = [](const std::string& m) { throw std::invalid_argument("search config: " + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (schedule.total_epochs != epochs) fail("schedule horizon differs from search.epochs");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
  if (!(w_lr > 0.0) || w_lr_min < 0.0 || w_lr_min > w_lr) fail("need w_lr > 0 and 0 <= w_lr_min <= w_lr");
  if (a_lr < 0.0) fail("a_lr must be >= 0");
  if (w_momentum < 0.0 || w_weight_decay < 0.0 || a_weight_decay < 0.0) fail("momentum and weight decay must be >= 0");
  if (!(grad_clip > 0.0)) fail("grad_clip must be > 0");
  if (a_beta1 < 0.0 || a_beta1 >= 1.0 || a_beta2 < 0.0 || a_beta2 >= 1.0 || !(a_eps > 0.0)) fail("invalid Adam moments");
  if (hessian_iters < 1 || hessian_samples < 1) fail("hessian_iters and hessian_samples must be >= 1");
}

SearchDivergence::SearchDivergence(int epoch, int step, const std::string& what)
    : std::runtime_error("diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ": " + what),
      epoch_(epoch),
      step_(step) {}

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  rng.shuffle(p.begin(), p.end());
  return p;
}

}  // namespace

double arch_gradient(const Network& net, const ArchParams& arch, double beta, const Dataset& batch,
                     std::vector<double>* grad) {
  ad::Tape tape;
  ArchParams bound;
  bound.normal = tape.variable(arch.normal);
  if (arch.has_reduce()) bound.reduce = tape.variable(arch.reduce);
  const auto fr = net.forward(tape, net.weights(), &bound, beta, batch.images, batch.labels);
  const double loss = fr.loss.item();
  if (grad) {
    const auto g = tape.backward(fr.loss);
    const auto gn = g.raw(bound.normal);
    grad->assign(gn.begin(), gn.end());
    if (arch.has_reduce()) {
      const auto gr = g.raw(bound.reduce);
      grad->insert(grad->end(), gr.begin(), gr.end());
    }
  }
  return loss;
}

Evaluation evaluate(const Network& net, const ArchParams* arch, double beta, const Dataset& data) {
  ad::Tape tape;
  const auto fr = net.forward(tape, net.weights(), arch, beta, data.images, data.labels);
  return {fr.loss.item(), fr.accuracy};
}

SearchResult run_search(const SearchConfig& cfg, const Dataset& data) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("run_search: empty dataset");
  const auto [train, val] = split_dataset(data, cfg.split_ratio, cfg.split_seed);
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = std::min(train.size(), val.size()) / B;
  if (steps == 0) {
    throw std::invalid_argument("run_search: splits of " + std::to_string(train.size()) + "/" + std::to_string(val.size()) +
                                " samples are smaller than one batch of " + std::to_string(B));
  }

  Rng init(cfg.seed, "init");
  SearchResult res;
  const NetworkShape shape{cfg.space, static_cast<int>(data.images.dim(1)), data.num_classes, cfg.aux};
  res.network = Network::supernet(shape, init);
  Network& net = res.network;
  ArchParams arch = ArchParams::random(cfg.space, init, cfg.alpha_init_scale);

  std::vector<std::vector<double>> momentum;
  for (const auto& w : net.weights()) momentum.emplace_back(w.numel(), 0.0);
  AdamState adam(arch.size());
  Rng batches(cfg.seed, "search");

  Dataset probe;
  if (cfg.track_hessian) {
    std::vector<std::size_t> idx(std::min(val.size(), static_cast<std::size_t>(cfg.hessian_samples)));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    probe = val.subset(idx);
  }

  const int E = cfg.epochs;
  for (int e = 0; e < E; ++e) {
    const int epoch = e + 1;
    const double beta = beta_at(cfg.schedule, e);
    const double lr = cfg.w_lr_min + (cfg.w_lr - cfg.w_lr_min) * (1.0 + std::cos(std::numbers::pi * e / E)) / 2.0;
    const auto p_train = permutation(train.size(), batches);
    const auto p_val = permutation(val.size(), batches);
    double train_loss = 0.0, val_loss = 0.0;

    for (std::size_t s = 0; s < steps; ++s) {
      const int step = static_cast<int>(s);
      // Weight step on the training split.
      const std::span<const std::size_t> i_train(p_train.data() + s * B, B);
      const Dataset tb = train.subset(i_train);
      if (cfg.observer) cfg.observer({epoch, step, StepPhase::Weight, tb.origin, beta});
      {
        ad::Tape tape;
        std::vector<ad::Tensor> w;
        for (const auto& t : net.weights()) w.push_back(tape.variable(t));
        const auto fr = net.forward(tape, w, &arch, beta, tb.images, tb.labels);
        const double loss = fr.loss.item();
        if (!std::isfinite(loss)) throw SearchDivergence(epoch, step, "non-finite training loss");
        train_loss += loss;
        const auto g = tape.backward(fr.loss);
        std::vector<std::vector<double>> grads;
        for (const auto& t : w) {
          const auto r = g.raw(t);
          grads.emplace_back(r.begin(), r.end());
        }
        std::vector<std::span<double>> views(grads.begin(), grads.end());
        if (!std::isfinite(clip_grad_norm(views, cfg.grad_clip))) {
          throw SearchDivergence(epoch, step, "non-finite weight gradient");
        }
        for (std::size_t i = 0; i < grads.size(); ++i) {
          sgd_step(net.weights()[i].mutable_data(), grads[i], momentum[i], lr, cfg.w_momentum, cfg.w_weight_decay);
        }
      }
      // Architecture step on the validation split.
      const std::span<const std::size_t> i_val(p_val.data() + s * B, B);
      const Dataset vb = val.subset(i_val);
      if (cfg.observer) cfg.observer({epoch, step, StepPhase::Arch, vb.origin, beta});
      {
        std::vector<double> grad;
        const double loss = arch_gradient(net, arch, beta, vb, &grad);
        if (!std::isfinite(loss)) throw SearchDivergence(epoch, step, "non-finite validation loss");
        val_loss += loss;
        for (double v : grad)
          if (!std::isfinite(v)) throw SearchDivergence(epoch, step, "non-finite architecture gradient");
        auto flat = arch.flatten();
        adam_step(flat, grad, adam, cfg.a_lr, cfg.a_beta1, cfg.a_beta2, cfg.a_eps, cfg.a_weight_decay);
        arch = arch.with_flat(flat);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.beta = beta;
    rec.train_loss = train_loss / static_cast<double>(steps);
    rec.val_loss = val_loss / static_cast<double>(steps);
    rec.val_acc = evaluate(net, &arch, beta, val).accuracy;
    if (cfg.track_hessian) {
      const auto flat = arch.flatten();
      auto grad_fn = [&](std::span<const double> point) {
        std::vector<double> g;
        arch_gradient(net, arch.with_flat(point), beta, probe, &g);
        return g;
      };
      Rng hrng(cfg.seed, "hessian");
      const auto est = power_iteration(grad_fn, flat, cfg.hessian_iters, cfg.hessian_tol, hrng);
      rec.max_eig = est.value;
      rec.eig_residual = est.residual;
    }
    rec.normal_weights = softmax_rows(arch.normal);
    if (arch.has_reduce()) rec.reduce_weights = softmax_rows(arch.reduce);
    if (rec.val_acc > res.best_val_acc || res.best_epoch == 0) {
      res.best_val_acc = rec.val_acc;
      res.best_epoch = epoch;
      res.best_arch = arch;
    }
    res.trajectory.push_back(std::move(rec));
    res.final_beta = beta;
  }
  res.final_arch = arch;
  return res;
}

std::vector<std::string> trajectory_columns(const SearchSpaceSpec& space) {
  std::vector<std::string> cols{"epoch", "beta", "train_loss", "val_loss", "val_acc", "max_eig", "eig_residual"};
  const auto ne = space.num_edges();
  for (const char* prefix : {"", "reduce_"}) {
    if (std::string_view(prefix) == "reduce_" && !space.has_reduction) break;
    for (std::size_t e = 0; e < ne; ++e)
      for (OpKind op : space.candidate_ops) cols.push_back(std::string(prefix) + "edge" + std::to_string(e) + "_" + std::string(op_name(op)));
  }
  return cols;
}

void write_trajectory_csv(std::ostream& os, const SearchSpaceSpec& space, const std::vector<EpochRecord>& records) {
  CsvWriter csv(os);
  csv.row(trajectory_columns(space));
  for (const auto& r : records) {
    std::vector<std::string> cells{std::to_string(r.epoch), format_double(r.beta), format_double(r.train_loss),
                                   format_double(r.val_loss), format_double(r.val_acc), format_double(r.max_eig),
                                   format_double(r.eig_residual)};
    for (double v : r.normal_weights) cells.push_back(format_double(v));
    for (double v : r.reduce_weights) cells.push_back(format_double(v));
    csv.row(cells);
  }
}

}  // namespace auxskip
