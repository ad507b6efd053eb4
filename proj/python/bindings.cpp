#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "auxskip/config.hpp"
#include "auxskip/diagnostics.hpp"
#include "auxskip/genotype.hpp"
#include "auxskip/minibench.hpp"
#include "auxskip/schedule.hpp"
#include "auxskip/search.hpp"
#include "auxskip/state.hpp"

namespace py = pybind11;
using namespace auxskip;

namespace {

RunConfig make_config(const std::string& text, const std::vector<std::string>& overrides) {
  RunConfig cfg = parse_config(text);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

EdgeWeights to_edge_weights(const std::map<std::pair<int, int>, double>& m) { return EdgeWeights(m.begin(), m.end()); }

py::dict genotype_dict(const Genotype& g) {
  py::dict d;
  d["key"] = genotype_key(g);
  d["text"] = serialize_genotype(g);
  d["num_parametric"] = count_parametric(g);
  d["num_skips"] = count_skips(g);
  return d;
}

py::dict search_from_text(const std::string& text, const std::vector<std::string>& overrides) {
  const RunConfig cfg = make_config(text, overrides);
  SearchResult r;
  {
    py::gil_scoped_release release;
    r = run_search(cfg.effective_search(), config_dataset(cfg));
  }
  py::list trajectory;
  for (const auto& e : r.trajectory) {
    py::dict row;
    row["epoch"] = e.epoch;
    row["beta"] = e.beta;
    row["train_loss"] = e.train_loss;
    row["val_loss"] = e.val_loss;
    row["val_acc"] = e.val_acc;
    row["max_eig"] = e.max_eig;
    row["normal_weights"] = e.normal_weights;
    row["reduce_weights"] = e.reduce_weights;
    trajectory.append(row);
  }
  py::dict out;
  out["trajectory"] = trajectory;
  out["best_epoch"] = r.best_epoch;
  out["best_val_acc"] = r.best_val_acc;
  out["final_alpha"] = r.final_arch.flatten();
  out["best"] = genotype_dict(derive_result_genotype(cfg, r, DeriveFrom::Best));
  out["final"] = genotype_dict(derive_result_genotype(cfg, r, DeriveFrom::Final));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Differentiable architecture search with a decaying auxiliary skip connection";
  m.attr("__version__") = kToolVersion;

  m.def(
      "beta_at",
      [](const std::string& kind, double beta0, int total_epochs, int epoch, int step_epoch, int hold_until) {
        BetaSchedule s;
        s.kind = decay_kind_from_name(kind);
        s.beta0 = beta0;
        s.total_epochs = total_epochs;
        s.step_epoch = step_epoch;
        s.hold_until = hold_until;
        return beta_at(s, epoch);
      },
      py::arg("kind"), py::arg("beta0"), py::arg("total_epochs"), py::arg("epoch"), py::arg("step_epoch") = 45,
      py::arg("hold_until") = 100, "Auxiliary coefficient at a 0-based epoch.");

  m.def(
      "lambda_proxy",
      [](const std::map<std::pair<int, int>, double>& conv, const std::map<std::pair<int, int>, double>& skip, double beta,
         int h) { return lambda_proxy(to_edge_weights(conv), to_edge_weights(skip), beta, h); },
      py::arg("conv"), py::arg("skip"), py::arg("beta"), py::arg("h"),
      "Convergence-ratio proxy; weights are dicts keyed by (from, to).");

  m.def(
      "gradient_flow_check",
      [](int depth, double beta, const std::string& blocks, int width, std::uint64_t seed) {
        BlockKind kind = BlockKind::Random;
        if (blocks == "identity") kind = BlockKind::Identity;
        else if (blocks == "contractive") kind = BlockKind::Contractive;
        else if (blocks != "random") throw py::value_error("blocks must be random, identity or contractive");
        const auto rep = gradient_flow_check(depth, beta, kind, width, seed);
        py::dict d;
        d["max_relative_error"] = rep.max_relative_error;
        d["grad_norms"] = rep.grad_norms;
        return d;
      },
      py::arg("depth"), py::arg("beta"), py::arg("blocks") = "random", py::arg("width") = 6, py::arg("seed") = 0);

  m.def(
      "resnet_beta_demo",
      [](double init_beta, int depth, int epochs, double lr, double beta_lr, std::uint64_t seed) {
        ResBetaConfig c;
        c.init_beta = init_beta;
        c.depth = depth;
        c.epochs = epochs;
        c.lr = lr;
        c.beta_lr = beta_lr;
        c.seed = seed;
        py::gil_scoped_release release;
        return resnet_beta_demo(c).betas;
      },
      py::arg("init_beta") = 0.0, py::arg("depth") = ResBetaConfig{}.depth, py::arg("epochs") = ResBetaConfig{}.epochs,
      py::arg("lr") = ResBetaConfig{}.lr, py::arg("beta_lr") = -1.0, py::arg("seed") = 0,
      "Learned beta after every epoch.");

  m.def(
      "parse_genotype",
      [](const std::string& text) { return genotype_dict(parse_genotype(text)); }, py::arg("text"));

  m.def(
      "dump_config",
      [](const std::string& text, const std::vector<std::string>& overrides) { return dump_config(make_config(text, overrides)); },
      py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
      "Effective configuration for a config text plus key=value overrides.");

  m.def("config_keys", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : config_keys()) out.emplace_back(k.name, k.doc);
    return out;
  });

  m.def("search", &search_from_text, py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{},
        "Runs the bi-level search and returns the trajectory and derived genotypes.");

  m.def(
      "bench_genotypes",
      [](const std::string& text, const std::vector<std::string>& overrides) {
        std::vector<std::string> keys;
        for (const auto& g : enumerate_space(make_config(text, overrides).bench_spec())) keys.push_back(genotype_key(g));
        return keys;
      },
      py::arg("text") = "", py::arg("overrides") = std::vector<std::string>{});

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<GenotypeParseError>(m, "GenotypeParseError", PyExc_ValueError);
  py::register_exception<SearchDivergence>(m, "SearchDivergence", PyExc_RuntimeError);
}
