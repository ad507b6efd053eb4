#pragma once

// Run configuration in a plain key = value format.
//
//   # comment
//   seed = 7
//   [search]            # later keys are read as search.<key>
//   epochs = 20
//   decay.kind = cosine # dotted keys may also be written in full
//
// Every key has a default (see dump_config of a default RunConfig); unknown
// keys, malformed values and duplicate keys are errors reported with line and
// column.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "auxskip/dataset.hpp"
#include "auxskip/diagnostics.hpp"
#include "auxskip/genotype.hpp"
#include "auxskip/minibench.hpp"
#include "auxskip/network.hpp"
#include "auxskip/schedule.hpp"
#include "auxskip/search.hpp"
#include "auxskip/space.hpp"

namespace auxskip {

struct DiagConfig {
  int hessian_iters = 50;
  double hessian_tol = 1e-4;
  int hessian_samples = 512;
  double landscape_radius = 1.0;
  int landscape_resolution = 11;
  std::uint64_t landscape_seed = 0;
  int lambda_h = 4;
  double lambda_beta = 1.0;
  double lambda_conv = 0.5;
  double lambda_skip = 0.15;
  ResBetaConfig resnet;
  int gradflow_depth = 8;
  double gradflow_beta = 1.0;
};

struct BenchOptions {
  TrainBudget budget;
  std::vector<std::uint64_t> seeds{0};
  Discretization discretization = Discretization::Dense;
  int eval_seeds = 5;
  int threads = 1;
  std::size_t max_genotypes = 1000;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SearchSpaceSpec space;
  AuxBranch aux = AuxBranch::IdentitySkip;
  ConcentricSpec data;
  double split_ratio = 0.5;
  BetaSchedule decay;
  SearchConfig search;  // optimizer settings; space/aux/schedule/seeds are filled from the fields above
  Discretization discretization = Discretization::TopK;
  int k = 2;
  DeriveFrom derive_from = DeriveFrom::Best;
  DiagConfig diag;
  BenchOptions bench;

  // Search settings with the shared fields applied.
  SearchConfig effective_search() const;
  BenchSpec bench_spec() const;
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, std::size_t column, const std::string& message);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

struct ConfigKey {
  std::string name;
  std::string doc;
};

// All recognised keys in dump order.
std::vector<ConfigKey> config_keys();

RunConfig parse_config(std::string_view text);
// Applies one "key=value" override (command-line --set).
void apply_override(RunConfig& config, std::string_view assignment);
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);
// Every key with its effective value, one "key = value" per line.
std::string dump_config(const RunConfig& config);

}  // namespace auxskip
