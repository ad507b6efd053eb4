#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "auxskip/dataset.hpp"
#include "auxskip/genotype.hpp"
#include "auxskip/search.hpp"
#include "auxskip/space.hpp"

namespace auxskip {

inline constexpr const char* kToolVersion = "0.1.0";

struct TrainBudget {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.05;
  double lr_min = 0.0;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  double grad_clip = 5.0;
};

// One input node, two intermediate nodes, ops {none, skip, conv3x3}, four
// stacked normal cells sharing one genotype, sum aggregation.
SearchSpaceSpec default_bench_space();

struct BenchSpec {
  SearchSpaceSpec space = default_bench_space();
  Discretization discretization = Discretization::Dense;
  int k = 1;  // TopK only
  ConcentricSpec data;
  std::uint64_t data_seed = 0;
  double split_ratio = 0.5;
  TrainBudget budget;
  std::vector<std::uint64_t> seeds{0};
  std::size_t max_genotypes = 1000;

  void validate() const;
  // Everything that determines the table, as text.
  std::string canonical() const;
  // 16 hex digits of FNV-1a over canonical().
  std::string hash() const;
};

// Complete, duplicate-free list in canonical order: edges are digits in
// canonical edge order (first edge most significant), ops follow
// candidate_ops order. TopK enumerates k-subsets of incoming edges per node
// with non-'none' ops.
std::vector<Genotype> enumerate_space(const BenchSpec& spec);

struct TrainOutcome {
  double accuracy = 0.0;
  bool diverged = false;
};

// Trains the standalone network for `genotype` on `train` and returns its
// accuracy on `val`; a non-finite loss yields accuracy 0 with the flag set.
TrainOutcome train_genotype(const BenchSpec& spec, const Genotype& genotype, std::uint64_t seed, const Dataset& train,
                            const Dataset& val);

struct BenchEntry {
  std::string key;  // genotype_key()
  Genotype genotype;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
  int rank = 0;      // 1 = best
  bool diverged = false;
};

struct BenchTable {
  std::string spec_hash;
  std::string spec_text;
  std::vector<std::uint64_t> seeds;
  std::string version = kToolVersion;
  std::vector<BenchEntry> entries;  // canonical enumeration order

  const BenchEntry& find(const Genotype& g) const;
  std::size_t size() const { return entries.size(); }
};

using BuildProgress = std::function<void(std::size_t done, std::size_t total, const BenchEntry& entry)>;

// Ranks order by mean accuracy (descending), ties by enumeration order.
BenchTable build_table(const BenchSpec& spec, int threads = 1, const BuildProgress& progress = {});
void assign_ranks(BenchTable& table);

struct LookupResult {
  double accuracy = 0.0;
  int rank = 0;
};

// Unknown genotypes raise an error naming the nearest table key.
LookupResult lookup(const BenchTable& table, const Genotype& g);
// 1 - (rank - 1) / (N - 1); 1 for single-entry tables.
double percentile(const BenchTable& table, const Genotype& g);

void write_table(std::ostream& os, const BenchTable& table);
BenchTable read_table(std::istream& is);

// ---- Search evaluation against the table ------------------------------------

enum class DeriveFrom { Best, Final };

std::string_view derive_from_name(DeriveFrom d);
DeriveFrom derive_from_from_name(std::string_view name);

struct SeedReport {
  std::uint64_t seed = 0;
  Genotype genotype;
  double accuracy = 0.0;
  int rank = 0;
  double percentile = 0.0;
  int num_parametric = 0;
  int num_skips = 0;
  int best_epoch = 0;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

Aggregate aggregate(const std::vector<double>& values);

struct MethodReport {
  std::string label;
  std::vector<SeedReport> runs;
  Aggregate percentile, num_parametric, num_skips, accuracy;
};

// Runs the search once per seed (base_seed, base_seed + 1, ...) on the
// table's dataset and split, discretizes with the table's rule and looks the
// result up.
MethodReport evaluate_search(const SearchConfig& method, const BenchSpec& bench, const BenchTable& table, int n_seeds,
                             DeriveFrom derive_from, std::uint64_t base_seed, const std::string& label,
                             const std::function<void(const SeedReport&)>& progress = {});

void write_method_report(std::ostream& os, const MethodReport& report);
MethodReport read_method_report(std::istream& is);

}  // namespace auxskip
