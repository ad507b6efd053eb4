#pragma once

// Saved search state: the effective configuration plus everything a search
// produced, persisted as JSON so diagnostics can be run after the fact.

#include <iosfwd>
#include <string>

#include "auxskip/config.hpp"
#include "auxskip/search.hpp"

namespace auxskip {

struct SearchState {
  RunConfig config;
  SearchResult result;
};

// 16 hex digits of FNV-1a over dump_config(config).
std::string config_hash(const RunConfig& config);

void save_state(std::ostream& os, const SearchState& state);
// Rebuilds the supernet from the stored configuration and restores its
// weights; throws std::runtime_error on malformed or inconsistent input.
SearchState load_state(std::istream& is);

// The dataset a configuration searches on, and its (train, val) split.
Dataset config_dataset(const RunConfig& config);
std::pair<Dataset, Dataset> config_splits(const RunConfig& config);

// Genotype selected from a finished search by the configured rule.
Genotype derive_result_genotype(const RunConfig& config, const SearchResult& result, DeriveFrom from);

}  // namespace auxskip
