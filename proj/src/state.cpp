#include "auxskip/state.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace auxskip {

using nlohmann::json;

std::string config_hash(const RunConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(dump_config(config))));
  return buf;
}

Dataset config_dataset(const RunConfig& config) { return make_concentric(config.data, config.seed); }

std::pair<Dataset, Dataset> config_splits(const RunConfig& config) {
  return split_dataset(config_dataset(config), config.split_ratio, config.seed);
}

Genotype derive_result_genotype(const RunConfig& config, const SearchResult& result, DeriveFrom from) {
  const ArchParams& arch = from == DeriveFrom::Best ? result.best_arch : result.final_arch;
  return discretize(arch, config.space, config.discretization, config.k);
}

namespace {

// JSON has no NaN; untracked eigenvalues are stored as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

ArchParams arch_from(const json& j, const SearchSpaceSpec& space) {
  const auto flat = j.get<std::vector<double>>();
  const auto base = ArchParams::constant(space);
  if (flat.size() != base.size()) {
    throw std::runtime_error("state: architecture has " + std::to_string(flat.size()) + " values, the space needs " +
                             std::to_string(base.size()));
  }
  return base.with_flat(flat);
}

}  // namespace

void save_state(std::ostream& os, const SearchState& state) {
  const auto& r = state.result;
  json j;
  j["version"] = kToolVersion;
  j["config_hash"] = config_hash(state.config);
  j["seed"] = state.config.seed;
  j["config"] = dump_config(state.config);
  j["best_epoch"] = r.best_epoch;
  j["best_val_acc"] = r.best_val_acc;
  j["final_beta"] = r.final_beta;
  j["final_arch"] = r.final_arch.flatten();
  j["best_arch"] = r.best_arch.flatten();
  json traj = json::array();
  for (const auto& e : r.trajectory) {
    traj.push_back({{"epoch", e.epoch},
                    {"beta", e.beta},
                    {"train_loss", number_or_null(e.train_loss)},
                    {"val_loss", number_or_null(e.val_loss)},
                    {"val_acc", e.val_acc},
                    {"max_eig", number_or_null(e.max_eig)},
                    {"eig_residual", number_or_null(e.eig_residual)},
                    {"normal_weights", e.normal_weights},
                    {"reduce_weights", e.reduce_weights}});
  }
  j["trajectory"] = std::move(traj);
  json weights = json::array();
  const auto& names = r.network.weight_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& t = r.network.weights()[i];
    weights.push_back({{"name", names[i]},
                       {"shape", t.shape()},
                       {"data", std::vector<double>(t.data().begin(), t.data().end())}});
  }
  j["weights"] = std::move(weights);
  os << j.dump(1) << '\n';
}

SearchState load_state(std::istream& is) {
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("state: invalid JSON: ") + e.what());
  }
  try {
    SearchState s;
    s.config = parse_config(j.at("config").get<std::string>());
    if (j.at("config_hash").get<std::string>() != config_hash(s.config)) {
      throw std::runtime_error("state: config_hash does not match the stored configuration");
    }
    auto& r = s.result;
    const auto& space = s.config.space;
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_acc = j.at("best_val_acc").get<double>();
    r.final_beta = j.at("final_beta").get<double>();
    r.final_arch = arch_from(j.at("final_arch"), space);
    r.best_arch = arch_from(j.at("best_arch"), space);
    for (const auto& e : j.at("trajectory")) {
      EpochRecord rec;
      rec.epoch = e.at("epoch").get<int>();
      rec.beta = e.at("beta").get<double>();
      rec.train_loss = number_from(e.at("train_loss"));
      rec.val_loss = number_from(e.at("val_loss"));
      rec.val_acc = e.at("val_acc").get<double>();
      rec.max_eig = number_from(e.at("max_eig"));
      rec.eig_residual = number_from(e.at("eig_residual"));
      rec.normal_weights = e.at("normal_weights").get<std::vector<double>>();
      rec.reduce_weights = e.at("reduce_weights").get<std::vector<double>>();
      r.trajectory.push_back(std::move(rec));
    }

    const NetworkShape shape{space, 1, s.config.data.num_classes(), s.config.aux};
    Rng scratch(s.config.seed, "init");
    r.network = Network::supernet(shape, scratch);
    const auto& stored = j.at("weights");
    auto& weights = r.network.weights();
    if (stored.size() != weights.size()) {
      throw std::runtime_error("state: " + std::to_string(stored.size()) + " weight tensors stored, the supernet has " +
                               std::to_string(weights.size()));
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const auto& w = stored[i];
      const auto name = w.at("name").get<std::string>();
      if (name != r.network.weight_names()[i]) {
        throw std::runtime_error("state: weight " + std::to_string(i) + " is '" + name + "', expected '" +
                                 r.network.weight_names()[i] + "'");
      }
      if (w.at("shape").get<ad::Shape>() != weights[i].shape()) {
        throw std::runtime_error("state: shape mismatch for weight '" + name + "'");
      }
      const auto data = w.at("data").get<std::vector<double>>();
      if (data.size() != weights[i].numel()) throw std::runtime_error("state: size mismatch for weight '" + name + "'");
      std::copy(data.begin(), data.end(), weights[i].mutable_data().begin());
    }
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("state: ") + e.what());
  } catch (const ConfigError& e) {
    throw std::runtime_error(std::string("state: stored configuration is invalid: ") + e.what());
  }
}

}  // namespace auxskip
