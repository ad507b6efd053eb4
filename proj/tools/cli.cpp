#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "auxskip/config.hpp"
#include "auxskip/csv.hpp"
#include "auxskip/diagnostics.hpp"
#include "auxskip/genotype.hpp"
#include "auxskip/minibench.hpp"
#include "auxskip/search.hpp"
#include "auxskip/state.hpp"

namespace fs = std::filesystem;

namespace auxskip::cli {
namespace {

constexpr int kUsage = 1;
constexpr int kInput = 2;
constexpr int kDiverged = 3;

// Failure carrying its exit code.
struct Failure : std::runtime_error {
  Failure(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("-c,--config", c.config_path, "configuration file (key = value)");
  cmd->add_option("--set", c.overrides, "override one key, e.g. --set decay.beta0=0")->take_all();
  if (with_out) cmd->add_option("-o,--out", c.out_dir, "output directory (default: $AUXSKIP_OUT_DIR, else ./out)");
}

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure(kInput, std::string("cannot read ") + what + " '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig load_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) {
    const auto text = read_file(c.config_path, "config file");
    try {
      cfg = parse_config(text);
    } catch (const ConfigError& e) {
      throw Failure(kUsage, c.config_path + ":" + std::to_string(e.line()) + ":" + std::to_string(e.column()) + ": " +
                                std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
    }
  }
  for (const auto& o : c.overrides) {
    try {
      apply_override(cfg, o);
    } catch (const std::exception& e) {
      throw Failure(kUsage, e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw Failure(kUsage, std::string("invalid configuration: ") + e.what());
  }
  return cfg;
}

fs::path out_dir(const Common& c) {
  std::string dir = c.out_dir;
  if (dir.empty()) {
    const char* env = std::getenv("AUXSKIP_OUT_DIR");
    dir = env && *env ? env : "out";
  }
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Failure(kInput, "cannot write '" + path.string() + "'");
  os << content;
  if (!os) throw Failure(kInput, "write failed for '" + path.string() + "'");
}

std::string header(const std::string& hash, std::uint64_t seed) {
  return std::string("# auxskip ") + kToolVersion + " spec_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

SearchState load_state_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure(kInput, "cannot read search state '" + path + "' (run 'auxskip search' first)");
  try {
    return load_state(in);
  } catch (const std::exception& e) {
    throw Failure(kInput, path + ": " + e.what());
  }
}

std::string state_default(const Common& c, const std::string& given) {
  return given.empty() ? (out_dir(c) / "state.json").string() : given;
}

// ---- search -----------------------------------------------------------------

int cmd_search(const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const auto dir = out_dir(c);
  const std::string hash = config_hash(cfg);
  SearchResult result;
  try {
    result = run_search(cfg.effective_search(), config_dataset(cfg));
  } catch (const SearchDivergence& e) {
    throw Failure(kDiverged, "search diverged at epoch " + std::to_string(e.epoch()) + ", step " +
                                 std::to_string(e.step()) + ": " + e.what());
  }
  const auto head = header(hash, cfg.seed);

  std::ostringstream traj;
  traj << head;
  write_trajectory_csv(traj, cfg.space, result.trajectory);
  write_file(dir / "trajectory.csv", traj.str());

  const Genotype g_best = derive_result_genotype(cfg, result, DeriveFrom::Best);
  const Genotype g_final = derive_result_genotype(cfg, result, DeriveFrom::Final);
  write_file(dir / "genotype_best.txt",
             head + "# best validation epoch " + std::to_string(result.best_epoch) + "\n" + serialize_genotype(g_best));
  write_file(dir / "genotype_final.txt", head + "# final epoch " + std::to_string(cfg.search.epochs) + "\n" +
                                             serialize_genotype(g_final));
  write_file(dir / "config.txt", head + dump_config(cfg));

  std::ostringstream st;
  save_state(st, SearchState{cfg, result});
  write_file(dir / "state.json", st.str());

  const Genotype& chosen = cfg.derive_from == DeriveFrom::Best ? g_best : g_final;
  out << "best epoch " << result.best_epoch << " (val acc " << format_double(result.best_val_acc) << ")\n";
  out << "genotype (" << derive_from_name(cfg.derive_from) << "): " << genotype_key(chosen) << "\n";
  out << "#P " << count_parametric(chosen) << ", #skip " << count_skips(chosen) << "\n";
  out << "artifacts written to " << dir.string() << "\n";
  return 0;
}

// ---- diag -------------------------------------------------------------------

struct DiagArgs {
  std::string state;
  std::optional<double> radius;
  std::optional<int> resolution;
  std::optional<double> beta, conv, skip;
  std::optional<int> h;
  std::optional<double> init;
  std::optional<int> seeds;
  std::optional<int> depth;
  std::string blocks = "random";
};

int cmd_hessian(const Common& c, const DiagArgs& a, std::ostream& out) {
  const auto state = load_state_file(state_default(c, a.state));
  const auto& cfg = state.config;
  const auto& r = state.result;
  const auto dir = out_dir(c);
  const auto [train, val] = config_splits(cfg);
  const std::size_t n = std::min(val.size(), static_cast<std::size_t>(cfg.diag.hessian_samples));

  std::ostringstream os;
  os << header(config_hash(cfg), cfg.seed);
  os << "# hessian batch: first " << n << " validation samples; power iterations <= " << cfg.diag.hessian_iters
     << ", tol " << format_double(cfg.diag.hessian_tol) << "\n";
  CsvWriter csv(os);
  csv.row({"epoch", "max_eig", "residual"});
  const bool tracked = !r.trajectory.empty() && std::isfinite(r.trajectory.front().max_eig);
  if (tracked) {
    for (const auto& e : r.trajectory) csv.row({std::to_string(e.epoch), format_double(e.max_eig), format_double(e.eig_residual)});
  } else {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto est = hessian_max_eig(r.network, r.final_arch, r.final_beta, val.subset(idx), cfg.diag.hessian_iters,
                                     cfg.diag.hessian_tol, cfg.seed);
    csv.row({std::to_string(r.trajectory.empty() ? 0 : r.trajectory.back().epoch), format_double(est.value),
             format_double(est.residual)});
    out << "max eigenvalue " << format_double(est.value) << " (residual " << format_double(est.residual)
        << (est.converged ? ", converged" : ", not converged") << ")\n";
  }
  write_file(dir / "hessian.csv", os.str());
  out << "wrote " << (dir / "hessian.csv").string() << "\n";
  return 0;
}

int cmd_landscape(const Common& c, const DiagArgs& a, std::ostream& out) {
  const auto state = load_state_file(state_default(c, a.state));
  const auto& cfg = state.config;
  const auto& r = state.result;
  const auto dir = out_dir(c);
  const auto [train, val] = config_splits(cfg);
  const double radius = a.radius.value_or(cfg.diag.landscape_radius);
  const int resolution = a.resolution.value_or(cfg.diag.landscape_resolution);
  const Network& net = r.network;
  const double beta = r.final_beta;
  const Dataset& v = val;
  const auto grid = landscape_probe([&](const ArchParams& arch) { return evaluate(net, &arch, beta, v).accuracy; },
                                    r.final_arch, radius, resolution, cfg.diag.landscape_seed);

  std::ostringstream os;
  os << header(config_hash(cfg), cfg.seed);
  os << "# directions seeds " << grid.direction_seeds.first << "," << grid.direction_seeds.second << "; centre accuracy "
     << format_double(grid.center) << "; rows follow direction 1, columns direction 2\n";
  CsvWriter csv(os);
  std::vector<std::string> head{"offset"};
  for (double o : grid.offsets) head.push_back(format_double(o));
  csv.row(head);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    std::vector<std::string> row{format_double(grid.offsets[i])};
    for (double x : grid.values[i]) row.push_back(format_double(x));
    csv.row(row);
  }
  write_file(dir / "landscape.csv", os.str());
  out << "centre accuracy " << format_double(grid.center) << "; wrote " << (dir / "landscape.csv").string() << "\n";
  return 0;
}

EdgeWeights uniform_weights(int h, double value) {
  EdgeWeights w;
  for (int j = 1; j < h; ++j)
    for (int i = 0; i < j; ++i) w[{i, j}] = value;
  return w;
}

int cmd_lambda(const Common& c, const DiagArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const auto dir = out_dir(c);
  const int h = a.h.value_or(cfg.diag.lambda_h);
  const double beta = a.beta.value_or(cfg.diag.lambda_beta);
  const double conv = a.conv.value_or(cfg.diag.lambda_conv);
  const double skip = a.skip.value_or(cfg.diag.lambda_skip);
  if (h < 2) throw Failure(kUsage, "lambda: h must be >= 2");
  const double value = lambda_proxy(uniform_weights(h, conv), uniform_weights(h, skip), beta, h);
  std::ostringstream os;
  os << header(config_hash(cfg), cfg.seed);
  CsvWriter csv(os);
  csv.row({"h", "beta", "conv", "skip", "lambda"});
  csv.row({std::to_string(h), format_double(beta), format_double(conv), format_double(skip), format_double(value)});
  write_file(dir / "lambda.csv", os.str());
  out << "lambda " << format_double(value) << "\n";
  return 0;
}

int cmd_resnet_beta(const Common& c, const DiagArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const auto dir = out_dir(c);
  ResBetaConfig rc = cfg.diag.resnet;
  if (a.init) rc.init_beta = *a.init;
  const int n_seeds = a.seeds.value_or(1);
  if (n_seeds < 1) throw Failure(kUsage, "resnet-beta: --seeds must be >= 1");
  std::ostringstream os;
  os << header(config_hash(cfg), cfg.seed);
  CsvWriter csv(os);
  csv.row({"seed", "epoch", "beta", "loss"});
  for (int s = 0; s < n_seeds; ++s) {
    rc.seed = cfg.seed + static_cast<std::uint64_t>(s);
    const auto trace = resnet_beta_demo(rc);
    for (std::size_t e = 0; e < trace.betas.size(); ++e) {
      csv.row({std::to_string(rc.seed), std::to_string(e + 1), format_double(trace.betas[e]), format_double(trace.losses[e])});
    }
    out << "seed " << rc.seed << ": beta " << format_double(rc.init_beta) << " -> "
        << format_double(trace.betas.empty() ? rc.init_beta : trace.betas.back()) << "\n";
  }
  write_file(dir / "resnet_beta.csv", os.str());
  return 0;
}

int cmd_gradflow(const Common& c, const DiagArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const auto dir = out_dir(c);
  const int depth = a.depth.value_or(cfg.diag.gradflow_depth);
  const double beta = a.beta.value_or(cfg.diag.gradflow_beta);
  BlockKind kind;
  if (a.blocks == "random") kind = BlockKind::Random;
  else if (a.blocks == "identity") kind = BlockKind::Identity;
  else if (a.blocks == "contractive") kind = BlockKind::Contractive;
  else throw Failure(kUsage, "gradflow: --blocks must be random, identity or contractive");
  const auto rep = gradient_flow_check(depth, beta, kind, 6, cfg.seed);
  std::ostringstream os;
  os << header(config_hash(cfg), cfg.seed);
  os << "# blocks " << a.blocks << ", max relative error vs closed form " << format_double(rep.max_relative_error) << "\n";
  CsvWriter csv(os);
  csv.row({"layer", "grad_norm"});
  for (std::size_t i = 0; i < rep.grad_norms.size(); ++i) csv.row({std::to_string(i), format_double(rep.grad_norms[i])});
  write_file(dir / "gradflow.csv", os.str());
  out << "max relative error " << format_double(rep.max_relative_error) << "\n";
  return 0;
}

// ---- bench ------------------------------------------------------------------

BenchTable load_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure(kInput, "cannot read bench table '" + path + "' (build it with 'auxskip bench build')");
  try {
    return read_table(in);
  } catch (const std::exception& e) {
    throw Failure(kInput, path + ": " + e.what());
  }
}

int cmd_bench_build(const Common& c, const std::string& table_path, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(c);
  const auto spec = cfg.bench_spec();
  const auto path = table_path.empty() ? out_dir(c) / "table.tsv" : fs::path(table_path);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  BenchTable table;
  try {
    table = build_table(spec, cfg.bench.threads, [&](std::size_t done, std::size_t total, const BenchEntry& e) {
      err << "[" << done << "/" << total << "] " << e.key << " acc " << format_double(e.mean) << "\n";
    });
  } catch (const std::invalid_argument& e) {
    throw Failure(kUsage, std::string("bench build: ") + e.what());
  }
  std::ostringstream os;
  write_table(os, table);
  write_file(path, os.str());
  out << table.size() << " genotypes, spec hash " << table.spec_hash << "; wrote " << path.string() << "\n";
  return 0;
}

std::string file_label(const std::string& label) {
  std::string s;
  for (char ch : label) s += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' ? ch : '_';
  return s;
}

int cmd_bench_eval(const Common& c, const std::string& table_path, std::string label, std::optional<int> seeds,
                   std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(c);
  const auto dir = out_dir(c);
  const auto table = load_table(table_path.empty() ? (dir / "table.tsv").string() : table_path);
  const auto spec = cfg.bench_spec();
  if (table.spec_hash != spec.hash()) {
    throw Failure(kInput, "bench table spec hash " + table.spec_hash + " does not match the configuration (" +
                              spec.hash() + "); rebuild the table with this configuration");
  }
  if (label.empty()) label = "beta0=" + format_double(cfg.decay.beta0);
  const int n = seeds.value_or(cfg.bench.eval_seeds);
  MethodReport report;
  try {
    report = evaluate_search(cfg.effective_search(), spec, table, n, cfg.derive_from, cfg.seed, label,
                             [&](const SeedReport& s) {
                               err << "seed " << s.seed << ": percentile " << format_double(s.percentile) << ", #P "
                                   << s.num_parametric << ", " << genotype_key(s.genotype) << "\n";
                             });
  } catch (const SearchDivergence& e) {
    throw Failure(kDiverged, "search diverged at epoch " + std::to_string(e.epoch()) + ", step " +
                                 std::to_string(e.step()) + ": " + e.what());
  }
  std::ostringstream os;
  os << header(table.spec_hash, cfg.seed);
  os << "# config_hash=" << config_hash(cfg) << " derive_from=" << derive_from_name(cfg.derive_from) << "\n";
  write_method_report(os, report);
  const auto path = dir / ("eval_" + file_label(label) + ".tsv");
  write_file(path, os.str());
  out << label << ": percentile " << format_double(report.percentile.mean) << " +- " << format_double(report.percentile.std)
      << ", #P " << format_double(report.num_parametric.mean) << "; wrote " << path.string() << "\n";
  return 0;
}

std::string pm(const Aggregate& a) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << a.mean << " ± " << a.std;
  return s.str();
}

int cmd_bench_report(const Common& c, std::vector<std::string> inputs, std::ostream& out) {
  const auto dir = out_dir(c);
  if (inputs.empty()) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("eval_", 0) == 0 && entry.path().extension() == ".tsv") inputs.push_back(entry.path().string());
    }
    std::sort(inputs.begin(), inputs.end());
  }
  if (inputs.empty()) throw Failure(kInput, "no evaluation reports in '" + dir.string() + "' (run 'auxskip bench eval')");
  std::vector<MethodReport> reports;
  std::string hash;
  for (const auto& p : inputs) {
    const auto text = read_file(p, "evaluation report");
    const auto at = text.find("spec_hash=");
    if (at != std::string::npos) {
      const auto h = text.substr(at + 10, text.find_first_of(" \n", at + 10) - at - 10);
      if (!hash.empty() && h != hash) throw Failure(kInput, "reports were evaluated against different tables (" + hash + " vs " + h + ")");
      hash = h;
    }
    std::istringstream is(text);
    try {
      reports.push_back(read_method_report(is));
    } catch (const std::exception& e) {
      throw Failure(kInput, p + ": " + e.what());
    }
  }
  std::ostringstream os;
  os << "# auxskip " << kToolVersion << " spec_hash=" << (hash.empty() ? "unknown" : hash) << "\n";
  CsvWriter csv(os);
  csv.row({"method", "runs", "percentile_mean", "percentile_std", "num_parametric_mean", "num_parametric_std",
           "num_skips_mean", "num_skips_std", "accuracy_mean", "accuracy_std"});
  out << std::left << std::setw(16) << "method" << std::setw(6) << "runs" << std::setw(20) << "percentile" << std::setw(20)
      << "#P" << std::setw(20) << "#skip" << "accuracy\n";
  for (const auto& r : reports) {
    csv.row({r.label, std::to_string(r.runs.size()), format_double(r.percentile.mean), format_double(r.percentile.std),
             format_double(r.num_parametric.mean), format_double(r.num_parametric.std), format_double(r.num_skips.mean),
             format_double(r.num_skips.std), format_double(r.accuracy.mean), format_double(r.accuracy.std)});
    out << std::left << std::setw(16) << r.label << std::setw(6) << r.runs.size() << std::setw(21) << pm(r.percentile)
        << std::setw(21) << pm(r.num_parametric) << std::setw(21) << pm(r.num_skips) << pm(r.accuracy) << "\n";
  }
  write_file(dir / "report.csv", os.str());
  return 0;
}

// ---- genotype ---------------------------------------------------------------

int cmd_genotype_derive(const Common& c, const std::string& state_path, const std::string& from, std::ostream& out) {
  const auto state = load_state_file(state_default(c, state_path));
  RunConfig cfg = state.config;
  for (const auto& o : c.overrides) {
    try {
      apply_override(cfg, o);
    } catch (const std::exception& e) {
      throw Failure(kUsage, e.what());
    }
  }
  DeriveFrom d = cfg.derive_from;
  if (!from.empty()) {
    try {
      d = derive_from_from_name(from);
    } catch (const std::exception& e) {
      throw Failure(kUsage, e.what());
    }
  }
  out << serialize_genotype(derive_result_genotype(cfg, state.result, d));
  return 0;
}

int cmd_genotype_show(const std::string& path, std::ostream& out) {
  const auto text = read_file(path, "genotype file");
  Genotype g;
  try {
    g = parse_genotype(text);
  } catch (const GenotypeParseError& e) {
    throw Failure(kUsage, path + ":" + std::to_string(e.line()) + ":" + std::to_string(e.column()) + ": " + e.what());
  }
  for (const char* cell : {"normal", "reduce"}) {
    const auto& edges = std::string_view(cell) == "normal" ? g.normal : g.reduce;
    if (edges.empty()) continue;
    out << cell << " cell\n";
    for (const auto& e : edges) out << "  node " << e.node << " <- " << e.from << " : " << op_name(e.op) << "\n";
  }
  out << "#P " << count_parametric(g) << ", #skip " << count_skips(g) << "\n";
  out << "key " << genotype_key(g) << "\n";
  return 0;
}

int cmd_config_keys(std::ostream& out) {
  const RunConfig defaults;
  for (const auto& k : config_keys()) out << k.name << " = " << get_config_value(defaults, k.name) << "    # " << k.doc << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"auxskip: differentiable architecture search with a decaying auxiliary skip connection", "auxskip"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  DiagArgs diag;
  std::string table_path, label, from, genotype_path;
  std::optional<int> eval_seeds;
  std::vector<std::string> inputs;

  auto* search = app.add_subcommand("search", "run the bi-level search and write its artifacts");
  add_common(search, common);

  auto* diag_cmd = app.add_subcommand("diag", "diagnostics");
  diag_cmd->require_subcommand(1);
  auto* hessian = diag_cmd->add_subcommand("hessian", "dominant Hessian eigenvalue of the validation loss in alpha");
  add_common(hessian, common);
  hessian->add_option("--state", diag.state, "saved search state (default: <out>/state.json)");
  auto* landscape = diag_cmd->add_subcommand("landscape", "validation accuracy on a 2-D grid around alpha");
  add_common(landscape, common);
  landscape->add_option("--state", diag.state, "saved search state (default: <out>/state.json)");
  landscape->add_option("--radius", diag.radius, "grid half-width")->check(CLI::NonNegativeNumber);
  landscape->add_option("--resolution", diag.resolution, "grid side length (odd)");
  auto* lambda = diag_cmd->add_subcommand("lambda", "convergence-ratio proxy for uniform edge weights");
  lambda->set_help_flag("--help", "print this help message and exit");
  add_common(lambda, common);
  lambda->add_option("--beta", diag.beta, "auxiliary coefficient");
  lambda->add_option("--h", diag.h, "number of nodes");
  lambda->add_option("--conv", diag.conv, "conv edge weight");
  lambda->add_option("--skip", diag.skip, "skip edge weight");
  auto* resnet = diag_cmd->add_subcommand("resnet-beta", "train a deep MLP with a learnable global skip coefficient");
  add_common(resnet, common);
  resnet->add_option("--init", diag.init, "initial beta");
  resnet->add_option("--seeds", diag.seeds, "number of seeds (seed, seed+1, ...)");
  auto* gradflow = diag_cmd->add_subcommand("gradflow", "check gradient flow through a linear residual chain");
  add_common(gradflow, common);
  gradflow->add_option("--depth", diag.depth, "chain depth");
  gradflow->add_option("--beta", diag.beta, "residual coefficient");
  gradflow->add_option("--blocks", diag.blocks, "random, identity or contractive");

  auto* bench = app.add_subcommand("bench", "tabular mini-benchmark");
  bench->require_subcommand(1);
  auto* build = bench->add_subcommand("build", "train every genotype of the bench space");
  add_common(build, common);
  build->add_option("--table", table_path, "table file (default: <out>/table.tsv)");
  auto* eval = bench->add_subcommand("eval", "search with several seeds and look the results up");
  add_common(eval, common);
  eval->add_option("--table", table_path, "table file (default: <out>/table.tsv)");
  eval->add_option("--label", label, "method name in the report");
  eval->add_option("--seeds", eval_seeds, "number of search seeds");
  auto* report = bench->add_subcommand("report", "compare evaluated methods");
  add_common(report, common);
  report->add_option("inputs", inputs, "evaluation files (default: <out>/eval_*.tsv)");

  auto* genotype = app.add_subcommand("genotype", "genotype utilities");
  genotype->require_subcommand(1);
  auto* derive = genotype->add_subcommand("derive", "discretize a saved search state");
  add_common(derive, common);
  derive->add_option("--state", diag.state, "saved search state (default: <out>/state.json)");
  derive->add_option("--from", from, "best or final");
  auto* show = genotype->add_subcommand("show", "print a genotype file");
  show->add_option("file", genotype_path, "genotype file")->required();

  auto* config = app.add_subcommand("config", "configuration utilities");
  config->require_subcommand(1);
  auto* keys = config->add_subcommand("keys", "list every key with its default");
  auto* dump = config->add_subcommand("dump", "print the effective configuration");
  add_common(dump, common, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (search->parsed()) return cmd_search(common, out);
    if (hessian->parsed()) return cmd_hessian(common, diag, out);
    if (landscape->parsed()) return cmd_landscape(common, diag, out);
    if (lambda->parsed()) return cmd_lambda(common, diag, out);
    if (resnet->parsed()) return cmd_resnet_beta(common, diag, out);
    if (gradflow->parsed()) return cmd_gradflow(common, diag, out);
    if (build->parsed()) return cmd_bench_build(common, table_path, out, err);
    if (eval->parsed()) return cmd_bench_eval(common, table_path, label, eval_seeds, out, err);
    if (report->parsed()) return cmd_bench_report(common, inputs, out);
    if (derive->parsed()) return cmd_genotype_derive(common, diag.state, from, out);
    if (show->parsed()) return cmd_genotype_show(genotype_path, out);
    if (keys->parsed()) return cmd_config_keys(out);
    if (dump->parsed()) {
      out << dump_config(load_config(common));
      return 0;
    }
  } catch (const Failure& e) {
    err << "error: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace auxskip::cli
