#include "auxskip/minibench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <istream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "auxskip/csv.hpp"
#include "auxskip/optim.hpp"

namespace auxskip {

SearchSpaceSpec default_bench_space() {
  SearchSpaceSpec s;
  s.num_nodes = 2;
  s.num_inputs = 1;
  s.candidate_ops = {OpKind::None, OpKind::Skip, OpKind::Conv3x3};
  s.num_cells = 4;
  s.channels = 8;
  s.has_reduction = false;
  s.aggregation = Aggregation::Sum;
  s.aux_on_input_edges = true;
  return s;
}

void BenchSpec::validate() const {
  space.validate();
  data.validate();
  auto fail = [](const std::string& m) { throw std::invalid_argument("bench spec: " + m); };
  if (discretization == Discretization::TopK && (k < 1 || k > space.num_inputs)) {
    fail("k must lie in [1, num_inputs] so every node has k selectable edges");
  }
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
  if (budget.epochs < 1 || budget.batch_size < 1 || !(budget.lr > 0.0) || budget.lr_min < 0.0) fail("invalid training budget");
  if (seeds.empty()) fail("at least one training seed is required");
  if (max_genotypes < 1) fail("max_genotypes must be >= 1");
}

std::string BenchSpec::canonical() const {
  std::ostringstream os;
  os << space.canonical() << ";discretization=" << discretization_name(discretization);
  if (discretization == Discretization::TopK) os << ";k=" << k;
  os << ";data.samples=" << data.num_samples << ";data.image_size=" << data.image_size
     << ";data.noise=" << format_double(data.noise) << ";data.center_jitter=" << format_double(data.center_jitter)
     << ";data.freqs=";
  for (std::size_t i = 0; i < data.freqs.size(); ++i) os << (i ? "," : "") << format_double(data.freqs[i]);
  os << ";data.seed=" << data_seed << ";split_ratio=" << format_double(split_ratio) << ";train.epochs=" << budget.epochs
     << ";train.batch=" << budget.batch_size << ";train.lr=" << format_double(budget.lr)
     << ";train.lr_min=" << format_double(budget.lr_min) << ";train.momentum=" << format_double(budget.momentum)
     << ";train.weight_decay=" << format_double(budget.weight_decay)
     << ";train.grad_clip=" << format_double(budget.grad_clip) << ";seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  return os.str();
}

std::string BenchSpec::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

namespace {

std::vector<std::vector<GenotypeEdge>> enumerate_cells_dense(const SearchSpaceSpec& space, std::size_t limit) {
  const auto edges = space.edges();
  const auto nops = space.num_ops();
  double count = std::pow(static_cast<double>(nops), static_cast<double>(edges.size()));
  if (count > static_cast<double>(limit)) {
    throw std::invalid_argument("enumerate_space: " + format_double(count) + " genotypes per cell exceed the limit of " +
                                std::to_string(limit));
  }
  std::vector<std::vector<GenotypeEdge>> out;
  std::vector<std::size_t> digits(edges.size(), 0);
  while (true) {
    std::vector<GenotypeEdge> cell;
    for (std::size_t e = 0; e < edges.size(); ++e) cell.push_back({edges[e].to, edges[e].from, space.candidate_ops[digits[e]]});
    out.push_back(std::move(cell));
    std::size_t pos = edges.size();
    while (pos > 0 && ++digits[pos - 1] == nops) digits[--pos] = 0;
    if (pos == 0) break;
  }
  return out;
}

std::vector<std::vector<GenotypeEdge>> enumerate_cells_topk(const SearchSpaceSpec& space, int k, std::size_t limit) {
  std::vector<OpKind> ops;
  for (OpKind op : space.candidate_ops)
    if (op != OpKind::None) ops.push_back(op);
  if (ops.empty()) throw std::invalid_argument("enumerate_space: top-k discretization needs an op other than 'none'");
  // Per node: every k-subset of sources (lexicographic) times every op tuple.
  std::vector<std::vector<std::vector<GenotypeEdge>>> per_node;
  for (int j = space.num_inputs; j < space.num_inputs + space.num_nodes; ++j) {
    std::vector<std::vector<GenotypeEdge>> choices;
    std::vector<int> subset(static_cast<std::size_t>(k));
    std::iota(subset.begin(), subset.end(), 0);
    while (true) {
      std::vector<std::size_t> digits(subset.size(), 0);
      while (true) {
        std::vector<GenotypeEdge> sel;
        for (std::size_t m = 0; m < subset.size(); ++m) sel.push_back({j, subset[m], ops[digits[m]]});
        choices.push_back(std::move(sel));
        std::size_t pos = digits.size();
        while (pos > 0 && ++digits[pos - 1] == ops.size()) digits[--pos] = 0;
        if (pos == 0) break;
      }
      int m = k - 1;
      while (m >= 0 && subset[static_cast<std::size_t>(m)] == j - k + m) --m;
      if (m < 0) break;
      ++subset[static_cast<std::size_t>(m)];
      for (int r = m + 1; r < k; ++r) subset[static_cast<std::size_t>(r)] = subset[static_cast<std::size_t>(r - 1)] + 1;
    }
    per_node.push_back(std::move(choices));
  }
  double count = 1.0;
  for (const auto& c : per_node) count *= static_cast<double>(c.size());
  if (count > static_cast<double>(limit)) {
    throw std::invalid_argument("enumerate_space: " + format_double(count) + " genotypes per cell exceed the limit of " +
                                std::to_string(limit));
  }
  std::vector<std::vector<GenotypeEdge>> out{{}};
  for (const auto& choices : per_node) {
    std::vector<std::vector<GenotypeEdge>> next;
    for (const auto& prefix : out)
      for (const auto& c : choices) {
        auto cell = prefix;
        cell.insert(cell.end(), c.begin(), c.end());
        next.push_back(std::move(cell));
      }
    out = std::move(next);
  }
  return out;
}

double cosine_lr(const TrainBudget& b, int e) {
  return b.lr_min + (b.lr - b.lr_min) * (1.0 + std::cos(std::numbers::pi * e / b.epochs)) / 2.0;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::vector<Genotype> enumerate_space(const BenchSpec& spec) {
  spec.validate();
  const auto cells = spec.discretization == Discretization::Dense
                         ? enumerate_cells_dense(spec.space, spec.max_genotypes)
                         : enumerate_cells_topk(spec.space, spec.k, spec.max_genotypes);
  const std::size_t reduce_count = spec.space.has_reduction ? cells.size() : 1;
  if (static_cast<double>(cells.size()) * static_cast<double>(reduce_count) > static_cast<double>(spec.max_genotypes)) {
    throw std::invalid_argument("enumerate_space: " + std::to_string(cells.size()) + " x " + std::to_string(reduce_count) +
                                " genotypes exceed the limit of " + std::to_string(spec.max_genotypes));
  }
  std::vector<Genotype> out;
  for (const auto& n : cells) {
    if (!spec.space.has_reduction) {
      out.push_back({n, {}});
      continue;
    }
    for (const auto& r : cells) out.push_back({n, r});
  }
  return out;
}

TrainOutcome train_genotype(const BenchSpec& spec, const Genotype& genotype, std::uint64_t seed, const Dataset& train,
                            const Dataset& val) {
  const auto& b = spec.budget;
  Rng init(seed, "init");
  Network net = Network::discrete({spec.space, static_cast<int>(train.images.dim(1)), train.num_classes, AuxBranch::Off},
                                  genotype, init);
  const auto B = static_cast<std::size_t>(b.batch_size);
  const std::size_t steps = train.size() / B;
  if (steps == 0) throw std::invalid_argument("train_genotype: training split smaller than one batch");
  std::vector<std::vector<double>> momentum;
  for (const auto& w : net.weights()) momentum.emplace_back(w.numel(), 0.0);
  Rng order(seed, "train");
  for (int e = 0; e < b.epochs; ++e) {
    const double lr = cosine_lr(b, e);
    std::vector<std::size_t> perm(train.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    order.shuffle(perm.begin(), perm.end());
    for (std::size_t s = 0; s < steps; ++s) {
      const Dataset batch = train.subset(std::span<const std::size_t>(perm.data() + s * B, B));
      ad::Tape tape;
      std::vector<ad::Tensor> w;
      for (const auto& t : net.weights()) w.push_back(tape.variable(t));
      const auto fr = net.forward(tape, w, nullptr, 0.0, batch.images, batch.labels);
      if (!std::isfinite(fr.loss.item())) return {0.0, true};
      const auto g = tape.backward(fr.loss);
      std::vector<std::vector<double>> grads;
      for (const auto& t : w) {
        const auto r = g.raw(t);
        grads.emplace_back(r.begin(), r.end());
      }
      std::vector<std::span<double>> views(grads.begin(), grads.end());
      if (!std::isfinite(clip_grad_norm(views, b.grad_clip))) return {0.0, true};
      for (std::size_t i = 0; i < grads.size(); ++i) {
        sgd_step(net.weights()[i].mutable_data(), grads[i], momentum[i], lr, b.momentum, b.weight_decay);
      }
    }
  }
  const auto ev = evaluate(net, nullptr, 0.0, val);
  if (!std::isfinite(ev.loss)) return {0.0, true};
  return {ev.accuracy, false};
}

const BenchEntry& BenchTable::find(const Genotype& g) const {
  const auto key = genotype_key(g);
  for (const auto& e : entries)
    if (e.key == key) return e;
  std::string nearest;
  std::size_t best = std::string::npos;
  for (const auto& e : entries) {
    const auto d = edit_distance(key, e.key);
    if (d < best) {
      best = d;
      nearest = e.key;
    }
  }
  throw std::out_of_range("genotype '" + key + "' is not in the table" +
                          (nearest.empty() ? std::string() : "; nearest key: '" + nearest + "'"));
}

void assign_ranks(BenchTable& table) {
  std::vector<std::size_t> order(table.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return table.entries[a].mean > table.entries[b].mean; });
  for (std::size_t r = 0; r < order.size(); ++r) table.entries[order[r]].rank = static_cast<int>(r + 1);
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  const double n = static_cast<double>(values.size());
  for (double v : values) a.mean += v;
  a.mean /= n;
  for (double v : values) a.std += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(a.std / n);
  return a;
}

BenchTable build_table(const BenchSpec& spec, int threads, const BuildProgress& progress) {
  spec.validate();
  const auto genotypes = enumerate_space(spec);
  const Dataset data = make_concentric(spec.data, spec.data_seed);
  const auto [train, val] = split_dataset(data, spec.split_ratio, spec.data_seed);

  BenchTable table;
  table.spec_hash = spec.hash();
  table.spec_text = spec.canonical();
  table.seeds = spec.seeds;
  table.entries.resize(genotypes.size());

  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < genotypes.size(); i = next++) {
      BenchEntry entry;
      entry.genotype = genotypes[i];
      entry.key = genotype_key(genotypes[i]);
      std::vector<double> accs;
      for (auto seed : spec.seeds) {
        const auto out = train_genotype(spec, genotypes[i], seed, train, val);
        accs.push_back(out.accuracy);
        entry.diverged = entry.diverged || out.diverged;
      }
      const auto agg = aggregate(accs);
      entry.mean = agg.mean;
      entry.std = agg.std;
      std::lock_guard lock(mu);
      table.entries[i] = std::move(entry);
      ++done;
      if (progress) progress(done, genotypes.size(), table.entries[i]);
    }
  };
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(genotypes.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  assign_ranks(table);
  return table;
}

LookupResult lookup(const BenchTable& table, const Genotype& g) {
  const auto& e = table.find(g);
  return {e.mean, e.rank};
}

double percentile(const BenchTable& table, const Genotype& g) {
  const auto& e = table.find(g);
  const auto n = table.entries.size();
  if (n <= 1) return 1.0;
  return 1.0 - static_cast<double>(e.rank - 1) / static_cast<double>(n - 1);
}

void write_table(std::ostream& os, const BenchTable& t) {
  os << "# auxskip bench table\n";
  os << "# version=" << t.version << "\n";
  os << "# spec_hash=" << t.spec_hash << "\n";
  os << "# spec=" << t.spec_text << "\n";
  os << "# seeds=";
  for (std::size_t i = 0; i < t.seeds.size(); ++i) os << (i ? "," : "") << t.seeds[i];
  os << "\n# entries=" << t.entries.size() << "\n";
  for (const auto& e : t.entries)
    if (e.diverged) os << "# diverged=" << e.key << "\n";
  for (const auto& e : t.entries) {
    os << e.key << '\t' << format_double(e.mean) << '\t' << format_double(e.std) << '\t' << e.rank << '\n';
  }
}

namespace {

double parse_double(std::string_view s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(s), &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
}

long long parse_int(std::string_view s, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": bad integer '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

BenchTable read_table(std::istream& is) {
  BenchTable t;
  t.version.clear();
  std::string line;
  std::size_t n = 0;
  std::vector<std::string> diverged;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string_view body = std::string_view(line).substr(line.size() > 1 && line[1] == ' ' ? 2 : 1);
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) continue;
      const auto key = body.substr(0, eq);
      const auto value = body.substr(eq + 1);
      if (key == "version") t.version = value;
      if (key == "spec_hash") t.spec_hash = value;
      if (key == "spec") t.spec_text = value;
      if (key == "diverged") diverged.emplace_back(value);
      if (key == "seeds" && !value.empty())
        for (auto s : split(value, ',')) t.seeds.push_back(static_cast<std::uint64_t>(parse_int(s, n)));
      continue;
    }
    const auto cols = split(line, '\t');
    if (cols.size() != 4) throw std::runtime_error("line " + std::to_string(n) + ": expected 4 tab-separated columns");
    BenchEntry e;
    e.key = std::string(cols[0]);
    try {
      e.genotype = parse_genotype(cols[0]);
    } catch (const GenotypeParseError& err) {
      throw std::runtime_error("line " + std::to_string(n) + ": " + err.what());
    }
    e.mean = parse_double(cols[1], n);
    e.std = parse_double(cols[2], n);
    e.rank = static_cast<int>(parse_int(cols[3], n));
    e.diverged = std::find(diverged.begin(), diverged.end(), e.key) != diverged.end();
    t.entries.push_back(std::move(e));
  }
  if (t.spec_hash.empty()) throw std::runtime_error("bench table has no spec_hash header");
  std::vector<int> ranks;
  for (const auto& e : t.entries) ranks.push_back(e.rank);
  std::sort(ranks.begin(), ranks.end());
  for (std::size_t i = 0; i < ranks.size(); ++i)
    if (ranks[i] != static_cast<int>(i + 1)) throw std::runtime_error("bench table ranks are not a permutation of 1..N");
  return t;
}

std::string_view derive_from_name(DeriveFrom d) { return d == DeriveFrom::Best ? "best" : "final"; }

DeriveFrom derive_from_from_name(std::string_view name) {
  if (name == "best") return DeriveFrom::Best;
  if (name == "final") return DeriveFrom::Final;
  throw std::invalid_argument("unknown derive_from '" + std::string(name) + "' (expected best or final)");
}

MethodReport evaluate_search(const SearchConfig& method, const BenchSpec& bench, const BenchTable& table, int n_seeds,
                             DeriveFrom derive_from, std::uint64_t base_seed, const std::string& label,
                             const std::function<void(const SeedReport&)>& progress) {
  bench.validate();
  if (!(method.space == bench.space)) {
    throw std::invalid_argument("evaluate_search: search space '" + method.space.canonical() +
                                "' differs from the bench space '" + bench.space.canonical() + "'");
  }
  if (table.spec_hash != bench.hash()) {
    throw std::invalid_argument("evaluate_search: table spec hash " + table.spec_hash + " does not match the bench spec " +
                                bench.hash());
  }
  if (n_seeds < 1) throw std::invalid_argument("evaluate_search: n_seeds must be >= 1");
  const Dataset data = make_concentric(bench.data, bench.data_seed);
  MethodReport rep;
  rep.label = label;
  std::vector<double> pct, np, ns, acc;
  for (int s = 0; s < n_seeds; ++s) {
    SearchConfig cfg = method;
    cfg.seed = base_seed + static_cast<std::uint64_t>(s);
    cfg.split_seed = bench.data_seed;
    cfg.split_ratio = bench.split_ratio;
    const auto res = run_search(cfg, data);
    const ArchParams& arch = derive_from == DeriveFrom::Best ? res.best_arch : res.final_arch;
    SeedReport r;
    r.seed = cfg.seed;
    r.genotype = discretize(arch, bench.space, bench.discretization, bench.k);
    const auto hit = lookup(table, r.genotype);
    r.accuracy = hit.accuracy;
    r.rank = hit.rank;
    r.percentile = percentile(table, r.genotype);
    r.num_parametric = count_parametric(r.genotype);
    r.num_skips = count_skips(r.genotype);
    r.best_epoch = res.best_epoch;
    pct.push_back(r.percentile);
    np.push_back(r.num_parametric);
    ns.push_back(r.num_skips);
    acc.push_back(r.accuracy);
    if (progress) progress(r);
    rep.runs.push_back(std::move(r));
  }
  rep.percentile = aggregate(pct);
  rep.num_parametric = aggregate(np);
  rep.num_skips = aggregate(ns);
  rep.accuracy = aggregate(acc);
  return rep;
}

void write_method_report(std::ostream& os, const MethodReport& r) {
  os << "# label=" << r.label << "\n";
  os << "seed\tpercentile\taccuracy\trank\tnum_parametric\tnum_skips\tbest_epoch\tgenotype\n";
  for (const auto& s : r.runs) {
    os << s.seed << '\t' << format_double(s.percentile) << '\t' << format_double(s.accuracy) << '\t' << s.rank << '\t'
       << s.num_parametric << '\t' << s.num_skips << '\t' << s.best_epoch << '\t' << genotype_key(s.genotype) << '\n';
  }
}

MethodReport read_method_report(std::istream& is) {
  MethodReport r;
  std::string line;
  std::size_t n = 0;
  bool header = false;
  std::vector<double> pct, np, ns, acc;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    if (line.rfind("# label=", 0) == 0) {
      r.label = line.substr(8);
      continue;
    }
    if (line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto c = split(line, '\t');
    if (c.size() != 8) throw std::runtime_error("report line " + std::to_string(n) + ": expected 8 columns");
    SeedReport s;
    s.seed = static_cast<std::uint64_t>(parse_int(c[0], n));
    s.percentile = parse_double(c[1], n);
    s.accuracy = parse_double(c[2], n);
    s.rank = static_cast<int>(parse_int(c[3], n));
    s.num_parametric = static_cast<int>(parse_int(c[4], n));
    s.num_skips = static_cast<int>(parse_int(c[5], n));
    s.best_epoch = static_cast<int>(parse_int(c[6], n));
    s.genotype = parse_genotype(c[7]);
    pct.push_back(s.percentile);
    np.push_back(s.num_parametric);
    ns.push_back(s.num_skips);
    acc.push_back(s.accuracy);
    r.runs.push_back(std::move(s));
  }
  r.percentile = aggregate(pct);
  r.num_parametric = aggregate(np);
  r.num_skips = aggregate(ns);
  r.accuracy = aggregate(acc);
  return r;
}

}  // namespace auxskip
