#include "auxskip/config.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <functional>
#include <set>
#include <sstream>

#include "auxskip/csv.hpp"

namespace auxskip {

ConfigError::ConfigError(std::size_t line, std::size_t column, const std::string& message)
    : std::runtime_error("config:" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

SearchConfig RunConfig::effective_search() const {
  SearchConfig s = search;
  s.space = space;
  s.aux = aux;
  s.schedule = decay;
  s.schedule.total_epochs = s.epochs;
  s.seed = seed;
  s.split_seed = seed;
  s.split_ratio = split_ratio;
  s.hessian_iters = diag.hessian_iters;
  s.hessian_tol = diag.hessian_tol;
  s.hessian_samples = diag.hessian_samples;
  return s;
}

BenchSpec RunConfig::bench_spec() const {
  BenchSpec b;
  b.space = space;
  b.discretization = bench.discretization;
  b.k = k;
  b.data = data;
  b.data_seed = seed;
  b.split_ratio = split_ratio;
  b.budget = bench.budget;
  b.seeds = bench.seeds;
  b.max_genotypes = bench.max_genotypes;
  return b;
}

void RunConfig::validate() const {
  space.validate();
  data.validate();
  effective_search().validate();
  if (k < 1) throw std::invalid_argument("discretize.k must be >= 1");
  if (bench.eval_seeds < 1) throw std::invalid_argument("bench.eval_seeds must be >= 1");
  if (bench.threads < 1) throw std::invalid_argument("bench.threads must be >= 1");
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

template <typename T>
T parse_integer(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

double parse_real(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

std::vector<std::string> parse_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto p = s.find(',', start);
    if (p == std::string_view::npos) p = s.size();
    const auto item = trim(s.substr(start, p - start));
    if (item.empty()) throw std::invalid_argument("empty item in list '" + std::string(s) + "'");
    out.push_back(item);
    start = p + 1;
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

struct Entry {
  std::string name;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
using Ref = T& (*)(RunConfig&);

template <typename T>
const T& cref(Ref<T> r, const RunConfig& c) {
  return r(const_cast<RunConfig&>(c));
}

Entry int_key(std::string name, std::string doc, Ref<int> r) {
  return {std::move(name), std::move(doc), [r](const RunConfig& c) { return std::to_string(cref(r, c)); },
          [r](RunConfig& c, std::string_view v) { r(c) = parse_integer<int>(v); }};
}

Entry u64_key(std::string name, std::string doc, Ref<std::uint64_t> r) {
  return {std::move(name), std::move(doc), [r](const RunConfig& c) { return std::to_string(cref(r, c)); },
          [r](RunConfig& c, std::string_view v) { r(c) = parse_integer<std::uint64_t>(v); }};
}

Entry size_key(std::string name, std::string doc, Ref<std::size_t> r) {
  return {std::move(name), std::move(doc), [r](const RunConfig& c) { return std::to_string(cref(r, c)); },
          [r](RunConfig& c, std::string_view v) { r(c) = parse_integer<std::size_t>(v); }};
}

Entry real_key(std::string name, std::string doc, Ref<double> r) {
  return {std::move(name), std::move(doc), [r](const RunConfig& c) { return format_double(cref(r, c)); },
          [r](RunConfig& c, std::string_view v) { r(c) = parse_real(v); }};
}

Entry bool_key(std::string name, std::string doc, Ref<bool> r) {
  return {std::move(name), std::move(doc), [r](const RunConfig& c) { return std::string(cref(r, c) ? "true" : "false"); },
          [r](RunConfig& c, std::string_view v) { r(c) = parse_bool(v); }};
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    e.push_back(u64_key("seed", "top-level seed; every random stream is derived from it", [](RunConfig& c) -> auto& { return c.seed; }));

    e.push_back(int_key("space.num_nodes", "intermediate nodes per cell", [](RunConfig& c) -> auto& { return c.space.num_nodes; }));
    e.push_back(int_key("space.num_inputs", "input nodes per cell (1 or 2)", [](RunConfig& c) -> auto& { return c.space.num_inputs; }));
    e.push_back({"space.ops", "candidate ops: none, skip, conv1x1, conv3x3, avgpool3x3, sepconv",
                 [](const RunConfig& c) { return join(c.space.candidate_ops, [](OpKind o) { return std::string(op_name(o)); }); },
                 [](RunConfig& c, std::string_view v) {
                   std::vector<OpKind> ops;
                   for (const auto& s : parse_list(v)) ops.push_back(op_from_name(s));
                   c.space.candidate_ops = ops;
                 }});
    e.push_back(int_key("space.num_cells", "stacked cells", [](RunConfig& c) -> auto& { return c.space.num_cells; }));
    e.push_back(int_key("space.channels", "feature maps per node", [](RunConfig& c) -> auto& { return c.space.channels; }));
    e.push_back(bool_key("space.has_reduction", "reduction cells at 1/3 and 2/3 depth", [](RunConfig& c) -> auto& { return c.space.has_reduction; }));
    e.push_back({"space.aggregation", "cell output: concat (+1x1 projection) or sum",
                 [](const RunConfig& c) { return std::string(c.space.aggregation == Aggregation::Sum ? "sum" : "concat"); },
                 [](RunConfig& c, std::string_view v) {
                   if (v == "sum") c.space.aggregation = Aggregation::Sum;
                   else if (v == "concat") c.space.aggregation = Aggregation::Concat;
                   else throw std::invalid_argument("expected concat or sum, got '" + std::string(v) + "'");
                 }});
    e.push_back(bool_key("space.aux_on_input_edges", "auxiliary skip also on edges leaving input nodes",
                         [](RunConfig& c) -> auto& { return c.space.aux_on_input_edges; }));
    e.push_back({"space.aux", "auxiliary branch: identity, projection or off",
                 [](const RunConfig& c) { return std::string(aux_branch_name(c.aux)); },
                 [](RunConfig& c, std::string_view v) { c.aux = aux_branch_from_name(v); }});

    e.push_back(int_key("data.samples", "synthetic samples before the split", [](RunConfig& c) -> auto& { return c.data.num_samples; }));
    e.push_back(int_key("data.image_size", "image side length", [](RunConfig& c) -> auto& { return c.data.image_size; }));
    e.push_back(real_key("data.noise", "pixel noise standard deviation", [](RunConfig& c) -> auto& { return c.data.noise; }));
    e.push_back({"data.freqs", "ring frequency per class (one class per entry)",
                 [](const RunConfig& c) { return join(c.data.freqs, [](double d) { return format_double(d); }); },
                 [](RunConfig& c, std::string_view v) {
                   std::vector<double> f;
                   for (const auto& s : parse_list(v)) f.push_back(parse_real(s));
                   c.data.freqs = f;
                 }});
    e.push_back(real_key("data.center_jitter", "ring centre offset range", [](RunConfig& c) -> auto& { return c.data.center_jitter; }));
    e.push_back(real_key("data.split_ratio", "training fraction of the search split", [](RunConfig& c) -> auto& { return c.split_ratio; }));

    e.push_back({"decay.kind", "beta schedule: linear, cosine, step, hold-then-linear, constant",
                 [](const RunConfig& c) { return std::string(decay_kind_name(c.decay.kind)); },
                 [](RunConfig& c, std::string_view v) { c.decay.kind = decay_kind_from_name(v); }});
    e.push_back(real_key("decay.beta0", "initial auxiliary coefficient (0 = plain DARTS)", [](RunConfig& c) -> auto& { return c.decay.beta0; }));
    e.push_back(int_key("decay.step_epoch", "switch epoch of the step schedule", [](RunConfig& c) -> auto& { return c.decay.step_epoch; }));
    e.push_back(int_key("decay.hold_until", "last constant epoch + 1 of hold-then-linear", [](RunConfig& c) -> auto& { return c.decay.hold_until; }));

    e.push_back(int_key("search.epochs", "search epochs (also the schedule horizon)", [](RunConfig& c) -> auto& { return c.search.epochs; }));
    e.push_back(int_key("search.batch_size", "minibatch size of both splits", [](RunConfig& c) -> auto& { return c.search.batch_size; }));
    e.push_back(real_key("search.w_lr", "initial weight learning rate", [](RunConfig& c) -> auto& { return c.search.w_lr; }));
    e.push_back(real_key("search.w_lr_min", "final weight learning rate (cosine)", [](RunConfig& c) -> auto& { return c.search.w_lr_min; }));
    e.push_back(real_key("search.w_momentum", "SGD momentum", [](RunConfig& c) -> auto& { return c.search.w_momentum; }));
    e.push_back(real_key("search.w_weight_decay", "SGD weight decay", [](RunConfig& c) -> auto& { return c.search.w_weight_decay; }));
    e.push_back(real_key("search.grad_clip", "max joint L2 norm of weight gradients", [](RunConfig& c) -> auto& { return c.search.grad_clip; }));
    e.push_back(real_key("search.a_lr", "Adam learning rate for alpha", [](RunConfig& c) -> auto& { return c.search.a_lr; }));
    e.push_back(real_key("search.a_beta1", "Adam first-moment decay", [](RunConfig& c) -> auto& { return c.search.a_beta1; }));
    e.push_back(real_key("search.a_beta2", "Adam second-moment decay", [](RunConfig& c) -> auto& { return c.search.a_beta2; }));
    e.push_back(real_key("search.a_eps", "Adam epsilon", [](RunConfig& c) -> auto& { return c.search.a_eps; }));
    e.push_back(real_key("search.a_weight_decay", "L2 weight decay on alpha", [](RunConfig& c) -> auto& { return c.search.a_weight_decay; }));
    e.push_back(real_key("search.alpha_init_scale", "alpha initialised as scale * N(0, 1)", [](RunConfig& c) -> auto& { return c.search.alpha_init_scale; }));
    e.push_back(bool_key("search.track_hessian", "record the dominant Hessian eigenvalue each epoch", [](RunConfig& c) -> auto& { return c.search.track_hessian; }));

    e.push_back({"discretize.mode", "topk (k strongest non-none edges per node) or dense (argmax on every edge)",
                 [](const RunConfig& c) { return std::string(discretization_name(c.discretization)); },
                 [](RunConfig& c, std::string_view v) { c.discretization = discretization_from_name(v); }});
    e.push_back(int_key("discretize.k", "retained incoming edges per node (topk)", [](RunConfig& c) -> auto& { return c.k; }));
    e.push_back({"discretize.derive_from", "alpha used for the final genotype: best (validation) or final",
                 [](const RunConfig& c) { return std::string(derive_from_name(c.derive_from)); },
                 [](RunConfig& c, std::string_view v) { c.derive_from = derive_from_from_name(v); }});

    e.push_back(int_key("diag.hessian_iters", "power iterations", [](RunConfig& c) -> auto& { return c.diag.hessian_iters; }));
    e.push_back(real_key("diag.hessian_tol", "residual tolerance", [](RunConfig& c) -> auto& { return c.diag.hessian_tol; }));
    e.push_back(int_key("diag.hessian_samples", "validation samples in the fixed Hessian batch", [](RunConfig& c) -> auto& { return c.diag.hessian_samples; }));
    e.push_back(real_key("diag.landscape_radius", "grid half-width in direction units", [](RunConfig& c) -> auto& { return c.diag.landscape_radius; }));
    e.push_back(int_key("diag.landscape_resolution", "odd grid side length", [](RunConfig& c) -> auto& { return c.diag.landscape_resolution; }));
    e.push_back(u64_key("diag.landscape_seed", "direction seed", [](RunConfig& c) -> auto& { return c.diag.landscape_seed; }));
    e.push_back(int_key("diag.lambda_h", "node count h of the convergence proxy", [](RunConfig& c) -> auto& { return c.diag.lambda_h; }));
    e.push_back(real_key("diag.lambda_beta", "auxiliary coefficient of the proxy", [](RunConfig& c) -> auto& { return c.diag.lambda_beta; }));
    e.push_back(real_key("diag.lambda_conv", "uniform conv weight of the proxy", [](RunConfig& c) -> auto& { return c.diag.lambda_conv; }));
    e.push_back(real_key("diag.lambda_skip", "uniform skip weight of the proxy", [](RunConfig& c) -> auto& { return c.diag.lambda_skip; }));
    e.push_back(real_key("diag.resnet_init", "initial trainable beta", [](RunConfig& c) -> auto& { return c.diag.resnet.init_beta; }));
    e.push_back(int_key("diag.resnet_depth", "residual blocks", [](RunConfig& c) -> auto& { return c.diag.resnet.depth; }));
    e.push_back(int_key("diag.resnet_epochs", "training epochs", [](RunConfig& c) -> auto& { return c.diag.resnet.epochs; }));
    e.push_back(int_key("diag.resnet_width", "feature width", [](RunConfig& c) -> auto& { return c.diag.resnet.width; }));
    e.push_back(int_key("diag.resnet_samples", "training samples", [](RunConfig& c) -> auto& { return c.diag.resnet.samples; }));
    e.push_back(int_key("diag.resnet_batch", "minibatch size", [](RunConfig& c) -> auto& { return c.diag.resnet.batch_size; }));
    e.push_back(real_key("diag.resnet_lr", "SGD learning rate", [](RunConfig& c) -> auto& { return c.diag.resnet.lr; }));
    e.push_back(real_key("diag.resnet_beta_lr", "learning rate of beta (< 0: same as resnet_lr)", [](RunConfig& c) -> auto& { return c.diag.resnet.beta_lr; }));
    e.push_back(int_key("diag.gradflow_depth", "linear residual chain depth", [](RunConfig& c) -> auto& { return c.diag.gradflow_depth; }));
    e.push_back(real_key("diag.gradflow_beta", "residual coefficient of the chain", [](RunConfig& c) -> auto& { return c.diag.gradflow_beta; }));

    e.push_back(int_key("bench.train_epochs", "training epochs per genotype", [](RunConfig& c) -> auto& { return c.bench.budget.epochs; }));
    e.push_back(int_key("bench.train_batch", "training minibatch size", [](RunConfig& c) -> auto& { return c.bench.budget.batch_size; }));
    e.push_back(real_key("bench.train_lr", "initial learning rate", [](RunConfig& c) -> auto& { return c.bench.budget.lr; }));
    e.push_back(real_key("bench.train_lr_min", "final learning rate (cosine)", [](RunConfig& c) -> auto& { return c.bench.budget.lr_min; }));
    e.push_back(real_key("bench.train_momentum", "SGD momentum", [](RunConfig& c) -> auto& { return c.bench.budget.momentum; }));
    e.push_back(real_key("bench.train_weight_decay", "SGD weight decay", [](RunConfig& c) -> auto& { return c.bench.budget.weight_decay; }));
    e.push_back(real_key("bench.train_grad_clip", "max joint L2 norm of gradients", [](RunConfig& c) -> auto& { return c.bench.budget.grad_clip; }));
    e.push_back({"bench.seeds", "training seeds averaged per genotype",
                 [](const RunConfig& c) { return join(c.bench.seeds, [](std::uint64_t s) { return std::to_string(s); }); },
                 [](RunConfig& c, std::string_view v) {
                   std::vector<std::uint64_t> s;
                   for (const auto& item : parse_list(v)) s.push_back(parse_integer<std::uint64_t>(item));
                   c.bench.seeds = s;
                 }});
    e.push_back({"bench.discretization", "genotype rule of the table: dense or topk",
                 [](const RunConfig& c) { return std::string(discretization_name(c.bench.discretization)); },
                 [](RunConfig& c, std::string_view v) { c.bench.discretization = discretization_from_name(v); }});
    e.push_back(int_key("bench.eval_seeds", "search seeds per evaluated method", [](RunConfig& c) -> auto& { return c.bench.eval_seeds; }));
    e.push_back(int_key("bench.threads", "parallel genotype trainings", [](RunConfig& c) -> auto& { return c.bench.threads; }));
    e.push_back(size_key("bench.max_genotypes", "enumeration limit", [](RunConfig& c) -> auto& { return c.bench.max_genotypes; }));
    return e;
  }();
  return entries;
}

const Entry& find_entry(std::string_view key) {
  for (const auto& e : registry())
    if (e.name == key) return e;
  throw std::out_of_range("unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> out;
  for (const auto& e : registry()) out.push_back({e.name, e.doc});
  return out;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  find_entry(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return find_entry(key).get(config); }

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw std::invalid_argument("override '" + std::string(assignment) + "' is not key=value");
  const auto key = trim(assignment.substr(0, eq));
  const auto value = trim(assignment.substr(eq + 1));
  try {
    set_config_value(config, key, value);
  } catch (const std::exception& e) {
    throw std::invalid_argument("override '" + std::string(assignment) + "': " + e.what());
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    // Strip comments outside of values: '#' starts a comment anywhere.
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    std::size_t first = 0;
    while (first < line.size() && std::isspace(static_cast<unsigned char>(line[first]))) ++first;
    if (first == line.size()) continue;
    const std::size_t col0 = first + 1;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      if (close == std::string_view::npos) throw ConfigError(line_no, col0, "unterminated section header");
      if (!trim(line.substr(close + 1)).empty()) throw ConfigError(line_no, close + 2, "text after section header");
      section = trim(line.substr(first + 1, close - first - 1));
      if (section.empty()) throw ConfigError(line_no, col0 + 1, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, col0, "expected 'key = value'");
    const std::string raw_key = trim(line.substr(first, eq - first));
    if (raw_key.empty()) throw ConfigError(line_no, col0, "missing key before '='");
    std::string key = raw_key;
    if (!section.empty() && raw_key.find('.') == std::string::npos) key = section + "." + raw_key;
    else if (!section.empty() && raw_key.rfind(section + ".", 0) != 0) key = section + "." + raw_key;
    std::size_t vcol = eq + 1;
    while (vcol < line.size() && std::isspace(static_cast<unsigned char>(line[vcol]))) ++vcol;
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError(line_no, eq + 2, "missing value for '" + key + "'");
    try {
      find_entry(key);
    } catch (const std::out_of_range&) {
      throw ConfigError(line_no, col0, "unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) throw ConfigError(line_no, col0, "duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, value);
    } catch (const std::exception& e) {
      throw ConfigError(line_no, vcol + 1, "bad value for '" + key + "': " + e.what());
    }
  }
  return cfg;
}

std::string dump_config(const RunConfig& config) {
  std::ostringstream os;
  for (const auto& e : registry()) os << e.name << " = " << e.get(config) << "\n";
  return os.str();
}

}  // namespace auxskip
