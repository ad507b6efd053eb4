#include "auxskip/genotype.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

namespace auxskip {

int Genotype::retained_per_node() const {
  std::map<int, int> per_node;
  for (const auto& e : normal) ++per_node[e.node];
  int k = -1;
  for (const auto& [node, count] : per_node) {
    if (k >= 0 && count != k) return 0;
    k = count;
  }
  return std::max(k, 0);
}

std::string_view discretization_name(Discretization d) { return d == Discretization::TopK ? "topk" : "dense"; }

Discretization discretization_from_name(std::string_view name) {
  if (name == "topk") return Discretization::TopK;
  if (name == "dense") return Discretization::Dense;
  throw std::invalid_argument("unknown discretization '" + std::string(name) + "' (expected topk or dense)");
}

namespace {

std::vector<GenotypeEdge> derive_cell(const ad::Tensor& logits, const SearchSpaceSpec& space, int k) {
  const auto weights = softmax_rows(logits);
  const auto edges = space.edges();
  const auto nops = space.num_ops();
  struct Best {
    std::size_t edge;
    std::size_t op;
    double weight;
  };
  std::vector<GenotypeEdge> out;
  std::size_t e0 = 0;
  for (int node = space.num_inputs; node < space.num_inputs + space.num_nodes; ++node) {
    const auto indeg = static_cast<std::size_t>(node);
    std::vector<Best> best;
    for (std::size_t e = e0; e < e0 + indeg; ++e) {
      Best b{e, nops, -1.0};
      for (std::size_t o = 0; o < nops; ++o) {
        if (space.candidate_ops[o] == OpKind::None) continue;
        if (weights[e * nops + o] > b.weight) b = {e, o, weights[e * nops + o]};
      }
      if (b.op < nops) best.push_back(b);
    }
    if (static_cast<std::size_t>(k) > best.size()) {
      throw std::invalid_argument("derive_genotype: k=" + std::to_string(k) + " exceeds the " +
                                  std::to_string(best.size()) + " selectable edges of node " + std::to_string(node));
    }
    std::stable_sort(best.begin(), best.end(), [](const Best& a, const Best& b) { return a.weight > b.weight; });
    best.resize(static_cast<std::size_t>(k));
    std::sort(best.begin(), best.end(), [](const Best& a, const Best& b) { return a.edge < b.edge; });
    for (const auto& b : best) out.push_back({node, edges[b.edge].from, space.candidate_ops[b.op]});
    e0 += indeg;
  }
  return out;
}

std::vector<GenotypeEdge> derive_dense_cell(const ad::Tensor& logits, const SearchSpaceSpec& space) {
  const auto weights = softmax_rows(logits);
  const auto edges = space.edges();
  const auto nops = space.num_ops();
  std::vector<GenotypeEdge> out;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    std::size_t best = 0;
    for (std::size_t o = 1; o < nops; ++o)
      if (weights[e * nops + o] > weights[e * nops + best]) best = o;
    out.push_back({edges[e].to, edges[e].from, space.candidate_ops[best]});
  }
  return out;
}

}  // namespace

Genotype derive_genotype(const ArchParams& arch, const SearchSpaceSpec& space, int k) {
  space.validate();
  arch.check(space);
  if (k < 1) throw std::invalid_argument("derive_genotype: k must be >= 1");
  Genotype g;
  g.normal = derive_cell(arch.normal, space, k);
  if (arch.has_reduce()) g.reduce = derive_cell(arch.reduce, space, k);
  return g;
}

Genotype derive_dense_genotype(const ArchParams& arch, const SearchSpaceSpec& space) {
  space.validate();
  arch.check(space);
  Genotype g;
  g.normal = derive_dense_cell(arch.normal, space);
  if (arch.has_reduce()) g.reduce = derive_dense_cell(arch.reduce, space);
  return g;
}

Genotype discretize(const ArchParams& arch, const SearchSpaceSpec& space, Discretization mode, int k) {
  return mode == Discretization::Dense ? derive_dense_genotype(arch, space) : derive_genotype(arch, space, k);
}

int count_parametric(const Genotype& g) {
  return static_cast<int>(std::count_if(g.normal.begin(), g.normal.end(), [](const auto& e) { return is_parametric(e.op); }));
}

int count_skips(const Genotype& g) {
  return static_cast<int>(std::count_if(g.normal.begin(), g.normal.end(), [](const auto& e) { return e.op == OpKind::Skip; }));
}

GenotypeParseError::GenotypeParseError(std::size_t line, std::size_t column, const std::string& message)
    : std::runtime_error("genotype:" + std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

namespace {

std::string edge_line(CellType cell, const GenotypeEdge& e) {
  return "cell=" + std::string(cell_type_name(cell)) + "; node=" + std::to_string(e.node) +
         "; from=" + std::to_string(e.from) + "; op=" + std::string(op_name(e.op));
}

std::vector<std::string> records(const Genotype& g) {
  std::vector<std::string> out;
  for (const auto& e : g.normal) out.push_back(edge_line(CellType::Normal, e));
  for (const auto& e : g.reduce) out.push_back(edge_line(CellType::Reduce, e));
  return out;
}

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line = 1;
  std::size_t col = 1;
};

}  // namespace

std::string serialize_genotype(const Genotype& g) {
  std::string out;
  for (const auto& r : records(g)) out += r + "\n";
  return out;
}

std::string genotype_key(const Genotype& g) {
  std::string out;
  for (const auto& r : records(g)) out += (out.empty() ? "" : "|") + r;
  return out;
}

Genotype parse_genotype(std::string_view text) {
  Genotype g;
  std::set<std::tuple<int, int, int>> seen;
  std::size_t line_no = 1;
  std::size_t start = 0;
  while (start <= text.size()) {
    // Records end at '\n' or '|'.
    std::size_t end = start;
    while (end < text.size() && text[end] != '\n' && text[end] != '|') ++end;
    std::string_view rec = text.substr(start, end - start);
    const std::size_t rec_col0 = 1 + [&] {
      std::size_t c = start;
      while (c > 0 && text[c - 1] != '\n') --c;
      return start - c;
    }();
    const bool newline = end < text.size() && text[end] == '\n';

    std::size_t lead = 0;
    while (lead < rec.size() && std::isspace(static_cast<unsigned char>(rec[lead]))) ++lead;
    const bool blank = lead == rec.size();
    const bool comment = !blank && rec[lead] == '#';
    if (!blank && !comment) {
      static constexpr std::string_view kKeys[] = {"cell", "node", "from", "op"};
      std::string_view values[4];
      std::size_t p = 0;
      for (int f = 0; f < 4; ++f) {
        while (p < rec.size() && std::isspace(static_cast<unsigned char>(rec[p]))) ++p;
        const std::size_t field_start = p;
        std::size_t stop = rec.find(';', p);
        if (stop == std::string_view::npos) stop = rec.size();
        std::string_view field = rec.substr(p, stop - p);
        while (!field.empty() && std::isspace(static_cast<unsigned char>(field.back()))) field.remove_suffix(1);
        const auto eq = field.find('=');
        if (eq == std::string_view::npos || field.substr(0, eq) != kKeys[f]) {
          throw GenotypeParseError(line_no, rec_col0 + field_start,
                                   "expected '" + std::string(kKeys[f]) + "=...', got '" + std::string(field) + "'");
        }
        values[f] = field.substr(eq + 1);
        if (values[f].empty()) {
          throw GenotypeParseError(line_no, rec_col0 + field_start + eq + 1, "empty value for '" + std::string(kKeys[f]) + "'");
        }
        p = stop + 1;
        if (f < 3 && stop == rec.size()) {
          throw GenotypeParseError(line_no, rec_col0 + rec.size(), "record ends after '" + std::string(kKeys[f]) + "'");
        }
        if (f == 3 && stop != rec.size()) {
          throw GenotypeParseError(line_no, rec_col0 + stop, "trailing text after op");
        }
      }
      const auto col_of = [&](int f) { return rec_col0 + static_cast<std::size_t>(values[f].data() - rec.data()); };
      CellType cell;
      if (values[0] == "normal") {
        cell = CellType::Normal;
      } else if (values[0] == "reduce") {
        cell = CellType::Reduce;
      } else {
        throw GenotypeParseError(line_no, col_of(0), "unknown cell type '" + std::string(values[0]) + "'");
      }
      int nums[2];
      for (int f = 1; f <= 2; ++f) {
        const auto* b = values[f].data();
        const auto* e = b + values[f].size();
        auto [ptr, ec] = std::from_chars(b, e, nums[f - 1]);
        if (ec != std::errc() || ptr != e || nums[f - 1] < 0) {
          throw GenotypeParseError(line_no, col_of(f), "bad integer '" + std::string(values[f]) + "'");
        }
      }
      OpKind op;
      try {
        op = op_from_name(values[3]);
      } catch (const std::invalid_argument&) {
        throw GenotypeParseError(line_no, col_of(3), "unknown op '" + std::string(values[3]) + "'");
      }
      if (nums[1] >= nums[0]) {
        throw GenotypeParseError(line_no, col_of(2), "source node must precede target node");
      }
      if (!seen.insert({cell == CellType::Normal ? 0 : 1, nums[0], nums[1]}).second) {
        throw GenotypeParseError(line_no, rec_col0, "duplicate edge");
      }
      (cell == CellType::Normal ? g.normal : g.reduce).push_back({nums[0], nums[1], op});
    }
    if (newline) ++line_no;
    start = end + 1;
  }
  auto canon = [](auto& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return std::tie(a.node, a.from) < std::tie(b.node, b.from); });
  };
  canon(g.normal);
  canon(g.reduce);
  return g;
}

void check_genotype(const Genotype& g, const SearchSpaceSpec& space) {
  auto check_cell = [&](const std::vector<GenotypeEdge>& cell, std::string_view name) {
    for (const auto& e : cell) {
      if (e.node < space.num_inputs || e.node >= space.num_inputs + space.num_nodes || e.from < 0 || e.from >= e.node) {
        throw std::invalid_argument("genotype edge " + std::to_string(e.from) + "->" + std::to_string(e.node) + " in " +
                                    std::string(name) + " cell does not exist in the space");
      }
      if (space.op_index(e.op) < 0) {
        throw std::invalid_argument("genotype op '" + std::string(op_name(e.op)) + "' is not a candidate op");
      }
    }
  };
  check_cell(g.normal, "normal");
  check_cell(g.reduce, "reduce");
  if (space.has_reduction != !g.reduce.empty() && !g.reduce.empty()) {
    throw std::invalid_argument("genotype has a reduce cell but the space has no reductions");
  }
}

}  // namespace auxskip
