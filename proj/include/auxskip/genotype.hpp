#pragma once

#include <compare>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "auxskip/space.hpp"

namespace auxskip {

struct GenotypeEdge {
  int node = 0;
  int from = 0;
  OpKind op = OpKind::None;
  auto operator<=>(const GenotypeEdge&) const = default;
};

// A discretized cell pair. Edges are kept in canonical order (by node, then
// source index).
struct Genotype {
  std::vector<GenotypeEdge> normal;
  std::vector<GenotypeEdge> reduce;

  const std::vector<GenotypeEdge>& of(CellType t) const { return t == CellType::Normal ? normal : reduce; }
  // Incoming retained edges per intermediate node of the normal cell, or 0
  // when nodes differ.
  int retained_per_node() const;
  bool operator==(const Genotype&) const = default;
};

// How architecture logits become a genotype.
//   TopK  - per edge pick the strongest op other than 'none', then keep the
//           k incoming edges per node with the largest such weight.
//   Dense - keep every edge with its argmax op, 'none' included (tabular
//           benchmark convention).
enum class Discretization { TopK, Dense };

std::string_view discretization_name(Discretization d);
Discretization discretization_from_name(std::string_view name);

// Ties resolve to the lower edge index, then the lower op index.
Genotype derive_genotype(const ArchParams& arch, const SearchSpaceSpec& space, int k);
Genotype derive_dense_genotype(const ArchParams& arch, const SearchSpaceSpec& space);
Genotype discretize(const ArchParams& arch, const SearchSpaceSpec& space, Discretization mode, int k);

// Counted over the normal cell only.
int count_parametric(const Genotype& g);
int count_skips(const Genotype& g);

class GenotypeParseError : public std::runtime_error {
 public:
  GenotypeParseError(std::size_t line, std::size_t column, const std::string& message);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// One line per retained edge: "cell=<normal|reduce>; node=<j>; from=<i>; op=<name>".
std::string serialize_genotype(const Genotype& g);
// The same records joined by '|' on a single line (table keys).
std::string genotype_key(const Genotype& g);
// Accepts newline- or '|'-separated records; lines starting with '#' are
// comments.
Genotype parse_genotype(std::string_view text);

// Throws when the genotype does not fit the space (unknown edges, ops outside
// candidate_ops).
void check_genotype(const Genotype& g, const SearchSpaceSpec& space);

}  // namespace auxskip
