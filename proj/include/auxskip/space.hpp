#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "auxskip/autodiff.hpp"
#include "auxskip/rng.hpp"

namespace auxskip {

enum class OpKind { None, Skip, Conv1x1, Conv3x3, AvgPool3x3, SepConv };

std::string_view op_name(OpKind op);
OpKind op_from_name(std::string_view name);
// Ops carrying trainable weights (the convolutions).
bool is_parametric(OpKind op);

enum class Aggregation { Concat, Sum };
enum class CellType { Normal, Reduce };

std::string_view cell_type_name(CellType t);

struct Edge {
  int from = 0;
  int to = 0;
  bool operator==(const Edge&) const = default;
};

// Cell DAG: `num_inputs` input nodes (1 = previous cell only, 2 = previous
// two cells) followed by `num_nodes` intermediate nodes; every earlier node
// feeds every intermediate node.
struct SearchSpaceSpec {
  int num_nodes = 2;
  int num_inputs = 2;
  std::vector<OpKind> candidate_ops{OpKind::None, OpKind::Skip, OpKind::Conv3x3, OpKind::AvgPool3x3};
  int num_cells = 2;
  int channels = 8;
  bool has_reduction = false;
  Aggregation aggregation = Aggregation::Concat;
  // When false the auxiliary skip is only placed on edges between
  // intermediate nodes.
  bool aux_on_input_edges = true;

  void validate() const;
  // Canonical order: by target node, then by source node.
  std::vector<Edge> edges() const;
  std::size_t num_edges() const;
  std::size_t num_ops() const { return candidate_ops.size(); }
  // Position of `op` in candidate_ops, or -1.
  int op_index(OpKind op) const;
  std::vector<CellType> layout() const;
  std::string canonical() const;

  bool operator==(const SearchSpaceSpec&) const = default;
};

// Architecture logits alpha, one (num_edges x num_ops) block per cell type.
struct ArchParams {
  ad::Tensor normal;
  ad::Tensor reduce;  // undefined without reduction cells

  static ArchParams constant(const SearchSpaceSpec& space, double value = 0.0);
  // DARTS initialization: scale * N(0, 1).
  static ArchParams random(const SearchSpaceSpec& space, Rng& rng, double scale = 1e-3);

  bool has_reduce() const { return reduce.defined(); }
  const ad::Tensor& of(CellType t) const { return t == CellType::Normal ? normal : reduce; }
  ad::Tensor& of(CellType t) { return t == CellType::Normal ? normal : reduce; }

  std::size_t size() const;
  std::vector<double> flatten() const;
  ArchParams with_flat(std::span<const double> flat) const;
  void check(const SearchSpaceSpec& space) const;
};

// Row-wise softmax of a logits block, computed in plain doubles.
std::vector<double> softmax_rows(const ad::Tensor& logits);

}  // namespace auxskip
