#pragma once

// Cell-based networks over a SearchSpaceSpec: the supernet with softmax-mixed
// edges plus the auxiliary skip branch, and standalone networks instantiated
// from a genotype.
//
// Layout: a linear 3x3 stem (with bias) maps the input to `channels` maps,
// `num_cells` cells follow, then global average pooling and a linear head.
// Convolutional candidate ops are ReLU -> conv (no bias) -> batch norm without
// affine parameters, using batch statistics in every forward pass.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "auxskip/autodiff.hpp"
#include "auxskip/genotype.hpp"
#include "auxskip/rng.hpp"
#include "auxskip/space.hpp"

namespace auxskip {

enum class AuxBranch { Off, IdentitySkip, LearnableProjection };

std::string_view aux_branch_name(AuxBranch a);
AuxBranch aux_branch_from_name(std::string_view name);

// One candidate op bound to its weights (empty for parameter-free ops).
struct OpInstance {
  OpKind kind = OpKind::Skip;
  std::vector<ad::Tensor> weights;
  std::size_t stride = 1;
};

struct AuxInstance {
  AuxBranch kind = AuxBranch::IdentitySkip;
  ad::Tensor projection;  // [C, C, 1, 1] for LearnableProjection
  std::size_t stride = 1;
};

// Output of a single op. Stride-2 skip is a 3x3 average pool with padding 1;
// 'none' is a constant zero tensor of the output shape.
ad::Tensor apply_op(ad::Tape& tape, const OpInstance& op, const ad::Tensor& x);

// beta * aux(x) + sum_o softmax(alpha_row)_o * o(x). The auxiliary term is
// omitted entirely when beta == 0 or the branch is Off.
ad::Tensor mixed_edge_forward(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& alpha_row, double beta,
                              std::span<const OpInstance> ops, const AuxInstance& aux);

struct NetworkShape {
  SearchSpaceSpec space;
  int in_channels = 1;
  int num_classes = 4;
  AuxBranch aux = AuxBranch::IdentitySkip;
};

struct ForwardResult {
  ad::Tensor loss;
  ad::Tensor logits;
  double accuracy = 0.0;
};

class Network {
 public:
  Network() = default;
  // Over-parameterized network holding every candidate op on every edge.
  static Network supernet(const NetworkShape& shape, Rng& init);
  // Standalone network: each cell keeps only the genotype's edges and ops.
  static Network discrete(const NetworkShape& shape, const Genotype& genotype, Rng& init);

  bool is_supernet() const { return !genotype_.has_value(); }
  const NetworkShape& shape() const { return shape_; }

  std::vector<ad::Tensor>& weights() { return weights_; }
  const std::vector<ad::Tensor>& weights() const { return weights_; }
  const std::vector<std::string>& weight_names() const { return names_; }
  std::size_t num_weight_values() const;

  // `w` parallels weights() and may hold tape variables or constants. `arch`
  // is required for supernets and ignored by discrete networks.
  ad::Tensor logits(ad::Tape& tape, std::span<const ad::Tensor> w, const ArchParams* arch, double beta,
                    const ad::Tensor& images) const;
  ForwardResult forward(ad::Tape& tape, std::span<const ad::Tensor> w, const ArchParams* arch, double beta,
                        const ad::Tensor& images, const std::vector<int>& labels) const;

  // One cell applied to explicit inputs (s0 is ignored for single-input
  // cells). Exposed for testing the cell contract.
  ad::Tensor cell_forward(ad::Tape& tape, std::span<const ad::Tensor> w, std::size_t cell, const ad::Tensor& s0,
                          const ad::Tensor& s1, const ArchParams* arch, double beta) const;

 private:
  struct EdgePlan {
    Edge edge;
    std::size_t stride = 1;
    std::vector<OpKind> ops;                     // candidate ops, or the single chosen op
    std::vector<std::vector<std::size_t>> slots; // weight indices per op
    bool aux = false;
    std::optional<std::size_t> aux_slot;
  };
  struct CellPlan {
    CellType type = CellType::Normal;
    bool reduce_s0 = false;  // s0 is at twice the resolution of s1
    std::vector<EdgePlan> edges;
    std::optional<std::size_t> projection;
  };

  void build(const NetworkShape& shape, const Genotype* genotype, Rng& init);
  std::size_t add_weight(std::string name, ad::Tensor value);
  std::size_t add_uniform(std::string name, ad::Shape shape, std::size_t fan_in, Rng& init);

  NetworkShape shape_;
  std::optional<Genotype> genotype_;
  std::vector<ad::Tensor> weights_;
  std::vector<std::string> names_;
  std::size_t stem_w_ = 0, stem_b_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<CellPlan> cells_;
};

// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy(const ad::Tensor& logits, const std::vector<int>& labels);

}  // namespace auxskip
