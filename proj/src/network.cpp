#include "auxskip/network.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <stdexcept>

namespace auxskip {

std::string_view aux_branch_name(AuxBranch a) {
  switch (a) {
    case AuxBranch::Off:
      return "off";
    case AuxBranch::IdentitySkip:
      return "identity";
    case AuxBranch::LearnableProjection:
      return "projection";
  }
  return "?";
}

AuxBranch aux_branch_from_name(std::string_view name) {
  if (name == "off") return AuxBranch::Off;
  if (name == "identity") return AuxBranch::IdentitySkip;
  if (name == "projection") return AuxBranch::LearnableProjection;
  throw std::invalid_argument("unknown auxiliary branch '" + std::string(name) + "' (expected off, identity or projection)");
}

namespace {

std::size_t strided_extent(std::size_t n, std::size_t stride) { return (n - 1) / stride + 1; }

ad::Tensor conv_bn(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& w, std::size_t stride, std::size_t pad) {
  return tape.batch_norm(tape.conv2d(tape.relu(x), w, stride, pad));
}

void expect_weights(const OpInstance& op, std::size_t n) {
  if (op.weights.size() != n) {
    throw std::invalid_argument(std::string(op_name(op.kind)) + " expects " + std::to_string(n) + " weight tensors, got " +
                                std::to_string(op.weights.size()));
  }
}

}  // namespace

ad::Tensor apply_op(ad::Tape& tape, const OpInstance& op, const ad::Tensor& x) {
  if (x.shape().size() != 4) throw ad::ShapeError("op input must be NCHW, got " + ad::to_string(x.shape()));
  switch (op.kind) {
    case OpKind::None:
      return ad::Tensor::zeros({x.dim(0), x.dim(1), strided_extent(x.dim(2), op.stride), strided_extent(x.dim(3), op.stride)});
    case OpKind::Skip:
      return op.stride == 1 ? x : tape.avg_pool(x, 3, op.stride, 1);
    case OpKind::Conv1x1:
      expect_weights(op, 1);
      return conv_bn(tape, x, op.weights[0], op.stride, 0);
    case OpKind::Conv3x3:
      expect_weights(op, 1);
      return conv_bn(tape, x, op.weights[0], op.stride, 1);
    case OpKind::AvgPool3x3:
      return tape.avg_pool(x, 3, op.stride, 1);
    case OpKind::SepConv:
      expect_weights(op, 2);
      return conv_bn(tape, conv_bn(tape, x, op.weights[0], op.stride, 1), op.weights[1], 1, 1);
  }
  throw std::invalid_argument("unknown op kind");
}

ad::Tensor mixed_edge_forward(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& alpha_row, double beta,
                              std::span<const OpInstance> ops, const AuxInstance& aux) {
  if (ops.empty()) throw std::invalid_argument("mixed edge without candidate ops");
  if (alpha_row.numel() != ops.size()) {
    throw ad::ShapeError("mixed edge: alpha row has " + std::to_string(alpha_row.numel()) + " entries for " +
                         std::to_string(ops.size()) + " ops");
  }
  if (beta < 0.0 || !std::isfinite(beta)) throw std::invalid_argument("mixed edge: beta must be finite and >= 0");
  const ad::Tensor w = tape.softmax(alpha_row);
  ad::Tensor acc;
  ad::Shape out_shape;
  for (std::size_t o = 0; o < ops.size(); ++o) {
    const ad::Tensor y = apply_op(tape, ops[o], x);
    if (o == 0) {
      out_shape = y.shape();
    } else if (y.shape() != out_shape) {
      throw ad::ShapeError("mixed edge: op '" + std::string(op_name(ops[o].kind)) + "' produced " +
                           ad::to_string(y.shape()) + ", expected " + ad::to_string(out_shape));
    }
    // 'none' contributes an exact zero term.
    if (ops[o].kind == OpKind::None) continue;
    const ad::Tensor term = tape.scale_by(y, tape.index(w, o));
    acc = acc.defined() ? tape.add(acc, term) : term;
  }
  if (!acc.defined()) acc = ad::Tensor::zeros(out_shape);
  if (beta != 0.0 && aux.kind != AuxBranch::Off) {
    ad::Tensor a = aux.stride == 1 ? x : tape.avg_pool(x, 3, aux.stride, 1);
    if (aux.kind == AuxBranch::LearnableProjection) a = tape.conv2d(a, aux.projection, 1, 0);
    if (a.shape() != out_shape) {
      throw ad::ShapeError("mixed edge: auxiliary branch produced " + ad::to_string(a.shape()) + ", expected " +
                           ad::to_string(out_shape));
    }
    acc = tape.add(acc, tape.scale(a, beta));
  }
  return acc;
}

std::size_t Network::add_weight(std::string name, ad::Tensor value) {
  names_.push_back(std::move(name));
  weights_.push_back(std::move(value));
  return weights_.size() - 1;
}

std::size_t Network::add_uniform(std::string name, ad::Shape shape, std::size_t fan_in, Rng& init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  ad::Tensor t = ad::Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = init.uniform(-bound, bound);
  return add_weight(std::move(name), std::move(t));
}

Network Network::supernet(const NetworkShape& shape, Rng& init) {
  Network net;
  net.build(shape, nullptr, init);
  return net;
}

Network Network::discrete(const NetworkShape& shape, const Genotype& genotype, Rng& init) {
  Network net;
  net.genotype_ = genotype;
  net.build(shape, &genotype, init);
  return net;
}

void Network::build(const NetworkShape& shape, const Genotype* genotype, Rng& init) {
  shape.space.validate();
  if (shape.in_channels < 1 || shape.num_classes < 2) throw std::invalid_argument("network needs >= 1 input channel and >= 2 classes");
  if (genotype) {
    check_genotype(*genotype, shape.space);
    if (shape.space.has_reduction && genotype->reduce.empty()) {
      throw std::invalid_argument("genotype lacks a reduce cell required by the layout");
    }
  }
  shape_ = shape;
  const auto& sp = shape.space;
  const auto C = static_cast<std::size_t>(sp.channels);
  stem_w_ = add_uniform("stem.w", {C, static_cast<std::size_t>(shape.in_channels), 3, 3},
                        static_cast<std::size_t>(shape.in_channels) * 9, init);
  stem_b_ = add_uniform("stem.b", {C}, static_cast<std::size_t>(shape.in_channels) * 9, init);

  const auto layout = sp.layout();
  for (std::size_t c = 0; c < layout.size(); ++c) {
    CellPlan cell;
    cell.type = layout[c];
    cell.reduce_s0 = c > 0 && layout[c - 1] == CellType::Reduce;
    const std::string prefix = "cell" + std::to_string(c) + ".";

    std::vector<std::pair<Edge, std::vector<OpKind>>> chosen;
    if (genotype) {
      for (const auto& ge : genotype->of(cell.type)) chosen.push_back({Edge{ge.from, ge.node}, {ge.op}});
      std::sort(chosen.begin(), chosen.end(), [](const auto& a, const auto& b) {
        return std::tie(a.first.to, a.first.from) < std::tie(b.first.to, b.first.from);
      });
    } else {
      for (const auto& e : sp.edges()) chosen.push_back({e, sp.candidate_ops});
    }
    for (auto& [edge, ops] : chosen) {
      EdgePlan ep;
      ep.edge = edge;
      ep.stride = cell.type == CellType::Reduce && edge.from < sp.num_inputs ? 2 : 1;
      ep.ops = ops;
      const std::string eprefix = prefix + "edge" + std::to_string(edge.from) + "_" + std::to_string(edge.to) + ".";
      for (OpKind op : ops) {
        std::vector<std::size_t> slots;
        const std::string oname = eprefix + std::string(op_name(op));
        switch (op) {
          case OpKind::Conv1x1:
            slots.push_back(add_uniform(oname + ".w", {C, C, 1, 1}, C, init));
            break;
          case OpKind::Conv3x3:
            slots.push_back(add_uniform(oname + ".w", {C, C, 3, 3}, C * 9, init));
            break;
          case OpKind::SepConv:
            slots.push_back(add_uniform(oname + ".w0", {C, C, 3, 3}, C * 9, init));
            slots.push_back(add_uniform(oname + ".w1", {C, C, 3, 3}, C * 9, init));
            break;
          default:
            break;
        }
        ep.slots.push_back(std::move(slots));
      }
      ep.aux = !genotype && shape.aux != AuxBranch::Off && (sp.aux_on_input_edges || edge.from >= sp.num_inputs);
      if (ep.aux && shape.aux == AuxBranch::LearnableProjection) {
        ad::Tensor eye = ad::Tensor::zeros({C, C, 1, 1});
        for (std::size_t i = 0; i < C; ++i) eye.mutable_data()[i * C + i] = 1.0;
        ep.aux_slot = add_weight(eprefix + "aux", std::move(eye));
      }
      cell.edges.push_back(std::move(ep));
    }
    if (sp.aggregation == Aggregation::Concat) {
      const auto in = C * static_cast<std::size_t>(sp.num_nodes);
      cell.projection = add_uniform(prefix + "proj", {C, in, 1, 1}, in, init);
    }
    cells_.push_back(std::move(cell));
  }
  const auto K = static_cast<std::size_t>(shape.num_classes);
  head_w_ = add_uniform("head.w", {C, K}, C, init);
  head_b_ = add_uniform("head.b", {K}, C, init);
}

std::size_t Network::num_weight_values() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.numel();
  return n;
}

ad::Tensor Network::cell_forward(ad::Tape& tape, std::span<const ad::Tensor> w, std::size_t cell_index,
                                 const ad::Tensor& s0, const ad::Tensor& s1, const ArchParams* arch, double beta) const {
  const auto& sp = shape_.space;
  const CellPlan& cell = cells_.at(cell_index);
  if (w.size() != weights_.size()) throw std::invalid_argument("weight list does not match the network");
  const ad::Tensor* alpha = nullptr;
  if (is_supernet()) {
    if (!arch) throw std::invalid_argument("supernet forward requires architecture parameters");
    alpha = &arch->of(cell.type);
    if (!alpha->defined() || alpha->shape() != ad::Shape{sp.num_edges(), sp.num_ops()}) {
      throw std::invalid_argument("architecture parameters do not match the " + std::string(cell_type_name(cell.type)) + " cell");
    }
  }
  const auto C = static_cast<std::size_t>(sp.channels);
  if (s1.shape().size() != 4 || s1.dim(1) != C) {
    throw ad::ShapeError("cell input has shape " + ad::to_string(s1.shape()) + ", expected " + std::to_string(C) + " channels");
  }
  std::vector<ad::Tensor> nodes;
  if (sp.num_inputs == 2) {
    if (s0.shape().size() != 4 || s0.dim(1) != C) {
      throw ad::ShapeError("cell input has shape " + ad::to_string(s0.shape()) + ", expected " + std::to_string(C) + " channels");
    }
    nodes.push_back(cell.reduce_s0 ? tape.avg_pool(s0, 3, 2, 1) : s0);
  }
  nodes.push_back(s1);

  const std::size_t stride = cell.type == CellType::Reduce ? 2 : 1;
  const ad::Shape node_shape{s1.dim(0), C, strided_extent(s1.dim(2), stride), strided_extent(s1.dim(3), stride)};
  std::size_t next_edge = 0;
  for (int j = sp.num_inputs; j < sp.num_inputs + sp.num_nodes; ++j) {
    ad::Tensor acc;
    for (; next_edge < cell.edges.size() && cell.edges[next_edge].edge.to == j; ++next_edge) {
      const EdgePlan& ep = cell.edges[next_edge];
      const ad::Tensor& x = nodes[static_cast<std::size_t>(ep.edge.from)];
      std::vector<OpInstance> ops;
      for (std::size_t o = 0; o < ep.ops.size(); ++o) {
        OpInstance inst{ep.ops[o], {}, ep.stride};
        for (auto s : ep.slots[o]) inst.weights.push_back(w[s]);
        ops.push_back(std::move(inst));
      }
      ad::Tensor out;
      if (alpha) {
        AuxInstance aux{ep.aux ? shape_.aux : AuxBranch::Off, {}, ep.stride};
        if (ep.aux_slot) aux.projection = w[*ep.aux_slot];
        out = mixed_edge_forward(tape, x, tape.row(*alpha, next_edge), beta, ops, aux);
      } else {
        out = apply_op(tape, ops[0], x);
      }
      if (out.shape() != node_shape) {
        throw ad::ShapeError("edge " + std::to_string(ep.edge.from) + "->" + std::to_string(j) + " produced " +
                             ad::to_string(out.shape()) + ", expected " + ad::to_string(node_shape));
      }
      acc = acc.defined() ? tape.add(acc, out) : out;
    }
    nodes.push_back(acc.defined() ? acc : ad::Tensor::zeros(node_shape));
  }

  const auto first = nodes.begin() + sp.num_inputs;
  if (sp.aggregation == Aggregation::Sum) {
    ad::Tensor out = *first;
    for (auto it = first + 1; it != nodes.end(); ++it) out = tape.add(out, *it);
    return out;
  }
  return tape.conv2d(tape.concat(std::vector<ad::Tensor>(first, nodes.end())), w[*cell.projection], 1, 0);
}

ad::Tensor Network::logits(ad::Tape& tape, std::span<const ad::Tensor> w, const ArchParams* arch, double beta,
                           const ad::Tensor& images) const {
  if (w.size() != weights_.size()) throw std::invalid_argument("weight list does not match the network");
  if (images.shape().size() != 4 || images.dim(1) != static_cast<std::size_t>(shape_.in_channels)) {
    throw ad::ShapeError("network input has shape " + ad::to_string(images.shape()) + ", expected N x " +
                         std::to_string(shape_.in_channels) + " x H x W");
  }
  ad::Tensor s1 = tape.bias_add(tape.conv2d(images, w[stem_w_], 1, 1), w[stem_b_]);
  ad::Tensor s0 = s1;
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    ad::Tensor out = cell_forward(tape, w, c, s0, s1, arch, beta);
    s0 = s1;
    s1 = out;
  }
  return tape.bias_add(tape.matmul(tape.global_avg_pool(s1), w[head_w_]), w[head_b_]);
}

ForwardResult Network::forward(ad::Tape& tape, std::span<const ad::Tensor> w, const ArchParams* arch, double beta,
                               const ad::Tensor& images, const std::vector<int>& labels) const {
  ForwardResult r;
  r.logits = logits(tape, w, arch, beta, images);
  r.loss = tape.cross_entropy(r.logits, labels);
  r.accuracy = accuracy(r.logits, labels);
  return r;
}

double accuracy(const ad::Tensor& logits, const std::vector<int>& labels) {
  const auto N = logits.dim(0), K = logits.dim(1);
  if (labels.size() != N) throw ad::ShapeError("accuracy: " + std::to_string(labels.size()) + " labels for " + std::to_string(N) + " rows");
  const auto d = logits.data();
  std::size_t hits = 0;
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (d[n * K + k] > d[n * K + best]) best = k;
    hits += static_cast<int>(best) == labels[n] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(N);
}

}  // namespace auxskip
