#pragma once

// Independent reference implementations used as test oracles. None of them
// calls into the code under test beyond the autodiff primitives and the
// network's weight list.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "auxskip/autodiff.hpp"
#include "auxskip/diagnostics.hpp"
#include "auxskip/genotype.hpp"
#include "auxskip/network.hpp"
#include "auxskip/space.hpp"

namespace oracle {

using auxskip::ad::Tape;
using auxskip::ad::Tensor;

// Plain softmax-mixed supernet written out step by step:
//   x_j = sum_{i<j} sum_o softmax(alpha_(i,j))_o * o(x_i)
// with no auxiliary branch at all. `w` maps weight names to tensors (tape
// variables or constants); `alpha_normal`/`alpha_reduce` may be variables.
inline Tensor darts_logits(Tape& t, const auxskip::SearchSpaceSpec& sp, const std::map<std::string, Tensor>& w,
                           const Tensor& alpha_normal, const Tensor& alpha_reduce, const Tensor& images) {
  auto conv_bn = [&](const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
    return t.batch_norm(t.conv2d(t.relu(x), k, stride, pad));
  };
  auto op_out = [&](auxskip::OpKind op, const std::string& name, const Tensor& x, std::size_t stride) -> Tensor {
    const auto h = (x.dim(2) - 1) / stride + 1, wd = (x.dim(3) - 1) / stride + 1;
    switch (op) {
      case auxskip::OpKind::None:
        return Tensor::zeros({x.dim(0), x.dim(1), h, wd});
      case auxskip::OpKind::Skip:
        return stride == 1 ? x : t.avg_pool(x, 3, 2, 1);
      case auxskip::OpKind::AvgPool3x3:
        return t.avg_pool(x, 3, stride, 1);
      case auxskip::OpKind::Conv1x1:
        return conv_bn(x, w.at(name + ".w"), stride, 0);
      case auxskip::OpKind::Conv3x3:
        return conv_bn(x, w.at(name + ".w"), stride, 1);
      case auxskip::OpKind::SepConv:
        return conv_bn(conv_bn(x, w.at(name + ".w0"), stride, 1), w.at(name + ".w1"), 1, 1);
    }
    return {};
  };

  Tensor s1 = t.bias_add(t.conv2d(images, w.at("stem.w"), 1, 1), w.at("stem.b"));
  Tensor s0 = s1;
  const auto layout = sp.layout();
  for (std::size_t c = 0; c < layout.size(); ++c) {
    const bool reduce = layout[c] == auxskip::CellType::Reduce;
    const Tensor& alpha = reduce ? alpha_reduce : alpha_normal;
    std::vector<Tensor> nodes;
    if (sp.num_inputs == 2) nodes.push_back(c > 0 && layout[c - 1] == auxskip::CellType::Reduce ? t.avg_pool(s0, 3, 2, 1) : s0);
    nodes.push_back(s1);
    std::size_t e = 0;
    for (int j = sp.num_inputs; j < sp.num_inputs + sp.num_nodes; ++j) {
      Tensor node;
      for (int i = 0; i < j; ++i, ++e) {
        const std::size_t stride = reduce && i < sp.num_inputs ? 2 : 1;
        const Tensor weights = t.softmax(t.row(alpha, e));
        Tensor edge;
        for (std::size_t o = 0; o < sp.candidate_ops.size(); ++o) {
          const auto name = "cell" + std::to_string(c) + ".edge" + std::to_string(i) + "_" + std::to_string(j) + "." +
                            std::string(auxskip::op_name(sp.candidate_ops[o]));
          const Tensor y = op_out(sp.candidate_ops[o], name, nodes[static_cast<std::size_t>(i)], stride);
          if (sp.candidate_ops[o] == auxskip::OpKind::None) continue;  // weight * 0
          const Tensor term = t.scale_by(y, t.index(weights, o));
          edge = edge.defined() ? t.add(edge, term) : term;
        }
        node = node.defined() ? t.add(node, edge) : edge;
      }
      nodes.push_back(node);
    }
    Tensor out;
    if (sp.aggregation == auxskip::Aggregation::Sum) {
      out = nodes[static_cast<std::size_t>(sp.num_inputs)];
      for (std::size_t n = static_cast<std::size_t>(sp.num_inputs) + 1; n < nodes.size(); ++n) out = t.add(out, nodes[n]);
    } else {
      out = t.conv2d(t.concat(std::vector<Tensor>(nodes.begin() + sp.num_inputs, nodes.end())),
                     w.at("cell" + std::to_string(c) + ".proj"), 1, 0);
    }
    s0 = s1;
    s1 = out;
  }
  return t.bias_add(t.matmul(t.global_avg_pool(s1), w.at("head.w")), w.at("head.b"));
}

// Top-k selection by exhaustive search: the unique k-subset of incoming edges
// such that every kept edge beats every dropped edge (larger weight, or equal
// weight and lower edge index). Each edge's candidate is its largest
// non-'none' weight, lowest op index on ties. Returns an empty genotype if no
// subset or several subsets qualify (never expected).
inline std::vector<auxskip::GenotypeEdge> brute_force_cell(const std::vector<double>& weights,
                                                           const auxskip::SearchSpaceSpec& sp, int k) {
  const auto nops = sp.candidate_ops.size();
  std::vector<auxskip::GenotypeEdge> out;
  std::size_t e0 = 0;
  for (int j = sp.num_inputs; j < sp.num_inputs + sp.num_nodes; ++j) {
    const auto n = static_cast<std::size_t>(j);
    std::vector<double> best(n, -1.0);
    std::vector<std::size_t> arg(n, nops);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < nops; ++o) {
        if (sp.candidate_ops[o] == auxskip::OpKind::None) continue;
        if (arg[i] == nops || weights[(e0 + i) * nops + o] > best[i]) {
          best[i] = weights[(e0 + i) * nops + o];
          arg[i] = o;
        }
      }
    int found = 0;
    std::vector<auxskip::GenotypeEdge> pick;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      if (static_cast<int>(__builtin_popcountll(mask)) != k) continue;
      bool ok = true;
      for (std::size_t a = 0; a < n && ok; ++a)
        for (std::size_t b = 0; b < n && ok; ++b) {
          if (!(mask >> a & 1) || (mask >> b & 1)) continue;
          ok = best[a] > best[b] || (best[a] == best[b] && a < b);
        }
      if (!ok) continue;
      ++found;
      pick.clear();
      for (std::size_t a = 0; a < n; ++a)
        if (mask >> a & 1) pick.push_back({j, static_cast<int>(a), sp.candidate_ops[arg[a]]});
    }
    if (found != 1) return {};
    out.insert(out.end(), pick.begin(), pick.end());
    e0 += n;
  }
  return out;
}

// sum_{i=0}^{h-2} conv(i, h-1)^2 * prod_{t=0}^{i-1} skip(t, i)^2
inline double theory_lambda(const auxskip::EdgeWeights& conv, const auxskip::EdgeWeights& skip, int h) {
  double total = 0.0;
  for (int i = 0; i <= h - 2; ++i) {
    double paths = 1.0;
    for (int t = 0; t < i; ++t) paths *= skip.at({t, i}) * skip.at({t, i});
    total += conv.at({i, h - 1}) * conv.at({i, h - 1}) * paths;
  }
  return total;
}

}  // namespace oracle
