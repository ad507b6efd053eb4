#include "auxskip/space.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace auxskip {

namespace {
constexpr std::array<std::pair<OpKind, std::string_view>, 6> kOps{{
    {OpKind::None, "none"},
    {OpKind::Skip, "skip"},
    {OpKind::Conv1x1, "conv1x1"},
    {OpKind::Conv3x3, "conv3x3"},
    {OpKind::AvgPool3x3, "avgpool3x3"},
    {OpKind::SepConv, "sepconv"},
}};
}  // namespace

std::string_view op_name(OpKind op) {
  for (const auto& [k, n] : kOps)
    if (k == op) return n;
  return "?";
}

OpKind op_from_name(std::string_view name) {
  for (const auto& [k, n] : kOps)
    if (n == name) return k;
  throw std::invalid_argument("unknown op '" + std::string(name) + "'");
}

bool is_parametric(OpKind op) {
  return op == OpKind::Conv1x1 || op == OpKind::Conv3x3 || op == OpKind::SepConv;
}

std::string_view cell_type_name(CellType t) { return t == CellType::Normal ? "normal" : "reduce"; }

void SearchSpaceSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("search space: " + m); };
  if (num_nodes < 1) fail("num_nodes must be >= 1");
  if (num_inputs != 1 && num_inputs != 2) fail("num_inputs must be 1 or 2");
  if (candidate_ops.empty()) fail("candidate_ops is empty");
  if (op_index(OpKind::Skip) < 0) fail("candidate_ops must contain 'skip'");
  for (std::size_t i = 0; i < candidate_ops.size(); ++i)
    for (std::size_t j = i + 1; j < candidate_ops.size(); ++j)
      if (candidate_ops[i] == candidate_ops[j]) fail("duplicate op '" + std::string(op_name(candidate_ops[i])) + "'");
  if (num_cells < 1) fail("num_cells must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
}

std::vector<Edge> SearchSpaceSpec::edges() const {
  std::vector<Edge> out;
  for (int j = num_inputs; j < num_inputs + num_nodes; ++j)
    for (int i = 0; i < j; ++i) out.push_back({i, j});
  return out;
}

std::size_t SearchSpaceSpec::num_edges() const {
  std::size_t n = 0;
  for (int j = num_inputs; j < num_inputs + num_nodes; ++j) n += static_cast<std::size_t>(j);
  return n;
}

int SearchSpaceSpec::op_index(OpKind op) const {
  const auto it = std::find(candidate_ops.begin(), candidate_ops.end(), op);
  return it == candidate_ops.end() ? -1 : static_cast<int>(it - candidate_ops.begin());
}

std::vector<CellType> SearchSpaceSpec::layout() const {
  std::vector<CellType> out(static_cast<std::size_t>(num_cells), CellType::Normal);
  if (has_reduction) {
    out[static_cast<std::size_t>(num_cells / 3)] = CellType::Reduce;
    out[static_cast<std::size_t>(2 * num_cells / 3)] = CellType::Reduce;
  }
  return out;
}

std::string SearchSpaceSpec::canonical() const {
  std::ostringstream os;
  os << "nodes=" << num_nodes << ";inputs=" << num_inputs << ";ops=";
  for (std::size_t i = 0; i < candidate_ops.size(); ++i) os << (i ? "," : "") << op_name(candidate_ops[i]);
  os << ";cells=" << num_cells << ";channels=" << channels << ";reduction=" << (has_reduction ? 1 : 0)
     << ";aggregation=" << (aggregation == Aggregation::Sum ? "sum" : "concat")
     << ";aux_on_input_edges=" << (aux_on_input_edges ? 1 : 0);
  return os.str();
}

ArchParams ArchParams::constant(const SearchSpaceSpec& space, double value) {
  ArchParams a;
  const ad::Shape shape{space.num_edges(), space.num_ops()};
  a.normal = ad::Tensor::full(shape, value);
  if (space.has_reduction) a.reduce = ad::Tensor::full(shape, value);
  return a;
}

ArchParams ArchParams::random(const SearchSpaceSpec& space, Rng& rng, double scale) {
  ArchParams a = constant(space);
  for (auto& v : a.normal.mutable_data()) v = scale * rng.normal();
  if (a.has_reduce())
    for (auto& v : a.reduce.mutable_data()) v = scale * rng.normal();
  return a;
}

std::size_t ArchParams::size() const { return normal.numel() + (has_reduce() ? reduce.numel() : 0); }

std::vector<double> ArchParams::flatten() const {
  std::vector<double> out(normal.data().begin(), normal.data().end());
  if (has_reduce()) out.insert(out.end(), reduce.data().begin(), reduce.data().end());
  return out;
}

ArchParams ArchParams::with_flat(std::span<const double> flat) const {
  if (flat.size() != size()) throw std::invalid_argument("ArchParams: flat vector has wrong length");
  ArchParams a;
  const auto n = normal.numel();
  a.normal = ad::Tensor(normal.shape(), {flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(n)});
  if (has_reduce()) a.reduce = ad::Tensor(reduce.shape(), {flat.begin() + static_cast<std::ptrdiff_t>(n), flat.end()});
  return a;
}

void ArchParams::check(const SearchSpaceSpec& space) const {
  const ad::Shape shape{space.num_edges(), space.num_ops()};
  if (!normal.defined() || normal.shape() != shape) {
    throw std::invalid_argument("architecture parameters do not match the cell: expected " + ad::to_string(shape) +
                                ", got " + (normal.defined() ? ad::to_string(normal.shape()) : "nothing"));
  }
  if (space.has_reduction != has_reduce() || (has_reduce() && reduce.shape() != shape)) {
    throw std::invalid_argument("architecture parameters do not match the reduction layout");
  }
  for (double v : flatten())
    if (!std::isfinite(v)) throw std::invalid_argument("architecture parameters contain non-finite values");
}

std::vector<double> softmax_rows(const ad::Tensor& logits) {
  const auto cols = logits.dim(1);
  std::vector<double> out(logits.data().begin(), logits.data().end());
  for (std::size_t r = 0; r < out.size(); r += cols) {
    double mx = out[r];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, out[r + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[r + j] = std::exp(out[r + j] - mx);
      z += out[r + j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[r + j] /= z;
  }
  return out;
}

}  // namespace auxskip
