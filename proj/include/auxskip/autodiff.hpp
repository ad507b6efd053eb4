#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// float64 tensors. A Tape records every primitive whose inputs require a
// gradient; Tape::backward replays the records in reverse append order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace auxskip::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool defined() const { return static_cast<bool>(data_); }

  std::span<const double> data() const;
  // Copy-on-write: tensors sharing this buffer (including tape records)
  // keep the old values.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }

  bool requires_grad() const { return requires_grad_; }
  // Node index on the owning tape; absent for constants.
  bool on_tape() const { return tape_ != nullptr; }
  std::size_t tape_id() const { return node_; }
  const Tape* tape() const { return tape_; }

  // Same values, detached from any tape and not requiring grad.
  Tensor detach() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  bool requires_grad_ = false;
  const Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

enum class Primitive {
  Leaf,
  MatMul,
  Conv2d,
  Relu,
  AvgPool,
  Add,
  Mul,
  Scale,
  ScaleBy,
  Row,
  Index,
  Softmax,
  CrossEntropy,
  Mse,
  GlobalAvgPool,
  BiasAdd,
  BatchNorm,
  Concat,
  Sum,
};

std::string_view primitive_name(Primitive kind);
// Throws std::invalid_argument for names outside the primitive set.
Primitive primitive_from_name(std::string_view name);

struct Attrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t kernel = 3;   // avgpool window
  std::size_t index = 0;    // row / index
  double scalar = 0.0;      // scale factor
  double eps = 1e-5;        // batch norm
  std::vector<int> labels;  // cross entropy targets
};

class Gradients {
 public:
  // Gradient of the loss with respect to `t`; zeros when `t` is a constant
  // or lies on no path to the loss.
  Tensor of(const Tensor& t) const;
  std::span<const double> raw(const Tensor& t) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::vector<double>> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Register a leaf that requires a gradient.
  Tensor variable(const Tensor& value);

  // Evaluate a primitive. The result is recorded iff any input requires a
  // gradient; otherwise a constant is returned.
  Tensor apply(Primitive kind, std::vector<Tensor> inputs, const Attrs& attrs = {});
  Tensor apply(std::string_view kind, std::vector<Tensor> inputs, const Attrs& attrs = {});

  Gradients backward(const Tensor& loss) const;

  std::size_t size() const { return nodes_.size(); }

  // Convenience wrappers.
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);
  Tensor relu(const Tensor& x);
  Tensor avg_pool(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double factor);
  Tensor scale_by(const Tensor& x, const Tensor& factor);
  Tensor row(const Tensor& m, std::size_t r);
  Tensor index(const Tensor& v, std::size_t i);
  Tensor softmax(const Tensor& x);
  Tensor cross_entropy(const Tensor& logits, std::vector<int> labels);
  Tensor mse(const Tensor& pred, const Tensor& target);
  Tensor global_avg_pool(const Tensor& x);
  Tensor bias_add(const Tensor& x, const Tensor& bias);
  Tensor batch_norm(const Tensor& x, double eps = 1e-5);
  Tensor concat(std::vector<Tensor> parts);
  Tensor sum(const Tensor& x);

 private:
  struct Node {
    Primitive kind = Primitive::Leaf;
    std::vector<Tensor> inputs;
    Tensor output;
    Attrs attrs;
    std::vector<double> saved;
  };
  std::vector<Node> nodes_;
};

// Max over coordinates of |analytic - central difference| / max(1, |central
// difference|). `f` builds a scalar from its argument on the given tape.
using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;
double grad_check(const ScalarFn& f, const Tensor& point, double step);

}  // namespace auxskip::ad
