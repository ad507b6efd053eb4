#include "auxskip/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace auxskip::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(std::move(data))),
      requires_grad_(requires_grad) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor shape " + to_string(shape_) + " has a zero extent");
  }
  if (ad::numel(shape_) != data_->size()) {
    throw ShapeError("tensor shape " + to_string(shape_) + " does not match " +
                     std::to_string(data_->size()) + " values");
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

std::span<double> Tensor::mutable_data() {
  if (!data_) return {};
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

namespace {

constexpr std::array<std::pair<Primitive, std::string_view>, 19> kNames{{
    {Primitive::Leaf, "leaf"},
    {Primitive::MatMul, "matmul"},
    {Primitive::Conv2d, "conv2d"},
    {Primitive::Relu, "relu"},
    {Primitive::AvgPool, "avgpool"},
    {Primitive::Add, "add"},
    {Primitive::Mul, "mul"},
    {Primitive::Scale, "scale"},
    {Primitive::ScaleBy, "scale_by"},
    {Primitive::Row, "row"},
    {Primitive::Index, "index"},
    {Primitive::Softmax, "softmax"},
    {Primitive::CrossEntropy, "cross_entropy"},
    {Primitive::Mse, "mse"},
    {Primitive::GlobalAvgPool, "global_avg_pool"},
    {Primitive::BiasAdd, "bias_add"},
    {Primitive::BatchNorm, "batch_norm"},
    {Primitive::Concat, "concat"},
    {Primitive::Sum, "sum"},
}};

[[noreturn]] void shape_error(Primitive kind, const std::string& what) {
  throw ShapeError(std::string(primitive_name(kind)) + ": " + what);
}

[[noreturn]] void mismatch(Primitive kind, const Shape& a, const Shape& b) {
  shape_error(kind, "shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void expect_rank(Primitive kind, const Tensor& t, std::size_t rank) {
  if (t.shape().size() != rank) {
    shape_error(kind, "expected rank " + std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

void expect_arity(Primitive kind, const std::vector<Tensor>& in, std::size_t n) {
  if (in.size() != n) {
    shape_error(kind, "expected " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
  }
  for (const auto& t : in) {
    if (!t.defined()) shape_error(kind, "undefined input tensor");
  }
}

std::size_t conv_extent(Primitive kind, std::size_t in, std::size_t k, std::size_t stride,
                        std::size_t pad) {
  if (stride == 0) shape_error(kind, "stride must be >= 1");
  if (in + 2 * pad < k) {
    shape_error(kind, "window " + std::to_string(k) + " larger than padded input " +
                          std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

// Output columns [lo, hi) whose input column ow*stride + k - pad lies in [0, width).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t width, std::size_t k,
                                                std::size_t stride, std::size_t pad) {
  const long s = static_cast<long>(stride);
  const long off = static_cast<long>(k) - static_cast<long>(pad);
  long lo = 0;
  if (off < 0) lo = (-off + s - 1) / s;
  long hi = (static_cast<long>(width) - 1 - off);
  hi = hi < 0 ? 0 : hi / s + 1;
  if (static_cast<long>(width) - 1 - off < 0) hi = 0;
  hi = std::min<long>(hi, static_cast<long>(out));
  lo = std::min<long>(lo, hi);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ConvGeom {
  std::size_t n, c, h, w, o, k, oh, ow, stride, pad;
};

ConvGeom conv_geom(const Tensor& x, const Tensor& w, const Attrs& a) {
  expect_rank(Primitive::Conv2d, x, 4);
  expect_rank(Primitive::Conv2d, w, 4);
  if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) mismatch(Primitive::Conv2d, x.shape(), w.shape());
  ConvGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), 0, 0, a.stride, a.padding};
  g.oh = conv_extent(Primitive::Conv2d, g.h, g.k, g.stride, g.pad);
  g.ow = conv_extent(Primitive::Conv2d, g.w, g.k, g.stride, g.pad);
  return g;
}

// Cross-correlation with zero padding.
void conv_forward(const ConvGeom& g, const double* x, const double* w, double* y) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.o; ++o) {
      double* yo = y + (n * g.o + o) * g.oh * g.ow;
      for (std::size_t c = 0; c < g.c; ++c) {
        const double* xc = x + (n * g.c + c) * g.h * g.w;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const auto [oh_lo, oh_hi] = valid_range(g.oh, g.h, kh, g.stride, g.pad);
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const double wv = w[((o * g.c + c) * g.k + kh) * g.k + kw];
            const auto [ow_lo, ow_hi] = valid_range(g.ow, g.w, kw, g.stride, g.pad);
            for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
              const double* xr = xc + static_cast<std::ptrdiff_t>((oh * g.stride + kh - g.pad) * g.w) +
                                 static_cast<std::ptrdiff_t>(kw) - static_cast<std::ptrdiff_t>(g.pad);
              double* yr = yo + oh * g.ow;
              if (g.stride == 1) {
                for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow];
              } else {
                for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow * g.stride];
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, const double* x, const double* w, const double* gy,
                   double* gx, double* gw) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.o; ++o) {
      const double* go = gy + (n * g.o + o) * g.oh * g.ow;
      for (std::size_t c = 0; c < g.c; ++c) {
        const std::size_t xoff = (n * g.c + c) * g.h * g.w;
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const auto [oh_lo, oh_hi] = valid_range(g.oh, g.h, kh, g.stride, g.pad);
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const std::size_t widx = ((o * g.c + c) * g.k + kh) * g.k + kw;
            const double wv = w[widx];
            const auto [ow_lo, ow_hi] = valid_range(g.ow, g.w, kw, g.stride, g.pad);
            double acc = 0.0;
            for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
              const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(xoff + (oh * g.stride + kh - g.pad) * g.w) +
                                         static_cast<std::ptrdiff_t>(kw) - static_cast<std::ptrdiff_t>(g.pad);
              const double* gr = go + oh * g.ow;
              if (gx) {
                double* gxr = gx + row;
                for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) gxr[ow * g.stride] += wv * gr[ow];
              }
              if (gw) {
                const double* xr = x + row;
                for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) acc += gr[ow] * xr[ow * g.stride];
              }
            }
            if (gw) gw[widx] += acc;
          }
        }
      }
    }
  }
}

struct PoolGeom {
  std::size_t n, c, h, w, k, oh, ow, stride, pad;
};

PoolGeom pool_geom(const Tensor& x, const Attrs& a) {
  expect_rank(Primitive::AvgPool, x, 4);
  PoolGeom g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), a.kernel, 0, 0, a.stride, a.padding};
  if (g.k == 0) shape_error(Primitive::AvgPool, "kernel must be >= 1");
  if (g.pad >= g.k) shape_error(Primitive::AvgPool, "padding must be smaller than the kernel");
  g.oh = conv_extent(Primitive::AvgPool, g.h, g.k, g.stride, g.pad);
  g.ow = conv_extent(Primitive::AvgPool, g.w, g.k, g.stride, g.pad);
  return g;
}

// Calls fn(out_index, in_index, 1/count) for every (output, window element)
// pair; padding is excluded from the count.
template <typename Fn>
void pool_visit(const PoolGeom& g, Fn&& fn) {
  for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
    for (std::size_t oh = 0; oh < g.oh; ++oh) {
      const long h0 = static_cast<long>(oh * g.stride) - static_cast<long>(g.pad);
      const long h_lo = std::max<long>(h0, 0);
      const long h_hi = std::min<long>(h0 + static_cast<long>(g.k), static_cast<long>(g.h));
      for (std::size_t ow = 0; ow < g.ow; ++ow) {
        const long w0 = static_cast<long>(ow * g.stride) - static_cast<long>(g.pad);
        const long w_lo = std::max<long>(w0, 0);
        const long w_hi = std::min<long>(w0 + static_cast<long>(g.k), static_cast<long>(g.w));
        const double inv = 1.0 / static_cast<double>((h_hi - h_lo) * (w_hi - w_lo));
        const std::size_t out = (nc * g.oh + oh) * g.ow + ow;
        for (long ih = h_lo; ih < h_hi; ++ih) {
          for (long iw = w_lo; iw < w_hi; ++iw) {
            fn(out, (nc * g.h + static_cast<std::size_t>(ih)) * g.w + static_cast<std::size_t>(iw), inv);
          }
        }
      }
    }
  }
}

// Number of elements per channel slice (everything after axis 1).
std::size_t inner_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

void check_finite_labels(const Tensor& logits, const std::vector<int>& labels) {
  if (labels.size() != logits.dim(0)) {
    shape_error(Primitive::CrossEntropy, "logits " + to_string(logits.shape()) + " vs " +
                                             std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) {
      shape_error(Primitive::CrossEntropy, "label " + std::to_string(y) + " out of range for " +
                                               to_string(logits.shape()));
    }
  }
}

Tensor make(Shape shape, std::vector<double> data) { return Tensor(std::move(shape), std::move(data)); }

Tensor forward(Primitive kind, const std::vector<Tensor>& in, const Attrs& a,
               std::vector<double>& saved) {
  switch (kind) {
    case Primitive::Leaf:
      shape_error(kind, "leaves are created with Tape::variable");
    case Primitive::MatMul: {
      expect_arity(kind, in, 2);
      expect_rank(kind, in[0], 2);
      expect_rank(kind, in[1], 2);
      const auto m = in[0].dim(0), k = in[0].dim(1), n = in[1].dim(1);
      if (in[1].dim(0) != k) mismatch(kind, in[0].shape(), in[1].shape());
      std::vector<double> out(m * n, 0.0);
      const double* A = in[0].data().data();
      const double* B = in[1].data().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
        }
      return make({m, n}, std::move(out));
    }
    case Primitive::Conv2d: {
      expect_arity(kind, in, 2);
      const auto g = conv_geom(in[0], in[1], a);
      std::vector<double> out(g.n * g.o * g.oh * g.ow, 0.0);
      conv_forward(g, in[0].data().data(), in[1].data().data(), out.data());
      return make({g.n, g.o, g.oh, g.ow}, std::move(out));
    }
    case Primitive::Relu: {
      expect_arity(kind, in, 1);
      std::vector<double> out(in[0].data().begin(), in[0].data().end());
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
      return make(in[0].shape(), std::move(out));
    }
    case Primitive::AvgPool: {
      expect_arity(kind, in, 1);
      const auto g = pool_geom(in[0], a);
      std::vector<double> out(g.n * g.c * g.oh * g.ow, 0.0);
      const double* x = in[0].data().data();
      pool_visit(g, [&](std::size_t o, std::size_t i, double inv) { out[o] += x[i] * inv; });
      return make({g.n, g.c, g.oh, g.ow}, std::move(out));
    }
    case Primitive::Add:
    case Primitive::Mul: {
      expect_arity(kind, in, 2);
      if (in[0].shape() != in[1].shape()) mismatch(kind, in[0].shape(), in[1].shape());
      std::vector<double> out(in[0].numel());
      const auto x = in[0].data(), y = in[1].data();
      if (kind == Primitive::Add) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
      } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
      }
      return make(in[0].shape(), std::move(out));
    }
    case Primitive::Scale: {
      expect_arity(kind, in, 1);
      std::vector<double> out(in[0].data().begin(), in[0].data().end());
      for (auto& v : out) v *= a.scalar;
      return make(in[0].shape(), std::move(out));
    }
    case Primitive::ScaleBy: {
      expect_arity(kind, in, 2);
      if (in[1].numel() != 1) shape_error(kind, "factor must hold one value, got " + to_string(in[1].shape()));
      const double s = in[1][0];
      std::vector<double> out(in[0].data().begin(), in[0].data().end());
      for (auto& v : out) v *= s;
      return make(in[0].shape(), std::move(out));
    }
    case Primitive::Row: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in[0], 2);
      if (a.index >= in[0].dim(0)) shape_error(kind, "row " + std::to_string(a.index) + " of " + to_string(in[0].shape()));
      const auto cols = in[0].dim(1);
      const auto d = in[0].data().subspan(a.index * cols, cols);
      return make({cols}, std::vector<double>(d.begin(), d.end()));
    }
    case Primitive::Index: {
      expect_arity(kind, in, 1);
      if (a.index >= in[0].numel()) shape_error(kind, "index " + std::to_string(a.index) + " of " + to_string(in[0].shape()));
      return make({1}, {in[0][a.index]});
    }
    case Primitive::Softmax: {
      expect_arity(kind, in, 1);
      if (in[0].shape().empty()) shape_error(kind, "softmax of a rank-0 tensor");
      const auto L = in[0].shape().back();
      std::vector<double> out(in[0].data().begin(), in[0].data().end());
      for (std::size_t r = 0; r < out.size(); r += L) {
        double mx = out[r];
        for (std::size_t j = 1; j < L; ++j) mx = std::max(mx, out[r + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          out[r + j] = std::exp(out[r + j] - mx);
          z += out[r + j];
        }
        for (std::size_t j = 0; j < L; ++j) out[r + j] /= z;
      }
      return make(in[0].shape(), std::move(out));
    }
    case Primitive::CrossEntropy: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in[0], 2);
      check_finite_labels(in[0], a.labels);
      const auto N = in[0].dim(0), K = in[0].dim(1);
      const auto x = in[0].data();
      saved.assign(N * K, 0.0);
      double loss = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        double mx = x[n * K];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, x[n * K + k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) z += std::exp(x[n * K + k] - mx);
        const double logz = std::log(z) + mx;
        for (std::size_t k = 0; k < K; ++k) saved[n * K + k] = std::exp(x[n * K + k] - logz);
        loss += logz - x[n * K + static_cast<std::size_t>(a.labels[n])];
      }
      return make({1}, {loss / static_cast<double>(N)});
    }
    case Primitive::Mse: {
      expect_arity(kind, in, 2);
      if (in[0].shape() != in[1].shape()) mismatch(kind, in[0].shape(), in[1].shape());
      const auto p = in[0].data(), t = in[1].data();
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
      return make({1}, {s / static_cast<double>(p.size())});
    }
    case Primitive::GlobalAvgPool: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in[0], 4);
      const auto N = in[0].dim(0), C = in[0].dim(1), S = in[0].dim(2) * in[0].dim(3);
      const auto x = in[0].data();
      std::vector<double> out(N * C, 0.0);
      for (std::size_t i = 0; i < N * C; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < S; ++j) s += x[i * S + j];
        out[i] = s / static_cast<double>(S);
      }
      return make({N, C}, std::move(out));
    }
    case Primitive::BiasAdd: {
      expect_arity(kind, in, 2);
      if (in[0].shape().size() < 2 || in[1].shape().size() != 1 || in[1].dim(0) != in[0].dim(1)) {
        mismatch(kind, in[0].shape(), in[1].shape());
      }
      const auto C = in[0].dim(1), S = inner_size(in[0].shape());
      const auto b = in[1].data();
      std::vector<double> out(in[0].data().begin(), in[0].data().end());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[(i / S) % C];
      return make(in[0].shape(), std::move(out));
    }
    case Primitive::BatchNorm: {
      expect_arity(kind, in, 1);
      if (in[0].shape().size() < 2) shape_error(kind, "expected rank >= 2, got " + to_string(in[0].shape()));
      const auto N = in[0].dim(0), C = in[0].dim(1), S = inner_size(in[0].shape());
      const auto x = in[0].data();
      const double M = static_cast<double>(N * S);
      // saved: per-channel inverse std followed by the normalized values
      saved.assign(C + x.size(), 0.0);
      std::vector<double> out(x.size());
      for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < S; ++s) mean += x[(n * C + c) * S + s];
        mean /= M;
        double var = 0.0;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < S; ++s) {
            const double d = x[(n * C + c) * S + s] - mean;
            var += d * d;
          }
        var /= M;
        const double inv = 1.0 / std::sqrt(var + a.eps);
        saved[c] = inv;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < S; ++s) {
            const auto i = (n * C + c) * S + s;
            out[i] = (x[i] - mean) * inv;
            saved[C + i] = out[i];
          }
      }
      return make(in[0].shape(), std::move(out));
    }
    case Primitive::Concat: {
      if (in.empty()) shape_error(kind, "no inputs");
      for (const auto& t : in) {
        if (!t.defined()) shape_error(kind, "undefined input tensor");
        if (t.shape().size() < 2 || t.dim(0) != in[0].dim(0) || inner_size(t.shape()) != inner_size(in[0].shape()) ||
            t.shape().size() != in[0].shape().size()) {
          mismatch(kind, in[0].shape(), t.shape());
        }
        for (std::size_t ax = 2; ax < t.shape().size(); ++ax)
          if (t.dim(ax) != in[0].dim(ax)) mismatch(kind, in[0].shape(), t.shape());
      }
      const auto N = in[0].dim(0), S = inner_size(in[0].shape());
      std::size_t C = 0;
      for (const auto& t : in) C += t.dim(1);
      std::vector<double> out(N * C * S);
      std::size_t c0 = 0;
      for (const auto& t : in) {
        const auto Ci = t.dim(1);
        const auto d = t.data();
        for (std::size_t n = 0; n < N; ++n)
          std::copy_n(d.data() + n * Ci * S, Ci * S, out.data() + (n * C + c0) * S);
        c0 += Ci;
      }
      Shape shape = in[0].shape();
      shape[1] = C;
      return make(std::move(shape), std::move(out));
    }
    case Primitive::Sum: {
      expect_arity(kind, in, 1);
      double s = 0.0;
      for (double v : in[0].data()) s += v;
      return make({1}, {s});
    }
  }
  throw std::invalid_argument("unknown primitive");
}

// gin[i] is null when input i needs no gradient.
void backward_rule(Primitive kind, const std::vector<Tensor>& in, const Tensor& out, const Attrs& a,
              const std::vector<double>& saved, std::span<const double> g,
              const std::vector<std::vector<double>*>& gin) {
  auto acc = [](std::vector<double>* dst, std::size_t i, double v) { (*dst)[i] += v; };
  switch (kind) {
    case Primitive::Leaf:
      return;
    case Primitive::MatMul: {
      const auto m = in[0].dim(0), k = in[0].dim(1), n = in[1].dim(1);
      const auto A = in[0].data(), B = in[1].data();
      if (gin[0])
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B[p * n + j];
            acc(gin[0], i * k + p, s);
          }
      if (gin[1])
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) acc(gin[1], p * n + j, av * g[i * n + j]);
          }
      return;
    }
    case Primitive::Conv2d: {
      const auto geom = conv_geom(in[0], in[1], a);
      conv_backward(geom, in[0].data().data(), in[1].data().data(), g.data(),
                    gin[0] ? gin[0]->data() : nullptr, gin[1] ? gin[1]->data() : nullptr);
      return;
    }
    case Primitive::Relu: {
      const auto x = in[0].data();
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0.0) acc(gin[0], i, g[i]);
      return;
    }
    case Primitive::AvgPool: {
      const auto geom = pool_geom(in[0], a);
      auto* dst = gin[0];
      pool_visit(geom, [&](std::size_t o, std::size_t i, double inv) { (*dst)[i] += g[o] * inv; });
      return;
    }
    case Primitive::Add:
      for (int s = 0; s < 2; ++s)
        if (gin[s])
          for (std::size_t i = 0; i < g.size(); ++i) acc(gin[s], i, g[i]);
      return;
    case Primitive::Mul: {
      const auto x = in[0].data(), y = in[1].data();
      if (gin[0])
        for (std::size_t i = 0; i < g.size(); ++i) acc(gin[0], i, g[i] * y[i]);
      if (gin[1])
        for (std::size_t i = 0; i < g.size(); ++i) acc(gin[1], i, g[i] * x[i]);
      return;
    }
    case Primitive::Scale:
      for (std::size_t i = 0; i < g.size(); ++i) acc(gin[0], i, g[i] * a.scalar);
      return;
    case Primitive::ScaleBy: {
      const double s = in[1][0];
      if (gin[0])
        for (std::size_t i = 0; i < g.size(); ++i) acc(gin[0], i, g[i] * s);
      if (gin[1]) {
        const auto x = in[0].data();
        double d = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) d += g[i] * x[i];
        acc(gin[1], 0, d);
      }
      return;
    }
    case Primitive::Row: {
      const auto cols = in[0].dim(1);
      for (std::size_t j = 0; j < cols; ++j) acc(gin[0], a.index * cols + j, g[j]);
      return;
    }
    case Primitive::Index:
      acc(gin[0], a.index, g[0]);
      return;
    case Primitive::Softmax: {
      const auto L = in[0].shape().back();
      const auto y = out.data();
      for (std::size_t r = 0; r < y.size(); r += L) {
        double dot = 0.0;
        for (std::size_t j = 0; j < L; ++j) dot += g[r + j] * y[r + j];
        for (std::size_t j = 0; j < L; ++j) acc(gin[0], r + j, y[r + j] * (g[r + j] - dot));
      }
      return;
    }
    case Primitive::CrossEntropy: {
      const auto N = in[0].dim(0), K = in[0].dim(1);
      const double scale = g[0] / static_cast<double>(N);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
          const double onehot = static_cast<std::size_t>(a.labels[n]) == k ? 1.0 : 0.0;
          acc(gin[0], n * K + k, scale * (saved[n * K + k] - onehot));
        }
      return;
    }
    case Primitive::Mse: {
      const auto p = in[0].data(), t = in[1].data();
      const double scale = 2.0 * g[0] / static_cast<double>(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = scale * (p[i] - t[i]);
        if (gin[0]) acc(gin[0], i, d);
        if (gin[1]) acc(gin[1], i, -d);
      }
      return;
    }
    case Primitive::GlobalAvgPool: {
      const auto NC = in[0].dim(0) * in[0].dim(1), S = in[0].dim(2) * in[0].dim(3);
      for (std::size_t i = 0; i < NC; ++i) {
        const double v = g[i] / static_cast<double>(S);
        for (std::size_t j = 0; j < S; ++j) acc(gin[0], i * S + j, v);
      }
      return;
    }
    case Primitive::BiasAdd: {
      const auto C = in[0].dim(1), S = inner_size(in[0].shape());
      if (gin[0])
        for (std::size_t i = 0; i < g.size(); ++i) acc(gin[0], i, g[i]);
      if (gin[1])
        for (std::size_t i = 0; i < g.size(); ++i) acc(gin[1], (i / S) % C, g[i]);
      return;
    }
    case Primitive::BatchNorm: {
      const auto N = in[0].dim(0), C = in[0].dim(1), S = inner_size(in[0].shape());
      const double M = static_cast<double>(N * S);
      const double* xhat = saved.data() + C;
      for (std::size_t c = 0; c < C; ++c) {
        double sg = 0.0, sgx = 0.0;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < S; ++s) {
            const auto i = (n * C + c) * S + s;
            sg += g[i];
            sgx += g[i] * xhat[i];
          }
        const double inv = saved[c];
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t s = 0; s < S; ++s) {
            const auto i = (n * C + c) * S + s;
            acc(gin[0], i, inv * (g[i] - sg / M - xhat[i] * sgx / M));
          }
      }
      return;
    }
    case Primitive::Concat: {
      const auto N = in[0].dim(0), S = inner_size(in[0].shape()), C = out.dim(1);
      std::size_t c0 = 0;
      for (std::size_t t = 0; t < in.size(); ++t) {
        const auto Ci = in[t].dim(1);
        if (gin[t])
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < Ci * S; ++j) acc(gin[t], n * Ci * S + j, g[(n * C + c0) * S + j]);
        c0 += Ci;
      }
      return;
    }
    case Primitive::Sum:
      for (std::size_t i = 0; i < gin[0]->size(); ++i) acc(gin[0], i, g[0]);
      return;
  }
}

}  // namespace

std::string_view primitive_name(Primitive kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "?";
}

Primitive primitive_from_name(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name && k != Primitive::Leaf) return k;
  throw std::invalid_argument("unknown primitive '" + std::string(name) + "'");
}

Tensor Gradients::of(const Tensor& t) const {
  const auto r = raw(t);
  if (r.empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), std::vector<double>(r.begin(), r.end()));
}

std::span<const double> Gradients::raw(const Tensor& t) const {
  if (t.tape() != tape_ || tape_ == nullptr || t.tape_id() >= grads_.size()) return {};
  const auto& g = grads_[t.tape_id()];
  return {g.data(), g.size()};
}

Tensor Tape::variable(const Tensor& value) {
  if (!value.defined()) throw std::invalid_argument("variable(): undefined tensor");
  Node node;
  node.kind = Primitive::Leaf;
  node.output = value.detach();
  node.output.requires_grad_ = true;
  node.output.tape_ = this;
  node.output.node_ = nodes_.size();
  nodes_.push_back(node);
  return nodes_.back().output;
}

Tensor Tape::apply(std::string_view kind, std::vector<Tensor> inputs, const Attrs& attrs) {
  return apply(primitive_from_name(kind), std::move(inputs), attrs);
}

Tensor Tape::apply(Primitive kind, std::vector<Tensor> inputs, const Attrs& attrs) {
  bool record = false;
  for (const auto& t : inputs) {
    if (t.on_tape() && t.tape() != this) {
      throw std::invalid_argument(std::string(primitive_name(kind)) + ": input belongs to another tape");
    }
    record = record || (t.requires_grad() && t.on_tape());
  }
  std::vector<double> saved;
  Tensor out = forward(kind, inputs, attrs, saved);
  if (!record) return out;
  out.requires_grad_ = true;
  out.tape_ = this;
  out.node_ = nodes_.size();
  Node node;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.output = out;
  node.attrs = attrs;
  node.saved = std::move(saved);
  nodes_.push_back(std::move(node));
  return out;
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.numel() != 1) throw ShapeError("backward(): loss must be scalar, got " + to_string(loss.shape()));
  if (nodes_.empty()) throw std::logic_error("backward(): tape is empty");
  if (!loss.on_tape() || loss.tape() != this) throw std::logic_error("backward(): loss is not recorded on this tape");
  Gradients out;
  out.tape_ = this;
  out.grads_.resize(nodes_.size());
  out.grads_[loss.tape_id()].assign(1, 1.0);
  std::vector<std::vector<double>*> gin;
  for (std::size_t idx = loss.tape_id() + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    auto& g = out.grads_[idx];
    if (g.empty() || node.kind == Primitive::Leaf) continue;
    gin.assign(node.inputs.size(), nullptr);
    bool any = false;
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const auto& t = node.inputs[i];
      if (!t.on_tape() || !t.requires_grad()) continue;
      auto& dst = out.grads_[t.tape_id()];
      if (dst.empty()) dst.assign(t.numel(), 0.0);
      gin[i] = &dst;
      any = true;
    }
    if (any) backward_rule(node.kind, node.inputs, node.output, node.attrs, node.saved, g, gin);
  }
  // Fill unreached leaves with zeros so every variable has a gradient.
  for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
    if (out.grads_[idx].empty() && nodes_[idx].kind == Primitive::Leaf) {
      out.grads_[idx].assign(nodes_[idx].output.numel(), 0.0);
    }
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) { return apply(Primitive::MatMul, {a, b}); }

Tensor Tape::conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  Attrs at;
  at.stride = stride;
  at.padding = padding;
  return apply(Primitive::Conv2d, {x, w}, at);
}

Tensor Tape::relu(const Tensor& x) { return apply(Primitive::Relu, {x}); }

Tensor Tape::avg_pool(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  Attrs at;
  at.kernel = kernel;
  at.stride = stride;
  at.padding = padding;
  return apply(Primitive::AvgPool, {x}, at);
}

Tensor Tape::add(const Tensor& a, const Tensor& b) { return apply(Primitive::Add, {a, b}); }
Tensor Tape::mul(const Tensor& a, const Tensor& b) { return apply(Primitive::Mul, {a, b}); }

Tensor Tape::scale(const Tensor& x, double factor) {
  Attrs at;
  at.scalar = factor;
  return apply(Primitive::Scale, {x}, at);
}

Tensor Tape::scale_by(const Tensor& x, const Tensor& factor) { return apply(Primitive::ScaleBy, {x, factor}); }

Tensor Tape::row(const Tensor& m, std::size_t r) {
  Attrs at;
  at.index = r;
  return apply(Primitive::Row, {m}, at);
}

Tensor Tape::index(const Tensor& v, std::size_t i) {
  Attrs at;
  at.index = i;
  return apply(Primitive::Index, {v}, at);
}

Tensor Tape::softmax(const Tensor& x) { return apply(Primitive::Softmax, {x}); }

Tensor Tape::cross_entropy(const Tensor& logits, std::vector<int> labels) {
  Attrs at;
  at.labels = std::move(labels);
  return apply(Primitive::CrossEntropy, {logits}, at);
}

Tensor Tape::mse(const Tensor& pred, const Tensor& target) { return apply(Primitive::Mse, {pred, target}); }
Tensor Tape::global_avg_pool(const Tensor& x) { return apply(Primitive::GlobalAvgPool, {x}); }
Tensor Tape::bias_add(const Tensor& x, const Tensor& bias) { return apply(Primitive::BiasAdd, {x, bias}); }

Tensor Tape::batch_norm(const Tensor& x, double eps) {
  Attrs at;
  at.eps = eps;
  return apply(Primitive::BatchNorm, {x}, at);
}

Tensor Tape::concat(std::vector<Tensor> parts) { return apply(Primitive::Concat, std::move(parts)); }
Tensor Tape::sum(const Tensor& x) { return apply(Primitive::Sum, {x}); }

double grad_check(const ScalarFn& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  Tape tape;
  const Tensor x = tape.variable(point);
  const Tensor y = f(tape, x);
  if (y.numel() != 1) throw ShapeError("grad_check: function must return a scalar, got " + to_string(y.shape()));
  if (!std::isfinite(y.item())) throw std::domain_error("grad_check: non-finite function value");
  std::vector<double> analytic;
  if (y.on_tape()) {
    const auto g = tape.backward(y);
    const auto r = g.raw(x);
    analytic.assign(r.begin(), r.end());
  } else {
    analytic.assign(point.numel(), 0.0);
  }

  auto eval = [&](const Tensor& p) {
    Tape t;
    const double v = f(t, p).item();
    if (!std::isfinite(v)) throw std::domain_error("grad_check: non-finite function value");
    return v;
  };
  double worst = 0.0;
  Tensor probe = point.detach();
  for (std::size_t i = 0; i < point.numel(); ++i) {
    const double orig = point[i];
    probe.mutable_data()[i] = orig + step;
    const double fp = eval(probe);
    probe.mutable_data()[i] = orig - step;
    const double fm = eval(probe);
    probe.mutable_data()[i] = orig;
    const double fd = (fp - fm) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace auxskip::ad
