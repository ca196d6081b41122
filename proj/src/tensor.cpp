// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#include "nqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace nqa {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::vector<real_t>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), real_t{0});
  return grad;
}

namespace {

void check_finite(const std::vector<real_t>& values, const char* op) {
  for (real_t v : values) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string("non-finite value produced by ") + op);
    }
  }
}

// Builds the output node. History is kept only when some input needs it.
Tensor make_result(Shape shape, std::vector<real_t> value,
                   std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward_fn, const char* op) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                    [](const NodePtr& n) { return n->requires_grad; });
  if (node->requires_grad) {
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

const NodePtr& require(const Tensor& t, const char* what) {
  if (!t.defined()) throw TensorError(std::string(what) + ": undefined tensor");
  return t.node();
}

void expect_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw TensorError(std::string(op) + ": expected rank " + std::to_string(rank) +
                      ", got " + shape_string(t.shape()));
  }
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                      " vs " + shape_string(b.shape()));
  }
}

double sigmoid_of(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<real_t> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw TensorError("tensor shape " + shape_string(shape) + " does not match " +
                      std::to_string(values.size()) + " values");
  }
  check_finite(values, "leaf");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), real_t{0}, requires_grad);
}

Tensor Tensor::full(Shape shape, real_t value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<real_t>(n, value), requires_grad);
}

Tensor Tensor::scalar(real_t value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return require(*this, "shape")->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw TensorError("axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return require(*this, "numel")->value.size(); }

std::span<const real_t> Tensor::values() const { return require(*this, "values")->value; }

std::span<const real_t> Tensor::grad() const { return require(*this, "grad")->grad; }

real_t Tensor::at(std::size_t flat_index) const {
  const auto& v = require(*this, "at")->value;
  if (flat_index >= v.size()) throw TensorError("index out of range");
  return v[flat_index];
}

real_t Tensor::item() const {
  if (numel() != 1) throw TensorError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return require(*this, "requires_grad")->requires_grad; }

const char* Tensor::op() const { return require(*this, "op")->op; }

void Tensor::backward() const {
  const NodePtr& root = require(*this, "backward");
  if (root->value.size() != 1) {
    throw TensorError("backward() requires a scalar, got " + shape_string(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS; each node appears once in `order`.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += real_t{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

Tensor Tensor::detach() const {
  const NodePtr& n = require(*this, "detach");
  return Tensor(n->shape, n->value, false);
}

Tensor Tensor::reshape(Shape new_shape) const {
  const NodePtr& a = require(*this, "reshape");
  if (shape_numel(new_shape) != a->value.size()) {
    throw TensorError("reshape " + shape_string(a->shape) + " -> " + shape_string(new_shape));
  }
  return make_result(std::move(new_shape), a->value, {a},
                     [](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     },
                     "reshape");
}

// --- Linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const NodePtr& an = require(a, "matmul");
  const NodePtr& bn = require(b, "matmul");
  expect_rank(a, 2, "matmul");
  expect_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw TensorError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                      shape_string(b.shape()));
  }
  std::vector<real_t> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += double(an->value[i * k + p]) * bn->value[p * n + j];
      out[i * n + j] = real_t(acc);
    }
  }
  return make_result({m, n}, std::move(out), {an, bn},
                     [m, k, n](Node& self) {
                       Node& A = *self.inputs[0];
                       Node& B = *self.inputs[1];
                       if (A.requires_grad) {
                         auto& ga = A.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j)
                               acc += double(self.grad[i * n + j]) * B.value[p * n + j];
                             ga[i * k + p] += real_t(acc);
                           }
                       }
                       if (B.requires_grad) {
                         auto& gb = B.grad_buffer();
                         for (std::size_t p = 0; p < k; ++p)
                           for (std::size_t j = 0; j < n; ++j) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < m; ++i)
                               acc += double(A.value[i * k + p]) * self.grad[i * n + j];
                             gb[p * n + j] += real_t(acc);
                           }
                       }
                     },
                     "matmul");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const NodePtr& xn = require(x, "linear");
  const NodePtr& wn = require(weight, "linear");
  const NodePtr& bn = require(bias, "linear");
  expect_rank(weight, 2, "linear");
  const std::size_t n = weight.dim(0), k = weight.dim(1);
  if (bias.numel() != n) throw TensorError("linear: bias length mismatch");
  const bool batched = x.rank() == 2;
  if (!(x.rank() == 1 || batched) || x.shape().back() != k) {
    throw TensorError("linear: input " + shape_string(x.shape()) + " vs weight " +
                      shape_string(weight.shape()));
  }
  const std::size_t m = batched ? x.dim(0) : 1;
  std::vector<real_t> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const real_t* row = xn->value.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const real_t* w = wn->value.data() + j * k;
      double acc = bn->value[j];
      for (std::size_t p = 0; p < k; ++p) acc += double(row[p]) * w[p];
      out[i * n + j] = real_t(acc);
    }
  }
  Shape shape = batched ? Shape{m, n} : Shape{n};
  return make_result(std::move(shape), std::move(out), {xn, wn, bn},
                     [m, n, k](Node& self) {
                       Node& X = *self.inputs[0];
                       Node& W = *self.inputs[1];
                       Node& B = *self.inputs[2];
                       if (X.requires_grad) {
                         auto& gx = X.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j)
                               acc += double(self.grad[i * n + j]) * W.value[j * k + p];
                             gx[i * k + p] += real_t(acc);
                           }
                       }
                       if (W.requires_grad) {
                         auto& gw = W.grad_buffer();
                         for (std::size_t j = 0; j < n; ++j)
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < m; ++i)
                               acc += double(self.grad[i * n + j]) * X.value[i * k + p];
                             gw[j * k + p] += real_t(acc);
                           }
                       }
                       if (B.requires_grad) {
                         auto& gb = B.grad_buffer();
                         for (std::size_t j = 0; j < n; ++j) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < m; ++i) acc += self.grad[i * n + j];
                           gb[j] += real_t(acc);
                         }
                       }
                     },
                     "linear");
}

// --- Elementwise ------------------------------------------------------------

namespace {

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                          GradA grad_a, GradB grad_b) {
  const NodePtr& an = require(a, op);
  const NodePtr& bn = require(b, op);
  expect_same_shape(a, b, op);
  std::vector<real_t> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = real_t(fwd(an->value[i], bn->value[i]));
  return make_result(a.shape(), std::move(out), {an, bn},
                     [grad_a, grad_b](Node& self) {
                       Node& A = *self.inputs[0];
                       Node& B = *self.inputs[1];
                       if (A.requires_grad) {
                         auto& g = A.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += real_t(self.grad[i] * grad_a(A.value[i], B.value[i]));
                       }
                       if (B.requires_grad) {
                         auto& g = B.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += real_t(self.grad[i] * grad_b(A.value[i], B.value[i]));
                       }
                     },
                     op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, real_t factor) {
  const NodePtr& an = require(a, "scale");
  std::vector<real_t> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * factor;
  return make_result(a.shape(), std::move(out), {an},
                     [factor](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
                     },
                     "scale");
}

Tensor add_scalar(const Tensor& a, real_t offset) {
  const NodePtr& an = require(a, "add_scalar");
  std::vector<real_t> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] + offset;
  return make_result(a.shape(), std::move(out), {an},
                     [](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     },
                     "add_scalar");
}

Tensor activation(const Tensor& x, Activation kind) {
  const NodePtr& xn = require(x, "activation");
  std::vector<real_t> out(xn->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xn->value[i];
    switch (kind) {
      case Activation::kRelu: out[i] = real_t(v > 0 ? v : 0.0); break;
      case Activation::kSigmoid: out[i] = real_t(sigmoid_of(v)); break;
      case Activation::kSilu: out[i] = real_t(v * sigmoid_of(v)); break;
    }
  }
  const char* name = kind == Activation::kRelu      ? "relu"
                     : kind == Activation::kSigmoid ? "sigmoid"
                                                    : "silu";
  return make_result(x.shape(), std::move(out), {xn},
                     [kind](Node& self) {
                       Node& X = *self.inputs[0];
                       auto& g = X.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double v = X.value[i];
                         double d = 0.0;
                         switch (kind) {
                           case Activation::kRelu: d = v > 0 ? 1.0 : 0.0; break;
                           case Activation::kSigmoid: {
                             const double s = sigmoid_of(v);
                             d = s * (1.0 - s);
                             break;
                           }
                           case Activation::kSilu: {
                             const double s = sigmoid_of(v);
                             d = s * (1.0 + v * (1.0 - s));
                             break;
                           }
                         }
                         g[i] += real_t(self.grad[i] * d);
                       }
                     },
                     name);
}

// --- Convolutions -----------------------------------------------------------

Tensor conv1d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  return conv1d(input, kernel, Tensor(), stride, padding, 1);
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int padding, int groups) {
  const NodePtr& in = require(input, "conv1d");
  const NodePtr& kn = require(kernel, "conv1d");
  expect_rank(input, 2, "conv1d input");
  expect_rank(kernel, 3, "conv1d kernel");
  if (stride < 1 || padding < 0 || groups < 1) throw TensorError("conv1d: bad stride/padding/groups");
  const long c_in = long(input.dim(0)), len = long(input.dim(1));
  const long c_out = long(kernel.dim(0)), c_per_group = long(kernel.dim(1)), k = long(kernel.dim(2));
  if (c_in % groups != 0 || c_out % groups != 0 || c_per_group != c_in / groups) {
    throw TensorError("conv1d: channel/group mismatch " + shape_string(input.shape()) + " vs " +
                      shape_string(kernel.shape()));
  }
  if (k > len + 2 * padding) {
    throw TensorError("conv1d: kernel " + std::to_string(k) + " larger than padded input " +
                      std::to_string(len + 2 * padding));
  }
  const bool has_bias = bias.defined();
  if (has_bias && long(bias.numel()) != c_out) throw TensorError("conv1d: bias length mismatch");
  const long out_len = (len + 2 * padding - k) / stride + 1;
  const long out_per_group = c_out / groups;

  std::vector<real_t> out(std::size_t(c_out * out_len));
  for (long co = 0; co < c_out; ++co) {
    const long g = co / out_per_group;
    for (long o = 0; o < out_len; ++o) {
      double acc = has_bias ? bias.node()->value[std::size_t(co)] : 0.0;
      for (long ci = 0; ci < c_per_group; ++ci) {
        const real_t* x = in->value.data() + (g * c_per_group + ci) * len;
        const real_t* w = kn->value.data() + (co * c_per_group + ci) * k;
        for (long t = 0; t < k; ++t) {
          const long pos = o * stride - padding + t;
          if (pos >= 0 && pos < len) acc += double(x[pos]) * w[t];
        }
      }
      out[std::size_t(co * out_len + o)] = real_t(acc);
    }
  }
  std::vector<NodePtr> inputs{in, kn};
  if (has_bias) inputs.push_back(bias.node());
  return make_result(
      {std::size_t(c_out), std::size_t(out_len)}, std::move(out), std::move(inputs),
      [=](Node& self) {
        Node& X = *self.inputs[0];
        Node& K = *self.inputs[1];
        real_t* gx = X.requires_grad ? X.grad_buffer().data() : nullptr;
        real_t* gk = K.requires_grad ? K.grad_buffer().data() : nullptr;
        for (long co = 0; co < c_out; ++co) {
          const long g = co / out_per_group;
          for (long ci = 0; ci < c_per_group; ++ci) {
            const long xc = g * c_per_group + ci;
            for (long t = 0; t < k; ++t) {
              const real_t w = K.value[std::size_t((co * c_per_group + ci) * k + t)];
              double wacc = 0.0;
              for (long o = 0; o < out_len; ++o) {
                const long pos = o * stride - padding + t;
                if (pos < 0 || pos >= len) continue;
                const double go = self.grad[std::size_t(co * out_len + o)];
                if (gx) gx[xc * len + pos] += real_t(go * w);
                wacc += go * X.value[std::size_t(xc * len + pos)];
              }
              if (gk) gk[(co * c_per_group + ci) * k + t] += real_t(wacc);
            }
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& gb = self.inputs[2]->grad_buffer();
          for (long co = 0; co < c_out; ++co) {
            double acc = 0.0;
            for (long o = 0; o < out_len; ++o) acc += self.grad[std::size_t(co * out_len + o)];
            gb[std::size_t(co)] += real_t(acc);
          }
        }
      },
      "conv1d");
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
  return conv3d(input, kernel, Tensor(), {stride, stride, stride}, {padding, padding, padding});
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::array<int, 3> stride, std::array<int, 3> padding) {
  const NodePtr& in = require(input, "conv3d");
  const NodePtr& kn = require(kernel, "conv3d");
  expect_rank(input, 4, "conv3d input");
  expect_rank(kernel, 5, "conv3d kernel");
  const long c_in = long(input.dim(0));
  const std::array<long, 3> size{long(input.dim(1)), long(input.dim(2)), long(input.dim(3))};
  const long c_out = long(kernel.dim(0));
  const std::array<long, 3> ks{long(kernel.dim(2)), long(kernel.dim(3)), long(kernel.dim(4))};
  if (long(kernel.dim(1)) != c_in) {
    throw TensorError("conv3d: channel mismatch " + shape_string(input.shape()) + " vs " +
                      shape_string(kernel.shape()));
  }
  std::array<long, 3> out_size{};
  for (int d = 0; d < 3; ++d) {
    if (stride[d] < 1 || padding[d] < 0) throw TensorError("conv3d: bad stride/padding");
    if (ks[d] > size[d] + 2 * padding[d]) {
      throw TensorError("conv3d: kernel larger than padded input along axis " + std::to_string(d));
    }
    out_size[d] = (size[d] + 2 * padding[d] - ks[d]) / stride[d] + 1;
  }
  const bool has_bias = bias.defined();
  if (has_bias && long(bias.numel()) != c_out) throw TensorError("conv3d: bias length mismatch");

  const long in_plane = size[0] * size[1] * size[2];
  const long out_plane = out_size[0] * out_size[1] * out_size[2];
  const long k_vol = ks[0] * ks[1] * ks[2];

  // Visits every (output position, kernel tap) pair that lands inside the input.
  auto for_each_tap = [=](auto&& fn) {
    for (long od = 0; od < out_size[0]; ++od)
      for (long kd = 0; kd < ks[0]; ++kd) {
        const long id = od * stride[0] - padding[0] + kd;
        if (id < 0 || id >= size[0]) continue;
        for (long oh = 0; oh < out_size[1]; ++oh)
          for (long kh = 0; kh < ks[1]; ++kh) {
            const long ih = oh * stride[1] - padding[1] + kh;
            if (ih < 0 || ih >= size[1]) continue;
            for (long ow = 0; ow < out_size[2]; ++ow)
              for (long kw = 0; kw < ks[2]; ++kw) {
                const long iw = ow * stride[2] - padding[2] + kw;
                if (iw < 0 || iw >= size[2]) continue;
                fn((od * out_size[1] + oh) * out_size[2] + ow,
                   (id * size[1] + ih) * size[2] + iw, (kd * ks[1] + kh) * ks[2] + kw);
              }
          }
      }
  };

  std::vector<double> acc(std::size_t(c_out * out_plane), 0.0);
  for (long co = 0; co < c_out; ++co) {
    double* a = acc.data() + co * out_plane;
    if (has_bias) std::fill(a, a + out_plane, double(bias.node()->value[std::size_t(co)]));
    for (long ci = 0; ci < c_in; ++ci) {
      const real_t* x = in->value.data() + ci * in_plane;
      const real_t* w = kn->value.data() + (co * c_in + ci) * k_vol;
      for_each_tap([&](long o, long i, long t) { a[o] += double(x[i]) * w[t]; });
    }
  }
  std::vector<real_t> out(acc.begin(), acc.end());

  std::vector<NodePtr> inputs{in, kn};
  if (has_bias) inputs.push_back(bias.node());
  return make_result(
      {std::size_t(c_out), std::size_t(out_size[0]), std::size_t(out_size[1]),
       std::size_t(out_size[2])},
      std::move(out), std::move(inputs),
      [=](Node& self) {
        Node& X = *self.inputs[0];
        Node& K = *self.inputs[1];
        real_t* gx = X.requires_grad ? X.grad_buffer().data() : nullptr;
        real_t* gk = K.requires_grad ? K.grad_buffer().data() : nullptr;
        std::vector<double> gx_acc(gx ? X.value.size() : 0, 0.0);
        std::vector<double> gk_acc(static_cast<std::size_t>(k_vol));
        for (long co = 0; co < c_out; ++co) {
          const real_t* go = self.grad.data() + co * out_plane;
          for (long ci = 0; ci < c_in; ++ci) {
            const real_t* x = X.value.data() + ci * in_plane;
            const real_t* w = K.value.data() + (co * c_in + ci) * k_vol;
            double* gxc = gx ? gx_acc.data() + ci * in_plane : nullptr;
            std::fill(gk_acc.begin(), gk_acc.end(), 0.0);
            for_each_tap([&](long o, long i, long t) {
              const double g = go[o];
              if (gxc) gxc[i] += g * w[t];
              gk_acc[std::size_t(t)] += g * x[i];
            });
            if (gk) {
              real_t* gkc = gk + (co * c_in + ci) * k_vol;
              for (long t = 0; t < k_vol; ++t) gkc[t] += real_t(gk_acc[std::size_t(t)]);
            }
          }
        }
        if (gx) {
          for (std::size_t i = 0; i < gx_acc.size(); ++i) gx[i] += real_t(gx_acc[i]);
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& gb = self.inputs[2]->grad_buffer();
          for (long co = 0; co < c_out; ++co) {
            double s = 0.0;
            for (long o = 0; o < out_plane; ++o) s += self.grad[std::size_t(co * out_plane + o)];
            gb[std::size_t(co)] += real_t(s);
          }
        }
      },
      "conv3d");
}

// --- Pooling and reshaping --------------------------------------------------

Tensor max_pool_global(const Tensor& x) {
  const NodePtr& xn = require(x, "max_pool_global");
  expect_rank(x, 2, "max_pool_global");
  const std::size_t channels = x.dim(0), len = x.dim(1);
  if (len == 0) throw TensorError("max_pool_global: empty length axis");
  std::vector<real_t> out(channels);
  std::vector<std::size_t> argmax(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const real_t* row = xn->value.data() + c * len;
    std::size_t best = 0;
    for (std::size_t i = 1; i < len; ++i) {
      if (row[i] > row[best]) best = i;
    }
    argmax[c] = c * len + best;
    out[c] = row[best];
  }
  return make_result({channels}, std::move(out), {xn},
                     [argmax = std::move(argmax)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t c = 0; c < argmax.size(); ++c) g[argmax[c]] += self.grad[c];
                     },
                     "max_pool_global");
}

Tensor max_pool_pairs(const Tensor& x) {
  const NodePtr& xn = require(x, "max_pool_pairs");
  expect_rank(x, 2, "max_pool_pairs");
  const std::size_t channels = x.dim(0), len = x.dim(1);
  if (len == 0) throw TensorError("max_pool_pairs: empty length axis");
  const std::size_t out_len = (len + 1) / 2;
  std::vector<real_t> out(channels * out_len);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t o = 0; o < out_len; ++o) {
      std::size_t best = c * len + 2 * o;
      if (2 * o + 1 < len && xn->value[best + 1] > xn->value[best]) ++best;
      argmax[c * out_len + o] = best;
      out[c * out_len + o] = xn->value[best];
    }
  }
  return make_result({channels, out_len}, std::move(out), {xn},
                     [argmax = std::move(argmax)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += self.grad[i];
                     },
                     "max_pool_pairs");
}

Tensor mean_over_length(const Tensor& x) {
  const NodePtr& xn = require(x, "mean_over_length");
  expect_rank(x, 2, "mean_over_length");
  const std::size_t channels = x.dim(0), len = x.dim(1);
  if (len == 0) throw TensorError("mean_over_length: empty length axis");
  std::vector<real_t> out(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += xn->value[c * len + i];
    out[c] = real_t(acc / double(len));
  }
  return make_result({channels}, std::move(out), {xn},
                     [channels, len](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t c = 0; c < channels; ++c) {
                         const double share = double(self.grad[c]) / double(len);
                         for (std::size_t i = 0; i < len; ++i) g[c * len + i] += real_t(share);
                       }
                     },
                     "mean_over_length");
}

Tensor scale_channels(const Tensor& x, const Tensor& gates) {
  const NodePtr& xn = require(x, "scale_channels");
  const NodePtr& gn = require(gates, "scale_channels");
  expect_rank(x, 2, "scale_channels");
  const std::size_t channels = x.dim(0), len = x.dim(1);
  if (gates.numel() != channels) throw TensorError("scale_channels: gate count mismatch");
  std::vector<real_t> out(xn->value.size());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < len; ++i)
      out[c * len + i] = real_t(double(xn->value[c * len + i]) * gn->value[c]);
  return make_result(x.shape(), std::move(out), {xn, gn},
                     [channels, len](Node& self) {
                       Node& X = *self.inputs[0];
                       Node& G = *self.inputs[1];
                       if (X.requires_grad) {
                         auto& gx = X.grad_buffer();
                         for (std::size_t c = 0; c < channels; ++c)
                           for (std::size_t i = 0; i < len; ++i)
                             gx[c * len + i] += real_t(double(self.grad[c * len + i]) * G.value[c]);
                       }
                       if (G.requires_grad) {
                         auto& gg = G.grad_buffer();
                         for (std::size_t c = 0; c < channels; ++c) {
                           double acc = 0.0;
                           for (std::size_t i = 0; i < len; ++i)
                             acc += double(self.grad[c * len + i]) * X.value[c * len + i];
                           gg[c] += real_t(acc);
                         }
                       }
                     },
                     "scale_channels");
}

Tensor transpose(const Tensor& x) {
  const NodePtr& xn = require(x, "transpose");
  expect_rank(x, 2, "transpose");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<real_t> out(xn->value.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = xn->value[r * cols + c];
  return make_result({cols, rows}, std::move(out), {xn},
                     [rows, cols](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
                     },
                     "transpose");
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat: no inputs");
  std::vector<NodePtr> inputs;
  std::vector<real_t> out;
  for (const Tensor& p : parts) {
    inputs.push_back(require(p, "concat"));
    out.insert(out.end(), p.node()->value.begin(), p.node()->value.end());
  }
  const std::size_t total = out.size();
  return make_result({total}, std::move(out), std::move(inputs),
                     [](Node& self) {
                       std::size_t offset = 0;
                       for (auto& in : self.inputs) {
                         const std::size_t n = in->value.size();
                         if (in->requires_grad) {
                           auto& g = in->grad_buffer();
                           for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
                         }
                         offset += n;
                       }
                     },
                     "concat");
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw TensorError("stack_rows: no inputs");
  const std::size_t width = rows.front().numel();
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.numel() != width) throw TensorError("stack_rows: ragged rows");
  }
  Tensor flat = concat(rows);
  return flat.reshape({rows.size(), width});
}

Tensor permute4(const Tensor& x, std::array<int, 4> perm) {
  const NodePtr& xn = require(x, "permute4");
  expect_rank(x, 4, "permute4");
  std::array<std::size_t, 4> in_dims{x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  std::array<std::size_t, 4> in_strides{in_dims[1] * in_dims[2] * in_dims[3],
                                        in_dims[2] * in_dims[3], in_dims[3], 1};
  Shape out_shape(4);
  std::array<std::size_t, 4> src_strides{};
  std::array<bool, 4> seen{};
  for (int i = 0; i < 4; ++i) {
    if (perm[i] < 0 || perm[i] > 3 || seen[perm[i]]) throw TensorError("permute4: bad permutation");
    seen[perm[i]] = true;
    out_shape[i] = in_dims[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  std::vector<std::size_t> source(xn->value.size());
  std::size_t o = 0;
  for (std::size_t a = 0; a < out_shape[0]; ++a)
    for (std::size_t b = 0; b < out_shape[1]; ++b)
      for (std::size_t c = 0; c < out_shape[2]; ++c)
        for (std::size_t d = 0; d < out_shape[3]; ++d)
          source[o++] = a * src_strides[0] + b * src_strides[1] + c * src_strides[2] +
                        d * src_strides[3];
  std::vector<real_t> out(source.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xn->value[source[i]];
  return make_result(std::move(out_shape), std::move(out), {xn},
                     [source = std::move(source)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += self.grad[i];
                     },
                     "permute4");
}

// --- Reductions -------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const NodePtr& xn = require(x, "sum");
  double acc = 0.0;
  for (real_t v : xn->value) acc += v;
  return make_result({1}, {real_t(acc)}, {xn},
                     [](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (auto& gi : g) gi += self.grad[0];
                     },
                     "sum");
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.numel();
  if (n == 0) throw TensorError("mean of empty tensor");
  return scale(sum(x), real_t(1.0 / double(n)));
}

Tensor weighted_sum(const Tensor& x, std::span<const real_t> weights) {
  const NodePtr& xn = require(x, "weighted_sum");
  if (weights.size() != xn->value.size()) throw TensorError("weighted_sum: weight count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += double(xn->value[i]) * weights[i];
  std::vector<real_t> w(weights.begin(), weights.end());
  return make_result({1}, {real_t(acc)}, {xn},
                     [w = std::move(w)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
                     },
                     "weighted_sum");
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  const NodePtr& pn = require(prediction, "mse_loss");
  const NodePtr& tn = require(target, "mse_loss");
  if (pn->value.size() != tn->value.size() || pn->value.empty()) {
    throw TensorError("mse_loss: size mismatch");
  }
  const std::size_t n = pn->value.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = double(pn->value[i]) - tn->value[i];
    acc += r * r;
  }
  std::vector<real_t> target_values = tn->value;
  return make_result({1}, {real_t(acc / double(n))}, {pn},
                     [target_values = std::move(target_values), n](Node& self) {
                       Node& P = *self.inputs[0];
                       auto& g = P.grad_buffer();
                       for (std::size_t i = 0; i < n; ++i)
                         g[i] += real_t(self.grad[0] * 2.0 * (double(P.value[i]) - target_values[i]) /
                                        double(n));
                     },
                     "mse_loss");
}

}  // namespace nqa
