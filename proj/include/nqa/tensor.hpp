// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

// Dense tensors with a reverse-mode tape.
//
// A Tensor is an immutable handle to a graph node. Operations build new nodes
// that remember their inputs and a backward closure; calling backward() on a
// scalar walks the graph once in reverse topological order and accumulates
// gradients into every node that requires them. Activations are held in double;
// learned weights are stored as f32 by ParameterStore and widened on binding.

#ifndef NQA_TENSOR_HPP
#define NQA_TENSOR_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nqa {

using real_t = double;
using Shape = std::vector<std::size_t>;

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a forward op produces NaN or Inf.
class NonFiniteError : public TensorError {
 public:
  using TensorError::TensorError;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<real_t> value;
  std::vector<real_t> grad;  // empty until backward reaches this node
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  const char* op = "leaf";

  std::vector<real_t>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<real_t> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real_t value, bool requires_grad = false);
  static Tensor scalar(real_t value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const real_t> values() const;
  // Empty span when no gradient has reached this tensor.
  std::span<const real_t> grad() const;
  real_t at(std::size_t flat_index) const;
  real_t item() const;
  bool requires_grad() const;
  const char* op() const;

  // Seeds d(self)/d(self) = 1 and accumulates gradients through the graph.
  // Requires a single-element tensor.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;
  Tensor reshape(Shape shape) const;

  // Internal: used by op implementations.
  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

enum class Activation { kRelu, kSigmoid, kSilu };

// a[m x k] * b[k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x[k] -> [n] or x[m x k] -> [m x n], with weight [n x k] and bias [n].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real_t factor);
Tensor add_scalar(const Tensor& a, real_t offset);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::kRelu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }
inline Tensor silu(const Tensor& x) { return activation(x, Activation::kSilu); }

// input [C_in x L], kernel [C_out x C_in/groups x K], optional bias [C_out].
// Output length floor((L + 2*padding - K)/stride) + 1.
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride = 1, int padding = 0, int groups = 1);
Tensor conv1d(const Tensor& input, const Tensor& kernel, int stride = 1,
              int padding = 0);

// input [C_in x D x H x W], kernel [C_out x C_in x Kd x Kh x Kw].
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::array<int, 3> stride, std::array<int, 3> padding);
Tensor conv3d(const Tensor& input, const Tensor& kernel, int stride = 1,
              int padding = 0);

// [C x L] -> [C], per-channel maximum. Ties route the gradient to the first
// occurrence.
Tensor max_pool_global(const Tensor& x);

// [C x L] -> [C x ceil(L/2)], window 2 stride 2; a trailing odd element forms
// its own window so L = 1 passes through.
Tensor max_pool_pairs(const Tensor& x);

// [C x L] -> [C], per-channel mean over the length axis.
Tensor mean_over_length(const Tensor& x);

// x [C x L] times gates [C] broadcast along L.
Tensor scale_channels(const Tensor& x, const Tensor& gates);

// Rank-2 transpose.
Tensor transpose(const Tensor& x);

// Flattened concatenation of all parts into one rank-1 tensor.
Tensor concat(const std::vector<Tensor>& parts);

// n rank-1 tensors of equal length k -> [n x k].
Tensor stack_rows(const std::vector<Tensor>& rows);

// Axis permutation for rank-4 tensors: out.dim(i) = in.dim(perm[i]).
Tensor permute4(const Tensor& x, std::array<int, 4> perm);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum_i x_i * w_i with constant weights; handy for scalarizing outputs.
Tensor weighted_sum(const Tensor& x, std::span<const real_t> weights);
// Mean of squared differences; target carries no gradient.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

}  // namespace nqa

#endif  // NQA_TENSOR_HPP
