#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "slim/tensor.hpp"

// Tape-based reverse-mode differentiation over dense double tensors. Only the
// operator set the SLIM models need is provided; there is no broadcasting
// beyond the explicit bias add.
namespace slim::ad {

using Rng = std::mt19937_64;

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; only valid while the
// owning graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Receives the gradient of the node's output and accumulates into the
// gradients of its inputs. Entries of `grad_in` are null for inputs that do
// not require a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Appends an operation node. Throws NumericalError when `value` holds a
  // NaN or Inf.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Propagates d(output)/d(node) to every node that requires a gradient.
  // `output` must hold a single element. Nodes are visited once, in reverse
  // recording order, which is a reverse topological order.
  void backward(Var output);

  // Gradient of the last backward pass; zeros if the node was not reached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// -- elementwise ------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

// x[m x n] + bias[n] broadcast over rows.
Var add_bias(Var x, Var bias);

Var tanh(Var x);
Var relu(Var x);
Var sigmoid(Var x);
// log(1 + exp(x)), evaluated without overflow.
Var softplus(Var x);

// Inverted dropout: at train time each entry is kept with probability
// 1 - rate and rescaled by 1 / (1 - rate). Identity when !train or rate == 0.
Var dropout(Var x, double rate, Rng& rng, bool train);

// -- linear algebra ---------------------------------------------------------
Var matmul(Var a, Var b);
Var transpose(Var a);
// x[m x in] * weight[in x out] + bias[out]
Var linear(Var x, Var weight, Var bias);

// -- shape ------------------------------------------------------------------
Var reshape(Var x, Shape shape);
// Concatenates 2-D tensors along axis 0 (rows) or 1 (features).
Var concat(std::span<const Var> parts, std::size_t axis);
// Removes `axis` by picking one index along it.
Var select(Var x, std::size_t axis, std::size_t index);
Var slice_rows(Var x, std::size_t begin, std::size_t end);

// -- reductions -------------------------------------------------------------
Var reduce_mean(Var x, std::size_t axis);
Var sum(Var x);
Var mean(Var x);
// Sum of squared entries.
Var frobenius_sq(Var x);

// -- statistics -------------------------------------------------------------
// Per-column standardization of x[B x F] with population statistics and no
// learned affine. Columns whose standard deviation is <= eps become zeros.
Var batch_standardize(Var x, double eps = 1e-5);

// Softmax over every element of x (a score vector over time), computed with
// max subtraction.
Var softmax(Var scores);

// Attention-weighted first and second moments of x[T x F] over time; the
// weight vector holds T entries. Both return a 1 x F row.
Var weighted_mean(Var x, Var weights);
// sqrt(max(0, sum_t w_t x_t^2 - mu^2)); the gradient is zero where the
// clamped variance is zero.
Var weighted_std(Var x, Var weights);

}  // namespace slim::ad
