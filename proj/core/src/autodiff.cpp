#include "slim/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "slim/error.hpp"

namespace slim::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                  static_cast<Eigen::Index>(t.dim(1)));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                static_cast<Eigen::Index>(t.dim(1)));
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                         " tensor, got " + shape_str(v.shape()));
  }
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Applies f elementwise and records a node whose local derivative is
// df(x, y) with x the input and y the output.
template <typename F, typename DF>
Var unary(Var x, F f, DF df) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Tensor y = out;
  Tensor xv = x.value();
  return x.graph().record(std::move(out), {x},
                          [xv = std::move(xv), y = std::move(y), df](
                              const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              (*gi[0])[i] += g[i] * df(xv[i], y[i]);
                            }
                          });
}

// Row-major strides helper for reductions/selection over one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Graph

const Tensor& Var::value() const { return graph_->nodes_[id_].value; }

void Graph::check_owned(Var v) const {
  if (!v.valid() || &v.graph() != this || v.id() >= nodes_.size()) {
    throw ConfigError("variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

Var Graph::parameter(Tensor value) {
  Var v = record(std::move(value), {}, nullptr);
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericalError("non-finite value produced by operation with output shape " +
                         shape_str(value.shape()));
  }
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var output) {
  check_owned(output);
  if (output.value().size() != 1) {
    throw DimensionError("backward() needs a scalar output, got " + shape_str(output.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[output.id()] = Tensor::filled(output.shape(), 1.0);

  std::vector<Tensor*> grad_in;
  for (std::size_t k = output.id() + 1; k-- > 0;) {
    Node& node = nodes_[k];
    if (!node.requires_grad || !node.backward || grads_[k].empty()) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t src = node.inputs[j];
      if (!nodes_[src].requires_grad) continue;
      if (grads_[src].empty()) grads_[src] = Tensor(nodes_[src].value.shape());
      grad_in[j] = &grads_[src];
    }
    node.backward(grads_[k], grad_in);
  }
}

Tensor Graph::grad(Var v) const {
  check_owned(v);
  if (v.id() >= grads_.size() || grads_[v.id()].empty()) {
    return Tensor(nodes_[v.id()].value.shape());
  }
  return grads_[v.id()];
}

bool Graph::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].requires_grad;
}

// ---------------------------------------------------------------------------
// elementwise

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.graph().record(std::move(out), {a, b},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            for (auto* t : gi) {
                              if (!t) continue;
                              for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
                            }
                          });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.graph().record(std::move(out), {a, b},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                          });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  Tensor av = a.value(), bv = b.value();
  return a.graph().record(
      std::move(out), {a, b},
      [av = std::move(av), bv = std::move(bv)](const Tensor& g, std::span<Tensor* const> gi) {
        if (gi[0])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i] * bv[i];
        if (gi[1])
          for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] += g[i] * av[i];
      });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.graph().record(std::move(out), {a},
                          [factor](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += factor * g[i];
                          });
}

Var add_scalar(Var a, double offset) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += offset;
  return a.graph().record(std::move(out), {a},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                          });
}

Var add_bias(Var x, Var bias) {
  require_rank(x, 2, "add_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.value().size() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  Tensor out = x.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias.value()[c];
  return x.graph().record(std::move(out), {x, bias},
                          [m, n](const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                            if (gi[1])
                              for (std::size_t r = 0; r < m; ++r)
                                for (std::size_t c = 0; c < n; ++c) (*gi[1])[c] += g[r * n + c];
                          });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Var dropout(Var x, double rate, Rng& rng, bool train) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::bernoulli_distribution coin(keep);
  Tensor mask(x.shape());
  for (auto& m : mask.data()) m = coin(rng) ? 1.0 / keep : 0.0;
  return mul(x, x.graph().constant(std::move(mask)));
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[1]});
  as_matrix(out).noalias() = as_matrix(a.value()) * as_matrix(b.value());
  Tensor av = a.value(), bv = b.value();
  return a.graph().record(
      std::move(out), {a, b},
      [av = std::move(av), bv = std::move(bv)](const Tensor& g, std::span<Tensor* const> gi) {
        if (gi[0]) as_matrix(*gi[0]).noalias() += as_matrix(g) * as_matrix(bv).transpose();
        if (gi[1]) as_matrix(*gi[1]).noalias() += as_matrix(av).transpose() * as_matrix(g);
      });
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n, m});
  as_matrix(out) = as_matrix(a.value()).transpose();
  return a.graph().record(std::move(out), {a},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            if (gi[0]) as_matrix(*gi[0]) += as_matrix(g).transpose();
                          });
}

Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

// ---------------------------------------------------------------------------
// shape

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().record(std::move(out), {x},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                          });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  if (axis > 1) throw DimensionError("concat supports axis 0 or 1 only");
  for (const auto& p : parts) require_rank(p, 2, "concat");
  const std::size_t other = 1 - axis;
  const std::size_t fixed = parts[0].shape()[other];
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    if (p.shape()[other] != fixed) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " +
                           shape_str(parts[0].shape()) + " along axis " + std::to_string(axis));
    }
    extents.push_back(p.shape()[axis]);
    total += p.shape()[axis];
  }
  Tensor out(axis == 0 ? Shape{total, fixed} : Shape{fixed, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    if (axis == 0) {
      std::copy(v.data().begin(), v.data().end(), out.data().begin() + offset * fixed);
    } else {
      for (std::size_t r = 0; r < fixed; ++r)
        for (std::size_t c = 0; c < extents[k]; ++c) out.at(r, offset + c) = v.at(r, c);
    }
    offset += extents[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].graph().record(
      std::move(out), std::move(inputs),
      [axis, fixed, total, extents](const Tensor& g, std::span<Tensor* const> gi) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < extents.size(); ++k) {
          if (gi[k]) {
            Tensor& dst = *gi[k];
            if (axis == 0) {
              for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[off * fixed + i];
            } else {
              for (std::size_t r = 0; r < fixed; ++r)
                for (std::size_t c = 0; c < extents[k]; ++c)
                  dst[r * extents[k] + c] += g[r * total + off + c];
            }
          }
          off += extents[k];
        }
      });
}

Var select(Var x, std::size_t axis, std::size_t index) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("select: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  if (index >= shape[axis]) {
    throw DimensionError("select: index " + std::to_string(index) + " out of range for " +
                         shape_str(shape));
  }
  const AxisSplit s = split_axis(shape, axis);
  Tensor out(drop_axis(shape, axis));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i)
      out[o * s.inner + i] = x.value()[(o * s.extent + index) * s.inner + i];
  return x.graph().record(std::move(out), {x},
                          [s, index](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t i = 0; i < s.inner; ++i)
                                (*gi[0])[(o * s.extent + index) * s.inner + i] +=
                                    g[o * s.inner + i];
                          });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin > end || end > rows) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(x.shape()));
  }
  const auto src = x.value().data();
  Tensor out({end - begin, cols},
             std::vector<double>(src.begin() + begin * cols, src.begin() + end * cols));
  return x.graph().record(std::move(out), {x},
                          [begin, cols](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < g.size(); ++i)
                              (*gi[0])[begin * cols + i] += g[i];
                          });
}

// ---------------------------------------------------------------------------
// reductions

Var reduce_mean(Var x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("reduce_mean: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  const AxisSplit s = split_axis(shape, axis);
  Tensor out(drop_axis(shape, axis));
  const double inv = 1.0 / static_cast<double>(s.extent);
  const auto in = x.value().data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += in[(o * s.extent + e) * s.inner + i];
  for (auto& v : out.data()) v *= inv;
  return x.graph().record(std::move(out), {x},
                          [s, inv](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t o = 0; o < s.outer; ++o)
                              for (std::size_t e = 0; e < s.extent; ++e)
                                for (std::size_t i = 0; i < s.inner; ++i)
                                  (*gi[0])[(o * s.extent + e) * s.inner + i] +=
                                      inv * g[o * s.inner + i];
                          });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.graph().record(Tensor::scalar(total), {x},
                          [](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (auto& v : gi[0]->data()) v += g[0];
                          });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var frobenius_sq(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v * v;
  Tensor xv = x.value();
  return x.graph().record(Tensor::scalar(total), {x},
                          [xv = std::move(xv)](const Tensor& g, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < xv.size(); ++i)
                              (*gi[0])[i] += 2.0 * xv[i] * g[0];
                          });
}

// ---------------------------------------------------------------------------
// statistics

Var batch_standardize(Var x, double eps) {
  require_rank(x, 2, "batch_standardize");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (rows < 2) {
    throw DimensionError("batch_standardize needs at least 2 rows, got " + shape_str(x.shape()));
  }
  const auto in = x.value().data();
  const double inv_n = 1.0 / static_cast<double>(rows);
  Tensor out(x.shape());
  std::vector<double> inv_std(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mu += in[r * cols + c];
    mu *= inv_n;
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = in[r * cols + c] - mu;
      var += d * d;
    }
    const double sd = std::sqrt(var * inv_n);
    if (sd <= eps) continue;  // degenerate column stays zero
    inv_std[c] = 1.0 / sd;
    for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = (in[r * cols + c] - mu) / sd;
  }
  Tensor y = out;
  return x.graph().record(
      std::move(out), {x},
      [y = std::move(y), inv_std = std::move(inv_std), rows, cols, inv_n](
          const Tensor& g, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        for (std::size_t c = 0; c < cols; ++c) {
          if (inv_std[c] == 0.0) continue;
          double g_mean = 0.0, gy_mean = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            g_mean += g[r * cols + c];
            gy_mean += g[r * cols + c] * y[r * cols + c];
          }
          g_mean *= inv_n;
          gy_mean *= inv_n;
          for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t k = r * cols + c;
            (*gi[0])[k] += inv_std[c] * (g[k] - g_mean - y[k] * gy_mean);
          }
        }
      });
}

Var softmax(Var scores) {
  const auto in = scores.value().data();
  if (in.empty()) throw DimensionError("softmax over an empty tensor");
  const double peak = *std::max_element(in.begin(), in.end());
  Tensor out(scores.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - peak);
    total += out[i];
  }
  for (auto& v : out.data()) v /= total;
  Tensor y = out;
  return scores.graph().record(std::move(out), {scores},
                               [y = std::move(y)](const Tensor& g, std::span<Tensor* const> gi) {
                                 if (!gi[0]) return;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
                                 for (std::size_t i = 0; i < y.size(); ++i)
                                   (*gi[0])[i] += y[i] * (g[i] - dot);
                               });
}

namespace {

void check_weighted_args(const Var& x, const Var& w, const char* op) {
  require_rank(x, 2, op);
  if (w.value().size() != x.shape()[0]) {
    throw DimensionError(std::string(op) + ": weights " + shape_str(w.shape()) +
                         " do not match frames " + shape_str(x.shape()));
  }
}

std::vector<double> weighted_column_mean(const Tensor& x, const Tensor& w) {
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> mu(cols, 0.0);
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t f = 0; f < cols; ++f) mu[f] += w[t] * x[t * cols + f];
  return mu;
}

}  // namespace

Var weighted_mean(Var x, Var weights) {
  check_weighted_args(x, weights, "weighted_mean");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  std::vector<double> mu = weighted_column_mean(x.value(), weights.value());
  Tensor out({1, cols}, mu);
  Tensor xv = x.value(), wv = weights.value();
  return x.graph().record(
      std::move(out), {x, weights},
      [xv = std::move(xv), wv = std::move(wv), rows, cols](const Tensor& g,
                                                            std::span<Tensor* const> gi) {
        if (gi[0])
          for (std::size_t t = 0; t < rows; ++t)
            for (std::size_t f = 0; f < cols; ++f) (*gi[0])[t * cols + f] += wv[t] * g[f];
        if (gi[1])
          for (std::size_t t = 0; t < rows; ++t) {
            double acc = 0.0;
            for (std::size_t f = 0; f < cols; ++f) acc += xv[t * cols + f] * g[f];
            (*gi[1])[t] += acc;
          }
      });
}

Var weighted_std(Var x, Var weights) {
  check_weighted_args(x, weights, "weighted_std");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  const Tensor& xv0 = x.value();
  const Tensor& wv0 = weights.value();
  std::vector<double> mu = weighted_column_mean(xv0, wv0);
  std::vector<double> sd(cols, 0.0);
  for (std::size_t f = 0; f < cols; ++f) {
    double second = 0.0;
    for (std::size_t t = 0; t < rows; ++t) second += wv0[t] * xv0[t * cols + f] * xv0[t * cols + f];
    sd[f] = std::sqrt(std::max(0.0, second - mu[f] * mu[f]));
  }
  Tensor out({1, cols}, sd);
  Tensor xv = xv0, wv = wv0;
  return x.graph().record(
      std::move(out), {x, weights},
      [xv = std::move(xv), wv = std::move(wv), mu = std::move(mu), sd = std::move(sd), rows,
       cols](const Tensor& g, std::span<Tensor* const> gi) {
        // d sd / d var = 1 / (2 sd); var = sum_t w_t x_t^2 - mu^2.
        for (std::size_t f = 0; f < cols; ++f) {
          if (sd[f] <= 0.0) continue;
          const double dvar = g[f] / (2.0 * sd[f]);
          for (std::size_t t = 0; t < rows; ++t) {
            const double xt = xv[t * cols + f];
            if (gi[0]) (*gi[0])[t * cols + f] += dvar * 2.0 * wv[t] * (xt - mu[f]);
            if (gi[1]) (*gi[1])[t] += dvar * (xt * xt - 2.0 * mu[f] * xt);
          }
        }
      });
}

}  // namespace slim::ad
