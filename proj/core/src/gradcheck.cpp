#include "slim/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "slim/error.hpp"

namespace slim::ad {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(g.constant(t));
  const double v = f(g, leaves).value().item();
  if (!std::isfinite(v)) throw NumericalError("gradient check: f(x) is not finite");
  return v;
}

}  // namespace

GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs, double rtol,
                                double h, const GradientHook& hook) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(g.parameter(t));
    Var out = f(g, leaves);
    if (!std::isfinite(out.value().item())) {
      throw NumericalError("gradient check: f(x) is not finite");
    }
    g.backward(out);
    for (const auto& leaf : leaves) analytic.push_back(g.grad(leaf));
  }
  if (hook) hook(analytic);

  std::vector<Tensor> numeric;
  std::vector<Tensor> probe = inputs;
  double scale = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    Tensor n(probe[k].shape());
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + h;
      const double up = evaluate(f, probe);
      probe[k][i] = orig - h;
      const double down = evaluate(f, probe);
      probe[k][i] = orig;
      n[i] = (up - down) / (2.0 * h);
      scale = std::max(scale, std::abs(n[i]));
    }
    numeric.push_back(std::move(n));
  }

  GradCheckResult result;
  const double floor = 1e-3 * scale + 1e-10;
  std::size_t flat = 0;
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    for (std::size_t i = 0; i < numeric[k].size(); ++i, ++flat) {
      const double a = analytic[k][i], n = numeric[k][i];
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      const double rel = std::abs(a - n) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_index = flat;
      }
    }
  }
  result.passed = result.max_rel_error < rtol;
  return result;
}

GradCheckResult check_gradients(const std::function<Var(Graph&, Var)>& f, const Tensor& x,
                                double rtol, double h) {
  return check_gradients([&f](Graph& g, std::span<const Var> v) { return f(g, v[0]); },
                         std::vector<Tensor>{x}, rtol, h);
}

}  // namespace slim::ad
