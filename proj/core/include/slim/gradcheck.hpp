#pragma once

#include <functional>
#include <span>
#include <vector>

#include "slim/autodiff.hpp"

namespace slim::ad {

struct GradCheckResult {
  bool passed = false;
  double max_rel_error = 0.0;
  // Flat index (across all inputs) of the worst entry.
  std::size_t worst_index = 0;
};

// Builds a scalar on a fresh graph from the given leaf variables. Must be a
// deterministic function of the leaf values (reseed any dropout rng inside).
using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

// Hook applied to the reverse-mode gradients before comparison; used by the
// sensitivity tests to corrupt them on purpose.
using GradientHook = std::function<void(std::vector<Tensor>&)>;

// Compares reverse-mode gradients against central finite differences with
// step h. The relative error of an entry is
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-3 * max|numeric| + 1e-10)
// so entries with a vanishing gradient are judged against the overall
// gradient scale. Passes iff the largest relative error is below rtol.
// Throws NumericalError when f(x) is not finite.
GradCheckResult check_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                double rtol = 1e-4, double h = 1e-5,
                                const GradientHook& hook = nullptr);

// Single-input convenience form.
GradCheckResult check_gradients(const std::function<Var(Graph&, Var)>& f, const Tensor& x,
                                double rtol = 1e-4, double h = 1e-5);

}  // namespace slim::ad
