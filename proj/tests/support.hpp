#pragma once

// Shared helpers for the test suites: a central-difference gradient checker
// (the oracle against which every autodiff op is verified) and small
// conveniences for building random tensors.

#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"

namespace vdst_test {

using vdst::Index;
using vdst::Rng;
using vdst::Shape;
using vdst::Tensor;
using vdst::Var;

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Verify analytic gradients of a scalar-valued function against central
// finite differences, coordinate by coordinate. `f` receives leaf Vars built
// from `inputs` and must return a size-1 Var. It may itself call vdst::grad
// (that is how double-backward paths get checked: the finite difference then
// probes the derivative of a gradient).
inline void check_gradients(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& f,
    const std::vector<Tensor<double>>& inputs, double tol = 1e-6,
    double h = 1e-5) {
  auto eval = [&](const std::vector<Tensor<double>>& vals) {
    std::vector<Var<double>> leaves;
    leaves.reserve(vals.size());
    for (const auto& t : vals) leaves.push_back(Var<double>::leaf(t));
    Var<double> out = f(leaves);
    REQUIRE(out.size() == 1);
    return out;
  };

  // Analytic pass.
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(Var<double>::leaf(t));
  Var<double> out = f(leaves);
  REQUIRE(out.size() == 1);
  std::vector<Var<double>> grads = vdst::grad(out, leaves);

  // Numeric pass, one coordinate at a time.
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    for (Index i = 0; i < inputs[which].size(); ++i) {
      std::vector<Tensor<double>> plus = inputs;
      std::vector<Tensor<double>> minus = inputs;
      plus[which][i] += h;
      minus[which][i] -= h;
      const double fp = eval(plus).value()[0];
      const double fm = eval(minus).value()[0];
      const double fd = (fp - fm) / (2.0 * h);
      const double an = grads[which].value()[i];
      INFO("input ", which, " coord ", i, ": analytic ", an, " fd ", fd);
      CHECK(rel_err(an, fd) < tol);
    }
  }
}

inline Tensor<double> rand_tensor(Shape shape, Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
  return Tensor<double>::uniform(std::move(shape), rng, lo, hi);
}

// Strictly positive random tensor (for log/sqrt/reciprocal probes).
inline Tensor<double> rand_pos_tensor(Shape shape, Rng& rng, double lo = 0.3,
                                      double hi = 2.0) {
  return Tensor<double>::uniform(std::move(shape), rng, lo, hi);
}

}  // namespace vdst_test
