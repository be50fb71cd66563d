#pragma once

// Plain SGD with classical momentum, the only optimizer the training loops
// use: v <- momentum * v + g (+ wd * p), p <- p - lr * v. Parameters are leaf
// Vars whose values are updated in place between backward passes.

#include <cstddef>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/tensor.hpp"

namespace vdst {

template <class S>
struct SgdMomentum {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::vector<Tensor<S>> velocity;  // lazily sized on the first step

  void step(std::vector<Var<S>>& params, const std::vector<Var<S>>& grads) {
    require_input(params.size() == grads.size(),
                  "SgdMomentum: parameter/gradient count mismatch");
    if (velocity.empty()) {
      velocity.reserve(params.size());
      for (const auto& p : params)
        velocity.push_back(Tensor<S>::zeros(p.shape()));
    }
    require_input(velocity.size() == params.size(),
                  "SgdMomentum: optimizer state built for a different model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      require_input(grads[i].shape() == params[i].shape(),
                    "SgdMomentum: gradient shape mismatch");
      auto p = params[i].mutable_value().array();
      auto v = velocity[i].array();
      v *= static_cast<S>(momentum);
      v += grads[i].value().array();
      if (weight_decay != 0.0) v += static_cast<S>(weight_decay) * p;
      p -= static_cast<S>(lr) * v;
    }
  }
};

}  // namespace vdst
