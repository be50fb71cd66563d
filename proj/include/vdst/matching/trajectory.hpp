#pragma once

// Trajectory matching: train a student for a few steps on the synthetic data,
// starting from an expert checkpoint, and penalize the normalized distance
// between where the student lands and where the expert went. The inner SGD
// steps stay on the autodiff graph so the loss differentiates through them
// into the synthetic clips.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/models/zoo.hpp"

namespace vdst {
namespace matching {

// ||theta_student - theta_target||^2 / ||theta_start - theta_target||^2 after
// `syn_steps` SGD steps on `loss_fn`. With zero steps the student sits at the
// start, so the ratio is exactly 1.
template <class S>
Var<S> unrolled_trajectory_loss(
    const std::vector<Tensor<S>>& theta_start,
    const std::vector<Tensor<S>>& theta_target, Index syn_steps, S lr,
    const std::function<Var<S>(const std::vector<Var<S>>&)>& loss_fn) {
  require_input(!theta_start.empty() &&
                    theta_start.size() == theta_target.size(),
                "unrolled_trajectory_loss: start/target parameter lists "
                "must be nonempty and the same length");
  require_input(syn_steps >= 0, "unrolled_trajectory_loss: negative steps");

  Var<S> den = Var<S>::constant(Tensor<S>::zeros({1}));
  std::vector<Var<S>> theta;
  theta.reserve(theta_start.size());
  for (std::size_t i = 0; i < theta_start.size(); ++i) {
    require_input(theta_start[i].shape() == theta_target[i].shape(),
                  "unrolled_trajectory_loss: parameter shapes differ");
    den = add(den, sum_squares(sub(Var<S>::constant(theta_start[i]),
                                   Var<S>::constant(theta_target[i]))));
    theta.push_back(Var<S>::leaf(theta_start[i]));
  }
  if (!(den.value()[0] > S(0)))
    throw DegenerateTrajectory(
        "trajectory segment has zero length: expert start and target "
        "checkpoints coincide");

  for (Index step = 0; step < syn_steps; ++step) {
    Var<S> inner = loss_fn(theta);
    auto gs = grad(inner, theta, /*create_graph=*/true);
    for (std::size_t i = 0; i < theta.size(); ++i)
      theta[i] = sub(theta[i], mul_scalar(gs[i], lr));
  }

  Var<S> num = Var<S>::constant(Tensor<S>::zeros({1}));
  for (std::size_t i = 0; i < theta.size(); ++i)
    num = add(num,
              sum_squares(sub(theta[i], Var<S>::constant(theta_target[i]))));
  return div(num, den);
}

template <class S>
Var<S> loss_trajectory(const ExpertTrajectory<S>& expert, Index start_epoch,
                       const Var<S>& syn_clips,
                       const std::vector<int>& syn_labels,
                       const InnerConfig& inner) {
  expert.validate();
  require_config(inner.syn_steps >= 0 && inner.expert_epochs >= 1 &&
                     inner.lr_teacher > 0,
                 "loss_trajectory: inner config wants syn_steps >= 0, "
                 "expert_epochs >= 1, lr_teacher > 0");
  require_input(expert.snapshots.size() >= 2,
                "loss_trajectory: expert has a single snapshot; train it for "
                "at least one epoch");
  require_input(start_epoch >= 0 && start_epoch <= inner.max_start_epoch,
                "loss_trajectory: start epoch " + std::to_string(start_epoch) +
                    " exceeds max_start_epoch " +
                    std::to_string(inner.max_start_epoch));
  const Index target_epoch = start_epoch + inner.expert_epochs;
  require_input(target_epoch < static_cast<Index>(expert.snapshots.size()),
                "loss_trajectory: target epoch " + std::to_string(target_epoch) +
                    " is past the end of the expert trajectory");
  require_input(syn_clips.value().rank() == 5 &&
                    syn_clips.shape()[0] ==
                        static_cast<Index>(syn_labels.size()),
                "loss_trajectory: want [B,F,C,H,W] clips with one label per "
                "clip");

  auto theta_start =
      unflatten_params<S>(
          expert.arch, expert.snapshots[static_cast<std::size_t>(start_epoch)])
          .params;
  auto theta_target =
      unflatten_params<S>(
          expert.arch, expert.snapshots[static_cast<std::size_t>(target_epoch)])
          .params;

  const ArchSpec arch = expert.arch;
  auto loss_fn = [&arch, &syn_clips,
                  &syn_labels](const std::vector<Var<S>>& theta) {
    return cross_entropy_mean(forward_model(arch, theta, syn_clips).logits,
                              syn_labels);
  };
  return unrolled_trajectory_loss<S>(theta_start, theta_target,
                                     inner.syn_steps,
                                     static_cast<S>(inner.lr_teacher), loss_fn);
}

}  // namespace matching
}  // namespace vdst
