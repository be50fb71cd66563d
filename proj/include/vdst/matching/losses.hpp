#pragma once

// The two single-step matchers. Distribution matching pulls the mean feature
// vectors of real and synthetic batches together under a randomly initialized
// network; gradient matching aligns classification-loss gradients layer by
// layer with a per-output-channel cosine distance. Both are differentiable
// with respect to the synthetic clips only — the real side enters as
// constants.

#include <cmath>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/models/zoo.hpp"

namespace vdst {
namespace matching {

// Norms below this floor count as zero: such real-gradient groups are masked
// out entirely, and synthetic-gradient norms are clamped up to it so the
// cosine stays differentiable when a group collapses.
inline constexpr double kNormFloor = 1e-6;

// ||mean(real) - mean(syn)||^2 over rank-2 feature batches [B, D].
template <class S>
Var<S> feature_mean_distance(const Var<S>& real_features,
                             const Var<S>& syn_features) {
  require_input(real_features.value().rank() == 2 &&
                    syn_features.value().rank() == 2,
                "feature_mean_distance: want [B, D] batches");
  const Index br = real_features.shape()[0], bs = syn_features.shape()[0];
  require_input(br >= 1 && bs >= 1, "feature_mean_distance: empty batch");
  require_input(real_features.shape()[1] == syn_features.shape()[1],
                "feature_mean_distance: feature widths differ");
  Var<S> mr = mul_scalar(col_sum(real_features), static_cast<S>(1.0 / br));
  Var<S> ms = mul_scalar(col_sum(syn_features), static_cast<S>(1.0 / bs));
  return sum_squares(sub(mr, ms));
}

// Whether an architecture's feature width is independent of clip length
// (required whenever real and synthetic frame counts differ).
inline bool features_fixed_width(Arch arch) { return arch != Arch::mini_c3d; }

template <class S>
Var<S> loss_distribution(const ModelState<S>& model,
                         const Tensor<S>& real_clips,
                         const Var<S>& syn_clips) {
  require_input(real_clips.rank() == 5 && syn_clips.value().rank() == 5,
                "loss_distribution: want [B,F,C,H,W] batches");
  require_input(real_clips.dim(0) >= 1 && syn_clips.shape()[0] >= 1,
                "loss_distribution: empty batch");
  if (real_clips.dim(1) != syn_clips.shape()[1])
    require_config(features_fixed_width(model.spec.arch),
                   "loss_distribution: " +
                       std::string(arch_name(model.spec.arch)) +
                       " features depend on clip length; equalize frame "
                       "counts or use a frame-averaged/recurrent feature");

  auto params = make_param_vars(model);  // constants for feature extraction
  for (auto& p : params) p = Var<S>::constant(p.value());

  Tensor<S> real_features;
  {
    NoGradGuard no_grad;
    real_features =
        forward_model(model.spec, params, Var<S>::constant(real_clips))
            .features.value();
  }
  Var<S> syn_features = forward_model(model.spec, params, syn_clips).features;
  return feature_mean_distance(Var<S>::constant(std::move(real_features)),
                               syn_features);
}

// Sum over output-channel groups of 1 - cos(real, syn). The real side is a
// constant: groups whose real gradient is numerically zero are dropped, and
// the per-group scale 1/|r| folds into a constant coefficient.
template <class S>
Var<S> cosine_group_distance(const Tensor<S>& g_real, const Var<S>& g_syn) {
  require_input(g_real.shape() == g_syn.shape(),
                "cosine_group_distance: gradient shapes differ");
  require_input(g_real.rank() >= 2,
                "cosine_group_distance: need at least 2 dimensions to group");
  const Index rows = g_real.dim(0);
  const Index rest = g_real.size() / rows;

  Tensor<S> mask({rows});
  Tensor<S> coeff({rows});  // mask / |real row|
  Index active = 0;
  for (Index r = 0; r < rows; ++r) {
    double nr2 = 0.0;
    for (Index i = 0; i < rest; ++i) {
      const double v = static_cast<double>(g_real[r * rest + i]);
      nr2 += v * v;
    }
    const double nr = std::sqrt(nr2);
    const bool live = nr > kNormFloor;
    mask[r] = live ? S(1) : S(0);
    coeff[r] = live ? static_cast<S>(1.0 / nr) : S(0);
    active += live ? 1 : 0;
  }
  if (active == 0) return Var<S>::constant(Tensor<S>::zeros({1}));

  Var<S> gs = reshape(g_syn, {rows, rest});
  Var<S> gr = Var<S>::constant(g_real.reshaped({rows, rest}));
  Var<S> dot = row_sum(mul(gr, gs));  // [rows]
  Var<S> ns = sqrt(clamp_min(row_sum(square(gs)),
                             static_cast<S>(kNormFloor * kNormFloor)));
  Var<S> cos =
      mul(mul(dot, Var<S>::constant(coeff)), reciprocal(ns));  // masked rows: 0
  return sum(sub(Var<S>::constant(std::move(mask)), cos));
}

template <class S>
Var<S> loss_gradient(const ModelState<S>& model, const Tensor<S>& real_clips,
                     const Var<S>& syn_clips, int class_label) {
  require_input(real_clips.rank() == 5 && syn_clips.value().rank() == 5,
                "loss_gradient: want [B,F,C,H,W] batches");
  const Index br = real_clips.dim(0), bs = syn_clips.shape()[0];
  require_input(br >= 1 && bs >= 1, "loss_gradient: empty batch");
  require_input(class_label >= 0 && class_label < model.spec.num_classes,
                "loss_gradient: label " + std::to_string(class_label) +
                    " outside the model's class range");

  const std::vector<int> real_labels(static_cast<std::size_t>(br),
                                     class_label);
  const std::vector<int> syn_labels(static_cast<std::size_t>(bs), class_label);

  // Real gradients, taken once as constants.
  std::vector<Tensor<S>> real_grads;
  {
    auto params = make_param_vars(model);
    Var<S> ce = cross_entropy_mean(
        forward_model(model.spec, params, Var<S>::constant(real_clips)).logits,
        real_labels);
    auto gs = grad(ce, params);
    real_grads.reserve(gs.size());
    for (auto& g : gs) real_grads.push_back(g.value());
  }

  // Synthetic gradients with the graph kept alive, so the distance
  // differentiates back into the synthetic pixels.
  auto params = make_param_vars(model);
  Var<S> ce = cross_entropy_mean(
      forward_model(model.spec, params, syn_clips).logits, syn_labels);
  auto syn_grads = grad(ce, params, /*create_graph=*/true);

  Var<S> total = Var<S>::constant(Tensor<S>::zeros({1}));
  for (std::size_t i = 0; i < real_grads.size(); ++i) {
    if (real_grads[i].rank() < 2) continue;  // biases and norm gains skipped
    total = add(total, cosine_group_distance(real_grads[i], syn_grads[i]));
  }
  return total;
}

}  // namespace matching
}  // namespace vdst
