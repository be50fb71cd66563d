#pragma once

// Expansion of stored synthetic frames to full clip length. References sit at
// evenly spaced fractional positions t_j = j*(l_syn-1)/(N-1); duplication
// copies the nearest reference (ties resolve to the earlier frame), linear
// blends the two bracketing references by temporal distance, and the
// parametric method feeds the duplicated sequence through a small residual
// 3-D conv network phi whose final layer starts at zero, so an untrained phi
// is exactly duplication. All position arithmetic is exact integer rational
// (numerators over N-1 or l_syn-1), so reference frames are reproduced
// bitwise and ties are deterministic.

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/models/nn.hpp"
#include "vdst/models/optimizer.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/temporal/schedule.hpp"
#include "vdst/video/sampling.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace temporal {

namespace detail {

// round(a/d) with ties toward the smaller integer; a >= 0, d >= 1.
inline Index nearest_div(Index a, Index d) {
  const Index q = a / d;
  const Index lo = a - q * d;        // distance down to q
  const Index hi = (q + 1) * d - a;  // distance up to q+1
  return hi < lo ? q + 1 : q;
}

// Reference index whose position t_j is nearest to output position p.
inline Index dup_ref(Index p, Index n, Index l) {
  if (n == 1) return 0;
  return nearest_div(p * (n - 1), l - 1);
}

}  // namespace detail

// Integer positions nearest to the fractional reference grid: where the N
// stored frames sit inside a length-l window (used when subsampling real
// clips for interpolator training and reconstruction scoring).
inline std::vector<Index> reference_indices(Index n_syn, Index l_syn) {
  require_config(n_syn >= 1 && l_syn >= 1, "reference_indices: empty grid");
  require_config(n_syn <= l_syn,
                 "reference_indices: more references than positions");
  std::vector<Index> out(static_cast<std::size_t>(n_syn));
  if (n_syn == 1) return out;  // single reference at position 0
  for (Index j = 0; j < n_syn; ++j)
    out[static_cast<std::size_t>(j)] =
        detail::nearest_div(j * (l_syn - 1), n_syn - 1);
  return out;
}

// Residual interpolation network: two 3x3x3 convolutions around a ReLU,
// applied on top of the duplicated sequence. Frozen after training.
template <class S>
struct ParametricInterpolator {
  Index n_syn = 0;
  Index l_syn = 0;
  Index mid = 8;       // middle channel width
  Index channels = 0;  // pixel channels the network was built for
  std::vector<Tensor<S>> params;  // conv1.{weight,bias}, conv2.{weight,bias}

  bool defined() const { return !params.empty(); }
};

inline std::vector<ParamDef> interpolator_param_defs(Index channels,
                                                     Index mid) {
  const double fan_in = 27.0 * static_cast<double>(channels);
  return {
      {"phi.conv1.weight", {mid, 3, 3, 3, channels}, std::sqrt(2.0 / fan_in)},
      {"phi.conv1.bias", {mid}, 0.0},
      {"phi.conv2.weight", {channels, 3, 3, 3, mid}, 0.0},
      {"phi.conv2.bias", {channels}, 0.0},
  };
}

template <class S>
ParametricInterpolator<S> init_interpolator(Index n_syn, Index l_syn,
                                            Index channels, Index mid,
                                            std::uint64_t seed) {
  require_config(n_syn >= 1 && l_syn >= n_syn,
                 "interpolator: need 1 <= n_syn <= l_syn");
  require_config(channels >= 1 && mid >= 1, "interpolator: empty network");
  ParametricInterpolator<S> phi;
  phi.n_syn = n_syn;
  phi.l_syn = l_syn;
  phi.mid = mid;
  phi.channels = channels;
  const auto defs = interpolator_param_defs(channels, mid);
  for (std::size_t i = 0; i < defs.size(); ++i) {
    const auto& d = defs[i];
    if (d.init_std == 0.0) {
      phi.params.push_back(Tensor<S>::zeros(d.shape));
    } else {
      Rng rng = Rng(seed).split(i);
      phi.params.push_back(
          Tensor<S>::normal(d.shape, rng, S(0), static_cast<S>(d.init_std)));
    }
  }
  return phi;
}

// clips [B,F,C,H,W] + residual network parameters -> [B,F,C,H,W].
template <class S>
Var<S> phi_apply(const Var<S>& clips, const std::vector<Var<S>>& params) {
  require_input(clips.value().rank() == 5, "phi_apply: want [B,F,C,H,W]");
  require_input(params.size() == 4, "phi_apply: want 4 parameter tensors");
  const Index f = clips.shape()[1], c = clips.shape()[2],
              h = clips.shape()[3], w = clips.shape()[4];
  const Index mid = params[0].shape()[0];
  require_input(params[0].shape() == Shape{mid, 3, 3, 3, c},
                "phi_apply: network built for different channel count");
  nn::Conv3dGeom g1{f, h, w, c, 3, 3, 3, 1, 1, 1, 1, 1, 1, mid};
  nn::Conv3dGeom g2{f, h, w, mid, 3, 3, 3, 1, 1, 1, 1, 1, 1, c};
  Var<S> x = nn::to_channels_last(clips);
  x = nn::conv3d(x, params[0], params[1], g1);
  x = relu(x);
  x = nn::conv3d(x, params[2], params[3], g2);
  x = nn::from_channels_last(x);
  return add(clips, x);
}

// Differentiable batched expansion: frames [B,N,C,H,W] -> [B,l_syn,C,H,W].
template <class S>
Var<S> interpolate_batch(const Var<S>& frames, Index l_syn, Interp method,
                         const ParametricInterpolator<S>* phi = nullptr) {
  require_input(frames.value().rank() == 5,
                "interpolate_batch: want [B,N,C,H,W], got " +
                    shape_str(frames.shape()));
  const Index b = frames.shape()[0], n = frames.shape()[1];
  require_input(b >= 1 && n >= 1, "interpolate_batch: empty input");
  require_config(n <= l_syn, "interpolate: " + std::to_string(n) +
                                 " stored frames exceed target length " +
                                 std::to_string(l_syn));
  if (method == Interp::linear)
    require_config(n >= 2,
                   "interpolate: linear needs >= 2 stored frames "
                   "(duplicate handles single frames)");
  if (method == Interp::parametric) {
    require_config(phi != nullptr && phi->defined(),
                   "interpolate: parametric method needs a trained "
                   "interpolator");
    require_config(phi->n_syn == n && phi->l_syn == l_syn,
                   "interpolate: interpolator trained for (n_syn=" +
                       std::to_string(phi->n_syn) + ", l_syn=" +
                       std::to_string(phi->l_syn) + "), called with (" +
                       std::to_string(n) + ", " + std::to_string(l_syn) + ")");
  }

  const Index item = frames.size() / (b * n);
  Shape out_shape = frames.shape();
  out_shape[1] = l_syn;
  Var<S> flat = reshape(frames, {b * n, item});

  if (method == Interp::linear) {
    auto lo_index = std::make_shared<std::vector<Index>>(
        static_cast<std::size_t>(b * l_syn));
    auto hi_index = std::make_shared<std::vector<Index>>(
        static_cast<std::size_t>(b * l_syn));
    Tensor<S> w_lo({b * l_syn});
    Tensor<S> w_hi({b * l_syn});
    for (Index bi = 0; bi < b; ++bi)
      for (Index p = 0; p < l_syn; ++p) {
        const Index row = bi * l_syn + p;
        const Index num = p * (n - 1);
        const Index j = std::min(num / (l_syn - 1), n - 2);
        const double alpha = static_cast<double>(num - j * (l_syn - 1)) /
                             static_cast<double>(l_syn - 1);
        (*lo_index)[static_cast<std::size_t>(row)] = bi * n + j;
        (*hi_index)[static_cast<std::size_t>(row)] = bi * n + j + 1;
        w_lo[row] = static_cast<S>(1.0 - alpha);
        w_hi[row] = static_cast<S>(alpha);
      }
    Var<S> out = add(mul_rowwise(row_gather(flat, lo_index),
                                 Var<S>::constant(std::move(w_lo))),
                     mul_rowwise(row_gather(flat, hi_index),
                                 Var<S>::constant(std::move(w_hi))));
    return reshape(out, out_shape);
  }

  auto dup_index = std::make_shared<std::vector<Index>>(
      static_cast<std::size_t>(b * l_syn));
  for (Index bi = 0; bi < b; ++bi)
    for (Index p = 0; p < l_syn; ++p)
      (*dup_index)[static_cast<std::size_t>(bi * l_syn + p)] =
          bi * n + detail::dup_ref(p, n, l_syn);
  Var<S> dup = reshape(row_gather(flat, dup_index), out_shape);
  if (method == Interp::duplicate) return dup;

  std::vector<Var<S>> ps;
  ps.reserve(phi->params.size());
  for (const auto& t : phi->params) ps.push_back(Var<S>::constant(t));
  return phi_apply(dup, ps);
}

// Convenience single-clip expansion on plain tensors.
template <class S>
Tensor<S> interpolate(const Tensor<S>& frames, Index l_syn, Interp method,
                      const ParametricInterpolator<S>* phi = nullptr) {
  require_input(frames.rank() == 4,
                "interpolate: want [N,C,H,W], got " + shape_str(frames.shape()));
  NoGradGuard no_grad;
  Shape batched = frames.shape();
  batched.insert(batched.begin(), 1);
  Var<S> out = interpolate_batch(
      Var<S>::constant(frames.reshaped(batched)), l_syn, method, phi);
  Shape single = out.shape();
  single.erase(single.begin());
  return out.value().reshaped(single);
}

struct InterpTrainConfig {
  Index iterations = 150;
  Index batch_clips = 3;
  Index mid = 8;
  double lr = 0.5;
  double momentum = 0.9;
};

// Mean per-pixel squared reconstruction error over the leading length-l_syn
// window of every clip: subsample references at reference_indices, expand
// them back with the given method, and compare against the original window.
template <class S>
double reconstruction_mse(const VideoDataset<S>& dataset, Index n_syn,
                          Index l_syn, Interp method,
                          const ParametricInterpolator<S>* phi = nullptr) {
  dataset.validate();
  require_config(n_syn >= 1 && n_syn <= l_syn,
                 "reconstruction_mse: need 1 <= n_syn <= l_syn");
  require_input(dataset.min_frames() >= l_syn,
                "reconstruction_mse: clips shorter than the window");
  const auto refs = reference_indices(n_syn, l_syn);
  double total = 0.0;
  Index count = 0;
  for (const auto& clip : dataset.clips) {
    Tensor<S> sub = take_frames(clip.frames, refs);
    Tensor<S> out = interpolate(sub, l_syn, method, phi);
    const Index item = clip.channels() * clip.height() * clip.width();
    for (Index t = 0; t < l_syn; ++t)
      for (Index i = 0; i < item; ++i) {
        const double d = static_cast<double>(out[t * item + i]) -
                         static_cast<double>(clip.frames[t * item + i]);
        total += d * d;
      }
    count += l_syn * item;
  }
  return total / static_cast<double>(count);
}

// Fit phi to reconstruct real length-l_syn windows from their duplicated
// n_syn-frame subsamples (mean squared error, SGD with momentum). The final
// conv starts at zero, so the initial loss equals the duplication error and
// training can only be judged against that baseline.
template <class S>
ParametricInterpolator<S> train_parametric_interpolator(
    const VideoDataset<S>& dataset, Index n_syn, Index l_syn,
    const InterpTrainConfig& cfg, std::uint64_t seed,
    std::vector<double>* loss_trace = nullptr) {
  require_config(n_syn >= 1, "interpolator: n_syn must be >= 1");
  require_config(n_syn <= l_syn,
                 "interpolator: cannot store n_syn=" + std::to_string(n_syn) +
                     " frames for a length-" + std::to_string(l_syn) +
                     " expansion");
  require_config(cfg.iterations >= 0 && cfg.batch_clips >= 1 && cfg.mid >= 1 &&
                     cfg.lr > 0.0,
                 "interpolator: bad training config");
  dataset.validate();
  require_input(dataset.min_frames() >= l_syn,
                "interpolator training needs clips with at least l_syn=" +
                    std::to_string(l_syn) + " frames");

  const auto& first = dataset.clips[0];
  const Index c = first.channels(), h = first.height(), w = first.width();
  ParametricInterpolator<S> phi =
      init_interpolator<S>(n_syn, l_syn, c, cfg.mid, mix_seed(seed, 0x504849));

  std::vector<Var<S>> params;
  params.reserve(phi.params.size());
  for (auto& t : phi.params) params.push_back(Var<S>::leaf(t));

  const auto refs = reference_indices(n_syn, l_syn);
  const Index batch =
      std::min<Index>(cfg.batch_clips, static_cast<Index>(dataset.size()));
  Rng rng(mix_seed(seed, 0x545241494E));  // sampling stream
  SgdMomentum<S> opt{cfg.lr, cfg.momentum};

  for (Index it = 0; it < cfg.iterations; ++it) {
    Tensor<S> target({batch, l_syn, c, h, w});
    Tensor<S> stored({batch, n_syn, c, h, w});
    const Index item = c * h * w;
    for (Index bi = 0; bi < batch; ++bi) {
      const auto& clip = dataset.clips[rng.below(dataset.size())].frames;
      const Index start =
          static_cast<Index>(rng.below(clip.dim(0) - l_syn + 1));
      std::copy(clip.data() + start * item,
                clip.data() + (start + l_syn) * item,
                target.data() + bi * l_syn * item);
      for (Index j = 0; j < n_syn; ++j)
        std::copy(clip.data() + (start + refs[j]) * item,
                  clip.data() + (start + refs[j] + 1) * item,
                  stored.data() + (bi * n_syn + j) * item);
    }
    Var<S> dup = interpolate_batch(Var<S>::constant(std::move(stored)), l_syn,
                                   Interp::duplicate);
    Var<S> out = phi_apply(dup, params);
    Var<S> loss = mul_scalar(sum_squares(sub(out, Var<S>::constant(target))),
                             static_cast<S>(1.0 / (batch * l_syn * item)));
    const double loss_value = static_cast<double>(loss.value()[0]);
    require_input(std::isfinite(loss_value),
                  "interpolator training diverged at iteration " +
                      std::to_string(it));
    if (loss_trace) loss_trace->push_back(loss_value);
    auto grads = grad(loss, params);
    opt.step(params, grads);
  }

  for (std::size_t i = 0; i < params.size(); ++i)
    phi.params[i] = params[i].value();
  return phi;
}

}  // namespace temporal
}  // namespace vdst
