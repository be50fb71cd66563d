#pragma once

// The two-stage disentangled distillation loop. Stage 1 condenses each
// class's appearance into static frames by gradient matching on
// single-frame batches (motion never enters, so a cheap 2-D net suffices
// and an early stop cuts the tail once the loss flattens). Stage 2 freezes
// those frames and trains the motion memory D plus the shared combiner H:
// synthetic clips are fused from sampled (static, dynamic) pairs and matched
// against full-length real batches, with gradients flowing into D and H
// only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/disentangle/combiner.hpp"
#include "vdst/disentangle/memory.hpp"
#include "vdst/matching/distill.hpp"
#include "vdst/matching/experts.hpp"
#include "vdst/matching/losses.hpp"
#include "vdst/matching/trajectory.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/models/optimizer.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/video/sampling.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace disentangle {

namespace detail {

inline constexpr std::uint64_t kStaticInitTag = 0x53494E49;   // "SINI"
inline constexpr std::uint64_t kStaticIterTag = 0x53495452;   // "SITR"
inline constexpr std::uint64_t kStaticModelTag = 0x534D444C;  // "SMDL"
inline constexpr std::uint64_t kDynInitTag = 0x44494E49;      // "DINI"
inline constexpr std::uint64_t kDynIterTag = 0x44495452;      // "DITR"
inline constexpr std::uint64_t kDynModelTag = 0x444D444C;     // "DMDL"
inline constexpr std::uint64_t kHalInitTag = 0x48494E49;      // "HINI"

// Stage-1 early stop: once the mean loss over the last window is within a
// relative tolerance of the previous window's mean, further iterations only
// burn time. The floor keeps the comparison meaningful when the loss sits
// at numerical zero.
inline constexpr Index kEarlyStopWindow = 20;
inline constexpr double kEarlyStopRelTol = 1e-3;
inline constexpr double kEarlyStopLossFloor = 1e-6;

inline bool smoothed_loss_flat(const std::vector<double>& trace) {
  const auto w = static_cast<std::size_t>(kEarlyStopWindow);
  if (trace.size() < 2 * w) return false;
  double recent = 0.0, prior = 0.0;
  for (std::size_t i = trace.size() - w; i < trace.size(); ++i)
    recent += trace[i];
  for (std::size_t i = trace.size() - 2 * w; i < trace.size() - w; ++i)
    prior += trace[i];
  recent /= static_cast<double>(w);
  prior /= static_cast<double>(w);
  return std::abs(recent - prior) <=
         kEarlyStopRelTol * std::max(std::abs(prior), kEarlyStopLossFloor);
}

// Batch of real clips of one class: `count` draws with replacement, each
// reduced to `n_frames` stratified frames -> [count, n_frames, C, H, W].
template <class S>
Tensor<S> real_batch(const VideoDataset<S>& dataset, int cls, Index count,
                     Index n_frames, Rng& rng) {
  const auto pool = dataset.indices_of_class(cls);
  require_input(!pool.empty(),
                "stage: class " + std::to_string(cls) + " has no clips");
  std::vector<Tensor<S>> picked;
  picked.reserve(static_cast<std::size_t>(count));
  for (Index b = 0; b < count; ++b) {
    const auto& clip = dataset.clips[pool[rng.below(pool.size())]].frames;
    picked.push_back(select_frames(clip, n_frames, rng));
  }
  return stack_clips(picked);
}

}  // namespace detail

// Stage 1: static frames by gradient matching. The matcher is pinned to
// gradient_dc on the 2-D ConvNet — single frames carry no motion, so this
// is a per-frame condensation problem and the cheapest matcher that solves
// it wins. Initialization copies one random real frame per slot. Runs at
// most cfg.iterations steps, stopping early once the smoothed loss is flat.
template <class S>
StaticMemory<S> stage1_static(const VideoDataset<S>& dataset, Index spc,
                              const matching::MatchConfig& cfg,
                              std::uint64_t seed,
                              std::vector<double>* loss_trace = nullptr) {
  dataset.validate();
  cfg.validate();
  require_config(spc >= 1, "stage1: need at least one static frame per class");
  require_config(cfg.matcher == matching::Matcher::gradient_dc,
                 "stage1: the static pass matches gradients (gradient_dc)");
  require_config(cfg.arch.arch == Arch::convnet_2d,
                 "stage1: the static pass matches on the 2-D ConvNet");

  const Index classes = static_cast<Index>(dataset.num_classes);
  const Index c = dataset.clips[0].channels();
  const Index h = dataset.clips[0].height();
  const Index w = dataset.clips[0].width();
  const Index items = classes * spc;
  const Index item = c * h * w;

  Tensor<S> init({items, 1, c, h, w});
  {
    Rng rng(mix_seed(seed, detail::kStaticInitTag));
    for (Index i = 0; i < items; ++i) {
      const int cls = static_cast<int>(i / spc);
      const auto pool = dataset.indices_of_class(cls);
      require_input(!pool.empty(), "stage1: class " + std::to_string(cls) +
                                       " has no clips");
      const auto& clip = dataset.clips[pool[rng.below(pool.size())]].frames;
      Tensor<S> sel = select_frames(clip, 1, rng);
      std::copy(sel.data(), sel.data() + item, init.data() + i * item);
    }
  }

  std::vector<Var<S>> syn{Var<S>::leaf(std::move(init))};
  SgdMomentum<S> opt;
  opt.lr = cfg.lr_img;
  opt.momentum = cfg.momentum_img;

  std::vector<double> local_trace;
  std::vector<double>& trace = loss_trace ? *loss_trace : local_trace;
  trace.clear();

  for (Index it = 0; it < cfg.iterations; ++it) {
    Rng rng(mix_seed(mix_seed(seed, detail::kStaticIterTag),
                     static_cast<std::uint64_t>(it)));
    auto model = init_model<S>(cfg.arch,
                            mix_seed(mix_seed(seed, detail::kStaticModelTag),
                                     static_cast<std::uint64_t>(it)));
    Var<S> total = Var<S>::constant(Tensor<S>::zeros({1}));
    for (Index cls = 0; cls < classes; ++cls) {
      Tensor<S> real = detail::real_batch(dataset, static_cast<int>(cls),
                                          cfg.batch_real, 1, rng);
      std::vector<Index> idx;
      idx.reserve(static_cast<std::size_t>(spc));
      for (Index j = 0; j < spc; ++j) idx.push_back(cls * spc + j);
      Var<S> syn_cls = matching::detail::items_subset(syn[0], idx);
      total = add(total, matching::loss_gradient(model, real, syn_cls,
                                                 static_cast<int>(cls)));
    }

    const double loss = static_cast<double>(total.value()[0]);
    if (!std::isfinite(loss))
      throw NonFinite("stage1: non-finite loss at iteration " +
                      std::to_string(it));
    trace.push_back(loss);
    if (detail::smoothed_loss_flat(trace)) break;

    auto gs = grad(total, syn);
    opt.step(syn, gs);
    for (Index i = 0; i < syn[0].value().size(); ++i)
      if (!std::isfinite(static_cast<double>(syn[0].value()[i])))
        throw NonFinite("stage1: non-finite static memory after iteration " +
                        std::to_string(it));
  }

  StaticMemory<S> out;
  out.images = syn[0].value().reshaped({classes, spc, c, h, w});
  return out;
}

// Stage-2 configuration. `match` supplies the matcher, network, batch sizes
// and iteration budget; the stage-specific fields are the two learning
// rates (the motion memory and the combiner step at different speeds), the
// combiner variant, the motion-stack length (0 = clip length) and the
// init noise scale for D and H.
struct StageConfig {
  matching::MatchConfig match;
  double lr_dynamic = 0.1;
  double lr_hal = 0.01;
  CombinerVariant variant = CombinerVariant::two_block_mid8;
  Index fd = 0;               // motion steps per stack; 0 -> clip length
  Index pairs_per_class = 0;  // fused clips per class-iteration; 0 -> SPC*DPC
  double init_noise_std = 1e-2;

  void validate() const {
    match.validate();
    require_config(std::isfinite(lr_dynamic) && lr_dynamic >= 0.0 &&
                       std::isfinite(lr_hal) && lr_hal >= 0.0,
                   "stage2: learning rates must be finite and non-negative");
    require_config(fd >= 0, "stage2: motion step count cannot be negative");
    require_config(pairs_per_class >= 0,
                   "stage2: pairs per class cannot be negative");
    require_config(std::isfinite(init_noise_std) && init_noise_std >= 0.0,
                   "stage2: init noise must be finite and non-negative");
  }
};

// Stage 2: motion memory and combiner against a frozen static memory.
// Returns the trained motion stacks and the combiner; the static memory is
// read-only throughout (its pixels enter the graph as constants).
template <class S>
std::pair<DynamicMemory<S>, CombinerSpec<S>> stage2_dynamic(
    const VideoDataset<S>& dataset, const StaticMemory<S>& static_memory,
    Index dpc, const StageConfig& cfg, std::uint64_t seed,
    std::type_identity_t<const std::vector<matching::ExpertTrajectory<S>>*>
        experts = nullptr,
    std::vector<double>* loss_trace = nullptr) {
  dataset.validate();
  static_memory.validate();
  cfg.validate();
  require_config(dpc >= 1, "stage2: need at least one motion stack per class");

  const Index classes = static_cast<Index>(dataset.num_classes);
  require_input(static_memory.classes() == classes,
                "stage2: static memory holds " +
                    std::to_string(static_memory.classes()) +
                    " classes, dataset has " + std::to_string(classes));
  const Index c = static_memory.channels();
  const Index h = static_memory.height();
  const Index w = static_memory.width();
  require_input(dataset.clips[0].channels() == c &&
                    dataset.clips[0].height() == h &&
                    dataset.clips[0].width() == w,
                "stage2: static memory geometry does not match the dataset");

  if (cfg.match.matcher == matching::Matcher::trajectory_mtt) {
    require_config(experts != nullptr && !experts->empty(),
                   "stage2: trajectory matching needs expert trajectories");
    for (const auto& e : *experts) e.validate();
  }

  const Index frames = dataset.min_frames();  // emitted clip length = N_real
  const Index fd = cfg.fd > 0 ? cfg.fd : frames;
  const Index spc = static_memory.per_class();
  const Index items_d = classes * dpc;
  const Index pairs_n =
      cfg.pairs_per_class > 0 ? cfg.pairs_per_class : spc * dpc;

  CombinerSpec<S> comb =
      init_combiner<S>(cfg.variant, c, h, w, fd, frames,
                       mix_seed(seed, detail::kHalInitTag), cfg.init_noise_std);

  Tensor<S> d0({items_d, fd, 1, h, w});
  {
    Rng rng(mix_seed(seed, detail::kDynInitTag));
    for (Index i = 0; i < d0.size(); ++i)
      d0[i] = static_cast<S>(rng.normal(0.0, cfg.init_noise_std));
  }
  std::vector<Var<S>> dmem{Var<S>::leaf(std::move(d0))};
  std::vector<Var<S>> hp;
  hp.reserve(comb.params.size());
  for (const auto& p : comb.params) hp.push_back(Var<S>::leaf(p));

  SgdMomentum<S> opt_d, opt_h;
  opt_d.lr = cfg.lr_dynamic;
  opt_d.momentum = cfg.match.momentum_img;
  opt_h.lr = cfg.lr_hal;
  opt_h.momentum = cfg.match.momentum_img;

  const Index s_item = c * h * w;

  // Fused synthetic clips for sampled memory pairs (absolute row indices):
  // static slots enter as constants (frozen), dynamic slots through a
  // differentiable gather.
  auto fuse = [&](const std::vector<Index>& s_rows,
                  const std::vector<Index>& d_rows) -> Var<S> {
    const Index n = static_cast<Index>(s_rows.size());
    Tensor<S> s_batch({n, c, h, w});
    for (Index i = 0; i < n; ++i) {
      const Index s_row = s_rows[static_cast<std::size_t>(i)];
      std::copy(static_memory.images.data() + s_row * s_item,
                static_memory.images.data() + (s_row + 1) * s_item,
                s_batch.data() + i * s_item);
    }
    Var<S> dsel = matching::detail::items_subset(dmem[0], d_rows);
    return combine_batch(comb, hp, Var<S>::constant(std::move(s_batch)), dsel);
  };

  // Uniform within-class pair draws for one class, appended as absolute
  // memory rows.
  auto draw_pairs = [&](Index cls, Rng& rng, std::vector<Index>& s_rows,
                        std::vector<Index>& d_rows) {
    for (Index p = 0; p < pairs_n; ++p) {
      s_rows.push_back(cls * spc +
                       static_cast<Index>(
                           rng.below(static_cast<std::uint64_t>(spc))));
      d_rows.push_back(cls * dpc +
                       static_cast<Index>(
                           rng.below(static_cast<std::uint64_t>(dpc))));
    }
  };

  for (Index it = 0; it < cfg.match.iterations; ++it) {
    Rng rng(mix_seed(mix_seed(seed, detail::kDynIterTag),
                     static_cast<std::uint64_t>(it)));
    Var<S> total = Var<S>::constant(Tensor<S>::zeros({1}));

    if (cfg.match.matcher == matching::Matcher::trajectory_mtt) {
      const auto& e =
          (*experts)[static_cast<std::size_t>(rng.below(experts->size()))];
      const Index last_start =
          std::min(cfg.match.inner.max_start_epoch,
                   static_cast<Index>(e.snapshots.size()) - 1 -
                       cfg.match.inner.expert_epochs);
      require_input(last_start >= 0,
                    "stage2: expert too short for the inner config");
      const Index start = static_cast<Index>(
          rng.below(static_cast<std::uint64_t>(last_start) + 1));
      // One fused batch across all classes; the trajectory loss is global.
      std::vector<Index> s_rows, d_rows;
      std::vector<int> labels;
      for (Index cls = 0; cls < classes; ++cls) {
        draw_pairs(cls, rng, s_rows, d_rows);
        for (Index p = 0; p < pairs_n; ++p)
          labels.push_back(static_cast<int>(cls));
      }
      Var<S> synth = fuse(s_rows, d_rows);
      total = matching::loss_trajectory(e, start, synth, labels,
                                        cfg.match.inner);
    } else {
      auto model =
          init_model<S>(cfg.match.arch,
                     mix_seed(mix_seed(seed, detail::kDynModelTag),
                              static_cast<std::uint64_t>(it)));
      for (Index cls = 0; cls < classes; ++cls) {
        Tensor<S> real = detail::real_batch(dataset, static_cast<int>(cls),
                                            cfg.match.batch_real, frames, rng);
        std::vector<Index> s_rows, d_rows;
        draw_pairs(cls, rng, s_rows, d_rows);
        Var<S> synth = fuse(s_rows, d_rows);
        Var<S> piece =
            cfg.match.matcher == matching::Matcher::gradient_dc
                ? matching::loss_gradient(model, real, synth,
                                          static_cast<int>(cls))
                : matching::loss_distribution(model, real, synth);
        total = add(total, piece);
      }
    }

    const double loss = static_cast<double>(total.value()[0]);
    if (!std::isfinite(loss))
      throw NonFinite("stage2: non-finite loss at iteration " +
                      std::to_string(it));
    if (loss_trace) loss_trace->push_back(loss);

    std::vector<Var<S>> wrt;
    wrt.reserve(1 + hp.size());
    wrt.push_back(dmem[0]);
    for (const auto& p : hp) wrt.push_back(p);
    auto gs = grad(total, wrt);

    std::vector<Var<S>> gd{gs[0]};
    opt_d.step(dmem, gd);
    std::vector<Var<S>> gh(gs.begin() + 1, gs.end());
    opt_h.step(hp, gh);

    for (Index i = 0; i < dmem[0].value().size(); ++i)
      if (!std::isfinite(static_cast<double>(dmem[0].value()[i])))
        throw NonFinite("stage2: non-finite motion memory after iteration " +
                        std::to_string(it));
    for (const auto& p : hp)
      for (Index i = 0; i < p.value().size(); ++i)
        if (!std::isfinite(static_cast<double>(p.value()[i])))
          throw NonFinite("stage2: non-finite combiner after iteration " +
                          std::to_string(it));
  }

  for (std::size_t i = 0; i < comb.params.size(); ++i)
    comb.params[i] = hp[i].value();
  DynamicMemory<S> dyn;
  dyn.motions = dmem[0].value().reshaped({classes, dpc, fd, 1, h, w});
  return {std::move(dyn), std::move(comb)};
}

}  // namespace disentangle
}  // namespace vdst
