#pragma once

// The distillation driver: initializes a synthetic set for a compression
// schedule, then iterates matcher losses over per-class real batches and
// steps the synthetic frames with momentum SGD. Segment pairings from the
// schedule decide which real frames each synthetic frame is matched against;
// segment losses add up, so the pairing never changes the loss semantics,
// only its granularity.

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/matching/losses.hpp"
#include "vdst/matching/trajectory.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/models/optimizer.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/temporal/interpolate.hpp"
#include "vdst/temporal/schedule.hpp"
#include "vdst/video/sampling.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace matching {

namespace detail {
inline constexpr std::uint64_t kInitTag = 0x53594E49;   // synthetic init
inline constexpr std::uint64_t kModelTag = 0x4D4F444C;  // per-iteration model
inline constexpr std::uint64_t kIterTag = 0x49544552;   // per-iteration draws

// Frame subset of a clip batch: [B,F,C,H,W] x idx -> [B,k,C,H,W]. Plain
// tensor copy; the real side of a matcher never needs gradients.
template <class S>
Tensor<S> frames_subset(const Tensor<S>& batch, const std::vector<Index>& idx) {
  require_input(batch.rank() == 5, "frames_subset: want [B,F,C,H,W]");
  const Index b = batch.dim(0), f = batch.dim(1);
  const Index item = batch.size() / (b * f);
  Tensor<S> out({b, static_cast<Index>(idx.size()), batch.dim(2), batch.dim(3),
                 batch.dim(4)});
  for (Index i = 0; i < b; ++i)
    for (std::size_t k = 0; k < idx.size(); ++k) {
      require_input(idx[k] >= 0 && idx[k] < f,
                    "frames_subset: frame index out of range");
      const S* src = batch.data() + (i * f + idx[k]) * item;
      S* dst = out.data() + (i * static_cast<Index>(idx.size()) +
                             static_cast<Index>(k)) *
                                item;
      std::copy(src, src + item, dst);
    }
  return out;
}

// Differentiable frame subset: [B,N,C,H,W] x idx -> [B,k,C,H,W].
template <class S>
Var<S> frames_subset(const Var<S>& batch, const std::vector<Index>& idx) {
  require_input(batch.value().rank() == 5, "frames_subset: want [B,N,C,H,W]");
  const Shape& s = batch.shape();
  const Index b = s[0], n = s[1];
  const Index k = static_cast<Index>(idx.size());
  if (k == n) {
    bool identity = true;
    for (Index i = 0; i < k && identity; ++i) identity = idx[std::size_t(i)] == i;
    if (identity) return batch;
  }
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(b * k));
  for (Index i = 0; i < b; ++i)
    for (Index f : idx) {
      require_input(f >= 0 && f < n, "frames_subset: frame index out of range");
      rows.push_back(i * n + f);
    }
  Var<S> flat = reshape(batch, {b * n, s[2] * s[3] * s[4]});
  return reshape(row_gather(flat, std::move(rows)), {b, k, s[2], s[3], s[4]});
}

// Differentiable item subset: [items,N,C,H,W] x idx -> [k,N,C,H,W].
template <class S>
Var<S> items_subset(const Var<S>& set, const std::vector<Index>& idx) {
  const Shape& s = set.shape();
  Var<S> flat = reshape(set, {s[0], s[1] * s[2] * s[3] * s[4]});
  return reshape(row_gather(flat, idx),
                 {static_cast<Index>(idx.size()), s[1], s[2], s[3], s[4]});
}
}  // namespace detail

// Matcher loss summed over the segment pairs of a pairing. `real_clips` is a
// batch [Br, F, C, H, W] whose frame axis the pairing's real indices address;
// `syn_clips` is [Bs, n_syn, C, H, W] addressed by the synthetic indices.
template <class S>
Var<S> pairing_matching_loss(const ModelState<S>& model, Matcher matcher,
                             const Tensor<S>& real_clips,
                             const Var<S>& syn_clips,
                             const temporal::SegmentPairing& pairing,
                             int class_label) {
  require_config(matcher != Matcher::trajectory_mtt,
                 "pairing_matching_loss: trajectory matching is not a "
                 "per-segment loss");
  require_input(!pairing.pairs.empty(), "pairing_matching_loss: empty pairing");
  Var<S> total = Var<S>::constant(Tensor<S>::zeros({1}));
  for (const auto& pr : pairing.pairs) {
    Tensor<S> real_seg = detail::frames_subset(real_clips, pr.real);
    Var<S> syn_seg = detail::frames_subset(syn_clips, pr.syn);
    Var<S> piece =
        matcher == Matcher::gradient_dc
            ? loss_gradient(model, real_seg, syn_seg, class_label)
            : loss_distribution(model, real_seg, syn_seg);
    total = add(total, piece);
  }
  return total;
}

template <class S>
SyntheticSet<S> distill(
    const VideoDataset<S>& dataset,
    const temporal::CompressionSchedule& schedule, const MatchConfig& cfg,
    std::uint64_t seed,
    std::type_identity_t<const std::vector<ExpertTrajectory<S>>*> experts =
        nullptr,
    std::vector<double>* loss_trace = nullptr) {
  dataset.validate();
  schedule.validate();
  cfg.validate();
  require_input(dataset.min_frames() >= schedule.n_real,
                "distill: shortest clip (" +
                    std::to_string(dataset.min_frames()) +
                    " frames) cannot cover n_real = " +
                    std::to_string(schedule.n_real));
  if (cfg.matcher == Matcher::trajectory_mtt) {
    require_config(experts != nullptr && !experts->empty(),
                   "distill: trajectory matching needs expert trajectories");
    require_config(schedule.k == 1,
                   "distill: trajectory matching trains on whole clips; use "
                   "k = 1");
    require_config(schedule.interp != temporal::Interp::parametric,
                   "distill: trajectory matching interpolates with duplicate "
                   "or linear; a parametric interpolator is trained "
                   "afterwards");
    for (const auto& e : *experts) e.validate();
  }

  const Index c = dataset.clips[0].channels();
  const Index h = dataset.clips[0].height();
  const Index w = dataset.clips[0].width();
  const Index items = static_cast<Index>(dataset.num_classes) * cfg.ipc;

  SyntheticSet<S> set;
  set.num_classes = static_cast<Index>(dataset.num_classes);
  set.schedule = schedule;
  set.labels.resize(static_cast<std::size_t>(items));
  for (Index i = 0; i < items; ++i)
    set.labels[static_cast<std::size_t>(i)] = static_cast<int>(i / cfg.ipc);

  // Initialization: random real frames of the item's class, or pure noise.
  Tensor<S> frames({items, schedule.n_syn, c, h, w});
  {
    Rng rng(mix_seed(seed, detail::kInitTag));
    if (cfg.init_noise) {
      for (Index i = 0; i < frames.size(); ++i)
        frames[i] = static_cast<S>(rng.normal(0.0, cfg.noise_std));
    } else {
      require_input(dataset.min_frames() >= schedule.n_syn,
                    "distill: real-frame initialization needs clips with at "
                    "least n_syn frames (or set init_noise)");
      const Index item = schedule.n_syn * c * h * w;
      for (Index i = 0; i < items; ++i) {
        const int cls = set.labels[static_cast<std::size_t>(i)];
        const auto pool = dataset.indices_of_class(cls);
        require_input(!pool.empty(), "distill: class " + std::to_string(cls) +
                                         " has no clips");
        const auto& clip =
            dataset.clips[pool[rng.below(pool.size())]].frames;
        Tensor<S> sel = select_frames(
            clip, schedule.n_syn, rng);
        std::copy(sel.data(), sel.data() + item, frames.data() + i * item);
      }
    }
  }

  std::vector<Var<S>> syn{Var<S>::leaf(std::move(frames))};
  SgdMomentum<S> opt;
  opt.lr = static_cast<S>(cfg.lr_img);
  opt.momentum = static_cast<S>(cfg.momentum_img);

  for (Index it = 0; it < cfg.iterations; ++it) {
    Rng rng(mix_seed(mix_seed(seed, detail::kIterTag),
                     static_cast<std::uint64_t>(it)));
    Var<S> total = Var<S>::constant(Tensor<S>::zeros({1}));

    if (cfg.matcher == Matcher::trajectory_mtt) {
      const auto& e =
          (*experts)[static_cast<std::size_t>(rng.below(experts->size()))];
      const Index last_start =
          std::min(cfg.inner.max_start_epoch,
                   static_cast<Index>(e.snapshots.size()) - 1 -
                       cfg.inner.expert_epochs);
      require_input(last_start >= 0,
                    "distill: expert trajectories are shorter than "
                    "expert_epochs");
      const Index start = static_cast<Index>(
          rng.below(static_cast<std::uint64_t>(last_start) + 1));
      Var<S> view = temporal::interpolate_batch(syn[0], schedule.l_syn,
                                                schedule.interp);
      total = loss_trajectory(e, start, view, set.labels, cfg.inner);
    } else {
      auto model = init_model<S>(cfg.arch,
                                 mix_seed(mix_seed(seed, detail::kModelTag),
                                          static_cast<std::uint64_t>(it)));
      for (int cls = 0; cls < dataset.num_classes; ++cls) {
        const auto pool = dataset.indices_of_class(cls);
        require_input(!pool.empty(),
                      "distill: class " + std::to_string(cls) + " has no clips");

        std::vector<Tensor<S>> picked;
        picked.reserve(static_cast<std::size_t>(cfg.batch_real));
        Index n_real_frames = 0;
        for (Index b = 0; b < cfg.batch_real; ++b) {
          const auto& clip = dataset.clips[pool[rng.below(pool.size())]].frames;
          picked.push_back(
              select_frames(clip, schedule.n_real, rng));
          n_real_frames = schedule.n_real;
        }
        Tensor<S> real = stack_clips(picked);

        std::vector<Index> item_idx;
        if (cfg.batch_syn > 0 && cfg.batch_syn < cfg.ipc) {
          std::vector<Index> all(static_cast<std::size_t>(cfg.ipc));
          for (Index j = 0; j < cfg.ipc; ++j)
            all[static_cast<std::size_t>(j)] = cls * cfg.ipc + j;
          rng.shuffle(all);
          item_idx.assign(all.begin(), all.begin() + cfg.batch_syn);
        } else {
          for (Index j = 0; j < cfg.ipc; ++j)
            item_idx.push_back(cls * cfg.ipc + j);
        }
        Var<S> syn_cls = detail::items_subset(syn[0], item_idx);

        const auto pairing = temporal::segment_pairs(schedule, n_real_frames);
        total = add(total, pairing_matching_loss(model, cfg.matcher, real,
                                                 syn_cls, pairing, cls));
      }
    }

    const double loss = static_cast<double>(total.value()[0]);
    if (!std::isfinite(loss))
      throw NonFinite("distill: non-finite loss at iteration " +
                      std::to_string(it));
    if (loss_trace) loss_trace->push_back(loss);

    auto gs = grad(total, syn);
    opt.step(syn, gs);
    for (Index i = 0; i < syn[0].value().size(); ++i)
      if (!std::isfinite(static_cast<double>(syn[0].value()[i])))
        throw NonFinite("distill: non-finite synthetic frames after iteration " +
                        std::to_string(it));
  }

  set.frames = syn[0].value();
  return set;
}

}  // namespace matching
}  // namespace vdst
