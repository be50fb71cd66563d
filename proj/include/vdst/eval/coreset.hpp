#pragma once

// Coreset baselines: keep ipc real clips per class instead of optimizing
// synthetic ones. Selection runs per class over embedding vectors from a
// frozen feature model; the result is packaged as a synthetic set whose
// schedule replays the kept clips at full length, so it flows through the
// same evaluation path as distilled material.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/video/sampling.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace eval {

enum class CoresetMethod { random, herding, kcenter };

inline const char* coreset_method_name(CoresetMethod m) {
  switch (m) {
    case CoresetMethod::random: return "random";
    case CoresetMethod::herding: return "herding";
    case CoresetMethod::kcenter: return "kcenter";
  }
  throw InvalidConfig("coreset: unknown method");
}

inline CoresetMethod coreset_method_from_name(const std::string& name) {
  if (name == "random") return CoresetMethod::random;
  if (name == "herding") return CoresetMethod::herding;
  if (name == "kcenter") return CoresetMethod::kcenter;
  throw InvalidConfig("coreset: unknown method '" + name +
                      "' (want random, herding, or kcenter)");
}

namespace detail {

inline constexpr std::uint64_t kCoresetTag = 0x434F5245;   // "CORE"
inline constexpr std::uint64_t kCoresetFrameTag = 0x46524D53;  // "FRMS"

template <class S>
double sq_dist_to(const Tensor<S>& feats, Index row,
                  const std::vector<double>& point) {
  const Index d = feats.dim(1);
  double acc = 0.0;
  for (Index j = 0; j < d; ++j) {
    const double diff =
        static_cast<double>(feats[row * d + j]) - point[std::size_t(j)];
    acc += diff * diff;
  }
  return acc;
}

template <class S>
std::vector<double> row_mean(const Tensor<S>& feats) {
  const Index n = feats.dim(0), d = feats.dim(1);
  std::vector<double> mu(std::size_t(d), 0.0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j)
      mu[std::size_t(j)] += static_cast<double>(feats[i * d + j]);
  for (auto& v : mu) v /= static_cast<double>(n);
  return mu;
}

}  // namespace detail

// Greedy herding over feature rows [N, D]: each step adds the unpicked row
// that brings the running mean of the selection closest to the full mean.
// Ties break toward the lowest row index; rows are picked at most once.
template <class S>
std::vector<Index> herding_select(const Tensor<S>& feats, Index ipc) {
  require_input(feats.rank() == 2, "herding_select: want [N, D] features");
  const Index n = feats.dim(0), d = feats.dim(1);
  require_input(ipc >= 1 && ipc <= n,
                "herding_select: ipc " + std::to_string(ipc) +
                    " outside [1," + std::to_string(n) + "]");
  const auto mu = detail::row_mean(feats);
  std::vector<bool> taken(std::size_t(n), false);
  std::vector<double> sum(std::size_t(d), 0.0);
  std::vector<Index> picks;
  picks.reserve(std::size_t(ipc));
  for (Index t = 0; t < ipc; ++t) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (taken[std::size_t(i)]) continue;
      double acc = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double mean_j =
            (sum[std::size_t(j)] + static_cast<double>(feats[i * d + j])) /
            static_cast<double>(t + 1);
        const double diff = mu[std::size_t(j)] - mean_j;
        acc += diff * diff;
      }
      if (acc < best_d) {
        best_d = acc;
        best = i;
      }
    }
    taken[std::size_t(best)] = true;
    for (Index j = 0; j < d; ++j)
      sum[std::size_t(j)] += static_cast<double>(feats[best * d + j]);
    picks.push_back(best);
  }
  return picks;
}

// Greedy k-center over feature rows [N, D]: the first pick is the row
// nearest the mean, each later pick is the row farthest from the current
// selection (max-min distance). Ties break toward the lowest row index.
template <class S>
std::vector<Index> kcenter_select(const Tensor<S>& feats, Index ipc) {
  require_input(feats.rank() == 2, "kcenter_select: want [N, D] features");
  const Index n = feats.dim(0), d = feats.dim(1);
  require_input(ipc >= 1 && ipc <= n,
                "kcenter_select: ipc " + std::to_string(ipc) +
                    " outside [1," + std::to_string(n) + "]");
  const auto mu = detail::row_mean(feats);
  Index first = 0;
  double first_d = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    const double dist = detail::sq_dist_to(feats, i, mu);
    if (dist < first_d) {
      first_d = dist;
      first = i;
    }
  }
  std::vector<Index> picks = {first};
  std::vector<double> min_d(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(d));
  auto refresh = [&](Index center) {
    for (Index j = 0; j < d; ++j)
      row[std::size_t(j)] = static_cast<double>(feats[center * d + j]);
    for (Index i = 0; i < n; ++i)
      min_d[std::size_t(i)] =
          std::min(min_d[std::size_t(i)], detail::sq_dist_to(feats, i, row));
  };
  for (Index i = 0; i < n; ++i)
    min_d[std::size_t(i)] = std::numeric_limits<double>::infinity();
  refresh(first);
  while (static_cast<Index>(picks.size()) < ipc) {
    Index far = -1;
    double far_d = -1.0;
    for (Index i = 0; i < n; ++i)
      if (min_d[std::size_t(i)] > far_d) {
        far_d = min_d[std::size_t(i)];
        far = i;
      }
    picks.push_back(far);
    refresh(far);
  }
  return picks;
}

// Select ipc real clips per class and package them as a synthetic set. All
// clips are first reduced to the shortest length in the dataset so the kept
// frames stack into one tensor; the schedule replays them unchanged.
template <class S>
matching::SyntheticSet<S> coreset(const VideoDataset<S>& dataset, Index ipc,
                                  CoresetMethod method,
                                  const ModelState<S>& feature_model,
                                  std::uint64_t seed) {
  dataset.validate();
  require_input(ipc >= 1, "coreset: ipc must be positive");
  const Index frames = dataset.min_frames();
  const Index c = dataset.clips[0].channels();
  const Index h = dataset.clips[0].height();
  const Index w = dataset.clips[0].width();
  const bool needs_features = method != CoresetMethod::random;
  if (needs_features)
    require_config(feature_model.spec.channels == c &&
                       feature_model.spec.height == h &&
                       feature_model.spec.width == w,
                   "coreset: feature model geometry does not match the data");

  // One shared reduction pass keeps frame sampling independent of class
  // iteration order.
  Rng frame_rng(mix_seed(mix_seed(seed, detail::kCoresetTag),
                         detail::kCoresetFrameTag));
  std::vector<Tensor<S>> reduced;
  reduced.reserve(dataset.clips.size());
  for (const auto& clip : dataset.clips)
    reduced.push_back(select_frames(clip.frames, frames, frame_rng));

  matching::SyntheticSet<S> set;
  set.num_classes = dataset.num_classes;
  set.frames = Tensor<S>(
      {static_cast<Index>(dataset.num_classes) * ipc, frames, c, h, w});
  const Index item = frames * c * h * w;
  Index at = 0;
  for (int cls = 0; cls < dataset.num_classes; ++cls) {
    const auto pool = dataset.indices_of_class(cls);
    require_input(ipc <= static_cast<Index>(pool.size()),
                  "coreset: class " + std::to_string(cls) + " has " +
                      std::to_string(pool.size()) + " clips, need " +
                      std::to_string(ipc));
    std::vector<Index> picks;
    if (method == CoresetMethod::random) {
      Rng rng(mix_seed(mix_seed(seed, detail::kCoresetTag),
                       static_cast<std::uint64_t>(cls)));
      for (std::size_t p : rng.sample_without_replacement(
               pool.size(), static_cast<std::size_t>(ipc)))
        picks.push_back(static_cast<Index>(p));
    } else {
      NoGradGuard no_grad;
      auto params = make_param_vars(feature_model);
      Tensor<S> feats;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& clip = reduced[pool[i]];
        Shape batched = clip.shape();
        batched.insert(batched.begin(), 1);
        auto out = forward_model(feature_model.spec, params,
                                 Var<S>::constant(clip.reshaped(batched)));
        const auto& f = out.features.value();
        if (!feats.defined())
          feats = Tensor<S>({static_cast<Index>(pool.size()), f.dim(1)});
        for (Index j = 0; j < f.dim(1); ++j)
          feats[static_cast<Index>(i) * f.dim(1) + j] = f[j];
      }
      picks = method == CoresetMethod::herding ? herding_select(feats, ipc)
                                               : kcenter_select(feats, ipc);
    }
    for (Index p : picks) {
      const auto& src = reduced[pool[std::size_t(p)]];
      for (Index j = 0; j < item; ++j) set.frames[at * item + j] = src[j];
      set.labels.push_back(cls);
      ++at;
    }
  }
  set.schedule.n_syn = frames;
  set.schedule.n_real = frames;
  set.schedule.k = 1;
  set.schedule.interp = temporal::Interp::duplicate;
  set.schedule.l_syn = frames;
  set.validate();
  return set;
}

}  // namespace eval
}  // namespace vdst
