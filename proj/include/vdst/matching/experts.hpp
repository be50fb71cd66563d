#pragma once

// Expert trajectories: ordinary supervised training on the real dataset,
// with the flat parameter vector recorded at initialization and after every
// epoch. Trajectory matching later replays segments of these paths.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/video/sampling.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace matching {

namespace detail {
inline constexpr std::uint64_t kExpertInitTag = 0x494E4954;   // model init
inline constexpr std::uint64_t kExpertSampleTag = 0x53414D50; // batch order
inline constexpr Index kExpertBatch = 16;
}  // namespace detail

template <class S>
std::vector<ExpertTrajectory<S>> generate_expert_trajectories(
    const VideoDataset<S>& dataset, const ArchSpec& arch, Index count,
    Index epochs, double lr_teacher, std::uint64_t seed) {
  dataset.validate();
  arch.validate();
  require_config(count >= 1, "experts: count must be >= 1");
  require_config(epochs >= 0, "experts: epochs must be >= 0");
  require_config(lr_teacher > 0.0 && std::isfinite(lr_teacher),
                 "experts: lr_teacher must be positive");

  // Every batch stacks clips cropped to the shortest length in the set.
  const Index f = dataset.min_frames();

  std::vector<ExpertTrajectory<S>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index t = 0; t < count; ++t) {
    const std::uint64_t tseed = mix_seed(seed, static_cast<std::uint64_t>(t));
    Rng rng(mix_seed(tseed, detail::kExpertSampleTag));
    auto st = init_model<S>(arch, mix_seed(tseed, detail::kExpertInitTag));

    ExpertTrajectory<S> traj;
    traj.arch = arch;
    traj.seed = tseed;
    traj.snapshots.push_back(flatten_params(st));
    traj.epochs.push_back(0);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (Index e = 1; e <= epochs; ++e) {
      rng.shuffle(order);
      for (std::size_t b0 = 0; b0 < order.size();
           b0 += static_cast<std::size_t>(detail::kExpertBatch)) {
        const std::size_t b1 = std::min(
            order.size(), b0 + static_cast<std::size_t>(detail::kExpertBatch));
        std::vector<Tensor<S>> clips;
        std::vector<int> labels;
        clips.reserve(b1 - b0);
        labels.reserve(b1 - b0);
        for (std::size_t i = b0; i < b1; ++i) {
          const auto& c = dataset.clips[order[i]];
          clips.push_back(select_frames(c.frames, f, rng));
          labels.push_back(c.label);
        }
        auto params = make_param_vars(st);
        Var<S> ce = cross_entropy_mean(
            forward_model(arch, params,
                          Var<S>::constant(stack_clips(clips)))
                .logits,
            labels);
        if (!std::isfinite(static_cast<double>(ce.value()[0])))
          throw NonFinite("expert trajectory " + std::to_string(t) +
                          " diverged at epoch " + std::to_string(e) +
                          ": non-finite training loss; lower lr_teacher");
        auto gs = grad(ce, params);
        for (std::size_t i = 0; i < st.params.size(); ++i)
          st.params[i].array() -=
              static_cast<S>(lr_teacher) * gs[i].value().array();
      }
      Tensor<S> snap = flatten_params(st);
      for (Index i = 0; i < snap.size(); ++i)
        if (!std::isfinite(static_cast<double>(snap[i])))
          throw NonFinite("expert trajectory " + std::to_string(t) +
                          " diverged at epoch " + std::to_string(e) +
                          ": non-finite parameters; lower lr_teacher");
      traj.snapshots.push_back(std::move(snap));
      traj.epochs.push_back(e);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace matching
}  // namespace vdst
