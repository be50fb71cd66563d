#pragma once

// Domain types shared by the matchers and the distillation driver: the
// matcher selection with its hyper-parameters, the learnable synthetic set,
// and recorded expert parameter trajectories.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/temporal/schedule.hpp"

namespace vdst {
namespace matching {

enum class Matcher { gradient_dc, distribution_dm, trajectory_mtt };

inline const char* matcher_name(Matcher m) {
  switch (m) {
    case Matcher::gradient_dc: return "gradient_dc";
    case Matcher::distribution_dm: return "distribution_dm";
    case Matcher::trajectory_mtt: return "trajectory_mtt";
  }
  return "?";
}

inline Matcher matcher_from_name(std::string_view s) {
  if (s == "gradient_dc") return Matcher::gradient_dc;
  if (s == "distribution_dm") return Matcher::distribution_dm;
  if (s == "trajectory_mtt") return Matcher::trajectory_mtt;
  throw InvalidConfig("unknown matcher '" + std::string(s) +
                      "' (want gradient_dc, distribution_dm, or "
                      "trajectory_mtt)");
}

// Inner-loop settings for trajectory matching.
struct InnerConfig {
  Index syn_steps = 1;        // unrolled student steps per loss evaluation
  Index expert_epochs = 1;    // how far ahead the target snapshot sits
  Index max_start_epoch = 10; // latest expert epoch a student may start from
  double lr_teacher = 0.01;   // student (and expert) step size
};

struct MatchConfig {
  Matcher matcher = Matcher::distribution_dm;
  ArchSpec arch;            // matching network
  Index ipc = 1;            // synthetic items per class
  double lr_img = 0.1;      // synthetic-data step size
  double momentum_img = 0.5;
  Index batch_real = 8;     // real clips sampled per class per iteration
  Index batch_syn = 0;      // synthetic items per class per step; 0 = all
  Index iterations = 100;
  bool init_noise = false;  // default initialization is random real frames
  double noise_std = 1.0;
  InnerConfig inner;

  void validate() const {
    arch.validate();
    require_config(ipc >= 1, "match: ipc must be >= 1");
    require_config(lr_img > 0.0 && std::isfinite(lr_img),
                   "match: lr_img must be positive");
    require_config(momentum_img >= 0.0 && momentum_img < 1.0,
                   "match: momentum must lie in [0, 1)");
    require_config(batch_real >= 1, "match: batch_real must be >= 1");
    require_config(batch_syn >= 0, "match: batch_syn must be >= 0");
    require_config(iterations >= 0, "match: iterations must be >= 0");
    require_config(!init_noise || noise_std > 0.0,
                   "match: noise initialization needs noise_std > 0");
    require_config(inner.syn_steps >= 0, "match: syn_steps must be >= 0");
    require_config(inner.expert_epochs >= 1,
                   "match: expert_epochs must be >= 1");
    require_config(inner.max_start_epoch >= 0,
                   "match: max_start_epoch must be >= 0");
    require_config(inner.lr_teacher > 0.0 && std::isfinite(inner.lr_teacher),
                   "match: lr_teacher must be positive");
  }
};

// The learnable synthetic set: ipc items per class, each storing n_syn
// frames. Items are class-major, so item c*ipc + j belongs to class c.
template <class S>
struct SyntheticSet {
  Tensor<S> frames;  // [num_items, n_syn, C, H, W]
  std::vector<int> labels;
  Index num_classes = 0;
  temporal::CompressionSchedule schedule;

  Index items() const { return frames.defined() ? frames.dim(0) : 0; }
  Index ipc() const { return num_classes > 0 ? items() / num_classes : 0; }

  void validate() const {
    require_input(frames.defined() && frames.rank() == 5,
                  "SyntheticSet: frames must be [items, n_syn, C, H, W]");
    schedule.validate();
    require_input(frames.dim(1) == schedule.n_syn,
                  "SyntheticSet: stored frame count disagrees with schedule");
    require_input(num_classes >= 1, "SyntheticSet: no classes");
    require_input(items() % num_classes == 0,
                  "SyntheticSet: class item counts are unequal");
    require_input(static_cast<Index>(labels.size()) == items(),
                  "SyntheticSet: label count mismatch");
    const Index per = ipc();
    for (Index i = 0; i < items(); ++i)
      require_input(labels[i] == static_cast<int>(i / per),
                    "SyntheticSet: labels must be class-major");
    for (Index i = 0; i < frames.size(); ++i)
      require_input(std::isfinite(static_cast<double>(frames[i])),
                    "SyntheticSet: non-finite frame value");
  }
};

// Parameter snapshots from supervised training on real data; the matching
// target for trajectory matching. Snapshot 0 is the initialization.
template <class S>
struct ExpertTrajectory {
  std::vector<Tensor<S>> snapshots;  // flat parameter vectors
  std::vector<Index> epochs;         // epoch index of each snapshot
  ArchSpec arch;
  std::uint64_t seed = 0;

  void validate() const {
    require_input(!snapshots.empty(), "ExpertTrajectory: no snapshots");
    require_input(snapshots.size() == epochs.size(),
                  "ExpertTrajectory: epoch/snapshot count mismatch");
    for (const auto& s : snapshots)
      require_input(s.rank() == 1 && s.size() == snapshots[0].size(),
                    "ExpertTrajectory: snapshot lengths disagree");
  }
};

}  // namespace matching
}  // namespace vdst
