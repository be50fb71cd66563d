#pragma once

// Downstream evaluation: materialize a stored material into plain labeled
// clips, train a fresh model on them from scratch, and measure test
// accuracy. Every material kind (real clips, synthetic frame sets,
// disentangled artifacts) funnels through the same training core so their
// numbers are comparable.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/disentangle/combiner.hpp"
#include "vdst/disentangle/memory.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/models/optimizer.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/temporal/interpolate.hpp"
#include "vdst/video/sampling.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace eval {

struct EvalConfig {
  Index epochs = 200;
  double lr = 1e-2;
  double momentum = 0.9;
  Index batch = 16;

  void validate() const {
    require_config(epochs >= 0, "eval: epochs must be >= 0");
    require_config(lr >= 0.0 && std::isfinite(lr), "eval: bad learning rate");
    require_config(momentum >= 0.0 && momentum < 1.0,
                   "eval: momentum outside [0, 1)");
    require_config(batch >= 1, "eval: batch size must be positive");
  }
};

struct EvalReport {
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;            // population std over seeds
  std::vector<double> per_class;        // mean per-class accuracy over seeds
  std::vector<double> per_seed;         // overall accuracy per seed
  std::string arch;
  Index epochs = 0;
  double lr = 0.0;
};

namespace detail {

inline constexpr std::uint64_t kEvalTag = 0x4556414C;       // "EVAL"
inline constexpr std::uint64_t kEvalModelTag = 0x454D444C;  // "EMDL"

}  // namespace detail

// Expand a synthetic frame set into plain clips through its schedule. The
// parametric interpolator is required iff the schedule uses it.
template <class S>
VideoDataset<S> materialize(const matching::SyntheticSet<S>& set,
                            const temporal::ParametricInterpolator<S>* phi =
                                nullptr) {
  set.validate();
  if (set.schedule.interp == temporal::Interp::parametric)
    require_config(phi != nullptr,
                   "materialize: parametric schedule needs an interpolator");
  VideoDataset<S> out;
  out.num_classes = set.num_classes;
  const Index n = set.frames.dim(1), c = set.frames.dim(2),
              h = set.frames.dim(3), w = set.frames.dim(4);
  const Index item = n * c * h * w;
  for (Index i = 0; i < set.items(); ++i) {
    Tensor<S> stored({n, c, h, w});
    for (Index j = 0; j < item; ++j) stored[j] = set.frames[i * item + j];
    VideoClip<S> clip;
    clip.frames = temporal::interpolate(stored, set.schedule.l_syn,
                                        set.schedule.interp, phi);
    clip.label = set.labels[std::size_t(i)];
    out.clips.push_back(std::move(clip));
  }
  out.validate();
  return out;
}

// Fuse every (static, dynamic) memory pair of every class into a clip.
// Clips come out class-major, static index before dynamic index.
template <class S>
VideoDataset<S> materialize(const disentangle::DistilledArtifact<S>& art) {
  art.validate();
  const auto& si = art.static_memory.images;
  const auto& dm = art.dynamic_memory.motions;
  const Index classes = si.dim(0), spc = si.dim(1), dpc = dm.dim(1);
  const Index s_item = si.dim(2) * si.dim(3) * si.dim(4);
  const Index d_item = dm.dim(2) * dm.dim(3) * dm.dim(4) * dm.dim(5);
  VideoDataset<S> out;
  out.num_classes = static_cast<int>(classes);
  for (Index cls = 0; cls < classes; ++cls)
    for (Index s = 0; s < spc; ++s) {
      Tensor<S> frame({si.dim(2), si.dim(3), si.dim(4)});
      for (Index j = 0; j < s_item; ++j)
        frame[j] = si[(cls * spc + s) * s_item + j];
      for (Index d = 0; d < dpc; ++d) {
        Tensor<S> motion({dm.dim(2), dm.dim(3), dm.dim(4), dm.dim(5)});
        for (Index j = 0; j < d_item; ++j)
          motion[j] = dm[(cls * dpc + d) * d_item + j];
        VideoClip<S> clip;
        clip.frames = disentangle::combine(art.combiner, frame, motion);
        clip.label = static_cast<int>(cls);
        out.clips.push_back(std::move(clip));
      }
    }
  out.validate();
  return out;
}

namespace detail {

// Reduce every clip to `frames` frames and stack per-split tensors lazily
// per batch. Reduction order is fixed (train clips then test clips) so a
// seed fully determines the run.
template <class S>
std::vector<Tensor<S>> reduce_clips(const VideoDataset<S>& ds, Index frames,
                                    Rng& rng) {
  std::vector<Tensor<S>> out;
  out.reserve(ds.clips.size());
  for (const auto& clip : ds.clips)
    out.push_back(select_frames(clip.frames, frames, rng));
  return out;
}

}  // namespace detail

// Train a fresh model per seed on the material and report test accuracy.
// Both datasets are reduced to their common shortest clip length so clips
// stack into batches regardless of origin.
template <class S>
EvalReport evaluate(const VideoDataset<S>& material,
                    const VideoDataset<S>& test, const ArchSpec& arch,
                    const std::vector<std::uint64_t>& seeds,
                    const EvalConfig& cfg = {}) {
  material.validate();
  test.validate();
  cfg.validate();
  arch.validate();
  require_input(!seeds.empty(), "evaluate: need at least one seed");
  require_input(material.num_classes == test.num_classes,
                "evaluate: material and test class counts differ");
  require_config(arch.num_classes == material.num_classes,
                 "evaluate: model head does not match the class count");
  require_config(arch.channels == material.clips[0].channels() &&
                     arch.height == material.clips[0].height() &&
                     arch.width == material.clips[0].width(),
                 "evaluate: model geometry does not match the clips");
  require_input(material.clips[0].channels() == test.clips[0].channels() &&
                    material.clips[0].height() == test.clips[0].height() &&
                    material.clips[0].width() == test.clips[0].width(),
                "evaluate: material and test geometry differ");
  for (int cls = 0; cls < material.num_classes; ++cls)
    require_input(!material.indices_of_class(cls).empty(),
                  "evaluate: material has no clips for class " +
                      std::to_string(cls));

  const Index frames = std::min(material.min_frames(), test.min_frames());
  const Index n_train = static_cast<Index>(material.clips.size());

  EvalReport report;
  report.arch = arch_name(arch.arch);
  report.epochs = cfg.epochs;
  report.lr = cfg.lr;
  report.per_class.assign(std::size_t(material.num_classes), 0.0);

  for (std::uint64_t seed : seeds) {
    Rng rng(mix_seed(seed, detail::kEvalTag));
    auto train_clips = detail::reduce_clips(material, frames, rng);
    auto test_clips = detail::reduce_clips(test, frames, rng);

    auto st = init_model<S>(arch, mix_seed(seed, detail::kEvalModelTag));
    auto params = make_param_vars(st);
    SgdMomentum<S> opt;
    opt.lr = cfg.lr;
    opt.momentum = cfg.momentum;

    std::vector<Index> order(static_cast<std::size_t>(n_train));
    for (Index i = 0; i < n_train; ++i) order[std::size_t(i)] = i;
    for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      for (Index start = 0; start < n_train; start += cfg.batch) {
        const Index stop = std::min(n_train, start + cfg.batch);
        std::vector<Tensor<S>> chunk;
        std::vector<int> labels;
        for (Index i = start; i < stop; ++i) {
          chunk.push_back(train_clips[std::size_t(order[std::size_t(i)])]);
          labels.push_back(
              material.clips[std::size_t(order[std::size_t(i)])].label);
        }
        auto out = forward_model(arch, params,
                                 Var<S>::constant(stack_clips(chunk)));
        auto loss = cross_entropy_mean(out.logits, labels);
        if (!std::isfinite(static_cast<double>(loss.value()[0])))
          throw NonFinite("evaluate: training loss diverged at epoch " +
                          std::to_string(epoch));
        auto grads = grad(loss, params);
        opt.step(params, grads);
      }
    }

    // Test accuracy in batch-size chunks with per-class tallies.
    NoGradGuard no_grad;
    std::vector<Index> hits(std::size_t(test.num_classes), 0);
    std::vector<Index> totals(std::size_t(test.num_classes), 0);
    const Index n_test = static_cast<Index>(test.clips.size());
    for (Index start = 0; start < n_test; start += cfg.batch) {
      const Index stop = std::min(n_test, start + cfg.batch);
      std::vector<Tensor<S>> chunk;
      for (Index i = start; i < stop; ++i)
        chunk.push_back(test_clips[std::size_t(i)]);
      auto out = forward_model(arch, params,
                               Var<S>::constant(stack_clips(chunk)));
      auto pred = argmax_rows(out.logits.value());
      for (Index i = start; i < stop; ++i) {
        const int truth = test.clips[std::size_t(i)].label;
        ++totals[std::size_t(truth)];
        if (pred[std::size_t(i - start)] == truth) ++hits[std::size_t(truth)];
      }
    }
    Index hit_sum = 0;
    for (int cls = 0; cls < test.num_classes; ++cls) {
      hit_sum += hits[std::size_t(cls)];
      if (totals[std::size_t(cls)] > 0)
        report.per_class[std::size_t(cls)] +=
            static_cast<double>(hits[std::size_t(cls)]) /
            static_cast<double>(totals[std::size_t(cls)]);
    }
    report.per_seed.push_back(static_cast<double>(hit_sum) /
                              static_cast<double>(n_test));
  }

  const double n_seeds = static_cast<double>(seeds.size());
  for (double a : report.per_seed) report.accuracy_mean += a;
  report.accuracy_mean /= n_seeds;
  double var = 0.0;
  for (double a : report.per_seed) {
    const double d = a - report.accuracy_mean;
    var += d * d;
  }
  report.accuracy_std = std::sqrt(var / n_seeds);
  for (auto& a : report.per_class) a /= n_seeds;
  return report;
}

template <class S>
EvalReport evaluate(const matching::SyntheticSet<S>& material,
                    const VideoDataset<S>& test, const ArchSpec& arch,
                    const std::vector<std::uint64_t>& seeds,
                    const EvalConfig& cfg = {},
                    const temporal::ParametricInterpolator<S>* phi = nullptr) {
  return evaluate(materialize(material, phi), test, arch, seeds, cfg);
}

template <class S>
EvalReport evaluate(const disentangle::DistilledArtifact<S>& material,
                    const VideoDataset<S>& test, const ArchSpec& arch,
                    const std::vector<std::uint64_t>& seeds,
                    const EvalConfig& cfg = {}) {
  return evaluate(materialize(material), test, arch, seeds, cfg);
}

}  // namespace eval
}  // namespace vdst
