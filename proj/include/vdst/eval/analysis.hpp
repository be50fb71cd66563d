#pragma once

// Dataset analysis helpers: split classes into mostly-static and
// mostly-dynamic halves by how much their binarized per-frame embeddings
// change over time, and visualize motion as raw inter-frame differences.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/models/zoo.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace eval {

// Mean Hamming distance between the sign patterns of consecutive feature
// rows [F, D]. Each coordinate is binarized as >= 0 -> +1, < 0 -> -1; the
// raw flip count per consecutive pair is averaged over the F-1 pairs.
template <class S>
double hamming_dynamics_score(const Tensor<S>& feats) {
  require_input(feats.rank() == 2, "dynamics score: want [F, D] features");
  const Index f = feats.dim(0), d = feats.dim(1);
  require_input(f >= 2,
                "dynamics score: a single frame has no consecutive pairs");
  double total = 0.0;
  for (Index t = 0; t + 1 < f; ++t)
    for (Index j = 0; j < d; ++j) {
      const bool a = feats[t * d + j] >= S(0);
      const bool b = feats[(t + 1) * d + j] >= S(0);
      if (a != b) total += 1.0;
    }
  return total / static_cast<double>(f - 1);
}

struct DynamicsSplit {
  std::vector<int> static_classes;   // ascending class ids, lowest scores
  std::vector<int> dynamic_classes;  // ascending class ids, highest scores
  std::vector<double> class_scores;  // indexed by class id
};

// Rank classes by the temporal variability of their clips under a frozen
// per-frame feature model and cut the ranking in half. Classes whose clips
// barely move score near zero and land in the static half; ties break
// toward lower class ids. The first ceil(num_classes / 2) classes form the
// static group.
template <class S>
DynamicsSplit dynamics_grouping(const VideoDataset<S>& dataset,
                                const ModelState<S>& feature_model) {
  dataset.validate();
  require_config(feature_model.spec.arch == Arch::convnet_2d,
                 "dynamics grouping: needs a per-frame 2-D feature model");
  require_config(feature_model.spec.channels == dataset.clips[0].channels() &&
                     feature_model.spec.height == dataset.clips[0].height() &&
                     feature_model.spec.width == dataset.clips[0].width(),
                 "dynamics grouping: feature model geometry mismatch");

  NoGradGuard no_grad;
  auto params = make_param_vars(feature_model);
  std::vector<double> score_sum(std::size_t(dataset.num_classes), 0.0);
  std::vector<Index> counts(std::size_t(dataset.num_classes), 0);
  for (const auto& clip : dataset.clips) {
    const Index f = clip.num_frames();
    require_input(f >= 2,
                  "dynamics grouping: a single-frame clip has no "
                  "consecutive pairs");
    // Frames as a batch of single-frame clips: [F, 1, C, H, W].
    Shape per_frame = {f, 1, clip.channels(), clip.height(), clip.width()};
    auto out = forward_model(feature_model.spec, params,
                             Var<S>::constant(clip.frames.reshaped(per_frame)));
    score_sum[std::size_t(clip.label)] +=
        hamming_dynamics_score(out.features.value());
    ++counts[std::size_t(clip.label)];
  }

  DynamicsSplit split;
  split.class_scores.resize(std::size_t(dataset.num_classes));
  std::vector<std::pair<double, int>> order;
  for (int cls = 0; cls < dataset.num_classes; ++cls) {
    require_input(counts[std::size_t(cls)] > 0,
                  "dynamics grouping: class " + std::to_string(cls) +
                      " has no clips");
    const double s = score_sum[std::size_t(cls)] /
                     static_cast<double>(counts[std::size_t(cls)]);
    split.class_scores[std::size_t(cls)] = s;
    order.emplace_back(s, cls);
  }
  std::sort(order.begin(), order.end());
  const std::size_t n_static =
      (order.size() + 1) / 2;  // static half rounds up
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_static ? split.static_classes : split.dynamic_classes)
        .push_back(order[i].second);
  std::sort(split.static_classes.begin(), split.static_classes.end());
  std::sort(split.dynamic_classes.begin(), split.dynamic_classes.end());
  return split;
}

// Raw consecutive-frame differences of one clip: [F-1, C, H, W] with entry
// t equal to frame t+1 minus frame t. No normalization is applied.
template <class S>
Tensor<S> interframe_differences(const VideoClip<S>& clip) {
  require_input(clip.frames.rank() == 4,
                "interframe differences: want [F,C,H,W] frames");
  const Index f = clip.num_frames();
  require_input(f >= 2,
                "interframe differences: a single-frame clip has no "
                "consecutive pairs");
  const Index item = clip.channels() * clip.height() * clip.width();
  Tensor<S> out({f - 1, clip.channels(), clip.height(), clip.width()});
  for (Index t = 0; t + 1 < f; ++t)
    for (Index j = 0; j < item; ++j)
      out[t * item + j] =
          clip.frames[(t + 1) * item + j] - clip.frames[t * item + j];
  return out;
}

// Min-max normalize each image along the leading axis to [0, 1] for
// rendering. A constant image maps to mid-gray 0.5.
template <class S>
Tensor<S> normalize_for_render(const Tensor<S>& images) {
  require_input(images.rank() >= 2,
                "normalize_for_render: want a leading image axis");
  const Index n = images.dim(0);
  const Index item = images.size() / std::max<Index>(n, 1);
  Tensor<S> out(images.shape());
  for (Index i = 0; i < n; ++i) {
    S lo = images[i * item];
    S hi = lo;
    for (Index j = 1; j < item; ++j) {
      lo = std::min(lo, images[i * item + j]);
      hi = std::max(hi, images[i * item + j]);
    }
    if (hi == lo) {
      for (Index j = 0; j < item; ++j) out[i * item + j] = S(0.5);
    } else {
      for (Index j = 0; j < item; ++j)
        out[i * item + j] = (images[i * item + j] - lo) / (hi - lo);
    }
  }
  return out;
}

}  // namespace eval
}  // namespace vdst
