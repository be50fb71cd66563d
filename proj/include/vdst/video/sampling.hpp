#pragma once

#include <cstring>
#include <vector>

#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/video/types.hpp"

namespace vdst {

// Frame indices for a strided temporal crop. Valid start positions are
// {s : s + num_frames*stride <= total}; when the clip is too short for the
// span, indices wrap modulo the clip length instead.
inline std::vector<Index> sample_clip_indices(Index total, Index num_frames,
                                              Index stride, Rng& rng) {
  require_input(total > 0, "sample_clip: empty clip");
  require_input(num_frames > 0 && stride > 0,
                "sample_clip: num_frames and stride must be positive");
  std::vector<Index> idx(static_cast<std::size_t>(num_frames));
  const Index span = num_frames * stride;
  if (span <= total) {
    const Index start = static_cast<Index>(
        rng.below(static_cast<std::uint64_t>(total - span + 1)));
    for (Index k = 0; k < num_frames; ++k) idx[static_cast<std::size_t>(k)] = start + k * stride;
  } else {
    const Index start =
        static_cast<Index>(rng.below(static_cast<std::uint64_t>(total)));
    for (Index k = 0; k < num_frames; ++k)
      idx[static_cast<std::size_t>(k)] = (start + k * stride) % total;
  }
  return idx;
}

// Stratified frame indices: the clip is cut into `count` equal segments
// [floor(k*F/count), floor((k+1)*F/count)) and one frame is drawn uniformly
// from each, so the draw always spans the whole clip.
inline std::vector<Index> select_frame_indices(Index total, Index count, Rng& rng) {
  require_input(total > 0, "select_frames: empty clip");
  require_input(count > 0 && count <= total,
                "select_frames: count " + std::to_string(count) +
                    " outside [1," + std::to_string(total) + "]");
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    const Index lo = (k * total) / count;
    const Index hi = ((k + 1) * total) / count;  // exclusive; hi > lo since count <= total
    idx[static_cast<std::size_t>(k)] =
        lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo)));
  }
  return idx;
}

// Gather frames at the given indices: [F,C,H,W] -> [k,C,H,W].
template <class S>
Tensor<S> take_frames(const Tensor<S>& frames, const std::vector<Index>& idx) {
  require_input(frames.rank() == 4, "take_frames: want [F,C,H,W]");
  const Index f = frames.dim(0);
  const Index item = frames.size() / std::max<Index>(f, 1);
  Tensor<S> out({static_cast<Index>(idx.size()), frames.dim(1), frames.dim(2),
                 frames.dim(3)});
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require_input(idx[k] >= 0 && idx[k] < f, "take_frames: index out of range");
    std::memcpy(out.data() + static_cast<Index>(k) * item,
                frames.data() + idx[k] * item,
                static_cast<std::size_t>(item) * sizeof(S));
  }
  return out;
}

template <class S>
Tensor<S> sample_clip(const Tensor<S>& frames, Index num_frames, Index stride,
                      Rng& rng) {
  return take_frames(frames,
                     sample_clip_indices(frames.dim(0), num_frames, stride, rng));
}

template <class S>
Tensor<S> select_frames(const Tensor<S>& frames, Index count, Rng& rng) {
  return take_frames(frames, select_frame_indices(frames.dim(0), count, rng));
}

// Horizontal flip (width axis) of one clip [F,C,H,W].
template <class S>
Tensor<S> flip_horizontal(const Tensor<S>& frames) {
  require_input(frames.rank() == 4, "flip_horizontal: want [F,C,H,W]");
  const Index f = frames.dim(0), c = frames.dim(1), h = frames.dim(2),
              w = frames.dim(3);
  Tensor<S> out(frames.shape());
  for (Index i = 0; i < f * c * h; ++i) {
    const S* src = frames.data() + i * w;
    S* dst = out.data() + i * w;
    for (Index x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
  }
  return out;
}

// Independently flips each item of a batch [B,F,C,H,W] with probability p.
// Pixel multisets are preserved exactly; intended only for datasets whose
// labels are mirror-invariant (motion classes defined by direction are not).
template <class S>
Tensor<S> augment_hflip(const Tensor<S>& batch, Rng& rng, double p = 0.5) {
  require_input(batch.rank() == 5, "augment_hflip: want [B,F,C,H,W]");
  require_input(p >= 0.0 && p <= 1.0, "augment_hflip: p outside [0,1]");
  Tensor<S> out = batch;
  const Index b = batch.dim(0);
  const Index item = batch.size() / std::max<Index>(b, 1);
  const Index w = batch.dim(4);
  const Index rows = item / w;
  for (Index i = 0; i < b; ++i) {
    if (!rng.bernoulli(p)) continue;
    S* base = out.data() + i * item;
    for (Index r = 0; r < rows; ++r) {
      S* row = base + r * w;
      for (Index x = 0; x < w / 2; ++x) std::swap(row[x], row[w - 1 - x]);
    }
  }
  return out;
}

// Stack clips (all [F,C,H,W] with equal shapes) into a batch [B,F,C,H,W].
template <class S>
Tensor<S> stack_clips(const std::vector<Tensor<S>>& clips) {
  require_input(!clips.empty(), "stack_clips: no clips");
  const Shape& s0 = clips[0].shape();
  Tensor<S> out({static_cast<Index>(clips.size()), s0[0], s0[1], s0[2], s0[3]});
  const Index item = clips[0].size();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    require_input(clips[i].shape() == s0, "stack_clips: clip shapes disagree");
    std::memcpy(out.data() + static_cast<Index>(i) * item, clips[i].data(),
                static_cast<std::size_t>(item) * sizeof(S));
  }
  return out;
}

}  // namespace vdst
