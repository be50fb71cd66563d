#pragma once

#include <string>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/core/tensor.hpp"

namespace vdst {

// One video clip: frames [F, C, H, W], pixel values in [0,1], integer label.
template <class S>
struct VideoClip {
  Tensor<S> frames;
  int label = 0;

  Index num_frames() const { return frames.dim(0); }
  Index channels() const { return frames.dim(1); }
  Index height() const { return frames.dim(2); }
  Index width() const { return frames.dim(3); }
};

// A labeled collection of clips. Clip lengths may vary; channels and spatial
// size must agree across the set (validated where datasets are built).
template <class S>
struct VideoDataset {
  std::vector<VideoClip<S>> clips;
  int num_classes = 0;
  std::vector<std::string> class_names;  // optional; size num_classes if set

  std::size_t size() const { return clips.size(); }

  std::vector<std::size_t> indices_of_class(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i].label == label) out.push_back(i);
    return out;
  }

  // Shortest clip in the set; schedules validate against this.
  Index min_frames() const {
    require_input(!clips.empty(), "VideoDataset: empty dataset");
    Index m = clips[0].frames.dim(0);
    for (const auto& c : clips) m = std::min(m, c.frames.dim(0));
    return m;
  }

  void validate() const {
    require_input(num_classes > 0, "VideoDataset: num_classes must be positive");
    require_input(!clips.empty(), "VideoDataset: empty dataset");
    const Index c = clips[0].channels(), h = clips[0].height(), w = clips[0].width();
    for (const auto& clip : clips) {
      require_input(clip.frames.rank() == 4,
                    "VideoDataset: clip frames must be [F,C,H,W]");
      require_input(clip.channels() == c && clip.height() == h && clip.width() == w,
                    "VideoDataset: clips disagree on channels or spatial size");
      require_input(clip.label >= 0 && clip.label < num_classes,
                    "VideoDataset: label " + std::to_string(clip.label) +
                        " outside [0," + std::to_string(num_classes) + ")");
    }
    if (!class_names.empty())
      require_input(static_cast<int>(class_names.size()) == num_classes,
                    "VideoDataset: class_names size mismatch");
  }
};

// Single frames with labels, the unit of the static-memory stage.
template <class S>
struct FrameDataset {
  Tensor<S> frames;  // [N, C, H, W]
  std::vector<int> labels;
  int num_classes = 0;

  Index size() const { return frames.defined() ? frames.dim(0) : 0; }
};

// Minibatch of clips ready for a model forward: [B, F, C, H, W] + labels.
template <class S>
struct Batch {
  Tensor<S> clips;
  std::vector<int> labels;

  Index size() const { return clips.defined() ? clips.dim(0) : 0; }
};

}  // namespace vdst
