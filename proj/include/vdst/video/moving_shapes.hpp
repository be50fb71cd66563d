#pragma once

#include <array>
#include <cstdlib>
#include <string>
#include <vector>

#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/video/types.hpp"

namespace vdst {

// Synthetic motion-labeled corpus: a class is an (appearance, direction)
// pair, rendered as a rigid shape translating across a black canvas at
// constant integer velocity. Built so that two exact properties hold on the
// noise-free corpus:
//
//  * classes that differ only in direction share per-frame pixel histograms
//    exactly (every frame is a translate of the same fully-visible sprite,
//    and trajectory anchors are drawn from a direction-independent box);
//  * classes that differ only in appearance share motion statistics exactly
//    (anchor draws are keyed by clip index alone, so trajectories are
//    identical across appearances).
//
// All pixel values derive from integer predicates, so the noise-free corpus
// is bit-identical across platforms for a fixed seed.
struct MovingShapesConfig {
  Index appearances = 4;      // <= 8
  Index directions = 2;       // <= 8
  Index canvas = 32;          // square canvas, height = width
  Index channels = 1;         // 1 (gray) or 3 (per-appearance tint)
  Index frames = 16;
  Index clips_per_class = 20;
  Index shape_size = 8;
  Index speed = 1;            // pixels per frame
  double noise_std = 0.0;     // Gaussian pixel noise, clamped to [0,1]

  Index num_classes() const { return appearances * directions; }
};

namespace shapes {

inline const std::array<const char*, 8>& appearance_names() {
  static const std::array<const char*, 8> names = {
      "square", "disc", "ring", "plus", "cross", "frame", "bars", "checker"};
  return names;
}

inline const std::array<const char*, 8>& direction_names() {
  static const std::array<const char*, 8> names = {
      "right", "down", "left", "up", "downright", "downleft", "upright", "upleft"};
  return names;
}

inline const std::array<std::pair<int, int>, 8>& direction_vectors() {
  // (dx, dy) matching direction_names.
  static const std::array<std::pair<int, int>, 8> dirs = {{{1, 0},
                                                           {0, 1},
                                                           {-1, 0},
                                                           {0, -1},
                                                           {1, 1},
                                                           {-1, 1},
                                                           {1, -1},
                                                           {-1, -1}}};
  return dirs;
}

// Binary sprite mask, integer predicates only. Coordinates are doubled and
// centered (u = 2x-(s-1)) so that radii compare exactly without floats.
inline bool sprite_mask(Index appearance, Index s, Index x, Index y) {
  const Index u = 2 * x - (s - 1);
  const Index v = 2 * y - (s - 1);
  const Index d2 = u * u + v * v;
  switch (appearance) {
    case 0:  // square: solid block
      return true;
    case 1:  // disc
      return d2 <= (s - 1) * (s - 1);
    case 2:  // ring: disc minus a concentric hole
      return d2 <= (s - 1) * (s - 1) && d2 > (s - 4) * (s - 4);
    case 3:  // plus: centered horizontal and vertical bars
      return std::abs(u) <= s / 3 || std::abs(v) <= s / 3;
    case 4:  // cross: both diagonals
      return std::abs(u - v) <= s / 3 || std::abs(u + v) <= s / 3;
    case 5:  // frame: hollow square, 2-pixel border
      return x < 2 || x >= s - 2 || y < 2 || y >= s - 2;
    case 6:  // bars: vertical stripes
      return x % 2 == 0;
    case 7:  // checker: 2x2 blocks
      return (x / 2 + y / 2) % 2 == 0;
    default:
      throw InvalidInput("sprite_mask: appearance out of range");
  }
}

// Fixed per-appearance tints for 3-channel rendering (quarters of full
// scale; exact in float32).
inline const std::array<std::array<float, 3>, 8>& tints() {
  static const std::array<std::array<float, 3>, 8> t = {{{1.00f, 0.25f, 0.25f},
                                                         {0.25f, 1.00f, 0.25f},
                                                         {0.25f, 0.25f, 1.00f},
                                                         {1.00f, 1.00f, 0.25f},
                                                         {1.00f, 0.25f, 1.00f},
                                                         {0.25f, 1.00f, 1.00f},
                                                         {0.75f, 0.75f, 0.75f},
                                                         {1.00f, 0.50f, 0.25f}}};
  return t;
}

}  // namespace shapes

inline void validate_moving_shapes_config(const MovingShapesConfig& cfg) {
  require_config(cfg.appearances >= 1 && cfg.appearances <= 8,
                 "moving_shapes: appearances must be in [1,8]");
  require_config(cfg.directions >= 1 && cfg.directions <= 8,
                 "moving_shapes: directions must be in [1,8]");
  require_config(cfg.channels == 1 || cfg.channels == 3,
                 "moving_shapes: channels must be 1 or 3");
  require_config(cfg.frames >= 1, "moving_shapes: frames must be >= 1");
  require_config(cfg.clips_per_class >= 1,
                 "moving_shapes: clips_per_class must be >= 1");
  require_config(cfg.shape_size >= 2, "moving_shapes: shape_size must be >= 2");
  require_config(cfg.speed >= 0, "moving_shapes: speed must be >= 0");
  require_config(cfg.noise_std >= 0.0, "moving_shapes: noise_std must be >= 0");
  // Trajectories are centered on the anchor; the sprite must stay fully on
  // canvas for every direction, which needs canvas >= size + 2*reach + 1.
  const Index travel = (cfg.frames - 1) * cfg.speed;
  const Index reach = (travel + 1) / 2;
  require_config(
      cfg.canvas - cfg.shape_size - 2 * reach >= 0,
      "moving_shapes: canvas " + std::to_string(cfg.canvas) +
          " too small for shape_size " + std::to_string(cfg.shape_size) +
          " moving " + std::to_string(travel) +
          " px; need canvas >= " + std::to_string(cfg.shape_size + 2 * reach));
}

// Sprite top-left position at frame t for a trajectory anchored at `anchor`.
// The trajectory is centered: offset runs from -travel/2 to +ceil(travel/2).
inline std::pair<Index, Index> moving_shapes_position(const MovingShapesConfig& cfg,
                                                      Index anchor_x, Index anchor_y,
                                                      int dx, int dy, Index t) {
  const Index travel = (cfg.frames - 1) * cfg.speed;
  const Index half = travel / 2;
  const Index off = t * cfg.speed - half;
  return {anchor_x + dx * off, anchor_y + dy * off};
}

template <class S>
VideoDataset<S> generate_moving_shapes(const MovingShapesConfig& cfg,
                                       std::uint64_t seed) {
  validate_moving_shapes_config(cfg);

  const Index travel = (cfg.frames - 1) * cfg.speed;
  const Index reach = (travel + 1) / 2;
  const Index box = cfg.canvas - cfg.shape_size - 2 * reach + 1;  // >= 1

  VideoDataset<S> ds;
  ds.num_classes = static_cast<int>(cfg.num_classes());
  for (Index a = 0; a < cfg.appearances; ++a)
    for (Index d = 0; d < cfg.directions; ++d)
      ds.class_names.push_back(std::string(shapes::appearance_names()[a]) + "_" +
                               shapes::direction_names()[d]);

  for (Index a = 0; a < cfg.appearances; ++a) {
    for (Index d = 0; d < cfg.directions; ++d) {
      const int label = static_cast<int>(a * cfg.directions + d);
      const auto [dx, dy] = shapes::direction_vectors()[static_cast<std::size_t>(d)];
      for (Index clip_idx = 0; clip_idx < cfg.clips_per_class; ++clip_idx) {
        // Anchor stream keyed by clip index only: every class re-draws the
        // same anchors, which is what makes cross-class statistics exact.
        Rng anchor_rng = Rng(seed).split(0x414E4348u).split(
            static_cast<std::uint64_t>(clip_idx));
        const Index ax =
            reach + static_cast<Index>(anchor_rng.below(static_cast<std::uint64_t>(box)));
        const Index ay =
            reach + static_cast<Index>(anchor_rng.below(static_cast<std::uint64_t>(box)));

        VideoClip<S> clip;
        clip.label = label;
        clip.frames = Tensor<S>(
            {cfg.frames, cfg.channels, cfg.canvas, cfg.canvas});
        for (Index t = 0; t < cfg.frames; ++t) {
          const auto [px, py] = moving_shapes_position(cfg, ax, ay, dx, dy, t);
          for (Index sy = 0; sy < cfg.shape_size; ++sy) {
            for (Index sx = 0; sx < cfg.shape_size; ++sx) {
              if (!shapes::sprite_mask(a, cfg.shape_size, sx, sy)) continue;
              for (Index c = 0; c < cfg.channels; ++c) {
                const S value =
                    cfg.channels == 1
                        ? S(1)
                        : static_cast<S>(
                              shapes::tints()[static_cast<std::size_t>(a)]
                                             [static_cast<std::size_t>(c)]);
                clip.frames.at({t, c, py + sy, px + sx}) = value;
              }
            }
          }
        }

        if (cfg.noise_std > 0.0) {
          Rng noise_rng = Rng(seed).split(0x4E4F4953u).split(
              static_cast<std::uint64_t>(label) * 1000003u +
              static_cast<std::uint64_t>(clip_idx));
          for (Index i = 0; i < clip.frames.size(); ++i) {
            double v = static_cast<double>(clip.frames[i]) +
                       noise_rng.normal(0.0, cfg.noise_std);
            clip.frames[i] = static_cast<S>(std::min(1.0, std::max(0.0, v)));
          }
        }

        ds.clips.push_back(std::move(clip));
      }
    }
  }
  ds.validate();
  return ds;
}

}  // namespace vdst
