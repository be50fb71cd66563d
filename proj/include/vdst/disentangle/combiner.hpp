#pragma once

// Static/dynamic fusion. A distilled class is stored as a static frame
// [C, H, W] plus a single-channel motion stack [F_d, 1, H, W]; a small
// shared 3-D conv net turns each (frame, motion) pair into a clip
// [F, C, H, W]. The frame is replicated across the F_d motion steps and the
// motion stack is appended as one extra channel; the network output is a
// residual added on top of the time-replicated frame, so a zero-weight
// combiner emits the clip that repeats the static frame verbatim.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/error.hpp"
#include "vdst/core/ops.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/models/nn.hpp"
#include "vdst/temporal/interpolate.hpp"

namespace vdst {
namespace disentangle {

// single_block: one 3x3x3 conv, C+1 -> C channels.
// two_block_mid8: two 3x3x3 convs with a ReLU between, C+1 -> mid -> C.
// Both keep every spatial and temporal extent (stride 1, padding 1).
enum class CombinerVariant { single_block, two_block_mid8 };

inline const char* combiner_variant_name(CombinerVariant v) {
  switch (v) {
    case CombinerVariant::single_block:
      return "single_block";
    case CombinerVariant::two_block_mid8:
      return "two_block_mid8";
  }
  throw InvalidConfig("combiner: unknown variant");
}

template <class S>
struct CombinerSpec {
  CombinerVariant variant = CombinerVariant::two_block_mid8;
  Index channels = 0;  // C of the static frame and of the emitted clip
  Index height = 0;
  Index width = 0;
  Index fd = 0;      // motion steps F_d the net consumes
  Index frames = 0;  // clip length F it emits
  Index mid = 8;     // hidden width of the two-block variant
  std::vector<Tensor<S>> params;

  std::vector<Shape> param_shapes() const {
    const Index ci = channels + 1;
    if (variant == CombinerVariant::single_block)
      return {{channels, 3, 3, 3, ci}, {channels}};
    return {{mid, 3, 3, 3, ci}, {mid}, {channels, 3, 3, 3, mid}, {channels}};
  }

  std::vector<std::string> param_names() const {
    if (variant == CombinerVariant::single_block)
      return {"h.conv.weight", "h.conv.bias"};
    return {"h.conv1.weight", "h.conv1.bias", "h.conv2.weight",
            "h.conv2.bias"};
  }

  Index param_count() const {
    Index n = 0;
    for (const auto& s : param_shapes()) n += shape_numel(s);
    return n;
  }

  void validate() const {
    require_config(channels >= 1 && height >= 1 && width >= 1,
                   "combiner: empty frame geometry");
    require_config(fd >= 1 && frames >= 1, "combiner: empty time axis");
    require_config(mid >= 1, "combiner: hidden width must be positive");
    const auto want = param_shapes();
    require_config(params.size() == want.size(),
                   std::string("combiner: variant ") +
                       combiner_variant_name(variant) + " expects " +
                       std::to_string(want.size()) + " parameter tensors, got " +
                       std::to_string(params.size()));
    for (std::size_t i = 0; i < want.size(); ++i)
      require_config(params[i].shape() == want[i],
                     "combiner: parameter " + std::to_string(i) + " is " +
                         shape_str(params[i].shape()) + ", want " +
                         shape_str(want[i]));
  }
};

namespace detail {

inline constexpr std::uint64_t kCombinerInitTag = 0x48434F4D;  // "HCOM"

inline std::string geom_key(Index fd, Index c, Index h, Index w) {
  return std::to_string(fd) + "|" + std::to_string(c) + "|" +
         std::to_string(h) + "|" + std::to_string(w);
}

// Concat input [F_d, C+1, H, W] from the static frame [C, H, W]: the first
// C channels of every motion step read the frame, the last channel is left
// for the motion stack (-1 reads as zero here).
inline LinearMap concat_from_static(Index fd, Index c, Index h, Index w) {
  return MapCache::get("comb_s|" + geom_key(fd, c, h, w), [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(fd * (c + 1) * h * w));
    std::size_t pos = 0;
    for (Index f = 0; f < fd; ++f)
      for (Index ch = 0; ch < c + 1; ++ch)
        for (Index y = 0; y < h; ++y)
          for (Index x = 0; x < w; ++x)
            (*idx)[pos++] = ch < c
                                ? static_cast<std::int32_t>((ch * h + y) * w + x)
                                : std::int32_t{-1};
    return LinearMap{idx, c * h * w};
  });
}

// The complementary half: the last channel reads the motion stack
// [F_d, 1, H, W] step by step.
inline LinearMap concat_from_dynamic(Index fd, Index c, Index h, Index w) {
  return MapCache::get("comb_d|" + geom_key(fd, c, h, w), [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(fd * (c + 1) * h * w));
    std::size_t pos = 0;
    for (Index f = 0; f < fd; ++f)
      for (Index ch = 0; ch < c + 1; ++ch)
        for (Index y = 0; y < h; ++y)
          for (Index x = 0; x < w; ++x)
            (*idx)[pos++] = ch == c
                                ? static_cast<std::int32_t>((f * h + y) * w + x)
                                : std::int32_t{-1};
    return LinearMap{idx, fd * h * w};
  });
}

// Resize [F_d, C, H, W] to [F, C, H, W] by nearest-reference duplication —
// the same frame-position rule the temporal schedules use, so a combiner
// with F_d != F agrees with duplicate interpolation about which motion step
// covers which output frame.
inline LinearMap time_resize(Index fd, Index frames, Index c, Index h,
                             Index w) {
  return MapCache::get(
      "comb_t|" + std::to_string(frames) + "|" + geom_key(fd, c, h, w), [&]() {
        auto idx = std::make_shared<std::vector<std::int32_t>>(
            static_cast<std::size_t>(frames * c * h * w));
        std::size_t pos = 0;
        const Index item = c * h * w;
        for (Index f = 0; f < frames; ++f) {
          const Index src = temporal::detail::dup_ref(f, fd, frames);
          for (Index j = 0; j < item; ++j)
            (*idx)[pos++] = static_cast<std::int32_t>(src * item + j);
        }
        return LinearMap{idx, fd * c * h * w};
      });
}

// Replicate the static frame [C, H, W] across F output frames.
inline LinearMap replicate_static(Index frames, Index c, Index h, Index w) {
  return MapCache::get(
      "comb_r|" + std::to_string(frames) + "|" + geom_key(1, c, h, w), [&]() {
        auto idx = std::make_shared<std::vector<std::int32_t>>(
            static_cast<std::size_t>(frames * c * h * w));
        std::size_t pos = 0;
        const Index item = c * h * w;
        for (Index f = 0; f < frames; ++f)
          for (Index j = 0; j < item; ++j)
            (*idx)[pos++] = static_cast<std::int32_t>(j);
        return LinearMap{idx, item};
      });
}

}  // namespace detail

// Fresh combiner for the given clip geometry. Every parameter is drawn from
// N(0, noise_std^2); noise_std = 0 gives the exact-zero residual whose
// output replays the static frame.
template <class S>
CombinerSpec<S> init_combiner(CombinerVariant variant, Index channels,
                              Index height, Index width, Index fd,
                              Index frames, std::uint64_t seed,
                              double noise_std = 1e-2) {
  require_config(noise_std >= 0.0 && std::isfinite(noise_std),
                 "combiner: init noise must be finite and non-negative");
  CombinerSpec<S> spec;
  spec.variant = variant;
  spec.channels = channels;
  spec.height = height;
  spec.width = width;
  spec.fd = fd;
  spec.frames = frames;
  Rng rng(mix_seed(seed, detail::kCombinerInitTag));
  for (const auto& shape : spec.param_shapes()) {
    Tensor<S> t = Tensor<S>::zeros(shape);
    if (noise_std > 0.0)
      for (Index i = 0; i < t.size(); ++i)
        t[i] = static_cast<S>(rng.normal(0.0, noise_std));
    spec.params.push_back(std::move(t));
  }
  spec.validate();
  return spec;
}

// Differentiable fusion of a batch: s [B, C, H, W] static frames, d
// [B, F_d, 1, H, W] motion stacks -> [B, F, C, H, W] clips. Gradients flow
// into s, d and the combiner parameters `hparams` (pass constants to freeze
// any of them). `spec` supplies geometry only; the parameter values used are
// the ones in `hparams`.
template <class S>
Var<S> combine_batch(const CombinerSpec<S>& spec,
                     const std::vector<Var<S>>& hparams, const Var<S>& s,
                     const Var<S>& d) {
  spec.validate();
  const auto want = spec.param_shapes();
  require_config(hparams.size() == want.size(),
                 "combine: got " + std::to_string(hparams.size()) +
                     " parameter vars, want " + std::to_string(want.size()));
  for (std::size_t i = 0; i < want.size(); ++i)
    require_config(hparams[i].shape() == want[i],
                   "combine: parameter var " + std::to_string(i) +
                       " shape mismatch");

  const Index c = spec.channels, h = spec.height, w = spec.width;
  require_input(s.value().rank() == 4, "combine: static batch wants "
                                       "[B, C, H, W]");
  const Index batch = s.shape()[0];
  require_input((s.shape() == Shape{batch, c, h, w}),
                "combine: static batch " + shape_str(s.shape()) +
                    " does not match combiner geometry [B, " +
                    std::to_string(c) + ", " + std::to_string(h) + ", " +
                    std::to_string(w) + "]");
  require_input((d.value().rank() == 5 &&
                 d.shape() == Shape{batch, spec.fd, 1, h, w}),
                "combine: motion batch " + shape_str(d.shape()) +
                    " does not match combiner geometry [B, " +
                    std::to_string(spec.fd) + ", 1, " + std::to_string(h) +
                    ", " + std::to_string(w) + "]");

  // Channel concat: [B, F_d, C+1, H, W] assembled from two partial reads.
  const Shape xs{batch, spec.fd, c + 1, h, w};
  Var<S> x = add(pullback(s, detail::concat_from_static(spec.fd, c, h, w),
                          batch, xs),
                 pullback(d, detail::concat_from_dynamic(spec.fd, c, h, w),
                          batch, xs));

  // Residual body in channels-last layout, stride 1, padding 1.
  Var<S> xc = nn::to_channels_last(x);
  Var<S> r;
  if (spec.variant == CombinerVariant::single_block) {
    nn::Conv3dGeom g{spec.fd, h, w, c + 1, 3, 3, 3, 1, 1, 1, 1, 1, 1, c};
    r = nn::conv3d(xc, hparams[0], hparams[1], g);
  } else {
    nn::Conv3dGeom g1{spec.fd, h, w, c + 1, 3, 3, 3, 1, 1, 1, 1, 1, 1,
                      spec.mid};
    Var<S> hidden = relu(nn::conv3d(xc, hparams[0], hparams[1], g1));
    nn::Conv3dGeom g2{spec.fd, h, w, spec.mid, 3, 3, 3, 1, 1, 1, 1, 1, 1, c};
    r = nn::conv3d(hidden, hparams[2], hparams[3], g2);
  }
  r = nn::from_channels_last(r);  // [B, F_d, C, H, W]

  const Shape out_shape{batch, spec.frames, c, h, w};
  if (spec.fd != spec.frames)
    r = pullback(r, detail::time_resize(spec.fd, spec.frames, c, h, w), batch,
                 out_shape);
  Var<S> base = pullback(s, detail::replicate_static(spec.frames, c, h, w),
                         batch, out_shape);
  return add(base, r);
}

// Plain-tensor fusion of one memory pair: s [C, H, W], d [F_d, 1, H, W] ->
// clip [F, C, H, W].
template <class S>
Tensor<S> combine(const CombinerSpec<S>& spec, const Tensor<S>& s,
                  const Tensor<S>& d) {
  require_input(s.rank() == 3, "combine: static frame wants [C, H, W], got " +
                                   shape_str(s.shape()));
  require_input(d.rank() == 4,
                "combine: motion stack wants [F_d, 1, H, W], got " +
                    shape_str(d.shape()));
  NoGradGuard guard;
  std::vector<Var<S>> hp;
  hp.reserve(spec.params.size());
  for (const auto& p : spec.params) hp.push_back(Var<S>::constant(p));
  Var<S> sv = Var<S>::constant(s.reshaped({1, s.dim(0), s.dim(1), s.dim(2)}));
  Var<S> dv = Var<S>::constant(
      d.reshaped({1, d.dim(0), d.dim(1), d.dim(2), d.dim(3)}));
  Var<S> out = combine_batch(spec, hp, sv, dv);
  return out.value().reshaped(
      {spec.frames, spec.channels, spec.height, spec.width});
}

}  // namespace disentangle
}  // namespace vdst
