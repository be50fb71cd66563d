#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "vdst/core/ops.hpp"

// Neural-network layer primitives over channels-last activations
// ([B, F, H, W, C] for video, [B, H, W, C] per-frame). Channels-last lets
// im2col feed GEMM directly and keeps every index map cacheable per
// geometry. Module boundaries elsewhere use the [F, C, H, W] clip layout;
// to_channels_last / from_channels_last convert at network entry/exit.

namespace vdst {
namespace nn {

struct Conv3dGeom {
  Index f, h, w, c;      // input per item
  Index kf, kh, kw;      // kernel
  Index sf, sh, sw;      // stride
  Index pf, ph, pw;      // padding
  Index co;              // output channels

  Index of() const { return (f + 2 * pf - kf) / sf + 1; }
  Index oh() const { return (h + 2 * ph - kh) / sh + 1; }
  Index ow() const { return (w + 2 * pw - kw) / sw + 1; }
  Index patch() const { return kf * kh * kw * c; }

  void validate() const {
    require_input(f > 0 && h > 0 && w > 0 && c > 0, "conv3d: empty input");
    require_input(kf > 0 && kh > 0 && kw > 0, "conv3d: empty kernel");
    require_input(sf > 0 && sh > 0 && sw > 0, "conv3d: zero stride");
    require_input(pf >= 0 && ph >= 0 && pw >= 0, "conv3d: negative padding");
    require_input(f + 2 * pf >= kf && h + 2 * ph >= kh && w + 2 * pw >= kw,
                  "conv3d: kernel larger than padded input");
  }

  std::string key() const {
    std::string k = "im2col";
    for (Index v : {f, h, w, c, kf, kh, kw, sf, sh, sw, pf, ph, pw})
      k += "|" + std::to_string(v);
    return k;
  }
};

inline LinearMap im2col_map(const Conv3dGeom& g) {
  return MapCache::get(g.key(), [&g]() {
    const Index of = g.of(), oh = g.oh(), ow = g.ow();
    auto idx = std::make_shared<std::vector<std::int32_t>>();
    idx->reserve(static_cast<std::size_t>(of * oh * ow * g.patch()));
    for (Index a = 0; a < of; ++a)
      for (Index b = 0; b < oh; ++b)
        for (Index cpos = 0; cpos < ow; ++cpos)
          for (Index i = 0; i < g.kf; ++i)
            for (Index j = 0; j < g.kh; ++j)
              for (Index k = 0; k < g.kw; ++k)
                for (Index ch = 0; ch < g.c; ++ch) {
                  const Index sf = a * g.sf - g.pf + i;
                  const Index sh = b * g.sh - g.ph + j;
                  const Index sw = cpos * g.sw - g.pw + k;
                  if (sf < 0 || sf >= g.f || sh < 0 || sh >= g.h || sw < 0 ||
                      sw >= g.w) {
                    idx->push_back(-1);
                  } else {
                    idx->push_back(static_cast<std::int32_t>(
                        ((sf * g.h + sh) * g.w + sw) * g.c + ch));
                  }
                }
    return LinearMap{idx, g.f * g.h * g.w * g.c};
  });
}

// x [B,F,H,W,C], weight [Co, kf, kh, kw, C], bias [Co] -> [B,OF,OH,OW,Co].
template <class S>
Var<S> conv3d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias,
              const Conv3dGeom& g) {
  g.validate();
  require_input(x.shape() == Shape{x.shape()[0], g.f, g.h, g.w, g.c},
                "conv3d: input " + shape_str(x.shape()) + " does not match geometry");
  require_input(weight.shape() == Shape{g.co, g.kf, g.kh, g.kw, g.c},
                "conv3d: weight " + shape_str(weight.shape()) + " mismatch");
  require_input(bias.shape() == Shape{g.co}, "conv3d: bias mismatch");
  const Index batch = x.shape()[0];
  const Index rows = g.of() * g.oh() * g.ow();
  const Index k = g.patch();
  Var<S> cols = pullback(x, im2col_map(g), batch, {batch * rows, k});
  Var<S> wmat = transpose(reshape(weight, {g.co, k}));  // [K, Co]
  Var<S> y = add_bias_cols(matmul(cols, wmat), bias);   // [B*rows, Co]
  return reshape(y, {batch, g.of(), g.oh(), g.ow(), g.co});
}

// 2-D convolution as a depth-1 3-D convolution over [B,H,W,C].
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias,
              Index kh, Index kw, Index sh, Index sw, Index ph, Index pw) {
  require_input(x.value().rank() == 4, "conv2d: want [B,H,W,C]");
  const Index batch = x.shape()[0], h = x.shape()[1], w = x.shape()[2],
              c = x.shape()[3];
  const Index co = weight.shape()[0];
  Conv3dGeom g{1, h, w, c, 1, kh, kw, 1, sh, sw, 0, ph, pw, co};
  Var<S> x5 = reshape(x, {batch, Index(1), h, w, c});
  // weight comes as [Co, kh, kw, C]; view as [Co, 1, kh, kw, C].
  Var<S> w5 = reshape(weight, {co, Index(1), kh, kw, c});
  Var<S> y = conv3d(x5, w5, bias, g);
  return reshape(y, {batch, g.oh(), g.ow(), co});
}

// Pool output extent with clamped (ceil-mode) windows: every input element
// belongs to exactly one window, so tiny inputs never pool to zero size.
inline Index pooled_extent(Index dim, Index k) { return (dim + k - 1) / k; }

// Max pooling over [B,F,H,W,C] with stride = kernel and clamped windows.
// The winner map is data-dependent; it is built per call over the whole
// tensor and becomes the constant of the backward (gradient flows to the
// argmax element of each window).
template <class S>
Var<S> maxpool3d(const Var<S>& x, Index kf, Index kh, Index kw) {
  require_input(x.value().rank() == 5, "maxpool3d: want [B,F,H,W,C]");
  require_input(kf > 0 && kh > 0 && kw > 0, "maxpool3d: bad kernel");
  const Index batch = x.shape()[0], f = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3], c = x.shape()[4];
  const Index of = pooled_extent(f, kf), oh = pooled_extent(h, kh),
              ow = pooled_extent(w, kw);
  const Index item_in = f * h * w * c;
  auto idx = std::make_shared<std::vector<std::int32_t>>(
      static_cast<std::size_t>(batch * of * oh * ow * c));
  const S* src = x.value().data();
  std::size_t pos = 0;
  for (Index bi = 0; bi < batch; ++bi) {
    const S* base = src + bi * item_in;
    for (Index a = 0; a < of; ++a)
      for (Index b = 0; b < oh; ++b)
        for (Index d = 0; d < ow; ++d)
          for (Index ch = 0; ch < c; ++ch) {
            Index best = -1;
            S best_v = S(0);
            for (Index i = a * kf; i < std::min((a + 1) * kf, f); ++i)
              for (Index j = b * kh; j < std::min((b + 1) * kh, h); ++j)
                for (Index k = d * kw; k < std::min((d + 1) * kw, w); ++k) {
                  const Index off = ((i * h + j) * w + k) * c + ch;
                  if (best < 0 || base[off] > best_v) {
                    best = off;
                    best_v = base[off];
                  }
                }
            (*idx)[pos++] = static_cast<std::int32_t>(bi * item_in + best);
          }
  }
  LinearMap m{idx, batch * item_in};
  return pullback(x, m, 1, {batch, of, oh, ow, c});
}

// Average pooling over [B,F,H,W,C], stride = kernel, clamped windows (each
// window averages the elements it actually covers).
template <class S>
Var<S> avgpool3d(const Var<S>& x, Index kf, Index kh, Index kw) {
  require_input(x.value().rank() == 5, "avgpool3d: want [B,F,H,W,C]");
  const Index batch = x.shape()[0], f = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3], c = x.shape()[4];
  const Index of = pooled_extent(f, kf), oh = pooled_extent(h, kh),
              ow = pooled_extent(w, kw);
  const std::string key = "avgpool|" + std::to_string(f) + "|" + std::to_string(h) +
                          "|" + std::to_string(w) + "|" + std::to_string(c) + "|" +
                          std::to_string(kf) + "|" + std::to_string(kh) + "|" +
                          std::to_string(kw);
  // Map from input elements to their window (pushforward sums windows).
  LinearMap m = MapCache::get(key, [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(f * h * w * c));
    for (Index i = 0; i < f; ++i)
      for (Index j = 0; j < h; ++j)
        for (Index k = 0; k < w; ++k)
          for (Index ch = 0; ch < c; ++ch)
            (*idx)[static_cast<std::size_t>(((i * h + j) * w + k) * c + ch)] =
                static_cast<std::int32_t>(
                    (((i / kf) * oh + j / kh) * ow + k / kw) * c + ch);
    return LinearMap{idx, of * oh * ow * c};
  });
  Var<S> sums = pushforward(x, m, batch, {batch, of, oh, ow, c});
  // Per-window reciprocal counts (clamped windows differ at the edges).
  Tensor<S> recip({batch, of, oh, ow, c});
  for (Index a = 0; a < of; ++a)
    for (Index b = 0; b < oh; ++b)
      for (Index d = 0; d < ow; ++d) {
        const Index cf = std::min((a + 1) * kf, f) - a * kf;
        const Index chh = std::min((b + 1) * kh, h) - b * kh;
        const Index cw = std::min((d + 1) * kw, w) - d * kw;
        const S r = S(1) / static_cast<S>(cf * chh * cw);
        for (Index bi = 0; bi < batch; ++bi)
          for (Index ch = 0; ch < c; ++ch)
            recip.at({bi, a, b, d, ch}) = r;
      }
  return mul(sums, Var<S>::constant(std::move(recip)));
}

template <class S>
Var<S> avgpool2d(const Var<S>& x, Index kh, Index kw) {
  require_input(x.value().rank() == 4, "avgpool2d: want [B,H,W,C]");
  const Index batch = x.shape()[0], h = x.shape()[1], w = x.shape()[2],
              c = x.shape()[3];
  Var<S> y = avgpool3d(reshape(x, {batch, Index(1), h, w, c}), 1, kh, kw);
  return reshape(y, {batch, pooled_extent(h, kh), pooled_extent(w, kw), c});
}

// Mean over all non-channel axes: [B,F,H,W,C] -> [B,C].
template <class S>
Var<S> global_avgpool(const Var<S>& x) {
  require_input(x.value().rank() == 5, "global_avgpool: want [B,F,H,W,C]");
  const Index batch = x.shape()[0], f = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3], c = x.shape()[4];
  const std::string key = "gap|" + std::to_string(f) + "|" + std::to_string(h) +
                          "|" + std::to_string(w) + "|" + std::to_string(c);
  LinearMap m = MapCache::get(key, [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(f * h * w * c));
    for (Index i = 0; i < f * h * w; ++i)
      for (Index ch = 0; ch < c; ++ch)
        (*idx)[static_cast<std::size_t>(i * c + ch)] =
            static_cast<std::int32_t>(ch);
    return LinearMap{idx, c};
  });
  Var<S> sums = pushforward(x, m, batch, {batch, c});
  return mul_scalar(sums, S(1) / static_cast<S>(f * h * w));
}

// Group map used by instance norm: every element of an item maps to its
// channel slot, giving per-(item, channel) sums under pushforward.
inline LinearMap channel_group_map(Index spatial, Index c) {
  const std::string key = "chgrp|" + std::to_string(spatial) + "|" + std::to_string(c);
  return MapCache::get(key, [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(spatial * c));
    for (Index i = 0; i < spatial; ++i)
      for (Index ch = 0; ch < c; ++ch)
        (*idx)[static_cast<std::size_t>(i * c + ch)] =
            static_cast<std::int32_t>(ch);
    return LinearMap{idx, c};
  });
}

// Instance normalization with affine parameters over channels-last input of
// rank 4 or 5 ([B,...,C]): per (item, channel) statistics across all other
// axes, biased variance, then gamma/beta.
template <class S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                     S eps = S(1e-5)) {
  const auto& sh = x.shape();
  require_input(sh.size() >= 3, "instance_norm: want [B,...,C]");
  const Index batch = sh.front(), c = sh.back();
  Index spatial = 1;
  for (std::size_t i = 1; i + 1 < sh.size(); ++i) spatial *= sh[i];
  // A single element normalizes to exactly zero and kills every gradient
  // through it; reject instead of silently zeroing the network.
  require_input(spatial >= 2,
                "instance_norm: needs at least 2 elements per instance, got " +
                    std::to_string(spatial) + "; the input is too small for "
                    "this network depth");
  require_input(gamma.shape() == Shape{c} && beta.shape() == Shape{c},
                "instance_norm: gamma/beta must be [C]");

  LinearMap gmap = channel_group_map(spatial, c);
  const S inv_n = S(1) / static_cast<S>(spatial);

  Var<S> mu = mul_scalar(pushforward(x, gmap, batch, {batch * c}), inv_n);
  Var<S> xc = sub(x, pullback(mu, gmap, batch, sh));
  Var<S> var = mul_scalar(pushforward(square(xc), gmap, batch, {batch * c}), inv_n);
  Var<S> inv = reciprocal(vdst::sqrt(add_scalar(var, eps)));
  Var<S> xn = mul(xc, pullback(inv, gmap, batch, sh));

  // Tile gamma/beta to [B*C] and broadcast through the same group map.
  auto tile_idx = std::make_shared<std::vector<Index>>();
  tile_idx->reserve(static_cast<std::size_t>(batch * c));
  for (Index b = 0; b < batch; ++b)
    for (Index ch = 0; ch < c; ++ch) tile_idx->push_back(ch);
  Var<S> g2 = reshape(gamma, {c, Index(1)});
  Var<S> b2 = reshape(beta, {c, Index(1)});
  Var<S> gt = reshape(row_gather(g2, tile_idx), {batch * c});
  Var<S> bt = reshape(row_gather(b2, tile_idx), {batch * c});
  return add(mul(xn, pullback(gt, gmap, batch, sh)),
             pullback(bt, gmap, batch, sh));
}

// x [B,D] * W[out,D]^T + b -> [B,out]
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& weight, const Var<S>& bias) {
  require_input(x.value().rank() == 2 && weight.value().rank() == 2 &&
                    x.shape()[1] == weight.shape()[1],
                "linear: shape mismatch " + shape_str(x.shape()) + " vs " +
                    shape_str(weight.shape()));
  return add_bias_cols(matmul(x, transpose(weight)), bias);
}

// Mean over the frame axis of per-frame features: [B*F, D] -> [B, D].
template <class S>
Var<S> frame_mean(const Var<S>& per_frame, Index batch, Index f) {
  require_input(per_frame.value().rank() == 2 &&
                    per_frame.shape()[0] == batch * f,
                "frame_mean: want [B*F, D]");
  const Index d = per_frame.shape()[1];
  const std::string key = "fmean|" + std::to_string(f) + "|" + std::to_string(d);
  LinearMap m = MapCache::get(key, [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(f * d));
    for (Index i = 0; i < f; ++i)
      for (Index j = 0; j < d; ++j)
        (*idx)[static_cast<std::size_t>(i * d + j)] = static_cast<std::int32_t>(j);
    return LinearMap{idx, d};
  });
  return mul_scalar(pushforward(per_frame, m, batch, {batch, d}),
                    S(1) / static_cast<S>(f));
}

// One GRU step. xt = input projection of frame t (= x W_ih^T + b_ih,
// [B, 3H], gate order r|z|n), h = previous hidden [B, H].
template <class S>
Var<S> gru_step(const Var<S>& xt, const Var<S>& h, const Var<S>& w_hh,
                const Var<S>& b_hh) {
  const Index hd = h.shape()[1];
  require_input(xt.shape() == Shape{h.shape()[0], 3 * hd},
                "gru_step: want [B,3H] gates");
  Var<S> hp = add_bias_cols(matmul(h, transpose(w_hh)), b_hh);
  Var<S> r = sigmoid(add(slice_cols(xt, 0, hd), slice_cols(hp, 0, hd)));
  Var<S> z = sigmoid(add(slice_cols(xt, hd, hd), slice_cols(hp, hd, hd)));
  Var<S> n = vdst::tanh(
      add(slice_cols(xt, 2 * hd, hd), mul(r, slice_cols(hp, 2 * hd, hd))));
  Var<S> one_minus_z = add_scalar(neg(z), S(1));
  return add(mul(one_minus_z, n), mul(z, h));
}

// One LSTM step. xt = input projection [B, 4H], gate order i|f|g|o.
// Returns {h', c'}.
template <class S>
std::pair<Var<S>, Var<S>> lstm_step(const Var<S>& xt, const Var<S>& h,
                                    const Var<S>& c, const Var<S>& w_hh,
                                    const Var<S>& b_hh) {
  const Index hd = h.shape()[1];
  require_input(xt.shape() == Shape{h.shape()[0], 4 * hd},
                "lstm_step: want [B,4H] gates");
  Var<S> gates = add(xt, add_bias_cols(matmul(h, transpose(w_hh)), b_hh));
  Var<S> i = sigmoid(slice_cols(gates, 0, hd));
  Var<S> f = sigmoid(slice_cols(gates, hd, hd));
  Var<S> g = vdst::tanh(slice_cols(gates, 2 * hd, hd));
  Var<S> o = sigmoid(slice_cols(gates, 3 * hd, hd));
  Var<S> c2 = add(mul(f, c), mul(i, g));
  Var<S> h2 = mul(o, vdst::tanh(c2));
  return {h2, c2};
}

// [B,F,C,H,W] (clip layout) -> [B,F,H,W,C] (compute layout).
template <class S>
Var<S> to_channels_last(const Var<S>& x) {
  require_input(x.value().rank() == 5, "to_channels_last: want [B,F,C,H,W]");
  const Index batch = x.shape()[0], f = x.shape()[1], c = x.shape()[2],
              h = x.shape()[3], w = x.shape()[4];
  const std::string key = "tocl|" + std::to_string(f) + "|" + std::to_string(c) +
                          "|" + std::to_string(h) + "|" + std::to_string(w);
  LinearMap m = MapCache::get(key, [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(f * c * h * w));
    std::size_t pos = 0;
    for (Index i = 0; i < f; ++i)
      for (Index y = 0; y < h; ++y)
        for (Index xq = 0; xq < w; ++xq)
          for (Index ch = 0; ch < c; ++ch)
            (*idx)[pos++] = static_cast<std::int32_t>(
                ((i * c + ch) * h + y) * w + xq);
    return LinearMap{idx, f * c * h * w};
  });
  return pullback(x, m, batch, {batch, f, h, w, c});
}

// [B,F,H,W,C] -> [B,F,C,H,W].
template <class S>
Var<S> from_channels_last(const Var<S>& x) {
  require_input(x.value().rank() == 5, "from_channels_last: want [B,F,H,W,C]");
  const Index batch = x.shape()[0], f = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3], c = x.shape()[4];
  const std::string key = "fromcl|" + std::to_string(f) + "|" + std::to_string(c) +
                          "|" + std::to_string(h) + "|" + std::to_string(w);
  LinearMap m = MapCache::get(key, [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(f * c * h * w));
    std::size_t pos = 0;
    for (Index i = 0; i < f; ++i)
      for (Index ch = 0; ch < c; ++ch)
        for (Index y = 0; y < h; ++y)
          for (Index xq = 0; xq < w; ++xq)
            (*idx)[pos++] = static_cast<std::int32_t>(
                ((i * h + y) * w + xq) * c + ch);
    return LinearMap{idx, f * h * w * c};
  });
  return pullback(x, m, batch, {batch, f, c, h, w});
}

// Nearest-neighbour replication along the frame axis: [B,Fs,H,W,C] ->
// [B,Ft,H,W,C], frame j of the output reads source frame
// floor(j*Fs/Ft) (exact replication when Fs == 1).
template <class S>
Var<S> repeat_frames(const Var<S>& x, Index target_f) {
  require_input(x.value().rank() == 5, "repeat_frames: want [B,F,H,W,C]");
  const Index batch = x.shape()[0], f = x.shape()[1], h = x.shape()[2],
              w = x.shape()[3], c = x.shape()[4];
  require_input(target_f >= 1, "repeat_frames: target must be >= 1");
  const Index item = h * w * c;
  const std::string key = "repf|" + std::to_string(f) + "|" +
                          std::to_string(target_f) + "|" + std::to_string(item);
  LinearMap m = MapCache::get(key, [&]() {
    auto idx = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(target_f * item));
    std::size_t pos = 0;
    for (Index j = 0; j < target_f; ++j) {
      const Index src = (j * f) / target_f;
      for (Index i = 0; i < item; ++i)
        (*idx)[pos++] = static_cast<std::int32_t>(src * item + i);
    }
    return LinearMap{idx, f * item};
  });
  return pullback(x, m, batch, {batch, target_f, h, w, c});
}

}  // namespace nn
}  // namespace vdst
