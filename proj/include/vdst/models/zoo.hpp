#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vdst/core/rng.hpp"
#include "vdst/models/nn.hpp"

namespace vdst {

// The three encoder families: a small 3-D CNN operating on whole clips, a
// 4-block 2-D CNN applied per frame with frame-averaged features, and a
// per-frame CNN feeding a recurrent head (GRU or LSTM).
enum class Arch { mini_c3d, convnet_2d, cnn_gru, cnn_lstm };

inline std::string arch_name(Arch a) {
  switch (a) {
    case Arch::mini_c3d: return "mini_c3d";
    case Arch::convnet_2d: return "convnet_2d";
    case Arch::cnn_gru: return "cnn_gru";
    case Arch::cnn_lstm: return "cnn_lstm";
  }
  return "?";
}

inline Arch arch_from_name(const std::string& s) {
  if (s == "mini_c3d") return Arch::mini_c3d;
  if (s == "convnet_2d") return Arch::convnet_2d;
  if (s == "cnn_gru") return Arch::cnn_gru;
  if (s == "cnn_lstm") return Arch::cnn_lstm;
  throw InvalidConfig("unknown architecture '" + s + "' (want mini_c3d, "
                      "convnet_2d, cnn_gru or cnn_lstm)");
}

struct ArchSpec {
  Arch arch = Arch::mini_c3d;
  std::vector<Index> widths;  // conv widths; empty -> per-arch default
  Index hidden = 128;         // recurrent state size (cnn_gru / cnn_lstm)
  int num_classes = 0;
  Index channels = 0, height = 0, width = 0;  // input frame geometry

  std::vector<Index> effective_widths() const {
    if (!widths.empty()) return widths;
    switch (arch) {
      case Arch::mini_c3d: return {32, 64, 128};
      case Arch::convnet_2d: return {64, 64, 64, 64};
      case Arch::cnn_gru:
      case Arch::cnn_lstm: return {32, 64, 128};
    }
    return {};
  }

  void validate() const {
    require_config(num_classes >= 2, "ArchSpec: num_classes must be >= 2");
    require_config(channels >= 1 && height >= 1 && width >= 1,
                   "ArchSpec: input geometry not set");
    const auto w = effective_widths();
    const std::size_t want = (arch == Arch::convnet_2d) ? 4 : 3;
    require_config(w.size() == want,
                   "ArchSpec: " + arch_name(arch) + " wants " +
                       std::to_string(want) + " conv widths, got " +
                       std::to_string(w.size()));
    for (Index wi : w) require_config(wi >= 1, "ArchSpec: width must be >= 1");
    if (arch == Arch::cnn_gru || arch == Arch::cnn_lstm)
      require_config(hidden >= 1, "ArchSpec: hidden must be >= 1");
  }
};

struct ParamDef {
  std::string name;
  Shape shape;
  double init_std;  // 0 => zeros, -1 => ones (norm gains)
};

namespace detail {

inline void push_conv(std::vector<ParamDef>& defs, const std::string& name,
                      Index co, Index kf, Index kh, Index kw, Index ci) {
  const double fan_in = static_cast<double>(kf * kh * kw * ci);
  defs.push_back({name + ".weight", {co, kf, kh, kw, ci}, std::sqrt(2.0 / fan_in)});
  defs.push_back({name + ".bias", {co}, 0.0});
  defs.push_back({name + ".gamma", {co}, -1.0});
  defs.push_back({name + ".beta", {co}, 0.0});
}

inline void push_linear(std::vector<ParamDef>& defs, const std::string& name,
                        Index out, Index in) {
  defs.push_back({name + ".weight", {out, in}, std::sqrt(1.0 / static_cast<double>(in))});
  defs.push_back({name + ".bias", {out}, 0.0});
}

// Spatial extent after n halving pools with clamped windows.
inline Index halved(Index dim, int times) {
  for (int i = 0; i < times; ++i) dim = nn::pooled_extent(dim, 2);
  return dim;
}

}  // namespace detail

// Parameter manifest: names, shapes and init in flatten order. Shapes depend
// only on the spec (never on the per-batch frame count).
inline std::vector<ParamDef> param_manifest(const ArchSpec& spec) {
  spec.validate();
  const auto w = spec.effective_widths();
  std::vector<ParamDef> defs;
  switch (spec.arch) {
    case Arch::mini_c3d: {
      detail::push_conv(defs, "conv1", w[0], 3, 7, 7, spec.channels);
      detail::push_conv(defs, "conv2", w[1], 3, 3, 3, w[0]);
      detail::push_conv(defs, "conv3", w[2], 3, 3, 3, w[1]);
      // 1x1x1 classifier conv (no norm), global average pooled to logits.
      const double fan = static_cast<double>(w[2]);
      defs.push_back({"head.weight",
                      {static_cast<Index>(spec.num_classes), 1, 1, 1, w[2]},
                      std::sqrt(1.0 / fan)});
      defs.push_back({"head.bias", {static_cast<Index>(spec.num_classes)}, 0.0});
      break;
    }
    case Arch::convnet_2d: {
      // The last block's norm sees the thrice-pooled extent; a single
      // element there zeroes the whole network (see instance_norm).
      require_config(detail::halved(spec.height, 3) *
                             detail::halved(spec.width, 3) >=
                         2,
                     "convnet_2d: input " + std::to_string(spec.height) + "x" +
                         std::to_string(spec.width) +
                         " is too small for four conv blocks; the last "
                         "norm needs at least 2 spatial elements");
      Index ci = spec.channels;
      for (std::size_t i = 0; i < 4; ++i) {
        detail::push_conv(defs, "conv" + std::to_string(i + 1), w[i], 1, 3, 3, ci);
        ci = w[i];
      }
      const Index feat = w[3] * detail::halved(spec.height, 4) *
                         detail::halved(spec.width, 4);
      detail::push_linear(defs, "head", spec.num_classes, feat);
      break;
    }
    case Arch::cnn_gru:
    case Arch::cnn_lstm: {
      require_config(detail::halved(spec.height, 2) *
                             detail::halved(spec.width, 2) >=
                         2,
                     "cnn_rnn: input " + std::to_string(spec.height) + "x" +
                         std::to_string(spec.width) +
                         " is too small for three conv blocks; the last "
                         "norm needs at least 2 spatial elements");
      Index ci = spec.channels;
      for (std::size_t i = 0; i < 3; ++i) {
        detail::push_conv(defs, "conv" + std::to_string(i + 1), w[i], 1, 3, 3, ci);
        ci = w[i];
      }
      const Index feat = w[2] * detail::halved(spec.height, 3) *
                         detail::halved(spec.width, 3);
      const Index gates = (spec.arch == Arch::cnn_gru ? 3 : 4) * spec.hidden;
      const double s = std::sqrt(1.0 / static_cast<double>(spec.hidden));
      defs.push_back({"rnn.w_ih", {gates, feat}, s});
      defs.push_back({"rnn.b_ih", {gates}, 0.0});
      defs.push_back({"rnn.w_hh", {gates, spec.hidden}, s});
      defs.push_back({"rnn.b_hh", {gates}, 0.0});
      detail::push_linear(defs, "head", spec.num_classes, spec.hidden);
      break;
    }
  }
  return defs;
}

// A model's parameters plus the spec that shaped them.
template <class S>
struct ModelState {
  ArchSpec spec;
  std::vector<Tensor<S>> params;  // aligned with param_manifest(spec)
};

// Deterministic init: each tensor draws from its own seed stream, so the
// result is independent of evaluation order and identical across runs.
template <class S>
ModelState<S> init_model(const ArchSpec& spec, std::uint64_t seed) {
  ModelState<S> st;
  st.spec = spec;
  const auto defs = param_manifest(spec);
  st.params.reserve(defs.size());
  for (std::size_t i = 0; i < defs.size(); ++i) {
    const auto& d = defs[i];
    if (d.init_std == 0.0) {
      st.params.push_back(Tensor<S>::zeros(d.shape));
    } else if (d.init_std < 0.0) {
      st.params.push_back(Tensor<S>::ones(d.shape));
    } else {
      Rng rng = Rng(seed).split(i);
      st.params.push_back(
          Tensor<S>::normal(d.shape, rng, S(0), static_cast<S>(d.init_std)));
    }
  }
  return st;
}

// Concatenate all parameters into one flat vector (manifest order).
template <class S>
Tensor<S> flatten_params(const ModelState<S>& st) {
  Index total = 0;
  for (const auto& p : st.params) total += p.size();
  Tensor<S> flat({total});
  Index off = 0;
  for (const auto& p : st.params) {
    std::copy(p.data(), p.data() + p.size(), flat.data() + off);
    off += p.size();
  }
  return flat;
}

// Exact inverse of flatten_params for the given spec.
template <class S>
ModelState<S> unflatten_params(const ArchSpec& spec, const Tensor<S>& flat) {
  const auto defs = param_manifest(spec);
  Index total = 0;
  for (const auto& d : defs) total += shape_numel(d.shape);
  require_input(flat.rank() == 1 && flat.size() == total,
                "unflatten_params: flat size " + std::to_string(flat.size()) +
                    " != manifest size " + std::to_string(total));
  ModelState<S> st;
  st.spec = spec;
  Index off = 0;
  for (const auto& d : defs) {
    Tensor<S> p(d.shape);
    std::copy(flat.data() + off, flat.data() + off + p.size(), p.data());
    off += p.size();
    st.params.push_back(std::move(p));
  }
  return st;
}

template <class S>
std::vector<Var<S>> make_param_vars(const ModelState<S>& st) {
  std::vector<Var<S>> vars;
  vars.reserve(st.params.size());
  for (const auto& p : st.params) vars.push_back(Var<S>::leaf(p));
  return vars;
}

template <class S>
struct ForwardOut {
  Var<S> logits;    // [B, num_classes]
  Var<S> features;  // [B, D] embedding used by distribution matching
};

namespace detail {

template <class S>
Var<S> conv_in_relu_3d(const Var<S>& x, const std::vector<Var<S>>& p,
                       std::size_t base, const nn::Conv3dGeom& g) {
  Var<S> y = nn::conv3d(x, p[base], p[base + 1], g);
  y = nn::instance_norm(y, p[base + 2], p[base + 3]);
  return relu(y);
}

// Per-frame 2-D conv stack shared by convnet_2d and the recurrent nets.
// x arrives as [B*F, H, W, C]; returns flattened per-frame features.
template <class S>
Var<S> conv_blocks_2d(const Var<S>& x, const std::vector<Var<S>>& p,
                      std::size_t blocks) {
  Var<S> h = x;
  for (std::size_t i = 0; i < blocks; ++i) {
    const std::size_t base = i * 4;
    const Index ci = h.shape()[3];
    const Index co = p[base].shape()[0];
    Var<S> w4 = reshape(p[base], {co, Index(3), Index(3), ci});
    h = nn::conv2d(h, w4, p[base + 1], 3, 3, 1, 1, 1, 1);
    h = nn::instance_norm(h, p[base + 2], p[base + 3]);
    h = relu(h);
    h = nn::avgpool2d(h, 2, 2);
  }
  const Index rows = h.shape()[0];
  return reshape(h, {rows, h.size() / rows});
}

template <class S>
ForwardOut<S> forward_mini_c3d(const ArchSpec& spec,
                               const std::vector<Var<S>>& p, const Var<S>& x) {
  const Index batch = x.shape()[0], f = x.shape()[1];
  const auto w = spec.effective_widths();
  Var<S> h = nn::to_channels_last(x);
  nn::Conv3dGeom g1{f, spec.height, spec.width, spec.channels,
                    3, 7, 7, 1, 2, 2, 1, 3, 3, w[0]};
  h = conv_in_relu_3d(h, p, 0, g1);
  h = nn::maxpool3d(h, 1, 2, 2);
  nn::Conv3dGeom g2{h.shape()[1], h.shape()[2], h.shape()[3], w[0],
                    3, 3, 3, 1, 1, 1, 1, 1, 1, w[1]};
  h = conv_in_relu_3d(h, p, 4, g2);
  h = nn::maxpool3d(h, 2, 2, 2);
  nn::Conv3dGeom g3{h.shape()[1], h.shape()[2], h.shape()[3], w[1],
                    3, 3, 3, 1, 1, 1, 1, 1, 1, w[2]};
  h = conv_in_relu_3d(h, p, 8, g3);
  h = nn::maxpool3d(h, 2, 2, 2);

  Var<S> features = reshape(h, {batch, h.size() / batch});

  nn::Conv3dGeom gh{h.shape()[1], h.shape()[2], h.shape()[3], w[2],
                    1, 1, 1, 1, 1, 1, 0, 0, 0,
                    static_cast<Index>(spec.num_classes)};
  Var<S> logits5 = nn::conv3d(h, p[12], p[13], gh);
  Var<S> logits = nn::global_avgpool(logits5);
  return {logits, features};
}

template <class S>
ForwardOut<S> forward_convnet_2d(const ArchSpec& spec,
                                 const std::vector<Var<S>>& p, const Var<S>& x) {
  const Index batch = x.shape()[0], f = x.shape()[1];
  Var<S> h = nn::to_channels_last(x);
  h = reshape(h, {batch * f, spec.height, spec.width, spec.channels});
  Var<S> per_frame = conv_blocks_2d(h, p, 4);       // [B*F, D]
  Var<S> features = nn::frame_mean(per_frame, batch, f);  // [B, D]
  // Linear head on frame-mean features == frame-mean of per-frame logits.
  Var<S> logits = nn::linear(features, p[16], p[17]);
  return {logits, features};
}

template <class S>
ForwardOut<S> forward_cnn_rnn(const ArchSpec& spec,
                              const std::vector<Var<S>>& p, const Var<S>& x) {
  const bool is_gru = spec.arch == Arch::cnn_gru;
  const Index batch = x.shape()[0], f = x.shape()[1];
  const Index hdim = spec.hidden;
  Var<S> h2 = nn::to_channels_last(x);
  h2 = reshape(h2, {batch * f, spec.height, spec.width, spec.channels});
  Var<S> per_frame = conv_blocks_2d(h2, p, 3);  // [B*F, D]

  const std::size_t r = 12;  // rnn params after 3 conv blocks
  // Input projections for all frames at once: [B*F, gates].
  Var<S> xproj = add_bias_cols(matmul(per_frame, transpose(p[r])), p[r + 1]);

  Var<S> hstate = Var<S>::constant(Tensor<S>::zeros({batch, hdim}));
  Var<S> cstate = is_gru ? Var<S>() : Var<S>::constant(Tensor<S>::zeros({batch, hdim}));

  for (Index t = 0; t < f; ++t) {
    // Rows of frame t: b*F + t.
    auto idx = std::make_shared<std::vector<Index>>();
    idx->reserve(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) idx->push_back(b * f + t);
    Var<S> xt = row_gather(xproj, idx);  // [B, gates]
    if (is_gru) {
      hstate = nn::gru_step(xt, hstate, p[r + 2], p[r + 3]);
    } else {
      auto hc = nn::lstm_step(xt, hstate, cstate, p[r + 2], p[r + 3]);
      hstate = hc.first;
      cstate = hc.second;
    }
  }

  Var<S> logits = nn::linear(hstate, p[r + 4], p[r + 5]);
  return {logits, hstate};
}

}  // namespace detail

// Forward pass over a clip batch [B, F, C, H, W]. Returns logits and the
// arch's feature embedding. Works for any frame count F >= 1 (for mini_c3d
// the feature dimension grows with F; the recurrent nets and convnet_2d
// produce fixed-size features).
template <class S>
ForwardOut<S> forward_model(const ArchSpec& spec, const std::vector<Var<S>>& params,
                            const Var<S>& batch) {
  spec.validate();
  require_input(batch.value().rank() == 5,
                "forward_model: want [B,F,C,H,W], got " + shape_str(batch.shape()));
  require_input(batch.shape()[2] == spec.channels &&
                    batch.shape()[3] == spec.height &&
                    batch.shape()[4] == spec.width,
                "forward_model: batch " + shape_str(batch.shape()) +
                    " does not match spec geometry [" +
                    std::to_string(spec.channels) + "," +
                    std::to_string(spec.height) + "," +
                    std::to_string(spec.width) + "]");
  require_input(batch.shape()[0] >= 1 && batch.shape()[1] >= 1,
                "forward_model: empty batch");
  require_input(params.size() == param_manifest(spec).size(),
                "forward_model: parameter count mismatch");

  switch (spec.arch) {
    case Arch::mini_c3d: return detail::forward_mini_c3d(spec, params, batch);
    case Arch::convnet_2d: return detail::forward_convnet_2d(spec, params, batch);
    case Arch::cnn_gru:
    case Arch::cnn_lstm: return detail::forward_cnn_rnn(spec, params, batch);
  }
  throw InvalidConfig("forward_model: unknown arch");
}

// Classification accuracy of a state on a batch (no gradients).
template <class S>
double accuracy(const ModelState<S>& st, const Tensor<S>& clips,
                const std::vector<int>& labels) {
  NoGradGuard guard;
  auto params = make_param_vars(st);
  auto out = forward_model(st.spec, params, Var<S>::constant(clips));
  auto pred = argmax_rows(out.logits.value());
  require_input(pred.size() == labels.size(), "accuracy: label count mismatch");
  int hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace vdst
