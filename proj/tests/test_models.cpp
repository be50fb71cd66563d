#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "support.hpp"
#include "vdst/models/nn.hpp"
#include "vdst/models/zoo.hpp"

using namespace vdst;
using vdst_test::check_gradients;
using vdst_test::rand_tensor;
using vdst_test::rel_err;

namespace {

ArchSpec tiny_spec(Arch arch) {
  ArchSpec s;
  s.arch = arch;
  s.num_classes = 2;
  s.channels = 1;
  s.height = 12;
  s.width = 12;
  s.hidden = 3;
  switch (arch) {
    case Arch::mini_c3d: s.widths = {2, 3, 2}; break;
    case Arch::convnet_2d: s.widths = {2, 2, 2, 2}; break;
    default: s.widths = {2, 2, 2}; break;
  }
  return s;
}

}  // namespace

TEST_CASE("param manifests: distinct names, spec-dependent shapes") {
  for (Arch arch : {Arch::mini_c3d, Arch::convnet_2d, Arch::cnn_gru, Arch::cnn_lstm}) {
    auto spec = tiny_spec(arch);
    auto defs = param_manifest(spec);
    std::set<std::string> names;
    for (const auto& d : defs) names.insert(d.name);
    CHECK(names.size() == defs.size());
  }
  // convnet_2d head input scales with spatial size.
  auto a = tiny_spec(Arch::convnet_2d);
  auto b = a;
  b.height = b.width = 32;  // halved four times: 2, vs 1 for the 12x12 spec
  const auto da = param_manifest(a), db = param_manifest(b);
  CHECK(da[da.size() - 2].name == "head.weight");
  CHECK(da[da.size() - 2].shape != db[db.size() - 2].shape);

  auto bad = tiny_spec(Arch::mini_c3d);
  bad.widths = {2, 2};  // wants 3
  CHECK_THROWS_AS((void)param_manifest(bad), InvalidConfig);
  auto bad2 = tiny_spec(Arch::cnn_gru);
  bad2.num_classes = 1;
  CHECK_THROWS_AS((void)param_manifest(bad2), InvalidConfig);
}

TEST_CASE("init_model is deterministic; flatten/unflatten is a bit-exact "
          "round trip") {
  for (Arch arch : {Arch::mini_c3d, Arch::convnet_2d, Arch::cnn_gru, Arch::cnn_lstm}) {
    auto spec = tiny_spec(arch);
    auto s1 = init_model<float>(spec, 42);
    auto s2 = init_model<float>(spec, 42);
    REQUIRE(s1.params.size() == s2.params.size());
    for (std::size_t i = 0; i < s1.params.size(); ++i)
      for (Index j = 0; j < s1.params[i].size(); ++j)
        REQUIRE(s1.params[i][j] == s2.params[i][j]);

    auto s3 = init_model<float>(spec, 43);
    bool differs = false;
    for (std::size_t i = 0; i < s1.params.size() && !differs; ++i)
      for (Index j = 0; j < s1.params[i].size(); ++j)
        if (s1.params[i][j] != s3.params[i][j]) {
          differs = true;
          break;
        }
    CHECK(differs);

    auto flat = flatten_params(s1);
    auto back = unflatten_params(spec, flat);
    for (std::size_t i = 0; i < s1.params.size(); ++i) {
      REQUIRE(back.params[i].shape() == s1.params[i].shape());
      for (Index j = 0; j < s1.params[i].size(); ++j)
        REQUIRE(back.params[i][j] == s1.params[i][j]);
    }
    // Norm gains start at one, biases at zero.
    CHECK(s1.params[2].array().minCoeff() == 1.0f);
    CHECK(s1.params[1].array().abs().sum() == 0.0f);
  }
}

TEST_CASE("unflatten_params rejects wrong sizes") {
  auto spec = tiny_spec(Arch::convnet_2d);
  auto flat = flatten_params(init_model<float>(spec, 1));
  auto bad = Tensor<float>::zeros({flat.size() + 1});
  CHECK_THROWS_AS((void)unflatten_params(spec, bad), InvalidInput);
}

TEST_CASE("forward shapes: logits [B,K]; feature size fixed for 2d/rnn, "
          "frame-dependent for mini_c3d") {
  Rng rng(7);
  for (Arch arch : {Arch::mini_c3d, Arch::convnet_2d, Arch::cnn_gru, Arch::cnn_lstm}) {
    auto spec = tiny_spec(arch);
    auto st = init_model<double>(spec, 5);
    auto params = make_param_vars(st);
    auto x4 = Var<double>::constant(Tensor<double>::uniform({2, 4, 1, 12, 12}, rng));
    auto x8 = Var<double>::constant(Tensor<double>::uniform({2, 8, 1, 12, 12}, rng));
    auto o4 = forward_model(spec, params, x4);
    auto o8 = forward_model(spec, params, x8);
    CHECK(o4.logits.shape() == Shape{2, 2});
    CHECK(o8.logits.shape() == Shape{2, 2});
    if (arch == Arch::mini_c3d) {
      CHECK(o4.features.shape()[1] < o8.features.shape()[1]);
    } else {
      CHECK(o4.features.shape() == o8.features.shape());
    }
  }
}

TEST_CASE("forward rejects geometry mismatches") {
  auto spec = tiny_spec(Arch::convnet_2d);
  auto st = init_model<double>(spec, 5);
  auto params = make_param_vars(st);
  auto bad = Var<double>::constant(Tensor<double>::zeros({2, 4, 1, 8, 9}));
  CHECK_THROWS_AS((void)forward_model(spec, params, bad), InvalidInput);
  auto bad_rank = Var<double>::constant(Tensor<double>::zeros({2, 1, 12, 12}));
  CHECK_THROWS_AS((void)forward_model(spec, params, bad_rank), InvalidInput);
}

TEST_CASE("GRU step matches a hand-rolled reference") {
  Rng rng(11);
  const Index B = 2, H = 3;
  auto xt = rand_tensor({B, 3 * H}, rng);
  auto h0 = rand_tensor({B, H}, rng);
  auto whh = rand_tensor({3 * H, H}, rng);
  auto bhh = rand_tensor({3 * H}, rng);

  auto out = nn::gru_step(Var<double>::constant(xt), Var<double>::constant(h0),
                          Var<double>::constant(whh), Var<double>::constant(bhh));

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (Index b = 0; b < B; ++b) {
    for (Index j = 0; j < H; ++j) {
      // hp = h0 whh^T + bhh, gate order r|z|n.
      auto hp = [&](Index gate) {
        double acc = bhh[gate * H + j];
        for (Index k = 0; k < H; ++k)
          acc += h0.at({b, k}) * whh.at({gate * H + j, k});
        return acc;
      };
      const double r = sig(xt.at({b, j}) + hp(0));
      const double z = sig(xt.at({b, H + j}) + hp(1));
      const double n = std::tanh(xt.at({b, 2 * H + j}) + r * hp(2));
      const double want = (1.0 - z) * n + z * h0.at({b, j});
      CHECK(rel_err(out.value().at({b, j}), want) < 1e-12);
    }
  }
}

TEST_CASE("LSTM step matches a hand-rolled reference") {
  Rng rng(12);
  const Index B = 2, H = 3;
  auto xt = rand_tensor({B, 4 * H}, rng);
  auto h0 = rand_tensor({B, H}, rng);
  auto c0 = rand_tensor({B, H}, rng);
  auto whh = rand_tensor({4 * H, H}, rng);
  auto bhh = rand_tensor({4 * H}, rng);

  auto out = nn::lstm_step(Var<double>::constant(xt), Var<double>::constant(h0),
                           Var<double>::constant(c0), Var<double>::constant(whh),
                           Var<double>::constant(bhh));

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (Index b = 0; b < B; ++b) {
    for (Index j = 0; j < H; ++j) {
      auto hp = [&](Index gate) {
        double acc = bhh[gate * H + j];
        for (Index k = 0; k < H; ++k)
          acc += h0.at({b, k}) * whh.at({gate * H + j, k});
        return acc;
      };
      const double i = sig(xt.at({b, j}) + hp(0));
      const double f = sig(xt.at({b, H + j}) + hp(1));
      const double g = std::tanh(xt.at({b, 2 * H + j}) + hp(2));
      const double o = sig(xt.at({b, 3 * H + j}) + hp(3));
      const double c = f * c0.at({b, j}) + i * g;
      const double h = o * std::tanh(c);
      CHECK(rel_err(out.second.value().at({b, j}), c) < 1e-12);
      CHECK(rel_err(out.first.value().at({b, j}), h) < 1e-12);
    }
  }
}

TEST_CASE("conv3d matches a direct convolution oracle") {
  Rng rng(13);
  nn::Conv3dGeom g{3, 5, 4, 2, 3, 3, 3, 1, 2, 1, 1, 1, 1, 2};
  const Index B = 2;
  auto x = rand_tensor({B, g.f, g.h, g.w, g.c}, rng);
  auto w = rand_tensor({g.co, g.kf, g.kh, g.kw, g.c}, rng);
  auto bias = rand_tensor({g.co}, rng);
  auto y = nn::conv3d(Var<double>::constant(x), Var<double>::constant(w),
                      Var<double>::constant(bias), g);
  REQUIRE(y.shape() == Shape{B, g.of(), g.oh(), g.ow(), g.co});

  for (Index b = 0; b < B; ++b)
    for (Index a = 0; a < g.of(); ++a)
      for (Index r = 0; r < g.oh(); ++r)
        for (Index col = 0; col < g.ow(); ++col)
          for (Index co = 0; co < g.co; ++co) {
            double acc = bias[co];
            for (Index i = 0; i < g.kf; ++i)
              for (Index j = 0; j < g.kh; ++j)
                for (Index k = 0; k < g.kw; ++k)
                  for (Index c = 0; c < g.c; ++c) {
                    const Index sf = a * g.sf - g.pf + i;
                    const Index sh = r * g.sh - g.ph + j;
                    const Index sw = col * g.sw - g.pw + k;
                    if (sf < 0 || sf >= g.f || sh < 0 || sh >= g.h || sw < 0 ||
                        sw >= g.w)
                      continue;
                    acc += x.at({b, sf, sh, sw, c}) * w.at({co, i, j, k, c});
                  }
            CHECK(rel_err(y.value().at({b, a, r, col, co}), acc) < 1e-12);
          }
}

TEST_CASE("pooling oracles: max and clamped-window average") {
  Rng rng(14);
  auto x = rand_tensor({1, 3, 5, 5, 2}, rng);  // odd dims exercise clamping
  auto mx = nn::maxpool3d(Var<double>::constant(x), 2, 2, 2);
  auto av = nn::avgpool3d(Var<double>::constant(x), 2, 2, 2);
  REQUIRE(mx.shape() == Shape{1, 2, 3, 3, 2});
  REQUIRE(av.shape() == Shape{1, 2, 3, 3, 2});
  for (Index a = 0; a < 2; ++a)
    for (Index r = 0; r < 3; ++r)
      for (Index cc = 0; cc < 3; ++cc)
        for (Index ch = 0; ch < 2; ++ch) {
          double best = -1e300, acc = 0;
          int cnt = 0;
          for (Index i = 2 * a; i < std::min<Index>(2 * a + 2, 3); ++i)
            for (Index j = 2 * r; j < std::min<Index>(2 * r + 2, 5); ++j)
              for (Index k = 2 * cc; k < std::min<Index>(2 * cc + 2, 5); ++k) {
                const double v = x.at({0, i, j, k, ch});
                best = std::max(best, v);
                acc += v;
                ++cnt;
              }
          CHECK(rel_err(mx.value().at({0, a, r, cc, ch}), best) < 1e-12);
          CHECK(rel_err(av.value().at({0, a, r, cc, ch}), acc / cnt) < 1e-12);
        }
}

TEST_CASE("instance_norm: per (item, channel) stats, affine") {
  Rng rng(15);
  auto x = rand_tensor({2, 3, 4, 2}, rng);  // [B, H, W, C] rank-4 form
  auto gamma = rand_tensor({2}, rng, 0.5, 1.5);
  auto beta = rand_tensor({2}, rng);
  auto y = nn::instance_norm(Var<double>::constant(x), Var<double>::constant(gamma),
                             Var<double>::constant(beta), 1e-5);
  for (Index b = 0; b < 2; ++b)
    for (Index c = 0; c < 2; ++c) {
      double mu = 0;
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j) mu += x.at({b, i, j, c});
      mu /= 12.0;
      double var = 0;
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j) {
          const double d = x.at({b, i, j, c}) - mu;
          var += d * d;
        }
      var /= 12.0;
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j) {
          const double want =
              (x.at({b, i, j, c}) - mu) / std::sqrt(var + 1e-5) * gamma[c] +
              beta[c];
          CHECK(rel_err(y.value().at({b, i, j, c}), want) < 1e-10);
        }
    }
}

TEST_CASE("repeat_frames replicates a single frame exactly") {
  Rng rng(16);
  auto x = rand_tensor({2, 1, 3, 3, 1}, rng);
  auto y = nn::repeat_frames(Var<double>::constant(x), 4);
  REQUIRE(y.shape() == Shape{2, 4, 3, 3, 1});
  for (Index b = 0; b < 2; ++b)
    for (Index t = 0; t < 4; ++t)
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j)
          CHECK(y.value().at({b, t, i, j, 0}) == x.at({b, 0, i, j, 0}));
}

// Full-model gradient checks: finite differences over every parameter
// coordinate and every input pixel, per architecture. Probes sit at a
// generic point (random init, random input), away from relu/maxpool ties.
TEST_CASE("model gradients match finite differences: convnet_2d") {
  auto spec = tiny_spec(Arch::convnet_2d);
  auto st = init_model<double>(spec, 21);
  Rng rng(22);
  auto x = Tensor<double>::uniform({2, 2, 1, 12, 12}, rng, 0.0, 1.0);
  std::vector<int> labels{0, 1};
  std::vector<Tensor<double>> inputs = st.params;
  inputs.push_back(x);
  check_gradients(
      [&spec, &labels](const std::vector<Var<double>>& in) {
        std::vector<Var<double>> params(in.begin(), in.end() - 1);
        auto out = forward_model(spec, params, in.back());
        return cross_entropy_mean(out.logits, labels);
      },
      inputs, 5e-5, 1e-5);
}

TEST_CASE("model gradients match finite differences: mini_c3d") {
  auto spec = tiny_spec(Arch::mini_c3d);
  auto st = init_model<double>(spec, 23);
  Rng rng(24);
  auto x = Tensor<double>::uniform({2, 4, 1, 12, 12}, rng, 0.0, 1.0);
  std::vector<int> labels{1, 0};
  std::vector<Tensor<double>> inputs = st.params;
  inputs.push_back(x);
  check_gradients(
      [&spec, &labels](const std::vector<Var<double>>& in) {
        std::vector<Var<double>> params(in.begin(), in.end() - 1);
        auto out = forward_model(spec, params, in.back());
        return cross_entropy_mean(out.logits, labels);
      },
      inputs, 5e-5, 1e-5);
}

TEST_CASE("model gradients match finite differences: cnn_gru and cnn_lstm") {
  for (Arch arch : {Arch::cnn_gru, Arch::cnn_lstm}) {
    auto spec = tiny_spec(arch);
    auto st = init_model<double>(spec, 25);
    Rng rng(26);
    auto x = Tensor<double>::uniform({2, 3, 1, 12, 12}, rng, 0.0, 1.0);
    std::vector<int> labels{0, 1};
    std::vector<Tensor<double>> inputs = st.params;
    inputs.push_back(x);
    check_gradients(
        [&spec, &labels](const std::vector<Var<double>>& in) {
          std::vector<Var<double>> params(in.begin(), in.end() - 1);
          auto out = forward_model(spec, params, in.back());
          return cross_entropy_mean(out.logits, labels);
        },
        inputs, 5e-5, 1e-5);
  }
}

TEST_CASE("accuracy helper scores exact predictions") {
  auto spec = tiny_spec(Arch::convnet_2d);
  auto st = init_model<float>(spec, 30);
  Rng rng(31);
  auto clips = Tensor<float>::uniform({4, 2, 1, 12, 12}, rng);
  // Whatever the net predicts, scoring its own argmax gives accuracy 1.
  auto params = make_param_vars(st);
  NoGradGuard guard;
  auto out = forward_model(spec, params, Var<float>::constant(clips));
  auto pred = argmax_rows(out.logits.value());
  CHECK(accuracy(st, clips, pred) == 1.0);
  std::vector<int> wrong = pred;
  for (auto& p : wrong) p = 1 - p;
  CHECK(accuracy(st, clips, wrong) == 0.0);
}
