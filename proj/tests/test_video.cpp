#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include "support.hpp"
#include "vdst/io/image.hpp"
#include "vdst/video/folder.hpp"
#include "vdst/video/moving_shapes.hpp"
#include "vdst/video/sampling.hpp"
#include "vdst/video/types.hpp"

using namespace vdst;

namespace {

// Pixel-value histogram of one frame (exact float keys: the noise-free
// corpus only contains a handful of exact values).
template <class S>
std::map<S, int> frame_histogram(const Tensor<S>& frames, Index t) {
  const Index item = frames.size() / frames.dim(0);
  std::map<S, int> h;
  for (Index i = 0; i < item; ++i) h[frames.data()[t * item + i]]++;
  return h;
}

// Sprite centroid of a single-channel frame (intensity-weighted).
template <class S>
std::pair<double, double> centroid(const Tensor<S>& frames, Index t) {
  const Index h = frames.dim(2), w = frames.dim(3);
  double sx = 0, sy = 0, mass = 0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const double v = frames.at({t, 0, y, x});
      sx += v * static_cast<double>(x);
      sy += v * static_cast<double>(y);
      mass += v;
    }
  return {sx / mass, sy / mass};
}

MovingShapesConfig small_cfg() {
  MovingShapesConfig cfg;
  cfg.appearances = 3;
  cfg.directions = 4;
  cfg.canvas = 32;
  cfg.channels = 1;
  cfg.frames = 16;
  cfg.clips_per_class = 3;
  cfg.shape_size = 8;
  cfg.speed = 1;
  cfg.noise_std = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("sample_clip start positions match the strided-crop rule") {
  // 70 frames, 16 frames at stride 4 => span 64 => starts {0..6}.
  Rng rng(1);
  std::set<Index> starts;
  for (int i = 0; i < 500; ++i) {
    auto idx = sample_clip_indices(70, 16, 4, rng);
    REQUIRE(idx.size() == 16);
    for (std::size_t k = 1; k < idx.size(); ++k)
      REQUIRE(idx[k] - idx[k - 1] == 4);
    REQUIRE(idx.back() <= 69);
    starts.insert(idx[0]);
  }
  CHECK(starts == std::set<Index>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("sample_clip wraps when the span exceeds the clip") {
  Rng rng(2);
  auto idx = sample_clip_indices(5, 4, 3, rng);  // span 12 > 5
  REQUIRE(idx.size() == 4);
  for (auto i : idx) CHECK(i < 5);
  bool wrapped = false;
  for (int trial = 0; trial < 50 && !wrapped; ++trial) {
    auto w = sample_clip_indices(5, 4, 3, rng);
    for (std::size_t k = 1; k < w.size(); ++k)
      if (w[k] < w[k - 1]) wrapped = true;
  }
  CHECK(wrapped);
  CHECK_THROWS_AS((void)sample_clip_indices(0, 4, 1, rng), InvalidInput);
  CHECK_THROWS_AS((void)sample_clip_indices(5, 0, 1, rng), InvalidInput);
}

TEST_CASE("select_frames is stratified: one frame per equal segment") {
  Rng rng(3);
  // 16 frames, 4 picks => segments [0,4) [4,8) [8,12) [12,16).
  for (int trial = 0; trial < 200; ++trial) {
    auto idx = select_frame_indices(16, 4, rng);
    REQUIRE(idx.size() == 4);
    for (Index k = 0; k < 4; ++k) {
      CHECK(idx[static_cast<std::size_t>(k)] >= 4 * k);
      CHECK(idx[static_cast<std::size_t>(k)] < 4 * (k + 1));
    }
  }
  // Uneven split: 7 frames, 3 picks => [0,2) [2,4) [4,7).
  for (int trial = 0; trial < 100; ++trial) {
    auto idx = select_frame_indices(7, 3, rng);
    CHECK(idx[0] < 2);
    CHECK(idx[1] >= 2);
    CHECK(idx[1] < 4);
    CHECK(idx[2] >= 4);
    CHECK(idx[2] < 7);
  }
  CHECK_THROWS_AS((void)select_frame_indices(3, 4, rng), InvalidInput);
}

TEST_CASE("take_frames and stack_clips copy exact slices") {
  Tensor<double> frames({3, 1, 2, 2});
  for (Index i = 0; i < frames.size(); ++i) frames[i] = static_cast<double>(i);
  auto picked = take_frames(frames, {2, 0});
  CHECK(picked.shape() == Shape{2, 1, 2, 2});
  CHECK(picked.at({0, 0, 0, 0}) == 8.0);
  CHECK(picked.at({1, 0, 0, 0}) == 0.0);

  auto batch = stack_clips<double>({picked, picked});
  CHECK(batch.shape() == Shape{2, 2, 1, 2, 2});
  CHECK(batch.at({1, 0, 0, 0, 0}) == 8.0);
}

TEST_CASE("augment_hflip preserves the pixel multiset and flips rows") {
  Rng rng(4);
  auto batch = Tensor<double>::uniform({3, 2, 1, 4, 5}, rng);
  Rng flip_rng(5);
  auto flipped = augment_hflip(batch, flip_rng, 1.0);  // always flip
  // Every row reversed.
  for (Index b = 0; b < 3; ++b)
    for (Index f = 0; f < 2; ++f)
      for (Index y = 0; y < 4; ++y)
        for (Index x = 0; x < 5; ++x)
          CHECK(flipped.at({b, f, 0, y, x}) == batch.at({b, f, 0, y, 4 - x}));
  // p=0 is the identity.
  Rng noflip_rng(6);
  auto same = augment_hflip(batch, noflip_rng, 0.0);
  for (Index i = 0; i < batch.size(); ++i) CHECK(same[i] == batch[i]);
}

TEST_CASE("moving shapes: values, determinism, labels") {
  auto cfg = small_cfg();
  auto ds = generate_moving_shapes<float>(cfg, 77);
  CHECK(ds.num_classes == 12);
  CHECK(ds.clips.size() == 36);
  CHECK(ds.class_names[0] == "square_right");
  CHECK(ds.class_names[5] == "disc_down");

  for (const auto& clip : ds.clips) {
    CHECK(clip.frames.shape() == Shape{16, 1, 32, 32});
    CHECK(clip.frames.array().minCoeff() >= 0.0f);
    CHECK(clip.frames.array().maxCoeff() <= 1.0f);
  }

  // Bit-identical regeneration (the platform-stability contract is anchored
  // by the mt19937_64 reference-value test in the core suite).
  auto ds2 = generate_moving_shapes<float>(cfg, 77);
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    REQUIRE(ds.clips[i].frames.size() == ds2.clips[i].frames.size());
    for (Index j = 0; j < ds.clips[i].frames.size(); ++j)
      REQUIRE(ds.clips[i].frames[j] == ds2.clips[i].frames[j]);
  }

  // A different seed moves at least one sprite.
  auto ds3 = generate_moving_shapes<float>(cfg, 78);
  bool any_diff = false;
  for (std::size_t i = 0; i < ds.clips.size() && !any_diff; ++i)
    for (Index j = 0; j < ds.clips[i].frames.size(); ++j)
      if (ds.clips[i].frames[j] != ds3.clips[i].frames[j]) {
        any_diff = true;
        break;
      }
  CHECK(any_diff);
}

TEST_CASE("moving shapes: direction-only class pairs share per-frame "
          "histograms exactly") {
  auto cfg = small_cfg();
  auto ds = generate_moving_shapes<float>(cfg, 123);
  // Labels a*4+d: same appearance a, all direction pairs.
  for (Index a = 0; a < cfg.appearances; ++a) {
    for (Index d1 = 0; d1 < cfg.directions; ++d1) {
      for (Index d2 = d1 + 1; d2 < cfg.directions; ++d2) {
        auto c1 = ds.indices_of_class(static_cast<int>(a * 4 + d1));
        auto c2 = ds.indices_of_class(static_cast<int>(a * 4 + d2));
        REQUIRE(c1.size() == c2.size());
        for (std::size_t i = 0; i < c1.size(); ++i) {
          for (Index t = 0; t < cfg.frames; ++t) {
            auto h1 = frame_histogram(ds.clips[c1[i]].frames, t);
            auto h2 = frame_histogram(ds.clips[c2[i]].frames, t);
            REQUIRE(h1 == h2);
          }
        }
      }
    }
  }
}

TEST_CASE("moving shapes: appearance-only class pairs share motion exactly") {
  auto cfg = small_cfg();
  auto ds = generate_moving_shapes<float>(cfg, 123);
  // Same direction d, appearances a1 != a2: anchors are keyed by clip index
  // alone, so per-frame centroid displacements AND absolute sprite positions
  // coincide clip-for-clip.
  for (Index d = 0; d < cfg.directions; ++d) {
    auto base = ds.indices_of_class(static_cast<int>(0 * 4 + d));
    for (Index a = 1; a < cfg.appearances; ++a) {
      auto other = ds.indices_of_class(static_cast<int>(a * 4 + d));
      REQUIRE(base.size() == other.size());
      for (std::size_t i = 0; i < base.size(); ++i) {
        auto p0 = centroid(ds.clips[base[i]].frames, 0);
        auto q0 = centroid(ds.clips[other[i]].frames, 0);
        for (Index t = 1; t < cfg.frames; ++t) {
          auto pt = centroid(ds.clips[base[i]].frames, t);
          auto qt = centroid(ds.clips[other[i]].frames, t);
          // Displacement from frame 0 is identical (integer translation).
          CHECK(pt.first - p0.first == doctest::Approx(qt.first - q0.first).epsilon(1e-12));
          CHECK(pt.second - p0.second == doctest::Approx(qt.second - q0.second).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("moving shapes: noise is clamped and config is validated") {
  auto cfg = small_cfg();
  cfg.noise_std = 0.3;
  auto noisy = generate_moving_shapes<float>(cfg, 9);
  float mn = 1e9f, mx = -1e9f;
  for (const auto& clip : noisy.clips) {
    mn = std::min(mn, clip.frames.array().minCoeff());
    mx = std::max(mx, clip.frames.array().maxCoeff());
  }
  CHECK(mn >= 0.0f);
  CHECK(mx <= 1.0f);

  auto bad = small_cfg();
  bad.canvas = 16;  // 16 < 8 + 2*8: sprite would leave the canvas
  CHECK_THROWS_AS((void)generate_moving_shapes<float>(bad, 1), InvalidConfig);
  auto bad2 = small_cfg();
  bad2.appearances = 9;
  CHECK_THROWS_AS((void)generate_moving_shapes<float>(bad2, 1), InvalidConfig);
  auto bad3 = small_cfg();
  bad3.channels = 2;
  CHECK_THROWS_AS((void)generate_moving_shapes<float>(bad3, 1), InvalidConfig);
}

TEST_CASE("moving shapes: 3-channel tints render and stay in range") {
  auto cfg = small_cfg();
  cfg.channels = 3;
  auto ds = generate_moving_shapes<float>(cfg, 31);
  CHECK(ds.clips[0].frames.shape() == Shape{16, 3, 32, 32});
  CHECK(ds.clips[0].frames.array().maxCoeff() == 1.0f);
}

TEST_CASE("pnm image round-trip (PGM and PPM)") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "vdst_pnm_test";
  fs::create_directories(dir);

  Rng rng(8);
  for (Index channels : {Index(1), Index(3)}) {
    Tensor<float> img({channels, 5, 7});
    for (Index i = 0; i < img.size(); ++i)
      img[i] = static_cast<float>(rng.below(256)) / 255.0f;
    const auto path = (dir / (channels == 1 ? "t.pgm" : "t.ppm")).string();
    write_pnm(path, img);
    auto back = read_pnm<float>(path);
    REQUIRE(back.shape() == img.shape());
    for (Index i = 0; i < img.size(); ++i)
      CHECK(back[i] == doctest::Approx(img[i]).epsilon(1.0 / 255.0));
  }
  CHECK_THROWS_AS((void)read_pnm<float>((dir / "missing.pgm").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("folder dataset save/load round-trip preserves structure") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "vdst_folder_test";
  fs::remove_all(dir);

  auto cfg = small_cfg();
  cfg.appearances = 2;
  cfg.directions = 2;
  cfg.clips_per_class = 2;
  auto ds = generate_moving_shapes<float>(cfg, 55);
  save_folder_dataset(ds, dir.string());
  auto back = load_folder_dataset<float>(dir.string());

  CHECK(back.num_classes == 4);
  CHECK(back.size() == ds.size());
  // Folder order is lexicographic by class name, so labels are permuted
  // relative to generation order; check per-class clip counts and exact
  // pixel content via name lookup.
  for (int c = 0; c < 4; ++c) {
    const auto& name = back.class_names[static_cast<std::size_t>(c)];
    int orig_label = -1;
    for (std::size_t i = 0; i < ds.class_names.size(); ++i)
      if (ds.class_names[i] == name) orig_label = static_cast<int>(i);
    REQUIRE(orig_label >= 0);
    auto orig_clips = ds.indices_of_class(orig_label);
    auto back_clips = back.indices_of_class(c);
    REQUIRE(orig_clips.size() == back_clips.size());
    for (std::size_t i = 0; i < orig_clips.size(); ++i) {
      const auto& a = ds.clips[orig_clips[i]].frames;
      const auto& b = back.clips[back_clips[i]].frames;
      REQUIRE(a.shape() == b.shape());
      for (Index j = 0; j < a.size(); ++j)
        REQUIRE(b[j] == doctest::Approx(a[j]).epsilon(1.0 / 255.0));
    }
  }
  fs::remove_all(dir);
  CHECK_THROWS_AS((void)load_folder_dataset<float>(dir.string()), IoError);
}

TEST_CASE("dataset validation catches bad labels and ragged shapes") {
  VideoDataset<float> ds;
  ds.num_classes = 2;
  VideoClip<float> c1;
  c1.frames = Tensor<float>({2, 1, 4, 4});
  c1.label = 0;
  ds.clips.push_back(c1);
  CHECK_NOTHROW(ds.validate());

  VideoClip<float> c2;
  c2.frames = Tensor<float>({2, 1, 4, 4});
  c2.label = 2;  // out of range
  ds.clips.push_back(c2);
  CHECK_THROWS_AS(ds.validate(), InvalidInput);
  ds.clips.back().label = 1;
  ds.clips.back().frames = Tensor<float>({2, 1, 4, 5});  // ragged width
  CHECK_THROWS_AS(ds.validate(), InvalidInput);
}
