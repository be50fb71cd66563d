#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "vdst/disentangle/combiner.hpp"
#include "vdst/disentangle/memory.hpp"
#include "vdst/io/artifact.hpp"
#include "vdst/io/config.hpp"
#include "vdst/io/csv.hpp"

namespace fs = std::filesystem;

namespace {

using vdst::BadChecksum;
using vdst::BadMagic;
using vdst::BadVersion;
using vdst::Index;
using vdst::InvalidConfig;
using vdst::IoError;
using vdst::Rng;
using vdst::Shape;
using vdst::Tensor;
using vdst::Truncated;

fs::path test_dir() {
  auto dir = fs::temp_directory_path() / "vdst_io_test";
  fs::create_directories(dir);
  return dir;
}

// Random tensors restricted to the float32 grid so the float32 disk format
// round-trips bitwise even from double-precision memory.
Tensor<double> f32_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(shape);
  for (Index i = 0; i < t.size(); ++i)
    t[i] = static_cast<double>(
        static_cast<float>(rng.uniform() * 2.0 - 1.0));
  return t;
}

bool bitwise_equal(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return false;
  for (Index i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

vdst::matching::SyntheticSet<double> sample_set(Rng& rng) {
  vdst::matching::SyntheticSet<double> set;
  set.num_classes = 2;
  set.frames = f32_tensor({4, 2, 1, 5, 5}, rng);
  set.labels = {0, 0, 1, 1};
  set.schedule.n_syn = 2;
  set.schedule.n_real = 4;
  set.schedule.k = 2;
  set.schedule.interp = vdst::temporal::Interp::linear;
  set.schedule.l_syn = 6;
  return set;
}

vdst::disentangle::DistilledArtifact<double> sample_artifact(Rng& rng) {
  vdst::disentangle::DistilledArtifact<double> art;
  art.static_memory.images = f32_tensor({2, 2, 1, 5, 5}, rng);
  art.dynamic_memory.motions = f32_tensor({2, 1, 3, 1, 5, 5}, rng);
  art.combiner = vdst::disentangle::init_combiner<double>(
      vdst::disentangle::CombinerVariant::two_block_mid8, 1, 5, 5, 3, 4,
      rng.below(1u << 30), 1e-2);
  for (auto& p : art.combiner.params) {
    for (Index i = 0; i < p.size(); ++i)
      p[i] = static_cast<double>(static_cast<float>(p[i]));
  }
  art.seed = 12345;
  art.dataset_name = "toy";
  art.schedule.n_syn = 3;
  art.schedule.n_real = 3;
  art.schedule.l_syn = 4;
  return art;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("checksum: table-driven crc32 matches the reference vector") {
  const std::string check = "123456789";
  CHECK(vdst::io::crc32(check.data(), check.size()) == 0xCBF43926u);
  CHECK(vdst::io::crc32("", 0) == 0u);
}

TEST_CASE("fingerprint: fnv-1a 64 matches the reference vectors") {
  CHECK(vdst::io::fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(vdst::io::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("config: parse, defaults, round trip, fingerprint") {
  const std::string text =
      "# comment line\n"
      "\n"
      "match.ipc = 2\n"
      "dataset.name=moving_shapes\n"
      "eval.lr = 0.05   # trailing comment\n"
      "flag.on = true\n";
  auto cfg = vdst::io::parse_config(text);
  CHECK(cfg.get_i64("match.ipc", 1) == 2);
  CHECK(cfg.get_str("dataset.name", "x") == "moving_shapes");
  CHECK(cfg.get_f64("eval.lr", 0.0) == 0.05);
  CHECK(cfg.get_bool("flag.on", false) == true);
  // Defaults apply for absent keys.
  CHECK(cfg.get_i64("match.iterations", 40) == 40);

  // Canonical text sorts keys; parsing it back reproduces the map, and the
  // fingerprint does not depend on the original key order.
  auto canon = cfg.to_text();
  auto cfg2 = vdst::io::parse_config(canon);
  CHECK(cfg2.to_text() == canon);
  auto reordered = vdst::io::parse_config(
      "flag.on=true\neval.lr=0.05\ndataset.name=moving_shapes\nmatch.ipc=2\n");
  CHECK(reordered.fingerprint() == cfg.fingerprint());
  CHECK(vdst::io::parse_config("match.ipc=3").fingerprint() !=
        cfg.fingerprint());

  // Malformed lines are rejected.
  CHECK_THROWS_AS(vdst::io::parse_config("no_equals_sign\n"), InvalidConfig);
  CHECK_THROWS_AS(vdst::io::parse_config("=value\n"), InvalidConfig);
  CHECK_THROWS_AS(cfg.get_i64("dataset.name", 0), InvalidConfig);
  CHECK_THROWS_AS(cfg.get_bool("eval.lr", false), InvalidConfig);

  // File round trip.
  const auto path = test_dir() / "cfg.txt";
  vdst::io::save_text(path.string(), text);
  auto from_file = vdst::io::load_config(path.string());
  CHECK(from_file.fingerprint() == cfg.fingerprint());
}

TEST_CASE("csv: rows carry the config fingerprint column") {
  const auto path = test_dir() / "out.csv";
  vdst::io::CsvWriter csv(path.string(), {"n_syn", "accuracy"},
                          "deadbeef01234567");
  csv.row({"1", "0.5"});
  csv.row({"2", "0.75"});
  csv.close();
  std::ifstream in(path);
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  CHECK(l1 == "n_syn,accuracy,config_fingerprint");
  CHECK(l2 == "1,0.5,deadbeef01234567");
  CHECK(l3 == "2,0.75,deadbeef01234567");
}

TEST_CASE("artifact: synthetic-set round trip is bit-exact") {
  Rng rng(331);
  const auto path = test_dir() / "set.vdst";
  for (int trial = 0; trial < 5; ++trial) {
    auto set = sample_set(rng);
    vdst::io::save_artifact(set, path.string());
    auto back = vdst::io::load_synthetic_set<double>(path.string());
    CHECK(bitwise_equal(back.frames, set.frames));
    CHECK(back.labels == set.labels);
    CHECK(back.num_classes == set.num_classes);
    CHECK(back.schedule.n_syn == set.schedule.n_syn);
    CHECK(back.schedule.n_real == set.schedule.n_real);
    CHECK(back.schedule.k == set.schedule.k);
    CHECK(back.schedule.interp == set.schedule.interp);
    CHECK(back.schedule.l_syn == set.schedule.l_syn);
  }
}

TEST_CASE("artifact: disentangled round trip is bit-exact") {
  Rng rng(337);
  const auto path = test_dir() / "art.vdst";
  for (int trial = 0; trial < 5; ++trial) {
    auto art = sample_artifact(rng);
    vdst::io::save_artifact(art, path.string());
    auto back = vdst::io::load_distilled_artifact<double>(path.string());
    CHECK(bitwise_equal(back.static_memory.images, art.static_memory.images));
    CHECK(bitwise_equal(back.dynamic_memory.motions,
                        art.dynamic_memory.motions));
    CHECK(back.combiner.variant == art.combiner.variant);
    CHECK(back.combiner.mid == art.combiner.mid);
    CHECK(back.combiner.fd == art.combiner.fd);
    CHECK(back.combiner.frames == art.combiner.frames);
    REQUIRE(back.combiner.params.size() == art.combiner.params.size());
    for (std::size_t i = 0; i < art.combiner.params.size(); ++i)
      CHECK(bitwise_equal(back.combiner.params[i], art.combiner.params[i]));
    CHECK(back.seed == art.seed);
    CHECK(back.dataset_name == art.dataset_name);
    CHECK(back.schedule.l_syn == art.schedule.l_syn);
  }
}

TEST_CASE("artifact: byte layout is little-endian and self-describing") {
  // A one-tensor file with a known payload pins the documented layout
  // independent of the host: magic bytes, version u16 LE, length-prefixed
  // metadata, u32 LE record fields, IEEE-754 float32 LE payload.
  const auto path = test_dir() / "layout.vdst";
  vdst::matching::SyntheticSet<double> set;
  set.num_classes = 1;
  set.frames = Tensor<double>({1, 1, 1, 1, 1});
  set.frames[0] = 1.0;  // 0x3F800000 as float32
  set.labels = {0};
  set.schedule.n_syn = 1;
  set.schedule.n_real = 1;
  set.schedule.k = 1;
  set.schedule.l_syn = 1;
  vdst::io::save_artifact(set, path.string());

  auto bytes = read_bytes(path);
  REQUIRE(bytes.size() > 10);
  CHECK(bytes[0] == 'V');
  CHECK(bytes[1] == 'D');
  CHECK(bytes[2] == 'S');
  CHECK(bytes[3] == 'T');
  CHECK(bytes[4] == 1);  // version 1, low byte first
  CHECK(bytes[5] == 0);

  // Metadata length u32 LE at offset 6; the metadata text follows.
  const std::uint32_t meta_len = std::uint32_t(bytes[6]) |
                                 (std::uint32_t(bytes[7]) << 8) |
                                 (std::uint32_t(bytes[8]) << 16) |
                                 (std::uint32_t(bytes[9]) << 24);
  REQUIRE(bytes.size() > 10 + meta_len);
  const std::string meta(bytes.begin() + 10, bytes.begin() + 10 + meta_len);
  CHECK(meta.find("kind=synthetic_set") != std::string::npos);

  // The single float32 1.0 payload appears as 00 00 80 3F somewhere after
  // the metadata, and the file ends with a 4-byte checksum.
  bool found = false;
  for (std::size_t i = 10 + meta_len; i + 4 <= bytes.size() - 4; ++i)
    if (bytes[i] == 0x00 && bytes[i + 1] == 0x00 && bytes[i + 2] == 0x80 &&
        bytes[i + 3] == 0x3F)
      found = true;
  CHECK(found);

  // The trailing u32 equals the checksum of everything before it.
  const std::size_t n = bytes.size();
  const std::uint32_t stored = std::uint32_t(bytes[n - 4]) |
                               (std::uint32_t(bytes[n - 3]) << 8) |
                               (std::uint32_t(bytes[n - 2]) << 16) |
                               (std::uint32_t(bytes[n - 1]) << 24);
  CHECK(stored == vdst::io::crc32(reinterpret_cast<const char*>(bytes.data()),
                                  n - 4));
}

TEST_CASE("artifact: corruption and mismatch produce distinct errors") {
  Rng rng(347);
  const auto good_path = test_dir() / "good.vdst";
  auto set = sample_set(rng);
  vdst::io::save_artifact(set, good_path.string());
  const auto good = read_bytes(good_path);
  const auto bad_path = test_dir() / "bad.vdst";

  // Wrong magic.
  auto corrupt = good;
  corrupt[0] = 'X';
  write_bytes(bad_path, corrupt);
  CHECK_THROWS_AS(vdst::io::load_synthetic_set<double>(bad_path.string()),
                  BadMagic);

  // Unsupported version.
  corrupt = good;
  corrupt[4] = 0xFF;
  write_bytes(bad_path, corrupt);
  CHECK_THROWS_AS(vdst::io::load_synthetic_set<double>(bad_path.string()),
                  BadVersion);

  // Flipped payload byte breaks the checksum.
  corrupt = good;
  corrupt[corrupt.size() / 2] ^= 0x40;
  write_bytes(bad_path, corrupt);
  CHECK_THROWS_AS(vdst::io::load_synthetic_set<double>(bad_path.string()),
                  BadChecksum);

  // Truncation anywhere is detected before the checksum is even reachable.
  corrupt = good;
  corrupt.resize(corrupt.size() - 9);
  write_bytes(bad_path, corrupt);
  CHECK_THROWS_AS(vdst::io::load_synthetic_set<double>(bad_path.string()),
                  Truncated);
  corrupt = good;
  corrupt.resize(3);
  write_bytes(bad_path, corrupt);
  CHECK_THROWS_AS(vdst::io::load_synthetic_set<double>(bad_path.string()),
                  Truncated);

  // Kind mismatch: a synthetic set is not a disentangled artifact.
  CHECK_THROWS_AS(
      vdst::io::load_distilled_artifact<double>(good_path.string()), IoError);

  // Missing file.
  CHECK_THROWS_AS(
      vdst::io::load_synthetic_set<double>(
          (test_dir() / "absent.vdst").string()),
      IoError);
}

TEST_CASE("artifact: kind probe reads only the header") {
  Rng rng(353);
  const auto p1 = test_dir() / "probe_set.vdst";
  const auto p2 = test_dir() / "probe_art.vdst";
  vdst::io::save_artifact(sample_set(rng), p1.string());
  vdst::io::save_artifact(sample_artifact(rng), p2.string());
  CHECK(vdst::io::artifact_kind(p1.string()) == "synthetic_set");
  CHECK(vdst::io::artifact_kind(p2.string()) == "distilled_artifact");
}

TEST_CASE("artifact: saving over budget writes nothing") {
  Rng rng(359);
  auto art = sample_artifact(rng);
  const auto path = test_dir() / "over_budget.vdst";
  std::error_code ec;
  fs::remove(path, ec);
  const auto need = vdst::eval::storage_bytes(art).total();
  CHECK_THROWS_AS(
      vdst::io::save_artifact(art, path.string(),
                              static_cast<std::uint64_t>(need - 1)),
      vdst::BudgetExceeded);
  CHECK(!fs::exists(path));
  // At exactly the requirement it saves.
  vdst::io::save_artifact(art, path.string(),
                          static_cast<std::uint64_t>(need));
  CHECK(fs::exists(path));
}
