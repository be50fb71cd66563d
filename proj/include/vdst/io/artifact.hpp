#pragma once

// Binary artifact container. Layout, little-endian throughout regardless of
// host:
//
//   offset 0   magic bytes 'V' 'D' 'S' 'T'
//   offset 4   format version, u16
//   offset 6   metadata length M, u32
//   offset 10  M bytes of UTF-8 key=value metadata (canonical config text)
//   then       tensor record count R, u32
//   then       R records, each:
//                u32 name length, name bytes,
//                u32 rank, rank x u32 dims,
//                numel x 4 bytes IEEE-754 float32 payload
//   trailing   u32 CRC32 (IEEE, reflected) of every preceding byte
//
// Loads validate structure first (any short read -> Truncated), then the
// checksum (-> BadChecksum), then decode; no partially-built object ever
// escapes. Values are stored as float32 — the unit all storage accounting
// counts — so tensors whose values lie on the float32 grid round-trip
// bitwise even from double-precision memory.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/disentangle/combiner.hpp"
#include "vdst/disentangle/memory.hpp"
#include "vdst/eval/storage.hpp"
#include "vdst/io/config.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/temporal/schedule.hpp"

namespace vdst {
namespace io {

inline constexpr std::uint16_t kFormatVersion = 1;

inline std::uint32_t crc32(const char* data, std::size_t n) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ static_cast<unsigned char>(data[i])) & 0xFFu] ^
          (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace detail {

struct NamedTensorF32 {
  std::string name;
  Shape dims;
  std::vector<float> values;
};

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::size_t pos) : d_(data), at_(pos) {}

  std::size_t at() const { return at_; }
  std::size_t remaining() const { return d_.size() - at_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw Truncated(std::string("artifact: file ends inside ") + what);
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    const auto b0 = static_cast<unsigned char>(d_[at_]);
    const auto b1 = static_cast<unsigned char>(d_[at_ + 1]);
    at_ += 2;
    return static_cast<std::uint16_t>(b0 | (b1 << 8));
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(static_cast<unsigned char>(d_[at_ + std::size_t(i)]))
           << (8 * i);
    at_ += 4;
    return v;
  }

  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = d_.substr(at_, n);
    at_ += n;
    return s;
  }

 private:
  const std::string& d_;
  std::size_t at_;
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("artifact: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

// Magic + version checks shared by full loads and the kind probe.
inline ByteReader open_header(const std::string& bytes) {
  if (bytes.size() < 4)
    throw Truncated("artifact: file ends inside the magic bytes");
  if (bytes.compare(0, 4, "VDST") != 0)
    throw BadMagic("artifact: bad magic bytes (not a VDST file)");
  ByteReader r(bytes, 4);
  const std::uint16_t version = r.u16("the version field");
  if (version != kFormatVersion)
    throw BadVersion("artifact: format version " + std::to_string(version) +
                     ", this build reads version " +
                     std::to_string(kFormatVersion));
  return r;
}

template <class S>
void append_tensor(std::string& body, const std::string& name,
                   const Tensor<S>& t) {
  put_u32(body, static_cast<std::uint32_t>(name.size()));
  body += name;
  put_u32(body, static_cast<std::uint32_t>(t.rank()));
  for (Index d = 0; d < t.rank(); ++d)
    put_u32(body, static_cast<std::uint32_t>(t.dim(d)));
  for (Index i = 0; i < t.size(); ++i)
    put_f32(body, static_cast<float>(t[i]));
}

inline void write_artifact_file(const std::string& path, const Config& meta,
                                const std::string& tensor_block,
                                std::uint32_t tensor_count) {
  std::string out;
  out += "VDST";
  put_u16(out, kFormatVersion);
  const std::string meta_text = meta.to_text();
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  put_u32(out, tensor_count);
  out += tensor_block;
  put_u32(out, crc32(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f.good()) throw IoError("artifact: cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f.good()) throw IoError("artifact: short write to " + path);
}

struct ArtifactFile {
  Config meta;
  std::vector<NamedTensorF32> tensors;
};

inline ArtifactFile read_artifact_file(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r = open_header(bytes);

  ArtifactFile file;
  const std::uint32_t meta_len = r.u32("the metadata length");
  file.meta = parse_config(r.str(meta_len, "the metadata block"));
  const std::uint32_t count = r.u32("the tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensorF32 rec;
    const std::uint32_t name_len = r.u32("a tensor name length");
    rec.name = r.str(name_len, "a tensor name");
    const std::uint32_t rank = r.u32("a tensor rank");
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32("a tensor dimension");
      rec.dims.push_back(static_cast<Index>(dim));
      numel *= dim;
      if (numel * 4 > bytes.size())
        throw Truncated("artifact: tensor '" + rec.name +
                        "' claims more elements than the file holds");
    }
    rec.values.resize(static_cast<std::size_t>(numel));
    r.need(static_cast<std::size_t>(numel) * 4, "a tensor payload");
    for (auto& v : rec.values) v = r.f32("a tensor payload");
    file.tensors.push_back(std::move(rec));
  }
  if (r.remaining() != 4)
    throw Truncated("artifact: expected exactly a 4-byte checksum after the "
                    "last tensor record");
  const std::uint32_t stored = r.u32("the checksum");
  const std::uint32_t actual = crc32(bytes.data(), bytes.size() - 4);
  if (stored != actual)
    throw BadChecksum("artifact: checksum mismatch (stored " +
                      std::to_string(stored) + ", computed " +
                      std::to_string(actual) + ")");
  return file;
}

inline const NamedTensorF32& find_tensor(const ArtifactFile& file,
                                         const std::string& name) {
  for (const auto& t : file.tensors)
    if (t.name == name) return t;
  throw IoError("artifact: missing tensor record '" + name + "'");
}

template <class S>
Tensor<S> to_tensor(const NamedTensorF32& rec) {
  Tensor<S> t(rec.dims);
  for (Index i = 0; i < t.size(); ++i)
    t[i] = static_cast<S>(rec.values[std::size_t(i)]);
  return t;
}

inline void require_storable_text(const std::string& value,
                                  const char* what) {
  require_input(value.find('\n') == std::string::npos &&
                    value.find('\r') == std::string::npos &&
                    value.find('#') == std::string::npos &&
                    trim(value) == value,
                std::string("artifact: ") + what +
                    " must not contain newlines, '#', or edge whitespace");
}

inline void put_schedule(Config& meta, const temporal::CompressionSchedule& s) {
  meta.set("schedule.n_syn", std::to_string(s.n_syn));
  meta.set("schedule.n_real", std::to_string(s.n_real));
  meta.set("schedule.k", std::to_string(s.k));
  meta.set("schedule.interp", temporal::interp_name(s.interp));
  meta.set("schedule.l_syn", std::to_string(s.l_syn));
}

inline temporal::CompressionSchedule get_schedule(const Config& meta) {
  temporal::CompressionSchedule s;
  s.n_syn = static_cast<Index>(meta.get_i64("schedule.n_syn", 1));
  s.n_real = static_cast<Index>(meta.get_i64("schedule.n_real", 1));
  s.k = static_cast<Index>(meta.get_i64("schedule.k", 1));
  s.interp = temporal::interp_from_name(
      meta.get_str("schedule.interp", "duplicate"));
  s.l_syn = static_cast<Index>(meta.get_i64("schedule.l_syn", 1));
  return s;
}

inline void check_budget(std::int64_t need, std::uint64_t budget,
                         const char* what) {
  if (budget > 0 && static_cast<std::uint64_t>(need) > budget)
    throw BudgetExceeded(static_cast<std::uint64_t>(need), budget, what);
}

inline void check_kind(const Config& meta, const std::string& want) {
  const std::string kind = meta.get_str("kind", "");
  if (kind != want)
    throw IoError("artifact: kind '" + kind + "', expected '" + want + "'");
}

}  // namespace detail

// Kind of the artifact at `path` ("synthetic_set" or "distilled_artifact"),
// read from the header and metadata only — the tensor payloads are not
// touched, so this is cheap even for large files.
inline std::string artifact_kind(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  detail::ByteReader r = detail::open_header(bytes);
  const std::uint32_t meta_len = r.u32("the metadata length");
  const Config meta = parse_config(r.str(meta_len, "the metadata block"));
  const std::string kind = meta.get_str("kind", "");
  if (kind.empty()) throw IoError("artifact: metadata carries no kind");
  return kind;
}

// Save a synthetic frame set. A nonzero budget is enforced before anything
// is written: an over-budget save throws and leaves no file behind.
template <class S>
void save_artifact(const matching::SyntheticSet<S>& set,
                   const std::string& path, std::uint64_t budget_bytes = 0) {
  set.validate();
  detail::check_budget(eval::storage_bytes(set).total(), budget_bytes,
                       "save synthetic set");
  Config meta;
  meta.set("kind", "synthetic_set");
  meta.set("num_classes", std::to_string(set.num_classes));
  detail::put_schedule(meta, set.schedule);

  std::string block;
  detail::append_tensor(block, "frames", set.frames);
  Tensor<float> labels({static_cast<Index>(set.labels.size())});
  for (Index i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<float>(set.labels[std::size_t(i)]);
  detail::append_tensor(block, "labels", labels);
  detail::write_artifact_file(path, meta, block, 2);
}

template <class S>
matching::SyntheticSet<S> load_synthetic_set(const std::string& path) {
  const auto file = detail::read_artifact_file(path);
  detail::check_kind(file.meta, "synthetic_set");
  matching::SyntheticSet<S> set;
  set.num_classes = static_cast<int>(file.meta.get_i64("num_classes", 0));
  set.schedule = detail::get_schedule(file.meta);
  set.frames = detail::to_tensor<S>(detail::find_tensor(file, "frames"));
  const auto& labels = detail::find_tensor(file, "labels");
  for (float v : labels.values)
    set.labels.push_back(static_cast<int>(v));
  set.validate();
  return set;
}

// Save a disentangled artifact: static memory, dynamic memory, and the
// combiner parameters under their structural names.
template <class S>
void save_artifact(const disentangle::DistilledArtifact<S>& art,
                   const std::string& path, std::uint64_t budget_bytes = 0) {
  art.validate();
  detail::check_budget(eval::storage_bytes(art).total(), budget_bytes,
                       "save disentangled artifact");
  detail::require_storable_text(art.dataset_name, "dataset name");
  Config meta;
  meta.set("kind", "distilled_artifact");
  meta.set("dataset", art.dataset_name);
  meta.set("seed", std::to_string(art.seed));
  meta.set("combiner.variant",
           disentangle::combiner_variant_name(art.combiner.variant));
  meta.set("combiner.mid", std::to_string(art.combiner.mid));
  meta.set("combiner.channels", std::to_string(art.combiner.channels));
  meta.set("combiner.height", std::to_string(art.combiner.height));
  meta.set("combiner.width", std::to_string(art.combiner.width));
  meta.set("combiner.fd", std::to_string(art.combiner.fd));
  meta.set("combiner.frames", std::to_string(art.combiner.frames));
  detail::put_schedule(meta, art.schedule);

  std::string block;
  detail::append_tensor(block, "static.images", art.static_memory.images);
  detail::append_tensor(block, "dynamic.motions", art.dynamic_memory.motions);
  const auto names = art.combiner.param_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    detail::append_tensor(block, names[i], art.combiner.params[i]);
  detail::write_artifact_file(path, meta, block,
                              static_cast<std::uint32_t>(2 + names.size()));
}

template <class S>
disentangle::DistilledArtifact<S> load_distilled_artifact(
    const std::string& path) {
  const auto file = detail::read_artifact_file(path);
  detail::check_kind(file.meta, "distilled_artifact");
  disentangle::DistilledArtifact<S> art;
  art.dataset_name = file.meta.get_str("dataset", "");
  art.seed =
      static_cast<std::uint64_t>(file.meta.get_i64("seed", 0));
  art.schedule = detail::get_schedule(file.meta);

  auto& comb = art.combiner;
  const std::string variant = file.meta.get_str("combiner.variant", "");
  if (variant == "single_block")
    comb.variant = disentangle::CombinerVariant::single_block;
  else if (variant == "two_block_mid8")
    comb.variant = disentangle::CombinerVariant::two_block_mid8;
  else
    throw IoError("artifact: unknown combiner variant '" + variant + "'");
  comb.mid = static_cast<Index>(file.meta.get_i64("combiner.mid", 8));
  comb.channels =
      static_cast<Index>(file.meta.get_i64("combiner.channels", 0));
  comb.height = static_cast<Index>(file.meta.get_i64("combiner.height", 0));
  comb.width = static_cast<Index>(file.meta.get_i64("combiner.width", 0));
  comb.fd = static_cast<Index>(file.meta.get_i64("combiner.fd", 0));
  comb.frames = static_cast<Index>(file.meta.get_i64("combiner.frames", 0));
  for (const auto& name : comb.param_names())
    comb.params.push_back(
        detail::to_tensor<S>(detail::find_tensor(file, name)));

  art.static_memory.images =
      detail::to_tensor<S>(detail::find_tensor(file, "static.images"));
  art.dynamic_memory.motions =
      detail::to_tensor<S>(detail::find_tensor(file, "dynamic.motions"));
  art.validate();
  return art;
}

}  // namespace io
}  // namespace vdst
