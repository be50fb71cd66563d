#pragma once

// Byte-exact storage accounting for distilled materials. Every stored
// element is counted as a 4-byte float32 and every label as a 4-byte int32,
// matching the on-disk artifact encoding. Budgets for full-scale datasets
// are pure geometry arithmetic, so they can be computed without ever
// materializing the tensors they describe.

#include <cstdint>
#include <sstream>
#include <string>

#include "vdst/core/tensor.hpp"
#include "vdst/disentangle/combiner.hpp"
#include "vdst/disentangle/memory.hpp"
#include "vdst/matching/types.hpp"
#include "vdst/video/types.hpp"

namespace vdst {
namespace eval {

inline constexpr std::int64_t kBytesPerElement = 4;  // float32 on disk
inline constexpr std::int64_t kBytesPerLabel = 4;    // int32 on disk

// Component-wise byte counts of a stored material. Unused components stay
// zero: a synthetic frame set has no static/dynamic memory, a disentangled
// artifact stores no explicit labels (class identity is positional).
struct StorageReport {
  std::int64_t static_bytes = 0;
  std::int64_t dynamic_bytes = 0;
  std::int64_t combiner_bytes = 0;
  std::int64_t synthetic_bytes = 0;
  std::int64_t label_bytes = 0;

  std::int64_t total() const {
    return static_bytes + dynamic_bytes + combiner_bytes + synthetic_bytes +
           label_bytes;
  }
  double mib() const { return static_cast<double>(total()) / 1048576.0; }

  std::string to_string() const {
    std::ostringstream os;
    os << total() << " bytes (" << mib() << " MiB)";
    if (synthetic_bytes > 0) os << " frames=" << synthetic_bytes;
    if (static_bytes > 0) os << " static=" << static_bytes;
    if (dynamic_bytes > 0) os << " dynamic=" << dynamic_bytes;
    if (combiner_bytes > 0) os << " combiner=" << combiner_bytes;
    if (label_bytes > 0) os << " labels=" << label_bytes;
    return os.str();
  }
};

// Frame-set storage: `items` entries of `n_syn` stored frames at [c, h, w],
// plus one label per entry.
inline StorageReport synthetic_storage(std::int64_t items, std::int64_t n_syn,
                                       std::int64_t c, std::int64_t h,
                                       std::int64_t w,
                                       bool count_labels = true) {
  StorageReport r;
  if (items <= 0) return r;
  r.synthetic_bytes = items * n_syn * c * h * w * kBytesPerElement;
  if (count_labels) r.label_bytes = items * kBytesPerLabel;
  return r;
}

// Disentangled-artifact storage: per class `spc` static frames [c, h, w] and
// `dpc` motion stacks [fd, 1, h, w], plus the shared combiner parameters.
// Class identity is positional, so no label bytes are stored.
inline StorageReport artifact_storage(std::int64_t classes, std::int64_t spc,
                                      std::int64_t dpc, std::int64_t fd,
                                      disentangle::CombinerVariant variant,
                                      Index mid, std::int64_t c,
                                      std::int64_t h, std::int64_t w) {
  StorageReport r;
  if (classes <= 0) return r;
  r.static_bytes = classes * spc * c * h * w * kBytesPerElement;
  r.dynamic_bytes = classes * dpc * fd * h * w * kBytesPerElement;
  disentangle::CombinerSpec<float> geom;
  geom.variant = variant;
  geom.channels = static_cast<Index>(c);
  geom.height = static_cast<Index>(h);
  geom.width = static_cast<Index>(w);
  geom.fd = static_cast<Index>(fd);
  geom.frames = static_cast<Index>(fd);
  geom.mid = mid;
  r.combiner_bytes = static_cast<std::int64_t>(geom.param_count()) *
                     kBytesPerElement;
  return r;
}

template <class S>
StorageReport storage_bytes(const matching::SyntheticSet<S>& set) {
  if (!set.frames.defined() || set.items() == 0) return {};
  return synthetic_storage(set.frames.dim(0), set.frames.dim(1),
                           set.frames.dim(2), set.frames.dim(3),
                           set.frames.dim(4));
}

template <class S>
StorageReport storage_bytes(const disentangle::DistilledArtifact<S>& art) {
  const auto& si = art.static_memory.images;
  const auto& dm = art.dynamic_memory.motions;
  if (!si.defined() || !dm.defined()) return {};
  return artifact_storage(si.dim(0), si.dim(1), dm.dim(1), dm.dim(2),
                          art.combiner.variant, art.combiner.mid, si.dim(2),
                          si.dim(3), si.dim(4));
}

// Real datasets are accounted the same way a frame set would be: raw pixels
// plus one label per clip. Clip lengths may vary, so bytes are summed.
template <class S>
StorageReport storage_bytes(const VideoDataset<S>& dataset) {
  StorageReport r;
  for (const auto& clip : dataset.clips)
    r.synthetic_bytes += static_cast<std::int64_t>(clip.frames.size()) *
                         kBytesPerElement;
  r.label_bytes = static_cast<std::int64_t>(dataset.clips.size()) *
                  kBytesPerLabel;
  return r;
}

}  // namespace eval
}  // namespace vdst
