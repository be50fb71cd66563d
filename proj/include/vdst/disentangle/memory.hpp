#pragma once

// Distilled memory containers: per-class static frames, per-class motion
// stacks, and the artifact that bundles them with the shared combiner.
// Static and dynamic memories are indexed independently — any static slot of
// a class can be fused with any of its motion slots — which is what makes
// SPC x DPC clips out of SPC + DPC stored items.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/core/rng.hpp"
#include "vdst/core/tensor.hpp"
#include "vdst/disentangle/combiner.hpp"
#include "vdst/temporal/schedule.hpp"

namespace vdst {
namespace disentangle {

template <class S>
struct StaticMemory {
  Tensor<S> images;  // [classes, SPC, C, H, W]

  Index classes() const { return images.dim(0); }
  Index per_class() const { return images.dim(1); }
  Index channels() const { return images.dim(2); }
  Index height() const { return images.dim(3); }
  Index width() const { return images.dim(4); }

  void validate() const {
    require_input(images.rank() == 5,
                  "static memory: want [classes, per_class, C, H, W], got " +
                      shape_str(images.shape()));
    for (Index d = 0; d < 5; ++d)
      require_input(images.dim(d) >= 1, "static memory: empty axis " +
                                            std::to_string(d));
    for (Index i = 0; i < images.size(); ++i)
      require_input(std::isfinite(static_cast<double>(images[i])),
                    "static memory: non-finite pixel");
  }
};

template <class S>
struct DynamicMemory {
  Tensor<S> motions;  // [classes, DPC, F_d, 1, H, W]

  Index classes() const { return motions.dim(0); }
  Index per_class() const { return motions.dim(1); }
  Index frames() const { return motions.dim(2); }
  Index height() const { return motions.dim(4); }
  Index width() const { return motions.dim(5); }

  void validate() const {
    require_input(motions.rank() == 6,
                  "dynamic memory: want [classes, per_class, F_d, 1, H, W], "
                  "got " +
                      shape_str(motions.shape()));
    require_input(motions.dim(3) == 1,
                  "dynamic memory: motion stacks are single-channel");
    for (Index d = 0; d < 6; ++d)
      require_input(motions.dim(d) >= 1, "dynamic memory: empty axis " +
                                             std::to_string(d));
    for (Index i = 0; i < motions.size(); ++i)
      require_input(std::isfinite(static_cast<double>(motions[i])),
                    "dynamic memory: non-finite value");
  }
};

namespace detail {

inline constexpr std::uint64_t kPairTag = 0x50414952;  // "PAIR"

// Uniform independent draws over the SPC x DPC grid of one class. The
// stream is keyed by (seed, class), so different classes sample
// independently and a rerun reproduces the draw.
inline std::vector<std::pair<Index, Index>> pair_indices(Index spc, Index dpc,
                                                         int class_id,
                                                         Index count,
                                                         std::uint64_t seed) {
  Rng rng(mix_seed(mix_seed(seed, kPairTag),
                   static_cast<std::uint64_t>(class_id)));
  std::vector<std::pair<Index, Index>> out(static_cast<std::size_t>(count));
  for (auto& p : out) {
    p.first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(spc)));
    p.second = static_cast<Index>(rng.below(static_cast<std::uint64_t>(dpc)));
  }
  return out;
}

}  // namespace detail

// Sample (static slot, dynamic slot) pairs of one class, uniformly and
// independently.
template <class S>
std::vector<std::pair<Index, Index>> pair_memories(
    const StaticMemory<S>& static_memory, const DynamicMemory<S>& dynamic_memory,
    int class_id, Index count, std::uint64_t seed) {
  require_input(static_memory.images.rank() == 5 &&
                    dynamic_memory.motions.rank() == 6,
                "pair_memories: malformed memories");
  require_input(static_memory.classes() == dynamic_memory.classes(),
                "pair_memories: memories disagree on the class count");
  require_input(class_id >= 0 &&
                    class_id < static_cast<int>(static_memory.classes()),
                "pair_memories: class " + std::to_string(class_id) +
                    " out of range");
  require_input(count >= 1, "pair_memories: need at least one pair");
  return detail::pair_indices(static_memory.per_class(),
                              dynamic_memory.per_class(), class_id, count,
                              seed);
}

// Everything a disentangled distillation run produces: the two memories,
// the shared combiner, the temporal schedule the clips were trained under,
// and enough provenance to reproduce the run.
template <class S>
struct DistilledArtifact {
  StaticMemory<S> static_memory;
  DynamicMemory<S> dynamic_memory;
  CombinerSpec<S> combiner;
  temporal::CompressionSchedule schedule;
  std::uint64_t seed = 0;
  std::string dataset_name;

  void validate() const {
    static_memory.validate();
    dynamic_memory.validate();
    combiner.validate();
    require_input(static_memory.classes() == dynamic_memory.classes(),
                  "artifact: static and dynamic memories disagree on the "
                  "class count");
    require_input(static_memory.channels() == combiner.channels &&
                      static_memory.height() == combiner.height &&
                      static_memory.width() == combiner.width,
                  "artifact: static memory geometry does not match the "
                  "combiner");
    require_input(dynamic_memory.height() == combiner.height &&
                      dynamic_memory.width() == combiner.width &&
                      dynamic_memory.frames() == combiner.fd,
                  "artifact: dynamic memory geometry does not match the "
                  "combiner");
  }
};

}  // namespace disentangle
}  // namespace vdst
