#pragma once

// Temporal-compression bookkeeping: a schedule fixes how many synthetic
// frames are stored (n_syn), how many real frames they are matched against
// (n_real), how many contiguous segments the two sequences are cut into (k),
// and how the stored frames are expanded back to clip length l_syn at use
// time. segment_pairs produces the matched (real, synthetic) index segments;
// check_consistency verifies the two structural preconditions — total time
// order across segment pairs, and a uniform flow of time (equal segment
// lengths) — on any pairing, not just ones this library produced.

#include <algorithm>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/core/tensor.hpp"

namespace vdst {
namespace temporal {

enum class Interp { duplicate, linear, parametric };

inline const char* interp_name(Interp m) {
  switch (m) {
    case Interp::duplicate: return "duplicate";
    case Interp::linear: return "linear";
    case Interp::parametric: return "parametric";
  }
  return "?";
}

inline Interp interp_from_name(std::string_view name) {
  if (name == "duplicate") return Interp::duplicate;
  if (name == "linear") return Interp::linear;
  if (name == "parametric") return Interp::parametric;
  throw InvalidConfig("unknown interpolation method '" + std::string(name) +
                      "' (want duplicate, linear, or parametric)");
}

struct CompressionSchedule {
  Index n_syn = 1;   // stored synthetic frames per item
  Index n_real = 1;  // real frames matched per item
  Index k = 1;       // segment count
  Interp interp = Interp::duplicate;
  Index l_syn = 1;   // clip length the synthetic frames expand to

  void validate() const {
    require_config(k >= 1, "schedule: segment count k must be >= 1");
    require_config(n_syn >= k, "schedule: need k <= n_syn, got k=" +
                                   std::to_string(k) + " n_syn=" +
                                   std::to_string(n_syn));
    require_config(n_real >= k, "schedule: need k <= n_real, got k=" +
                                    std::to_string(k) + " n_real=" +
                                    std::to_string(n_real));
    require_config(l_syn >= n_syn,
                   "schedule: stored frames n_syn=" + std::to_string(n_syn) +
                       " exceed expanded length l_syn=" + std::to_string(l_syn));
    require_config(n_syn % k == 0, "schedule: k must divide n_syn");
    require_config(n_real % k == 0, "schedule: k must divide n_real");
    require_config(!(n_syn == 1 && interp == Interp::linear),
                   "schedule: linear interpolation needs n_syn >= 2 "
                   "(duplicate handles single frames)");
  }
};

// One matched pair of frame-index segments; `real` indexes into a real clip,
// `syn` into the stored synthetic frames of one item.
struct SegmentPair {
  std::vector<Index> real;
  std::vector<Index> syn;
};

struct SegmentPairing {
  std::vector<SegmentPair> pairs;
};

// Evenly stratified real indices split into k contiguous segments, paired in
// order with the k contiguous segments of stored synthetic frames.
inline SegmentPairing segment_pairs(const CompressionSchedule& s,
                                    Index real_len) {
  s.validate();
  require_input(real_len >= s.n_real,
                "segment_pairs: clip length " + std::to_string(real_len) +
                    " is shorter than n_real=" + std::to_string(s.n_real));
  std::vector<Index> real_idx(static_cast<std::size_t>(s.n_real));
  for (Index i = 0; i < s.n_real; ++i) real_idx[i] = i * real_len / s.n_real;
  const Index rs = s.n_real / s.k;
  const Index ss = s.n_syn / s.k;
  SegmentPairing out;
  out.pairs.reserve(static_cast<std::size_t>(s.k));
  for (Index g = 0; g < s.k; ++g) {
    SegmentPair p;
    p.real.assign(real_idx.begin() + g * rs, real_idx.begin() + (g + 1) * rs);
    p.syn.resize(static_cast<std::size_t>(ss));
    std::iota(p.syn.begin(), p.syn.end(), g * ss);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

struct Consistency {
  bool ordered = false;  // all segment pairs totally ordered in time
  bool uniform = false;  // equal real lengths and equal synthetic lengths
};

// A pair a precedes b when max(a.real) < min(b.real) and max(a.syn) <
// min(b.syn). Orderedness asks every two pairs to be comparable; that holds
// exactly when sorting by the real maximum yields a chain, which is what we
// verify (the test suite checks this against the all-pairs definition).
inline Consistency check_consistency(const SegmentPairing& pairing) {
  const auto& ps = pairing.pairs;
  require_input(!ps.empty(), "check_consistency: pairing has no segments");
  std::vector<Index> all_real, all_syn;
  for (const auto& p : ps) {
    require_input(!p.real.empty() && !p.syn.empty(),
                  "check_consistency: empty index list");
    for (Index i : p.real) {
      require_input(i >= 0, "check_consistency: negative real index");
      all_real.push_back(i);
    }
    for (Index i : p.syn) {
      require_input(i >= 0, "check_consistency: negative synthetic index");
      all_syn.push_back(i);
    }
  }
  auto has_dup = [](std::vector<Index>& v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) != v.end();
  };
  require_input(!has_dup(all_real),
                "check_consistency: a real index appears in two places");
  require_input(!has_dup(all_syn),
                "check_consistency: a synthetic index appears in two places");

  const std::size_t n = ps.size();
  std::vector<Index> rmin(n), rmax(n), smin(n), smax(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [rlo, rhi] = std::minmax_element(ps[i].real.begin(), ps[i].real.end());
    auto [slo, shi] = std::minmax_element(ps[i].syn.begin(), ps[i].syn.end());
    rmin[i] = *rlo;
    rmax[i] = *rhi;
    smin[i] = *slo;
    smax[i] = *shi;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return rmax[a] < rmax[b]; });
  Consistency c;
  c.ordered = true;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const std::size_t a = order[t], b = order[t + 1];
    c.ordered = c.ordered && rmax[a] < rmin[b] && smax[a] < smin[b];
  }
  c.uniform = true;
  for (const auto& p : ps)
    c.uniform = c.uniform && p.real.size() == ps[0].real.size() &&
                p.syn.size() == ps[0].syn.size();
  return c;
}

}  // namespace temporal
}  // namespace vdst
