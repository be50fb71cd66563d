#pragma once

#include <Eigen/Core>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <new>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "vdst/core/error.hpp"
#include "vdst/core/rng.hpp"

namespace vdst {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) {
    require_input(d >= 0, "shape dimensions must be non-negative");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Process-wide accounting of live tensor bytes. The high-water mark is what
// the sweep reports as per-iteration peak memory: reset it at the start of an
// iteration, read it at the end.
namespace mem {

inline std::atomic<std::int64_t>& live_counter() {
  static std::atomic<std::int64_t> c{0};
  return c;
}
inline std::atomic<std::int64_t>& peak_counter() {
  static std::atomic<std::int64_t> c{0};
  return c;
}

inline void track(std::int64_t bytes) {
  const std::int64_t now = live_counter().fetch_add(bytes) + bytes;
  auto& peak = peak_counter();
  std::int64_t prev = peak.load();
  while (now > prev && !peak.compare_exchange_weak(prev, now)) {
  }
}
inline void untrack(std::int64_t bytes) { live_counter().fetch_sub(bytes); }

inline std::int64_t live_bytes() { return live_counter().load(); }
inline std::int64_t peak_bytes() { return peak_counter().load(); }
inline void reset_peak() { peak_counter().store(live_counter().load()); }

}  // namespace mem

// 64-byte-aligned storage for tensor buffers. SIMD reductions in Eigen peel
// scalar elements until the first vector-aligned address, so the grouping
// (and therefore the rounding) of a sum depends on where the heap happened
// to place the buffer. Pinning every buffer to the same alignment makes
// identical computations bitwise identical across allocations and runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    if (n == 0) return nullptr;
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t{kAlign}));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    ::operator delete(p, n * sizeof(T), std::align_val_t{kAlign});
  }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
  template <class U>
  bool operator!=(const AlignedAllocator<U>&) const noexcept {
    return false;
  }
};

// Dense N-dimensional array, row-major, owning its storage. Math goes
// through Eigen maps over the flat buffer; shape logic stays here.
template <class S>
class Tensor {
 public:
  using Scalar = S;
  using Storage = std::vector<S, AlignedAllocator<S>>;
  using ArrayMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
  using RowMat =
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<RowMat>;
  using ConstMatMap = Eigen::Map<const RowMat>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), S(0));
    mem::track(tracked_bytes());
  }

  Tensor(Shape shape, const std::vector<S>& values)
      : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    require_input(static_cast<Index>(data_.size()) == shape_numel(shape_),
                  "Tensor: value count " + std::to_string(data_.size()) +
                      " does not match shape " + shape_str(shape_));
    mem::track(tracked_bytes());
  }

  Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_) {
    mem::track(tracked_bytes());
  }

  Tensor(Tensor&& other) noexcept
      : shape_(std::move(other.shape_)), data_(std::move(other.data_)) {
    other.shape_.clear();
    other.data_.clear();
    other.data_.shrink_to_fit();
  }

  Tensor& operator=(const Tensor& other) {
    if (this != &other) {
      mem::untrack(tracked_bytes());
      shape_ = other.shape_;
      data_ = other.data_;
      mem::track(tracked_bytes());
    }
    return *this;
  }

  Tensor& operator=(Tensor&& other) noexcept {
    if (this != &other) {
      mem::untrack(tracked_bytes());
      shape_ = std::move(other.shape_);
      data_ = std::move(other.data_);
      other.shape_.clear();
      other.data_.clear();
      other.data_.shrink_to_fit();
    }
    return *this;
  }

  ~Tensor() { mem::untrack(tracked_bytes()); }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, S value) {
    Tensor t(std::move(shape));
    t.array() = value;
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

  static Tensor uniform(Shape shape, Rng& rng, S lo = S(0), S hi = S(1)) {
    Tensor t(std::move(shape));
    for (S& v : t.data_)
      v = static_cast<S>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return t;
  }

  static Tensor normal(Shape shape, Rng& rng, S mean = S(0), S stddev = S(1)) {
    Tensor t(std::move(shape));
    for (S& v : t.data_)
      v = static_cast<S>(
          rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
    return t;
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const {
    require_input(i >= 0 && i < rank(), "Tensor::dim: axis out of range");
    return shape_[static_cast<std::size_t>(i)];
  }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool defined() const { return !shape_.empty() || !data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const S& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  // Multi-index access (slow path; tests and small loops only).
  S& at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
  const S& at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

  ArrayMap array() { return ArrayMap(data_.data(), size()); }
  ConstArrayMap array() const { return ConstArrayMap(data_.data(), size()); }

  // 2-D view; the product of rows*cols must equal size().
  MatMap matrix(Index rows, Index cols) {
    require_input(rows * cols == size(), "Tensor::matrix: bad view " +
                                             std::to_string(rows) + "x" +
                                             std::to_string(cols) + " of " +
                                             shape_str(shape_));
    return MatMap(data_.data(), rows, cols);
  }
  ConstMatMap matrix(Index rows, Index cols) const {
    require_input(rows * cols == size(), "Tensor::matrix: bad view " +
                                             std::to_string(rows) + "x" +
                                             std::to_string(cols) + " of " +
                                             shape_str(shape_));
    return ConstMatMap(data_.data(), rows, cols);
  }

  // Natural matrix view of a rank-2 tensor.
  MatMap matrix() {
    require_input(rank() == 2, "Tensor::matrix(): tensor is not rank 2");
    return matrix(shape_[0], shape_[1]);
  }
  ConstMatMap matrix() const {
    require_input(rank() == 2, "Tensor::matrix(): tensor is not rank 2");
    return matrix(shape_[0], shape_[1]);
  }

  // Same data, new shape (element count must match). Value semantics.
  Tensor reshaped(Shape new_shape) const {
    require_input(shape_numel(new_shape) == size(),
                  "Tensor::reshaped: cannot view " + shape_str(shape_) +
                      " as " + shape_str(new_shape));
    Tensor out = *this;
    out.shape_ = std::move(new_shape);
    return out;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out{shape_};
    for (Index i = 0; i < size(); ++i)
      out[i] = static_cast<T>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  std::int64_t tracked_bytes() const {
    return static_cast<std::int64_t>(data_.size() * sizeof(S));
  }

  std::size_t offset(std::initializer_list<Index> idx) const {
    require_input(static_cast<Index>(idx.size()) == rank(),
                  "Tensor::at: index rank mismatch");
    Index off = 0;
    std::size_t k = 0;
    for (Index i : idx) {
      require_input(i >= 0 && i < shape_[k], "Tensor::at: index out of range");
      off = off * shape_[k] + i;
      ++k;
    }
    return static_cast<std::size_t>(off);
  }

  Shape shape_;
  Storage data_;
};

}  // namespace vdst
