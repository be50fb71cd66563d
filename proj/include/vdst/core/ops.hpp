#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "vdst/core/autodiff.hpp"
#include "vdst/core/tensor.hpp"

// Differentiable ops. Every backward is itself written in recorded ops and
// recomputes what it needs from the node's input Vars, so second derivatives
// (grad with create_graph=true, then grad again) are exact — the property the
// gradient- and trajectory-matching losses rely on.

namespace vdst {

namespace detail {

template <class S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  require_input(a.shape() == b.shape(),
                std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                    " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<S> out(a.shape());
  out.array() = a.value().array() + b.value().array();
  return Var<S>::from_op("add", std::move(out), {a, b},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{g, g};
                         });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<S> out(a.shape());
  out.array() = a.value().array() - b.value().array();
  return Var<S>::from_op("sub", std::move(out), {a, b},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{g, neg(g)};
                         });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<S> out(a.shape());
  out.array() = a.value().array() * b.value().array();
  return Var<S>::from_op("mul", std::move(out), {a, b},
                         [a, b](const Var<S>& g) {
                           return std::vector<Var<S>>{mul(g, b), mul(g, a)};
                         });
}

template <class S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  detail::check_same_shape(a, b, "div");
  Tensor<S> out(a.shape());
  out.array() = a.value().array() / b.value().array();
  return Var<S>::from_op("div", std::move(out), {a, b}, [a, b](const Var<S>& g) {
    Var<S> ga = div(g, b);
    return std::vector<Var<S>>{ga, neg(mul(ga, div(a, b)))};
  });
}

template <class S>
Var<S> neg(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = -a.value().array();
  return Var<S>::from_op("neg", std::move(out), {a},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{neg(g)};
                         });
}

template <class S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array() + c;
  return Var<S>::from_op("add_scalar", std::move(out), {a},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{g};
                         });
}

template <class S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array() * c;
  return Var<S>::from_op("mul_scalar", std::move(out), {a},
                         [c](const Var<S>& g) {
                           return std::vector<Var<S>>{mul_scalar(g, c)};
                         });
}

template <class S>
Var<S> reciprocal(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().inverse();
  return Var<S>::from_op(
      "reciprocal", std::move(out), {a}, [a](const Var<S>& g) {
        // d(1/x) = -1/x^2
        Var<S> r = reciprocal(a);
        return std::vector<Var<S>>{neg(mul(g, mul(r, r)))};
      });
}

template <class S>
Var<S> sqrt(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().sqrt();
  return Var<S>::from_op("sqrt", std::move(out), {a}, [a](const Var<S>& g) {
    Var<S> r = sqrt(a);
    return std::vector<Var<S>>{mul_scalar(mul(g, reciprocal(r)), S(0.5))};
  });
}

template <class S>
Var<S> exp(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().exp();
  return Var<S>::from_op("exp", std::move(out), {a}, [a](const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, exp(a))};
  });
}

template <class S>
Var<S> log(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().log();
  return Var<S>::from_op("log", std::move(out), {a}, [a](const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, reciprocal(a))};
  });
}

template <class S>
Var<S> tanh(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().tanh();
  return Var<S>::from_op("tanh", std::move(out), {a}, [a](const Var<S>& g) {
    Var<S> t = tanh(a);
    Var<S> one_minus_t2 = add_scalar(neg(mul(t, t)), S(1));
    return std::vector<Var<S>>{mul(g, one_minus_t2)};
  });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = S(1) / (S(1) + (-a.value().array()).exp());
  return Var<S>::from_op("sigmoid", std::move(out), {a}, [a](const Var<S>& g) {
    Var<S> s = sigmoid(a);
    Var<S> one_minus_s = add_scalar(neg(s), S(1));
    return std::vector<Var<S>>{mul(g, mul(s, one_minus_s))};
  });
}

// ReLU: the mask is a constant of the backward (second derivative is zero
// almost everywhere), so it is materialized from the input value.
template <class S>
Var<S> relu(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().max(S(0));
  return Var<S>::from_op("relu", std::move(out), {a}, [a](const Var<S>& g) {
    Tensor<S> mask(a.shape());
    mask.array() = (a.value().array() > S(0)).template cast<S>();
    return std::vector<Var<S>>{mul(g, Var<S>::constant(std::move(mask)))};
  });
}

// max(x, floor): used to guard divisions; gradient passes where x > floor.
template <class S>
Var<S> clamp_min(const Var<S>& a, S floor) {
  Tensor<S> out(a.shape());
  out.array() = a.value().array().max(floor);
  return Var<S>::from_op(
      "clamp_min", std::move(out), {a}, [a, floor](const Var<S>& g) {
        Tensor<S> mask(a.shape());
        mask.array() = (a.value().array() > floor).template cast<S>();
        return std::vector<Var<S>>{mul(g, Var<S>::constant(std::move(mask)))};
      });
}

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

template <class S>
Var<S> reshape(const Var<S>& a, Shape new_shape) {
  Tensor<S> out = a.value().reshaped(std::move(new_shape));
  Shape prev = a.shape();
  return Var<S>::from_op("reshape", std::move(out), {a},
                         [prev](const Var<S>& g) {
                           return std::vector<Var<S>>{reshape(g, prev)};
                         });
}

// ---------------------------------------------------------------------------
// Matrix ops (rank-2 Vars)
// ---------------------------------------------------------------------------

template <class S>
Var<S> transpose(const Var<S>& a) {
  require_input(a.value().rank() == 2, "transpose: rank-2 tensor required");
  const Index m = a.shape()[0], n = a.shape()[1];
  Tensor<S> out({n, m});
  out.matrix() = a.value().matrix().transpose();
  return Var<S>::from_op("transpose", std::move(out), {a},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{transpose(g)};
                         });
}

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  require_input(a.value().rank() == 2 && b.value().rank() == 2,
                "matmul: rank-2 tensors required");
  const Index m = a.shape()[0], k = a.shape()[1];
  const Index k2 = b.shape()[0], n = b.shape()[1];
  require_input(k == k2, "matmul: inner dimensions differ: " +
                             shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor<S> out({m, n});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  return Var<S>::from_op("matmul", std::move(out), {a, b},
                         [a, b](const Var<S>& g) {
                           return std::vector<Var<S>>{
                               matmul(g, transpose(b)),
                               matmul(transpose(a), g)};
                         });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasts (mutually transposed pairs)
// ---------------------------------------------------------------------------

template <class S>
Var<S> broadcast_full(const Var<S>& a, const Shape& shape);

// Sum of all elements -> [1].
template <class S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> out({1});
  out[0] = a.value().array().sum();
  Shape in_shape = a.shape();
  return Var<S>::from_op("sum", std::move(out), {a},
                         [in_shape](const Var<S>& g) {
                           return std::vector<Var<S>>{
                               broadcast_full(g, in_shape)};
                         });
}

// [1] -> any shape, replicating the single element.
template <class S>
Var<S> broadcast_full(const Var<S>& a, const Shape& shape) {
  require_input(a.size() == 1, "broadcast_full: source must have one element");
  Tensor<S> out(shape);
  out.array() = a.value()[0];
  return Var<S>::from_op("broadcast_full", std::move(out), {a},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{sum(g)};
                         });
}

template <class S>
Var<S> row_broadcast(const Var<S>& v, Index n);

// [m,n] -> [m], summing each row.
template <class S>
Var<S> row_sum(const Var<S>& a) {
  require_input(a.value().rank() == 2, "row_sum: rank-2 tensor required");
  const Index m = a.shape()[0], n = a.shape()[1];
  Tensor<S> out({m});
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(out.data(), m) =
      a.value().matrix().rowwise().sum();
  return Var<S>::from_op("row_sum", std::move(out), {a},
                         [n](const Var<S>& g) {
                           return std::vector<Var<S>>{row_broadcast(g, n)};
                         });
}

// [m] -> [m,n], replicating along columns.
template <class S>
Var<S> row_broadcast(const Var<S>& v, Index n) {
  require_input(v.value().rank() == 1, "row_broadcast: rank-1 tensor required");
  const Index m = v.shape()[0];
  Tensor<S> out({m, n});
  out.matrix().colwise() =
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(v.value().data(), m);
  return Var<S>::from_op("row_broadcast", std::move(out), {v},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{row_sum(g)};
                         });
}

template <class S>
Var<S> col_broadcast(const Var<S>& v, Index m);

// [m,n] -> [n], summing each column.
template <class S>
Var<S> col_sum(const Var<S>& a) {
  require_input(a.value().rank() == 2, "col_sum: rank-2 tensor required");
  const Index m = a.shape()[0], n = a.shape()[1];
  Tensor<S> out({n});
  Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(out.data(), n) =
      a.value().matrix().colwise().sum();
  return Var<S>::from_op("col_sum", std::move(out), {a},
                         [m](const Var<S>& g) {
                           return std::vector<Var<S>>{col_broadcast(g, m)};
                         });
}

// [n] -> [m,n], replicating along rows.
template <class S>
Var<S> col_broadcast(const Var<S>& v, Index m) {
  require_input(v.value().rank() == 1, "col_broadcast: rank-1 tensor required");
  const Index n = v.shape()[0];
  Tensor<S> out({m, n});
  out.matrix().rowwise() =
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(v.value().data(), n);
  return Var<S>::from_op("col_broadcast", std::move(out), {v},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{col_sum(g)};
                         });
}

template <class S>
Var<S> mean(const Var<S>& a) {
  require_input(a.size() > 0, "mean: empty tensor");
  return mul_scalar(sum(a), S(1) / static_cast<S>(a.size()));
}

template <class S>
Var<S> row_mean(const Var<S>& a) {
  require_input(a.value().rank() == 2 && a.shape()[1] > 0, "row_mean: bad shape");
  return mul_scalar(row_sum(a), S(1) / static_cast<S>(a.shape()[1]));
}

// ---------------------------------------------------------------------------
// Rowwise / colwise combination ([m,n] with [m] or [n])
// ---------------------------------------------------------------------------

namespace detail {
template <class S>
void check_rowwise(const Var<S>& a, const Var<S>& v, const char* op) {
  require_input(a.value().rank() == 2 && v.value().rank() == 1 &&
                    v.shape()[0] == a.shape()[0],
                std::string(op) + ": want [m,n] and [m], got " +
                    shape_str(a.shape()) + " and " + shape_str(v.shape()));
}
}  // namespace detail

template <class S>
Var<S> add_rowwise(const Var<S>& a, const Var<S>& v) {
  detail::check_rowwise(a, v, "add_rowwise");
  const Index m = a.shape()[0];
  Tensor<S> out(a.shape());
  out.matrix() = a.value().matrix();
  out.matrix().colwise() +=
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(v.value().data(), m);
  return Var<S>::from_op("add_rowwise", std::move(out), {a, v},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{g, row_sum(g)};
                         });
}

template <class S>
Var<S> sub_rowwise(const Var<S>& a, const Var<S>& v) {
  detail::check_rowwise(a, v, "sub_rowwise");
  const Index m = a.shape()[0];
  Tensor<S> out(a.shape());
  out.matrix() = a.value().matrix();
  out.matrix().colwise() -=
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(v.value().data(), m);
  return Var<S>::from_op("sub_rowwise", std::move(out), {a, v},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{g, neg(row_sum(g))};
                         });
}

template <class S>
Var<S> mul_rowwise(const Var<S>& a, const Var<S>& v) {
  detail::check_rowwise(a, v, "mul_rowwise");
  const Index m = a.shape()[0];
  Tensor<S> out(a.shape());
  out.matrix() = (a.value().matrix().array().colwise() *
                  Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(
                      v.value().data(), m))
                     .matrix();
  return Var<S>::from_op(
      "mul_rowwise", std::move(out), {a, v}, [a, v](const Var<S>& g) {
        return std::vector<Var<S>>{mul_rowwise(g, v), row_sum(mul(g, a))};
      });
}

// a[m,n] + b[n] broadcast over rows (linear-layer bias).
template <class S>
Var<S> add_bias_cols(const Var<S>& a, const Var<S>& b) {
  require_input(a.value().rank() == 2 && b.value().rank() == 1 &&
                    b.shape()[0] == a.shape()[1],
                "add_bias_cols: want [m,n] and [n], got " +
                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const Index n = a.shape()[1];
  Tensor<S> out(a.shape());
  out.matrix() = a.value().matrix();
  out.matrix().rowwise() +=
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.value().data(), n);
  return Var<S>::from_op("add_bias_cols", std::move(out), {a, b},
                         [](const Var<S>& g) {
                           return std::vector<Var<S>>{g, col_sum(g)};
                         });
}

// ---------------------------------------------------------------------------
// Column blocks
// ---------------------------------------------------------------------------

template <class S>
Var<S> slice_cols(const Var<S>& a, Index from, Index len);

template <class S>
Var<S> concat_cols(const Var<S>& a, const Var<S>& b) {
  require_input(a.value().rank() == 2 && b.value().rank() == 2 &&
                    a.shape()[0] == b.shape()[0],
                "concat_cols: want [m,na],[m,nb], got " + shape_str(a.shape()) +
                    " and " + shape_str(b.shape()));
  const Index m = a.shape()[0], na = a.shape()[1], nb = b.shape()[1];
  Tensor<S> out({m, na + nb});
  out.matrix().leftCols(na) = a.value().matrix();
  out.matrix().rightCols(nb) = b.value().matrix();
  return Var<S>::from_op("concat_cols", std::move(out), {a, b},
                         [na, nb](const Var<S>& g) {
                           return std::vector<Var<S>>{slice_cols(g, Index(0), na),
                                                      slice_cols(g, na, nb)};
                         });
}

template <class S>
Var<S> embed_cols(const Var<S>& a, Index from, Index total);

template <class S>
Var<S> slice_cols(const Var<S>& a, Index from, Index len) {
  require_input(a.value().rank() == 2, "slice_cols: rank-2 tensor required");
  const Index n = a.shape()[1];
  require_input(from >= 0 && len >= 0 && from + len <= n,
                "slice_cols: block out of range");
  Tensor<S> out({a.shape()[0], len});
  out.matrix() = a.value().matrix().middleCols(from, len);
  return Var<S>::from_op("slice_cols", std::move(out), {a},
                         [from, n](const Var<S>& g) {
                           return std::vector<Var<S>>{embed_cols(g, from, n)};
                         });
}

// Place a [m,len] block into a zero [m,total] matrix at column `from`.
template <class S>
Var<S> embed_cols(const Var<S>& a, Index from, Index total) {
  require_input(a.value().rank() == 2, "embed_cols: rank-2 tensor required");
  const Index m = a.shape()[0], len = a.shape()[1];
  require_input(from >= 0 && from + len <= total, "embed_cols: block out of range");
  Tensor<S> out({m, total});
  out.matrix().middleCols(from, len) = a.value().matrix();
  return Var<S>::from_op("embed_cols", std::move(out), {a},
                         [from, len](const Var<S>& g) {
                           return std::vector<Var<S>>{slice_cols(g, from, len)};
                         });
}

// ---------------------------------------------------------------------------
// Row gather / scatter (batch assembly, frame selection)
// ---------------------------------------------------------------------------

template <class S>
Var<S> row_scatter(const Var<S>& a, std::shared_ptr<const std::vector<Index>> idx,
                   Index m);

// out[i, :] = a[idx[i], :]
template <class S>
Var<S> row_gather(const Var<S>& a, std::shared_ptr<const std::vector<Index>> idx) {
  require_input(a.value().rank() == 2, "row_gather: rank-2 tensor required");
  const Index m = a.shape()[0], n = a.shape()[1];
  const Index k = static_cast<Index>(idx->size());
  Tensor<S> out({k, n});
  for (Index i = 0; i < k; ++i) {
    const Index r = (*idx)[static_cast<std::size_t>(i)];
    require_input(r >= 0 && r < m, "row_gather: index out of range");
    out.matrix().row(i) = a.value().matrix().row(r);
  }
  return Var<S>::from_op("row_gather", std::move(out), {a},
                         [idx, m](const Var<S>& g) {
                           return std::vector<Var<S>>{row_scatter(g, idx, m)};
                         });
}

template <class S>
Var<S> row_gather(const Var<S>& a, std::vector<Index> idx) {
  return row_gather(a, std::make_shared<const std::vector<Index>>(std::move(idx)));
}

// out[idx[i], :] += a[i, :]; out has m rows.
template <class S>
Var<S> row_scatter(const Var<S>& a, std::shared_ptr<const std::vector<Index>> idx,
                   Index m) {
  require_input(a.value().rank() == 2, "row_scatter: rank-2 tensor required");
  const Index k = a.shape()[0], n = a.shape()[1];
  require_input(static_cast<Index>(idx->size()) == k,
                "row_scatter: index count mismatch");
  Tensor<S> out({m, n});
  for (Index i = 0; i < k; ++i) {
    const Index r = (*idx)[static_cast<std::size_t>(i)];
    require_input(r >= 0 && r < m, "row_scatter: index out of range");
    out.matrix().row(r) += a.value().matrix().row(i);
  }
  return Var<S>::from_op("row_scatter", std::move(out), {a},
                         [idx](const Var<S>& g) {
                           return std::vector<Var<S>>{row_gather(g, idx)};
                         });
}

// ---------------------------------------------------------------------------
// Strided linear maps (gather/scatter pairs over flat element indices)
// ---------------------------------------------------------------------------

// A partial map F: A -> B between per-item flat index spaces. pullback reads
// through F (entries of -1 read as zero); pushforward is its exact transpose
// (scatter-add). conv im2col, pooling, channel stats, time replication and
// permutes are all instances, so only this one pair of kernels has to be
// right.
struct LinearMap {
  std::shared_ptr<const std::vector<std::int32_t>> a_to_b;  // size = a_item
  Index b_item = 0;

  Index a_item() const { return static_cast<Index>(a_to_b->size()); }
};

template <class S>
Var<S> pushforward(const Var<S>& x, const LinearMap& m, Index batch, Shape out_shape);

// out (A-side) from x (B-side): out[b, a] = x[b, F(a)], zero where F(a) = -1.
template <class S>
Var<S> pullback(const Var<S>& x, const LinearMap& m, Index batch, Shape out_shape) {
  const Index a_item = m.a_item();
  require_input(x.size() == batch * m.b_item,
                "pullback: input size " + std::to_string(x.size()) +
                    " != batch " + std::to_string(batch) + " * item " +
                    std::to_string(m.b_item));
  require_input(shape_numel(out_shape) == batch * a_item,
                "pullback: output shape mismatch");
  Tensor<S> out(out_shape);
  const S* src = x.value().data();
  S* dst = out.data();
  const std::int32_t* map = m.a_to_b->data();
  for (Index b = 0; b < batch; ++b) {
    const S* sb = src + b * m.b_item;
    S* db = dst + b * a_item;
    for (Index a = 0; a < a_item; ++a) {
      const std::int32_t j = map[a];
      db[a] = j < 0 ? S(0) : sb[j];
    }
  }
  Shape in_shape = x.shape();
  return Var<S>::from_op("pullback", std::move(out), {x},
                         [m, batch, in_shape](const Var<S>& g) {
                           return std::vector<Var<S>>{
                               pushforward(g, m, batch, in_shape)};
                         });
}

// out (B-side) from x (A-side): out[b, F(a)] += x[b, a].
template <class S>
Var<S> pushforward(const Var<S>& x, const LinearMap& m, Index batch, Shape out_shape) {
  const Index a_item = m.a_item();
  require_input(x.size() == batch * a_item,
                "pushforward: input size " + std::to_string(x.size()) +
                    " != batch " + std::to_string(batch) + " * item " +
                    std::to_string(a_item));
  require_input(shape_numel(out_shape) == batch * m.b_item,
                "pushforward: output shape mismatch");
  Tensor<S> out(out_shape);
  const S* src = x.value().data();
  S* dst = out.data();
  const std::int32_t* map = m.a_to_b->data();
  for (Index b = 0; b < batch; ++b) {
    const S* sb = src + b * a_item;
    S* db = dst + b * m.b_item;
    for (Index a = 0; a < a_item; ++a) {
      const std::int32_t j = map[a];
      if (j >= 0) db[j] += sb[a];
    }
  }
  Shape in_shape = x.shape();
  return Var<S>::from_op("pushforward", std::move(out), {x},
                         [m, batch, in_shape](const Var<S>& g) {
                           return std::vector<Var<S>>{
                               pullback(g, m, batch, in_shape)};
                         });
}

// Maps are pure functions of their geometry; cache them so conv/pool layers
// build each index table once per distinct shape.
class MapCache {
 public:
  static LinearMap get(const std::string& key,
                       const std::function<LinearMap()>& build) {
    static std::unordered_map<std::string, LinearMap> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    LinearMap m = build();
    cache.emplace(key, m);
    return m;
  }
};

// ---------------------------------------------------------------------------
// Classification helpers
// ---------------------------------------------------------------------------

// picked[i] = logits[i, labels[i]]
template <class S>
Var<S> gather_labels(const Var<S>& logits, const std::vector<int>& labels) {
  require_input(logits.value().rank() == 2, "gather_labels: rank-2 tensor required");
  const Index mrows = logits.shape()[0], n = logits.shape()[1];
  require_input(static_cast<Index>(labels.size()) == mrows,
                "gather_labels: label count mismatch");
  auto idx = std::make_shared<std::vector<std::int32_t>>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require_input(labels[i] >= 0 && labels[i] < n,
                  "gather_labels: label " + std::to_string(labels[i]) +
                      " outside [0," + std::to_string(n) + ")");
    (*idx)[i] = static_cast<std::int32_t>(static_cast<Index>(i) * n + labels[i]);
  }
  LinearMap m{idx, mrows * n};
  return pullback(reshape(logits, {mrows * n}), m, 1, {mrows});
}

// Mean softmax cross-entropy over rows, numerically stabilized by a
// detached per-row max shift.
template <class S>
Var<S> cross_entropy_mean(const Var<S>& logits, const std::vector<int>& labels) {
  require_input(logits.value().rank() == 2, "cross_entropy_mean: rank-2 required");
  const Index mrows = logits.shape()[0];
  require_input(mrows > 0, "cross_entropy_mean: empty batch");
  Tensor<S> shift({mrows});
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(shift.data(), mrows) =
      logits.value().matrix().rowwise().maxCoeff();
  Var<S> z = sub_rowwise(logits, Var<S>::constant(std::move(shift)));
  Var<S> lse = log(row_sum(exp(z)));                 // [m]
  Var<S> picked = gather_labels(z, labels);          // [m]
  return mul_scalar(sum(sub(lse, picked)), S(1) / static_cast<S>(mrows));
}

// Row argmax (first maximum wins). Plain tensor helper, no gradient.
template <class S>
std::vector<int> argmax_rows(const Tensor<S>& t) {
  require_input(t.rank() == 2, "argmax_rows: rank-2 tensor required");
  const Index m = t.shape()[0], n = t.shape()[1];
  require_input(n > 0, "argmax_rows: empty rows");
  std::vector<int> out(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const S* row = t.data() + i * n;
    int best = 0;
    for (Index j = 1; j < n; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// Composite conveniences.
template <class S>
Var<S> square(const Var<S>& a) {
  return mul(a, a);
}

template <class S>
Var<S> sum_squares(const Var<S>& a) {
  return sum(square(a));
}

// Sum of squared differences between two same-shape Vars.
template <class S>
Var<S> squared_distance(const Var<S>& a, const Var<S>& b) {
  return sum_squares(sub(a, b));
}

}  // namespace vdst
