#pragma once

#include <span>
#include <vector>

#include "timae/rng.hpp"
#include "timae/tensor.hpp"

namespace timae {

// Binary ops accept equal shapes, or one operand whose shape is a suffix of
// the other's (e.g. a bias [d] against [B, L, d]); the smaller operand is
// repeated over the leading axes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);

enum class Activation { gelu, relu };

/// Exact (erf-based) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> activate(const Tensor<T>& x, Activation kind);

/// a[..., p, q] · b[..., q, r]. Batch axes must match exactly, or one side
/// may be a plain matrix that is shared across the other side's batch.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Swaps two axes (negative axes count from the end).
template <typename T> Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, int axis);

/// Row selection for gather_rows/scatter_rows. Either one index list shared
/// by every batch entry (`batch == 1`) or one list per batch entry; all lists
/// have `count` entries.
struct RowIndex {
  std::size_t batch = 1;
  std::size_t count = 0;
  std::vector<std::size_t> rows;  // batch * count, row-major

  static RowIndex shared(std::vector<std::size_t> rows);
  static RowIndex per_batch(const std::vector<std::vector<std::size_t>>& rows);
  std::size_t at(std::size_t b, std::size_t i) const {
    return rows[(batch == 1 ? 0 : b) * count + i];
  }
};

/// x[L, d] or x[B, L, d] -> [B, count, d] (or [count, d] for a rank-2 x and a
/// shared index). Gradients flow only to the selected rows.
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, const RowIndex& index);

/// Writes x[B, count, d] (or [count, d]) into a zero tensor [B, length, d]
/// (or [length, d]) at the indexed rows. Repeated rows add up.
template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& x, const RowIndex& index, std::size_t length);

template <typename T> Tensor<T> reduce_sum(const Tensor<T>& x);
template <typename T> Tensor<T> reduce_mean(const Tensor<T>& x);
/// Mean over one axis; the axis is removed from the shape.
template <typename T> Tensor<T> reduce_mean(const Tensor<T>& x, int axis);

/// Max-subtracted softmax along `axis`. Non-finite input -> NumericError.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

/// Multi-head scaled dot-product attention on q, k, v [B, N, d]. Head h uses
/// columns [h*d/heads, (h+1)*d/heads); the heads are concatenated back into
/// [B, N, d]. Equivalent to softmax(q k^T / sqrt(d/heads)) v per head.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads);

/// Normalizes over the last axis, then applies gamma * x_hat + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

/// Cross-correlation over time: x[B, L, m], kernel[k, m, d], bias[d]
/// -> [B, L', d], L' = (L + 2*padding - k) / stride + 1 with zero padding.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

/// Inverted dropout. Identity when !training or p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng);

}  // namespace timae
