#include "timae/ops.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "timae/error.hpp"

namespace timae {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

using detail::accumulate;
using detail::make_result;

std::size_t normalize_axis(int axis, std::size_t rank, const Shape& shape) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape));
  return static_cast<std::size_t>(a);
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

// Describes how the smaller operand repeats over the larger one.
struct Broadcast {
  bool a_is_big = true;
  std::size_t inner = 0;  // numel of the small operand
  std::size_t outer = 1;  // repetitions
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.inner = shape_numel(a);
    return p;
  }
  if (is_suffix(b, a)) {
    p.inner = shape_numel(b);
    p.outer = shape_numel(a) / p.inner;
    return p;
  }
  if (is_suffix(a, b)) {
    p.a_is_big = false;
    p.inner = shape_numel(a);
    p.outer = shape_numel(b) / p.inner;
    return p;
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

// Sums `g` (outer * inner) over the outer repetitions.
template <typename T>
std::vector<T> reduce_outer(const std::vector<T>& g, std::size_t outer, std::size_t inner) {
  std::vector<T> r(inner, T(0));
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = g.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) r[i] += src[i];
  }
  return r;
}

template <typename T>
void swap_axes(const T* src, T* dst, std::size_t outer, std::size_t n0, std::size_t mid,
               std::size_t n1, std::size_t inner) {
  // src laid out [outer, n0, mid, n1, inner] -> dst [outer, n1, mid, n0, inner]
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t x = 0; x < n0; ++x)
      for (std::size_t m = 0; m < mid; ++m)
        for (std::size_t y = 0; y < n1; ++y) {
          const T* s = src + (((o * n0 + x) * mid + m) * n1 + y) * inner;
          T* d = dst + (((o * n1 + y) * mid + m) * n0 + x) * inner;
          std::copy(s, s + inner, d);
        }
}

void check_finite_span(const auto& values, const char* op) {
  for (auto v : values)
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto p = plan_broadcast(a.shape(), b.shape(), "add");
  const auto& big = p.a_is_big ? a : b;
  const auto& small = p.a_is_big ? b : a;
  std::vector<T> out(big.values());
  const auto& sv = small.values();
  for (std::size_t o = 0; o < p.outer; ++o) {
    T* dst = out.data() + o * p.inner;
    for (std::size_t i = 0; i < p.inner; ++i) dst[i] += sv[i];
  }
  return make_result<T>(big.shape(), std::move(out), {a, b},
                        [big, small, p](const std::vector<T>& g) {
                          accumulate<T>(big, g);
                          if (small.requires_grad())
                            accumulate<T>(small, reduce_outer(g, p.outer, p.inner));
                        });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  const auto p = plan_broadcast(a.shape(), b.shape(), "sub");
  const auto& big = p.a_is_big ? a : b;
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(big.numel());
  for (std::size_t o = 0; o < p.outer; ++o)
    for (std::size_t i = 0; i < p.inner; ++i) {
      const std::size_t k = o * p.inner + i;
      out[k] = p.a_is_big ? av[k] - bv[i] : av[i] - bv[k];
    }
  return make_result<T>(big.shape(), std::move(out), {a, b},
                        [a, b, p](const std::vector<T>& g) {
                          std::vector<T> neg(g.size());
                          for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
                          if (p.a_is_big) {
                            accumulate<T>(a, g);
                            if (b.requires_grad())
                              accumulate<T>(b, reduce_outer(neg, p.outer, p.inner));
                          } else {
                            if (a.requires_grad())
                              accumulate<T>(a, reduce_outer(g, p.outer, p.inner));
                            accumulate<T>(b, neg);
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto p = plan_broadcast(a.shape(), b.shape(), "mul");
  const auto& big = p.a_is_big ? a : b;
  const auto& small = p.a_is_big ? b : a;
  const auto& bigv = big.values();
  const auto& sv = small.values();
  std::vector<T> out(big.numel());
  for (std::size_t o = 0; o < p.outer; ++o)
    for (std::size_t i = 0; i < p.inner; ++i) out[o * p.inner + i] = bigv[o * p.inner + i] * sv[i];
  return make_result<T>(
      big.shape(), std::move(out), {a, b}, [big, small, p](const std::vector<T>& g) {
        const auto& bigv = big.values();
        const auto& sv = small.values();
        if (big.requires_grad()) {
          std::vector<T> d(g.size());
          for (std::size_t o = 0; o < p.outer; ++o)
            for (std::size_t i = 0; i < p.inner; ++i) d[o * p.inner + i] = g[o * p.inner + i] * sv[i];
          accumulate<T>(big, d);
        }
        if (small.requires_grad()) {
          std::vector<T> d(p.inner, T(0));
          for (std::size_t o = 0; o < p.outer; ++o)
            for (std::size_t i = 0; i < p.inner; ++i)
              d[i] += g[o * p.inner + i] * bigv[o * p.inner + i];
          accumulate<T>(small, d);
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.values());
  for (auto& v : out) v *= factor;
  return make_result<T>(x.shape(), std::move(out), {x}, [x, factor](const std::vector<T>& g) {
    std::vector<T> d(g);
    for (auto& v : d) v *= factor;
    accumulate<T>(x, d);
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  const auto n = static_cast<Eigen::Index>(x.numel());
  Eigen::Map<const Arr> xa(x.values().data(), n);
  // Keep the cdf for the backward pass.
  auto cdf = std::make_shared<Arr>(T(0.5) * (T(1) + (xa * inv_sqrt2).erf()));
  std::vector<T> out(x.numel());
  Eigen::Map<Arr>(out.data(), n) = xa * *cdf;
  return make_result<T>(x.shape(), std::move(out), {x}, [x, cdf, n](const std::vector<T>& g) {
    constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
    Eigen::Map<const Arr> xa(x.values().data(), n);
    std::vector<T> d(g.size());
    Eigen::Map<Arr>(d.data(), n) =
        Eigen::Map<const Arr>(g.data(), n) *
        (*cdf + xa * inv_sqrt_2pi * (T(-0.5) * xa.square()).exp());
    accumulate<T>(x, d);
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return make_result<T>(x.shape(), std::move(out), {x}, [x](const std::vector<T>& g) {
    const auto& xv = x.values();
    std::vector<T> d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = xv[i] > T(0) ? g[i] : T(0);
    accumulate<T>(x, d);
  });
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation kind) {
  return kind == Activation::gelu ? gelu(x) : relu(x);
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const std::size_t p = a.dim(-2), q = a.dim(-1), q2 = b.dim(-2), r = b.dim(-1);
  if (q != q2)
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));

  if (b.rank() == 2) {
    // Shared right matrix: one GEMM over all leading rows of a.
    const std::size_t rows = a.numel() / q;
    Shape shape = a.shape();
    shape.back() = r;
    std::vector<T> out(rows * r);
    MatMap<T>(out.data(), rows, r).noalias() =
        ConstMatMap<T>(a.values().data(), rows, q) * ConstMatMap<T>(b.values().data(), q, r);
    return make_result<T>(std::move(shape), std::move(out), {a, b},
                          [a, b, rows, q, r](const std::vector<T>& g) {
                            ConstMatMap<T> G(g.data(), rows, r);
                            if (a.requires_grad()) {
                              std::vector<T> da(rows * q);
                              MatMap<T>(da.data(), rows, q).noalias() =
                                  G * ConstMatMap<T>(b.values().data(), q, r).transpose();
                              accumulate<T>(a, da);
                            }
                            if (b.requires_grad()) {
                              std::vector<T> db(q * r);
                              MatMap<T>(db.data(), q, r).noalias() =
                                  ConstMatMap<T>(a.values().data(), rows, q).transpose() * G;
                              accumulate<T>(b, db);
                            }
                          });
  }

  const bool a_shared = a.rank() == 2;
  if (!a_shared) {
    const Shape ab(a.shape().begin(), a.shape().end() - 2);
    const Shape bb(b.shape().begin(), b.shape().end() - 2);
    if (ab != bb)
      throw DimensionError("matmul batch dimensions differ: " + shape_str(a.shape()) + " and " +
                           shape_str(b.shape()));
  }
  const std::size_t batch = b.numel() / (q * r);
  Shape shape(b.shape().begin(), b.shape().end() - 2);
  shape.push_back(p);
  shape.push_back(r);
  std::vector<T> out(batch * p * r);
  for (std::size_t i = 0; i < batch; ++i) {
    const T* ap = a.values().data() + (a_shared ? 0 : i * p * q);
    MatMap<T>(out.data() + i * p * r, p, r).noalias() =
        ConstMatMap<T>(ap, p, q) * ConstMatMap<T>(b.values().data() + i * q * r, q, r);
  }
  return make_result<T>(
      std::move(shape), std::move(out), {a, b},
      [a, b, batch, p, q, r, a_shared](const std::vector<T>& g) {
        std::vector<T> da(a.requires_grad() ? a.numel() : 0, T(0));
        std::vector<T> db(b.requires_grad() ? b.numel() : 0, T(0));
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMatMap<T> G(g.data() + i * p * r, p, r);
          const T* ap = a.values().data() + (a_shared ? 0 : i * p * q);
          if (!da.empty()) {
            MatMap<T> DA(da.data() + (a_shared ? 0 : i * p * q), p, q);
            DA.noalias() += G * ConstMatMap<T>(b.values().data() + i * q * r, q, r).transpose();
          }
          if (!db.empty())
            MatMap<T>(db.data() + i * q * r, q, r).noalias() =
                ConstMatMap<T>(ap, p, q).transpose() * G;
        }
        if (!da.empty()) accumulate<T>(a, da);
        if (!db.empty()) accumulate<T>(b, db);
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
  std::size_t i = normalize_axis(axis0, x.rank(), x.shape());
  std::size_t j = normalize_axis(axis1, x.rank(), x.shape());
  if (i == j) return x;
  if (i > j) std::swap(i, j);
  const auto& s = x.shape();
  const std::size_t outer = prod(s, 0, i), n0 = s[i], mid = prod(s, i + 1, j), n1 = s[j],
                    inner = prod(s, j + 1, s.size());
  Shape shape = s;
  std::swap(shape[i], shape[j]);
  std::vector<T> out(x.numel());
  swap_axes(x.values().data(), out.data(), outer, n0, mid, n1, inner);
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [x, outer, n0, mid, n1, inner](const std::vector<T>& g) {
                          std::vector<T> d(g.size());
                          swap_axes(g.data(), d.data(), outer, n1, mid, n0, inner);
                          accumulate<T>(x, d);
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  return make_result<T>(std::move(shape), x.values(), {x},
                        [x](const std::vector<T>& g) { accumulate<T>(x, g); });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  const std::size_t ax = normalize_axis(axis, first.size(), first);
  const std::size_t outer = prod(first, 0, ax), inner = prod(first, ax + 1, first.size());
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& t : parts) {
    Shape a = t.shape(), b = first;
    if (a.size() != b.size())
      throw DimensionError("concat rank mismatch: " + shape_str(a) + " vs " + shape_str(b));
    a[ax] = b[ax] = 0;
    if (a != b)
      throw DimensionError("concat shape mismatch: " + shape_str(t.shape()) + " vs " +
                           shape_str(first));
    lens.push_back(t.shape()[ax]);
    total += t.shape()[ax];
  }
  Shape shape = first;
  shape[ax] = total;
  std::vector<T> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].values();
    const std::size_t chunk = lens[k] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(v.begin() + o * chunk, v.begin() + (o + 1) * chunk,
                out.begin() + o * total * inner + offset);
    offset += chunk;
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return make_result<T>(std::move(shape), std::move(out), inputs,
                        [inputs, lens, outer, inner, total](const std::vector<T>& g) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < inputs.size(); ++k) {
                            const std::size_t chunk = lens[k] * inner;
                            if (inputs[k].requires_grad()) {
                              std::vector<T> d(outer * chunk);
                              for (std::size_t o = 0; o < outer; ++o)
                                std::copy(g.begin() + o * total * inner + offset,
                                          g.begin() + o * total * inner + offset + chunk,
                                          d.begin() + o * chunk);
                              accumulate<T>(inputs[k], d);
                            }
                            offset += chunk;
                          }
                        });
}

// ---------------------------------------------------------------------------
// Row selection

RowIndex RowIndex::shared(std::vector<std::size_t> rows) {
  RowIndex r;
  r.batch = 1;
  r.count = rows.size();
  r.rows = std::move(rows);
  return r;
}

RowIndex RowIndex::per_batch(const std::vector<std::vector<std::size_t>>& rows) {
  RowIndex r;
  r.batch = rows.size();
  r.count = rows.empty() ? 0 : rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != r.count) throw DimensionError("per-batch row lists differ in length");
    r.rows.insert(r.rows.end(), row.begin(), row.end());
  }
  return r;
}

namespace {

struct RowPlan {
  std::size_t batch;    // output batch
  std::size_t x_batch;  // source batch (1 = shared source)
  bool batched_out;
};

RowPlan plan_rows(const Shape& xs, const RowIndex& index, const char* op) {
  if (xs.size() != 2 && xs.size() != 3)
    throw DimensionError(std::string(op) + " expects rank 2 or 3, got " + shape_str(xs));
  const std::size_t x_batch = xs.size() == 3 ? xs[0] : 1;
  std::size_t batch = std::max(x_batch, index.batch);
  if ((x_batch != 1 && x_batch != batch) || (index.batch != 1 && index.batch != batch))
    throw DimensionError(std::string(op) + ": batch of " + shape_str(xs) +
                         " incompatible with index batch " + std::to_string(index.batch));
  if (index.count == 0) throw IndexError(std::string(op) + " with an empty index");
  return {batch, x_batch, xs.size() == 3 || index.batch > 1};
}

}  // namespace

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const RowIndex& index) {
  const auto plan = plan_rows(x.shape(), index, "gather_rows");
  const std::size_t len = x.dim(-2), d = x.dim(-1), n = index.count;
  for (auto r : index.rows)
    if (r >= len)
      throw IndexError("gather_rows index " + std::to_string(r) + " out of range for " +
                       std::to_string(len) + " rows");
  std::vector<T> out(plan.batch * n * d);
  const auto& xv = x.values();
  for (std::size_t b = 0; b < plan.batch; ++b) {
    const std::size_t xb = plan.x_batch == 1 ? 0 : b;
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = xv.data() + (xb * len + index.at(b, i)) * d;
      std::copy(src, src + d, out.data() + (b * n + i) * d);
    }
  }
  Shape shape = plan.batched_out ? Shape{plan.batch, n, d} : Shape{n, d};
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [x, index, plan, len, d, n](const std::vector<T>& g) {
                          std::vector<T> dx(x.numel(), T(0));
                          for (std::size_t b = 0; b < plan.batch; ++b) {
                            const std::size_t xb = plan.x_batch == 1 ? 0 : b;
                            for (std::size_t i = 0; i < n; ++i) {
                              T* dst = dx.data() + (xb * len + index.at(b, i)) * d;
                              const T* src = g.data() + (b * n + i) * d;
                              for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                            }
                          }
                          accumulate<T>(x, dx);
                        });
}

template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& x, const RowIndex& index, std::size_t length) {
  const auto plan = plan_rows(x.shape(), index, "scatter_rows");
  const std::size_t n = x.dim(-2), d = x.dim(-1);
  if (n != index.count)
    throw DimensionError("scatter_rows: " + std::to_string(n) + " rows but index holds " +
                         std::to_string(index.count));
  for (auto r : index.rows)
    if (r >= length)
      throw IndexError("scatter_rows index " + std::to_string(r) + " out of range for length " +
                       std::to_string(length));
  std::vector<T> out(plan.batch * length * d, T(0));
  const auto& xv = x.values();
  for (std::size_t b = 0; b < plan.batch; ++b) {
    const std::size_t xb = plan.x_batch == 1 ? 0 : b;
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = xv.data() + (xb * n + i) * d;
      T* dst = out.data() + (b * length + index.at(b, i)) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  }
  Shape shape = plan.batched_out ? Shape{plan.batch, length, d} : Shape{length, d};
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [x, index, plan, length, d, n](const std::vector<T>& g) {
                          std::vector<T> dx(x.numel(), T(0));
                          for (std::size_t b = 0; b < plan.batch; ++b) {
                            const std::size_t xb = plan.x_batch == 1 ? 0 : b;
                            for (std::size_t i = 0; i < n; ++i) {
                              const T* src = g.data() + (b * length + index.at(b, i)) * d;
                              T* dst = dx.data() + (xb * n + i) * d;
                              for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                            }
                          }
                          accumulate<T>(x, dx);
                        });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x) {
  double s = 0.0;
  for (auto v : x.values()) s += v;
  return make_result<T>({1}, {static_cast<T>(s)}, {x}, [x](const std::vector<T>& g) {
    accumulate<T>(x, std::vector<T>(x.numel(), g[0]));
  });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (auto v : x.values()) s += v;
  return make_result<T>({1}, {static_cast<T>(s / n)}, {x}, [x, n](const std::vector<T>& g) {
    accumulate<T>(x, std::vector<T>(x.numel(), static_cast<T>(g[0] / n)));
  });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), x.shape());
  const auto& s = x.shape();
  const std::size_t outer = prod(s, 0, ax), n = s[ax], inner = prod(s, ax + 1, s.size());
  std::vector<T> out(outer * inner, T(0));
  const auto& xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * n + k) * inner + i];
  for (auto& v : out) v /= static_cast<T>(n);
  Shape shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != ax) shape.push_back(s[i]);
  if (shape.empty()) shape.push_back(1);
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [x, outer, n, inner](const std::vector<T>& g) {
                          std::vector<T> d(x.numel());
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t k = 0; k < n; ++k)
                              for (std::size_t i = 0; i < inner; ++i)
                                d[(o * n + k) * inner + i] = g[o * inner + i] / static_cast<T>(n);
                          accumulate<T>(x, d);
                        });
}

// ---------------------------------------------------------------------------
// Normalizations

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  check_finite_span(x.values(), "softmax");
  const std::size_t ax = normalize_axis(axis, x.rank(), x.shape());
  const auto& s = x.shape();
  const std::size_t outer = prod(s, 0, ax), n = s[ax], inner = prod(s, ax + 1, s.size());
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      T mx = xv[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      T sum = T(0);
      for (std::size_t k = 0; k < n; ++k) {
        const T e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] *= inv;
    }
  auto result = make_result<T>(s, std::move(out), {x}, nullptr);
  if (result.requires_grad()) {
    // The closure reads the output values; hold them by weak reference to
    // avoid a node -> closure -> node cycle.
    std::weak_ptr<detail::Node<T>> self = result.node();
    result.node()->backward_fn = [x, self, outer, n, inner](const std::vector<T>& g) {
      const auto& y = self.lock()->data;
      std::vector<T> d(g.size());
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          T dot = T(0);
          for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < n; ++k)
            d[base + k * inner] = y[base + k * inner] * (g[base + k * inner] - dot);
        }
      accumulate<T>(x, d);
    };
  }
  return result;
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads) {
  if (q.rank() != 3 || k.shape() != q.shape() || v.shape() != q.shape())
    throw DimensionError("attention expects equal [B, N, d] operands, got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  const std::size_t B = q.dim(0), N = q.dim(1), d = q.dim(2);
  if (heads == 0 || d % heads != 0)
    throw DimensionError("attention width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  check_finite_span(q.values(), "attention");
  check_finite_span(k.values(), "attention");
  const std::size_t dh = d / heads;
  const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  using Strided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
  using MutStrided = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
  const auto n = static_cast<Eigen::Index>(N), w = static_cast<Eigen::Index>(dh);

  // Attention weights for every (batch, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<T>>(B * heads * N * N);
  std::vector<T> out(B * N * d);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = b * N * d + h * dh;
      Strided Q(q.values().data() + off, n, w, stride);
      Strided K(k.values().data() + off, n, w, stride);
      Strided V(v.values().data() + off, n, w, stride);
      MatMap<T> P(probs->data() + (b * heads + h) * N * N, n, n);
      P.noalias() = (Q * K.transpose()) * sc;
      for (Eigen::Index r = 0; r < n; ++r) {
        auto row = P.row(r).array();
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
      }
      MutStrided(out.data() + off, n, w, stride).noalias() = P * V;
    }

  return make_result<T>(
      q.shape(), std::move(out), {q, k, v},
      [q, k, v, probs, B, N, d, heads, dh, sc](const std::vector<T>& g) {
        const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(d));
        const auto n = static_cast<Eigen::Index>(N), w = static_cast<Eigen::Index>(dh);
        std::vector<T> dq(B * N * d, T(0)), dk(B * N * d, T(0)), dv(B * N * d, T(0));
        RowMat<T> dp(n, n);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = b * N * d + h * dh;
            Strided Q(q.values().data() + off, n, w, stride);
            Strided K(k.values().data() + off, n, w, stride);
            Strided V(v.values().data() + off, n, w, stride);
            Strided G(g.data() + off, n, w, stride);
            ConstMatMap<T> P(probs->data() + (b * heads + h) * N * N, n, n);
            MutStrided(dv.data() + off, n, w, stride).noalias() = P.transpose() * G;
            dp.noalias() = G * V.transpose();
            // Softmax Jacobian row by row: dS = P * (dP - <dP, P>).
            for (Eigen::Index r = 0; r < n; ++r) {
              const T dot = (dp.row(r).array() * P.row(r).array()).sum();
              dp.row(r).array() = P.row(r).array() * (dp.row(r).array() - dot) * sc;
            }
            MutStrided(dq.data() + off, n, w, stride).noalias() = dp * K;
            MutStrided(dk.data() + off, n, w, stride).noalias() = dp.transpose() * Q;
          }
        accumulate<T>(q, dq);
        accumulate<T>(k, dk);
        accumulate<T>(v, dv);
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  if (eps <= 0) throw ParameterError("layer_norm eps must be positive");
  const std::size_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw DimensionError("layer_norm affine shapes " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
  const std::size_t rows = x.numel() / d;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> xhat(xv.size()), rstd(rows), out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += src[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (src[c] - mean) * (src[c] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    rstd[r] = static_cast<T>(inv);
    for (std::size_t c = 0; c < d; ++c) {
      const T h = static_cast<T>((src[c] - mean) * inv);
      xhat[r * d + c] = h;
      out[r * d + c] = gv[c] * h + bv[c];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows,
       d](const std::vector<T>& g) {
        const auto& gv = gamma.values();
        std::vector<T> dgamma(d, T(0)), dbeta(d, T(0));
        std::vector<T> dx(x.requires_grad() ? x.numel() : 0);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g.data() + r * d;
          const T* hr = xhat.data() + r * d;
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            dgamma[c] += gr[c] * hr[c];
            dbeta[c] += gr[c];
            const double dh = static_cast<double>(gr[c]) * gv[c];
            mean_dh += dh;
            mean_dh_h += dh * hr[c];
          }
          if (dx.empty()) continue;
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          for (std::size_t c = 0; c < d; ++c) {
            const double dh = static_cast<double>(gr[c]) * gv[c];
            dx[r * d + c] = static_cast<T>(rstd[r] * (dh - mean_dh - hr[c] * mean_dh_h));
          }
        }
        if (!dx.empty()) accumulate<T>(x, dx);
        accumulate<T>(gamma, dgamma);
        accumulate<T>(beta, dbeta);
      });
}

// ---------------------------------------------------------------------------
// Convolution and dropout

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  if (x.rank() != 3 || kernel.rank() != 3)
    throw DimensionError("conv1d expects x[B,L,m] and kernel[k,m,d], got " + shape_str(x.shape()) +
                         " and " + shape_str(kernel.shape()));
  const std::size_t B = x.dim(0), L = x.dim(1), m = x.dim(2);
  const std::size_t k = kernel.dim(0), d = kernel.dim(2);
  if (kernel.dim(1) != m)
    throw DimensionError("conv1d channel mismatch: input " + shape_str(x.shape()) + ", kernel " +
                         shape_str(kernel.shape()));
  if (bias.shape() != Shape{d})
    throw DimensionError("conv1d bias " + shape_str(bias.shape()) + " does not match kernel " +
                         shape_str(kernel.shape()));
  if (stride == 0) throw ParameterError("conv1d stride must be positive");
  if (L + 2 * padding < k || (L + 2 * padding - k) % stride != 0)
    throw DimensionError("conv1d output length (" + std::to_string(L) + " + 2*" +
                         std::to_string(padding) + " - " + std::to_string(k) + ")/" +
                         std::to_string(stride) + " + 1 is not an integer >= 1");
  const std::size_t Lout = (L + 2 * padding - k) / stride + 1;
  const std::size_t km = k * m;
  const auto& xv = x.values();

  std::vector<T> cols(B * Lout * km, T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < Lout; ++t)
      for (std::size_t j = 0; j < k; ++j) {
        const long src = static_cast<long>(t * stride + j) - static_cast<long>(padding);
        if (src < 0 || src >= static_cast<long>(L)) continue;
        std::copy_n(xv.data() + (b * L + static_cast<std::size_t>(src)) * m, m,
                    cols.data() + (b * Lout + t) * km + j * m);
      }
  std::vector<T> out(B * Lout * d);
  MatMap<T> O(out.data(), B * Lout, d);
  O.noalias() = ConstMatMap<T>(cols.data(), B * Lout, km) *
                ConstMatMap<T>(kernel.values().data(), km, d);
  const auto& bv = bias.values();
  for (std::size_t r = 0; r < B * Lout; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bv[c];

  return make_result<T>(
      {B, Lout, d}, std::move(out), {x, kernel, bias},
      [x, kernel, bias, cols = std::move(cols), B, L, m, k, d, Lout, km, stride,
       padding](const std::vector<T>& g) {
        ConstMatMap<T> G(g.data(), B * Lout, d);
        if (kernel.requires_grad()) {
          std::vector<T> dk(km * d);
          MatMap<T>(dk.data(), km, d).noalias() =
              ConstMatMap<T>(cols.data(), B * Lout, km).transpose() * G;
          accumulate<T>(kernel, dk);
        }
        if (bias.requires_grad()) accumulate<T>(bias, reduce_outer(g, B * Lout, d));
        if (x.requires_grad()) {
          std::vector<T> dcols(B * Lout * km);
          MatMap<T>(dcols.data(), B * Lout, km).noalias() =
              G * ConstMatMap<T>(kernel.values().data(), km, d).transpose();
          std::vector<T> dx(x.numel(), T(0));
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < Lout; ++t)
              for (std::size_t j = 0; j < k; ++j) {
                const long src = static_cast<long>(t * stride + j) - static_cast<long>(padding);
                if (src < 0 || src >= static_cast<long>(L)) continue;
                T* dst = dx.data() + (b * L + static_cast<std::size_t>(src)) * m;
                const T* from = dcols.data() + (b * Lout + t) * km + j * m;
                for (std::size_t c = 0; c < m; ++c) dst[c] += from[c];
              }
          accumulate<T>(x, dx);
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0))
    throw ParameterError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& v : mask) v = rng.uniform() < p ? T(0) : keep_scale;
  std::vector<T> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result<T>(x.shape(), std::move(out), {x},
                        [x, mask = std::move(mask)](const std::vector<T>& g) {
                          std::vector<T> d(g.size());
                          for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * mask[i];
                          accumulate<T>(x, d);
                        });
}

#define TIMAE_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> gelu(const Tensor<T>&);                                                  \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> activate(const Tensor<T>&, Activation);                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> concat(std::span<const Tensor<T>>, int);                                 \
  template Tensor<T> gather_rows(const Tensor<T>&, const RowIndex&);                          \
  template Tensor<T> scatter_rows(const Tensor<T>&, const RowIndex&, std::size_t);            \
  template Tensor<T> reduce_sum(const Tensor<T>&);                                            \
  template Tensor<T> reduce_mean(const Tensor<T>&);                                           \
  template Tensor<T> reduce_mean(const Tensor<T>&, int);                                      \
  template Tensor<T> softmax(const Tensor<T>&, int);                                          \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            std::size_t);                                                     \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);

TIMAE_INSTANTIATE_OPS(float)
TIMAE_INSTANTIATE_OPS(double)

#undef TIMAE_INSTANTIATE_OPS

}  // namespace timae
