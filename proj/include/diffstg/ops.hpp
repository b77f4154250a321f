#pragma once

// Differentiable primitives over Tensor<T>. Every primitive checks its shape
// rule, computes the output, and, when a tape is active and an input requires
// gradients, records a backward rule onto that tape.
//
// Broadcasting is never implicit: operands of elementwise primitives must
// have identical shapes; use broadcast_to() to expand explicitly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diffstg/tensor.hpp"

namespace diffstg {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
Tape<T>* recording_tape(std::span<const Tensor<T>> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>& t : inputs) {
    if (t.requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
void accumulate(TensorNode<T>& dst, std::span<const T> src, T alpha = T{1}) {
  auto& g = dst.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * src[i];
}

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Flat source offset for every output position of a strided view:
// out[o] = in[sum_a idx_a(o) * strides[a]].
inline std::vector<std::size_t> gather_index(const Shape& out_shape, const std::vector<std::size_t>& strides) {
  std::vector<std::size_t> index(numel(out_shape));
  if (index.empty()) return index;
  const std::size_t rank = out_shape.size();
  const std::size_t inner = out_shape[rank - 1], inner_stride = strides[rank - 1];
  std::vector<std::size_t> counter(rank, 0);
  std::size_t base = 0, o = 0;
  for (std::size_t r = 0, outer = index.size() / inner; r < outer; ++r) {
    for (std::size_t i = 0; i < inner; ++i) index[o++] = base + i * inner_stride;
    for (std::size_t a = rank - 1; a-- > 0;) {
      base += strides[a];
      if (++counter[a] < out_shape[a]) break;
      base -= strides[a] * out_shape[a];
      counter[a] = 0;
    }
  }
  return index;
}

inline void check_axis(std::string_view op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_string(shape));
  }
}

template <typename T>
Tensor<T> unary_map(std::string_view op, const Tensor<T>& x, auto&& fwd, auto&& deriv) {
  std::vector<T> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  Tensor<T> y(x.shape(), std::move(out));
  if (auto* tape = recording_tape({&x})) {
    y.set_requires_grad();
    tape->record(op, y.node(), [xn = x.node(), yn = y.node().get(), deriv] {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += yn->grad[i] * deriv(xn->value[i], yn->value[i]);
      }
    });
  }
  return y;
}

template <typename T>
void check_same(std::string_view op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw_shape_error(op, "shape mismatch", a.shape(), b.shape());
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (auto* tape = detail::recording_tape({&a, &b})) {
    y.set_requires_grad();
    tape->record("add", y.node(), [an = a.node(), bn = b.node(), yn = y.node().get()] {
      if (an->requires_grad) detail::accumulate<T>(*an, yn->grad);
      if (bn->requires_grad) detail::accumulate<T>(*bn, yn->grad);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (auto* tape = detail::recording_tape({&a, &b})) {
    y.set_requires_grad();
    tape->record("sub", y.node(), [an = a.node(), bn = b.node(), yn = y.node().get()] {
      if (an->requires_grad) detail::accumulate<T>(*an, yn->grad);
      if (bn->requires_grad) detail::accumulate<T>(*bn, yn->grad, T{-1});
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor<T> y(a.shape(), std::move(out));
  if (auto* tape = detail::recording_tape({&a, &b})) {
    y.set_requires_grad();
    tape->record("mul", y.node(), [an = a.node(), bn = b.node(), yn = y.node().get()] {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * an->value[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary_map<T>(
      "scale", x, [factor](T v) { return factor * v; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_map<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T s) { return s * (T{1} - s); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_map<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

/// [m,k] x [k,n] -> [m,n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw_shape_error("matmul", "incompatible operands", a.shape(), b.shape());
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  detail::MutMap<T>(out.data(), m, n).noalias() =
      detail::ConstMap<T>(a.data().data(), m, k) * detail::ConstMap<T>(b.data().data(), k, n);
  Tensor<T> y(Shape{a.dim(0), b.dim(1)}, std::move(out));
  if (auto* tape = detail::recording_tape({&a, &b})) {
    y.set_requires_grad();
    tape->record("matmul", y.node(), [an = a.node(), bn = b.node(), yn = y.node().get(), m, k, n] {
      detail::ConstMap<T> dy(yn->grad.data(), m, n);
      if (an->requires_grad) {
        detail::MutMap<T>(an->grad_buffer().data(), m, k).noalias() +=
            dy * detail::ConstMap<T>(bn->value.data(), k, n).transpose();
      }
      if (bn->requires_grad) {
        detail::MutMap<T>(bn->grad_buffer().data(), k, n).noalias() +=
            detail::ConstMap<T>(an->value.data(), m, k).transpose() * dy;
      }
    });
  }
  return y;
}

/// Causal 1-D convolution along the last axis.
///
/// x: [B, C_in, R, L] where R is a batch of independent rows (graph nodes),
/// w: [C_out, C_in, K]. The input is left-padded with `left_pad` zeros, so the
/// output length is L + left_pad - K + 1; left_pad = K - 1 keeps the length
/// and makes output t depend only on inputs at times <= t.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, std::size_t left_pad) {
  if (x.rank() != 4 || w.rank() != 3 || w.dim(1) != x.dim(1)) {
    throw_shape_error("conv1d", "expected x[B,Ci,R,L] and w[Co,Ci,K]", x.shape(), w.shape());
  }
  const std::size_t batch = x.dim(0), cin = x.dim(1), rows = x.dim(2), len = x.dim(3);
  const std::size_t cout = w.dim(0), ksize = w.dim(2);
  if (len + left_pad < ksize) {
    throw_shape_error("conv1d", "kernel longer than padded input", x.shape(), w.shape());
  }
  const std::size_t out_len = len + left_pad - ksize + 1;
  const std::size_t cols = rows * out_len;
  const auto ck = static_cast<Eigen::Index>(cin * ksize);
  const auto co = static_cast<Eigen::Index>(cout);
  const auto ec = static_cast<Eigen::Index>(cols);

  // Column layout: col[(ci*K + k), r*out_len + t] = x[b, ci, r, t + k - left_pad]
  auto im2col = [=](const T* xb, T* col) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t k = 0; k < ksize; ++k) {
        T* dst = col + (ci * ksize + k) * cols;
        for (std::size_t r = 0; r < rows; ++r) {
          const T* src = xb + (ci * rows + r) * len;
          for (std::size_t t = 0; t < out_len; ++t) {
            const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) -
                                     static_cast<std::ptrdiff_t>(left_pad);
            dst[r * out_len + t] = (s >= 0 && static_cast<std::size_t>(s) < len) ? src[s] : T{0};
          }
        }
      }
    }
  };

  std::vector<T> out(batch * cout * cols);
  std::vector<T> col(cin * ksize * cols);
  detail::ConstMap<T> wm(w.data().data(), co, ck);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * cin * rows * len, col.data());
    detail::MutMap<T>(out.data() + b * cout * cols, co, ec).noalias() =
        wm * detail::ConstMap<T>(col.data(), ck, ec);
  }
  Tensor<T> y(Shape{batch, cout, rows, out_len}, std::move(out));
  if (auto* tape = detail::recording_tape({&x, &w})) {
    y.set_requires_grad();
    tape->record("conv1d", y.node(), [=, xn = x.node(), wn = w.node(), yn = y.node().get()] {
      std::vector<T> colb(static_cast<std::size_t>(ck * ec));
      std::vector<T> dcol(xn->requires_grad ? colb.size() : 0);
      detail::ConstMap<T> wmat(wn->value.data(), co, ck);
      for (std::size_t b = 0; b < batch; ++b) {
        detail::ConstMap<T> dy(yn->grad.data() + b * cout * cols, co, ec);
        if (wn->requires_grad) {
          im2col(xn->value.data() + b * cin * rows * len, colb.data());
          detail::MutMap<T>(wn->grad_buffer().data(), co, ck).noalias() +=
              dy * detail::ConstMap<T>(colb.data(), ck, ec).transpose();
        }
        if (xn->requires_grad) {
          detail::MutMap<T>(dcol.data(), ck, ec).noalias() = wmat.transpose() * dy;
          T* dx = xn->grad_buffer().data() + b * cin * rows * len;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t k = 0; k < ksize; ++k) {
              const T* src = dcol.data() + (ci * ksize + k) * cols;
              for (std::size_t r = 0; r < rows; ++r) {
                T* dst = dx + (ci * rows + r) * len;
                for (std::size_t t = 0; t < out_len; ++t) {
                  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) -
                                           static_cast<std::ptrdiff_t>(left_pad);
                  if (s >= 0 && static_cast<std::size_t>(s) < len) dst[s] += src[r * out_len + t];
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) throw_shape_error("reshape", "element count differs", x.shape(), shape);
  Tensor<T> y(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = detail::recording_tape({&x})) {
    y.set_requires_grad();
    tape->record("reshape", y.node(), [xn = x.node(), yn = y.node().get()] {
      detail::accumulate<T>(*xn, yn->grad);
    });
  }
  return y;
}

/// Output axis i is input axis perm[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  std::vector<std::size_t> check(perm);
  std::sort(check.begin(), check.end());
  bool valid = perm.size() == in.size();
  for (std::size_t i = 0; valid && i < check.size(); ++i) valid = check[i] == i;
  if (!valid) throw_shape_error("permute", "invalid permutation", in, Shape(perm.begin(), perm.end()));

  Shape out_shape(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out_shape[i] = in[perm[i]];
  const auto in_strides = detail::strides_of(in);
  std::vector<std::size_t> strides(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) strides[i] = in_strides[perm[i]];
  const std::size_t n = x.size();
  auto source = std::make_shared<std::vector<std::size_t>>(detail::gather_index(out_shape, strides));
  std::vector<T> out(n);
  for (std::size_t o = 0; o < n; ++o) out[o] = x.data()[(*source)[o]];
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (auto* tape = detail::recording_tape({&x})) {
    y.set_requires_grad();
    tape->record("permute", y.node(), [xn = x.node(), yn = y.node().get(), source] {
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < source->size(); ++o) g[(*source)[o]] += yn->grad[o];
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  detail::check_axis("concat", first, axis);
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = first;
    if (a.size() != b.size()) throw_shape_error("concat", "rank mismatch", first, p.shape());
    a[axis] = b[axis] = 0;
    if (a != b) throw_shape_error("concat", "non-concatenated dims differ", first, p.shape());
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * chunk, chunk, out.data() + o * out_row + offset);
    }
    offset += chunk;
  }
  Tensor<T> y(out_shape, std::move(out));
  if (auto* tape = detail::recording_tape<T>(parts)) {
    y.set_requires_grad();
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record("concat", y.node(), [nodes, yn = y.node().get(), outer, inner, out_row, axis] {
      std::size_t off = 0;
      for (const auto& pn : nodes) {
        const std::size_t chunk = pn->shape[axis] * inner;
        if (pn->requires_grad) {
          auto& g = pn->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = yn->grad.data() + o * out_row + off;
            for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
          }
        }
        off += chunk;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  std::vector<Tensor<T>> v(parts);
  return concat<T>(std::span<const Tensor<T>>(v), axis);
}

/// Elements [begin, begin + length) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t length) {
  detail::check_axis("slice", x.shape(), axis);
  if (begin + length > x.dim(axis) || length == 0) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + length) + ") invalid for axis " +
                     std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t in_row = x.dim(axis) * inner, chunk = length * inner, off = begin * inner;
  std::vector<T> out(outer * chunk);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + o * in_row + off, chunk, out.data() + o * chunk);
  }
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (auto* tape = detail::recording_tape({&x})) {
    y.set_requires_grad();
    tape->record("slice", y.node(), [xn = x.node(), yn = y.node().get(), outer, in_row, chunk, off] {
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < chunk; ++i) g[o * in_row + off + i] += yn->grad[o * chunk + i];
      }
    });
  }
  return y;
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis, const std::vector<std::size_t>& sizes) {
  detail::check_axis("split", x.shape(), axis);
  if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != x.dim(axis)) {
    throw_shape_error("split", "sizes do not cover axis", x.shape(), Shape(sizes.begin(), sizes.end()));
  }
  std::vector<Tensor<T>> parts;
  std::size_t begin = 0;
  for (std::size_t s : sizes) {
    parts.push_back(slice(x, axis, begin, s));
    begin += s;
  }
  return parts;
}

/// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  Tensor<T> y = Tensor<T>::scalar(acc);
  if (auto* tape = detail::recording_tape({&x})) {
    y.set_requires_grad();
    tape->record("sum", y.node(), [xn = x.node(), yn = y.node().get()] {
      auto& g = xn->grad_buffer();
      for (auto& v : g) v += yn->grad[0];
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

/// Explicit broadcast: every axis of x must equal the target or be 1.
template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  const Shape& in = x.shape();
  if (in.size() != shape.size()) throw_shape_error("broadcast_to", "rank mismatch", in, shape);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != shape[i] && in[i] != 1) throw_shape_error("broadcast_to", "axis not expandable", in, shape);
  }
  auto strides = detail::strides_of(in);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == 1) strides[i] = 0;
  }
  const std::size_t n = numel(shape);
  auto source = std::make_shared<std::vector<std::size_t>>(detail::gather_index(shape, strides));
  std::vector<T> out(n);
  for (std::size_t o = 0; o < n; ++o) out[o] = x.data()[(*source)[o]];
  Tensor<T> y(shape, std::move(out));
  if (auto* tape = detail::recording_tape({&x})) {
    y.set_requires_grad();
    tape->record("broadcast_to", y.node(), [xn = x.node(), yn = y.node().get(), source] {
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < source->size(); ++o) g[(*source)[o]] += yn->grad[o];
    });
  }
  return y;
}

namespace detail {

// Maps along the last axis: out[..., i] = x[..., index(i)]; the backward
// rule is the matching scatter-add.
template <typename T>
Tensor<T> gather_last(std::string_view op, const Tensor<T>& x, std::size_t out_len, auto&& index) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.size() / len;
  Shape out_shape = x.shape();
  out_shape.back() = out_len;
  std::vector<std::size_t> map(out_len);
  for (std::size_t i = 0; i < out_len; ++i) map[i] = index(i);
  std::vector<T> out(rows * out_len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < out_len; ++i) out[r * out_len + i] = x.data()[r * len + map[i]];
  }
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (auto* tape = recording_tape({&x})) {
    y.set_requires_grad();
    tape->record(op, y.node(), [xn = x.node(), yn = y.node().get(), map, rows, len, out_len] {
      auto& g = xn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < out_len; ++i) g[r * len + map[i]] += yn->grad[r * out_len + i];
      }
    });
  }
  return y;
}

}  // namespace detail

/// Keeps the last element of every group of `stride` steps along the last
/// axis: out[i] = x[i*stride + stride - 1].
template <typename T>
Tensor<T> subsample_time(const Tensor<T>& x, std::size_t stride) {
  if (x.rank() == 0 || stride == 0 || x.shape().back() % stride != 0) {
    throw ShapeError("subsample_time: length of " + shape_string(x.shape()) +
                     " not divisible by stride " + std::to_string(stride));
  }
  return detail::gather_last<T>("subsample_time", x, x.shape().back() / stride,
                                [stride](std::size_t i) { return i * stride + stride - 1; });
}

/// Adjoint of subsample_time: places x[i] at i*stride + stride - 1, zeros elsewhere.
template <typename T>
Tensor<T> upsample_time(const Tensor<T>& x, std::size_t stride) {
  if (x.rank() == 0 || stride == 0) throw ShapeError("upsample_time: invalid stride");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.size() / len;
  Shape out_shape = x.shape();
  out_shape.back() = len * stride;
  std::vector<T> out(rows * len * stride, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < len; ++i) out[(r * len + i) * stride + stride - 1] = x.data()[r * len + i];
  }
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (auto* tape = detail::recording_tape({&x})) {
    y.set_requires_grad();
    tape->record("upsample_time", y.node(), [xn = x.node(), yn = y.node().get(), stride] {
      auto& g = xn->grad_buffer();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += yn->grad[j * stride + stride - 1];
    });
  }
  return y;
}

/// Nearest-neighbour upsampling along the last axis: out[i] = x[i / factor].
template <typename T>
Tensor<T> repeat_time(const Tensor<T>& x, std::size_t factor) {
  if (x.rank() == 0 || factor == 0) throw ShapeError("repeat_time: invalid factor");
  return detail::gather_last<T>("repeat_time", x, x.shape().back() * factor,
                                [factor](std::size_t i) { return i / factor; });
}

}  // namespace diffstg
