#pragma once

#include <Eigen/Core>

#include "camels/autograd/tensor.hpp"

// Differentiable primitives. Every backward rule is written in terms of the
// same primitives, so gradients computed while a tape records are themselves
// differentiable.

namespace camels {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor pow_scalar(const Tensor& x, double p);
Tensor sum_to(const Tensor& x, const Shape& target);
Tensor broadcast_to(const Tensor& x, const Shape& target);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor gather_rows(const Tensor& x, std::vector<std::size_t> rows);
Tensor scatter_rows(const Tensor& x, std::vector<std::size_t> rows, std::size_t n_rows);
Tensor pick(const Tensor& x, std::vector<std::size_t> cols);
Tensor scatter_pick(const Tensor& x, std::vector<std::size_t> cols, std::size_t n_cols);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor pad(const Tensor& x, std::size_t axis, std::size_t start, std::size_t total);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  Shape out(std::max(a.size(), b.size()), 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " do not broadcast");
    }
    out[out.size() - 1 - k] = ea == 1 ? eb : ea;
  }
  return out;
}

// Strides of `in` when viewed with the extents of `out` (0 on broadcast axes).
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    std::size_t ii = in.size() - 1 - k;
    std::size_t io = out.size() - 1 - k;
    st[io] = in[ii] == 1 ? 0 : stride;
    stride *= in[ii];
  }
  return st;
}

// Calls f(out_index, a_offset, b_offset) for every element of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t n = shape_numel(out);
  if (n == 0) return;
  if (out.empty()) {
    f(0, 0, 0);
    return;
  }
  const std::size_t nd = out.size();
  const std::size_t inner = out[nd - 1];
  std::vector<std::size_t> idx(nd, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t i = 0; i < n; i += inner) {
    const std::size_t ia = sa[nd - 1], ib = sb[nd - 1];
    for (std::size_t j = 0; j < inner; ++j) f(i + j, oa + j * ia, ob + j * ib);
    for (std::size_t d = nd - 1; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
}

template <class F>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, F f, BackwardFn bw,
              RecomputeFn rc) {
  std::vector<double> out;
  Shape shape;
  if (a.shape() == b.shape()) {
    shape = a.shape();
    out.resize(a.numel());
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
  } else {
    shape = broadcast_shape(op, a.shape(), b.shape());
    out.resize(shape_numel(shape));
    const double* pa = a.data();
    const double* pb = b.data();
    for_each_broadcast(shape, broadcast_strides(a.shape(), shape),
                       broadcast_strides(b.shape(), shape),
                       [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(pa[ia], pb[ib]); });
  }
  return finish(op, std::move(shape), std::move(out), {a, b}, std::move(bw), std::move(rc));
}

template <class F>
Tensor unary(std::string_view op, const Tensor& x, F f, BackwardFn bw, RecomputeFn rc) {
  std::vector<double> out(x.numel());
  const double* px = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(px[i]);
  return finish(op, x.shape(), std::move(out), {x}, std::move(bw), std::move(rc));
}

inline Tensor reduce_like(const Tensor& g, const Shape& shape) {
  return g.shape() == shape ? g : sum_to(g, shape);
}

inline Shape last_axis_kept(const Shape& s) {
  Shape r = s;
  if (!r.empty()) r.back() = 1;
  return r;
}

inline void require_2d(std::string_view op, const Tensor& x) {
  if (x.dim() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_str(x.shape()));
  }
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](const auto& in, const Tensor&, const Tensor& g, const auto& needs) {
        std::vector<Tensor> r(2);
        if (needs[0]) r[0] = detail::reduce_like(g, in[0].shape());
        if (needs[1]) r[1] = detail::reduce_like(g, in[1].shape());
        return r;
      },
      [](const auto& in) { return add(in[0], in[1]); });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](const auto& in, const Tensor&, const Tensor& g, const auto& needs) {
        std::vector<Tensor> r(2);
        if (needs[0]) r[0] = detail::reduce_like(g, in[0].shape());
        if (needs[1]) r[1] = detail::reduce_like(scale(g, -1.0), in[1].shape());
        return r;
      },
      [](const auto& in) { return sub(in[0], in[1]); });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](const auto& in, const Tensor&, const Tensor& g, const auto& needs) {
        std::vector<Tensor> r(2);
        if (needs[0]) r[0] = detail::reduce_like(mul(g, in[1]), in[0].shape());
        if (needs[1]) r[1] = detail::reduce_like(mul(g, in[0]), in[1].shape());
        return r;
      },
      [](const auto& in) { return mul(in[0], in[1]); });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](const auto& in, const Tensor& out, const Tensor& g, const auto& needs) {
        std::vector<Tensor> r(2);
        Tensor gb = div(g, in[1]);
        if (needs[0]) r[0] = detail::reduce_like(gb, in[0].shape());
        if (needs[1]) r[1] = detail::reduce_like(scale(mul(gb, out), -1.0), in[1].shape());
        return r;
      },
      [](const auto& in) { return div(in[0], in[1]); });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(
      "scale", x, [c](double v) { return c * v; },
      [c](const auto&, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{scale(g, c)};
      },
      [c](const auto& in) { return scale(in[0], c); });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(
      "add_scalar", x, [c](double v) { return v + c; },
      [](const auto&, const Tensor&, const Tensor& g, const auto&) { return std::vector<Tensor>{g}; },
      [c](const auto& in) { return add_scalar(in[0], c); });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](const auto&, const Tensor& out, const Tensor& g, const auto&) {
        return std::vector<Tensor>{mul(g, out)};
      },
      [](const auto& in) { return exp(in[0]); });
}

inline Tensor log(const Tensor& x) {
  return detail::unary(
      "log", x, [](double v) { return std::log(v); },
      [](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{div(g, in[0])};
      },
      [](const auto& in) { return log(in[0]); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](const auto&, const Tensor& out, const Tensor& g, const auto&) {
        return std::vector<Tensor>{mul(g, add_scalar(scale(mul(out, out), -1.0), 1.0))};
      },
      [](const auto& in) { return tanh(in[0]); });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](const auto&, const Tensor& out, const Tensor& g, const auto&) {
        return std::vector<Tensor>{mul(g, mul(out, add_scalar(scale(out, -1.0), 1.0)))};
      },
      [](const auto& in) { return sigmoid(in[0]); });
}

inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      "softplus", x,
      [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{mul(g, sigmoid(in[0]))};
      },
      [](const auto& in) { return softplus(in[0]); });
}

inline Tensor pow_scalar(const Tensor& x, double p) {
  return detail::unary(
      "pow", x, [p](double v) { return std::pow(v, p); },
      [p](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{mul(g, scale(pow_scalar(in[0], p - 1.0), p))};
      },
      [p](const auto& in) { return pow_scalar(in[0], p); });
}

/// Sums `x` down to `target`, which must broadcast to x's shape.
inline Tensor sum_to(const Tensor& x, const Shape& target) {
  if (detail::broadcast_shape("sum_to", target, x.shape()) != x.shape()) {
    throw ShapeError("sum_to: cannot reduce " + shape_str(x.shape()) + " to " + shape_str(target));
  }
  std::vector<double> out(shape_numel(target), 0.0);
  const double* px = x.data();
  if (out.size() == 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += px[i];
    out[0] = s;
  } else {
    auto st = detail::broadcast_strides(target, x.shape());
    std::vector<std::size_t> zero(x.dim(), 0);
    detail::for_each_broadcast(x.shape(), st, zero,
                               [&](std::size_t i, std::size_t io, std::size_t) { out[io] += px[i]; });
  }
  return detail::finish(
      "sum_to", target, std::move(out), {x},
      [](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{broadcast_to(g, in[0].shape())};
      },
      [target](const auto& in) { return sum_to(in[0], target); });
}

inline Tensor broadcast_to(const Tensor& x, const Shape& target) {
  if (detail::broadcast_shape("broadcast_to", x.shape(), target) != target) {
    throw ShapeError("broadcast_to: cannot expand " + shape_str(x.shape()) + " to " +
                     shape_str(target));
  }
  std::vector<double> out(shape_numel(target));
  const double* px = x.data();
  auto st = detail::broadcast_strides(x.shape(), target);
  std::vector<std::size_t> zero(target.size(), 0);
  detail::for_each_broadcast(target, st, zero,
                             [&](std::size_t i, std::size_t ix, std::size_t) { out[i] = px[ix]; });
  return detail::finish(
      "broadcast_to", target, std::move(out), {x},
      [](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{sum_to(g, in[0].shape())};
      },
      [target](const auto& in) { return broadcast_to(in[0], target); });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  Shape s = shape;
  return detail::finish(
      "reshape", std::move(s), std::move(out), {x},
      [](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{reshape(g, in[0].shape())};
      },
      [shape](const auto& in) { return reshape(in[0], shape); });
}

inline Tensor transpose(const Tensor& x) {
  detail::require_2d("transpose", x);
  const std::size_t r = x.extent(0), c = x.extent(1);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return detail::finish(
      "transpose", Shape{c, r}, std::move(out), {x},
      [](const auto&, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{transpose(g)};
      },
      [](const auto& in) { return transpose(in[0]); });
}

/// op(a) @ op(b) where op transposes when the matching flag is set.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  detail::require_2d("matmul", a);
  detail::require_2d("matmul", b);
  const std::size_t m = trans_a ? a.extent(1) : a.extent(0);
  const std::size_t ka = trans_a ? a.extent(0) : a.extent(1);
  const std::size_t kb = trans_b ? b.extent(1) : b.extent(0);
  const std::size_t n = trans_b ? b.extent(0) : b.extent(1);
  if (ka != kb) {
    throw ShapeError("matmul: inner extents differ for shapes " + shape_str(a.shape()) +
                     (trans_a ? "^T" : "") + " and " + shape_str(b.shape()) + (trans_b ? "^T" : ""));
  }
  std::vector<double> out(m * n, 0.0);
  if (ka > 0) {
    using detail::RowMat;
    Eigen::Map<const RowMat> A(a.data(), a.extent(0), a.extent(1));
    Eigen::Map<const RowMat> B(b.data(), b.extent(0), b.extent(1));
    Eigen::Map<RowMat> C(out.data(), m, n);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }
  return detail::finish(
      "matmul", Shape{m, n}, std::move(out), {a, b},
      [trans_a, trans_b](const auto& in, const Tensor&, const Tensor& g, const auto& needs) {
        std::vector<Tensor> r(2);
        const Tensor& A = in[0];
        const Tensor& B = in[1];
        if (needs[0]) r[0] = trans_a ? matmul(B, g, trans_b, true) : matmul(g, B, false, !trans_b);
        if (needs[1]) r[1] = trans_b ? matmul(g, A, true, trans_a) : matmul(A, g, !trans_a, false);
        return r;
      },
      [trans_a, trans_b](const auto& in) { return matmul(in[0], in[1], trans_a, trans_b); });
}

/// Softmax over the last axis.
inline Tensor softmax(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("softmax: needs at least one axis");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c ? x.numel() / c : 0;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = x.data() + r * c;
    double mx = *std::max_element(px, px + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (out[r * c + j] = std::exp(px[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= s;
  }
  return detail::finish(
      "softmax", x.shape(), std::move(out), {x},
      [](const auto&, const Tensor& y, const Tensor& g, const auto&) {
        Tensor dot = sum_to(mul(g, y), detail::last_axis_kept(y.shape()));
        return std::vector<Tensor>{mul(y, sub(g, dot))};
      },
      [](const auto& in) { return softmax(in[0]); });
}

/// Log-softmax over the last axis.
inline Tensor log_softmax(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("log_softmax: needs at least one axis");
  const std::size_t c = x.shape().back();
  const std::size_t rows = c ? x.numel() / c : 0;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = x.data() + r * c;
    double mx = *std::max_element(px, px + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(px[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = px[j] - lse;
  }
  return detail::finish(
      "log_softmax", x.shape(), std::move(out), {x},
      [](const auto&, const Tensor& y, const Tensor& g, const auto&) {
        Tensor gs = sum_to(g, detail::last_axis_kept(y.shape()));
        return std::vector<Tensor>{sub(g, mul(exp(y), gs))};
      },
      [](const auto& in) { return log_softmax(in[0]); });
}

/// Row gather: out[i] = x[rows[i]]. Doubles as embedding lookup.
inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> rows) {
  detail::require_2d("gather_rows", x);
  const std::size_t n = x.extent(0), c = x.extent(1);
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) {
      throw ShapeError("gather_rows: index " + std::to_string(rows[i]) + " out of range for shape " +
                       shape_str(x.shape()));
    }
    std::copy_n(x.data() + rows[i] * c, c, out.data() + i * c);
  }
  Shape s{rows.size(), c};
  return detail::finish(
      "gather_rows", std::move(s), std::move(out), {x},
      [rows, n](const auto&, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{scatter_rows(g, rows, n)};
      },
      [rows](const auto& in) { return gather_rows(in[0], rows); });
}

/// Adjoint of gather_rows: out[rows[i]] += x[i] into an n_rows matrix.
inline Tensor scatter_rows(const Tensor& x, std::vector<std::size_t> rows, std::size_t n_rows) {
  detail::require_2d("scatter_rows", x);
  if (x.extent(0) != rows.size()) throw ShapeError("scatter_rows: index count mismatch");
  const std::size_t c = x.extent(1);
  std::vector<double> out(n_rows * c, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n_rows) throw ShapeError("scatter_rows: index out of range");
    double* dst = out.data() + rows[i] * c;
    const double* src = x.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
  }
  return detail::finish(
      "scatter_rows", Shape{n_rows, c}, std::move(out), {x},
      [rows](const auto&, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{gather_rows(g, rows)};
      },
      [rows, n_rows](const auto& in) { return scatter_rows(in[0], rows, n_rows); });
}

/// out[i] = x[i, cols[i]].
inline Tensor pick(const Tensor& x, std::vector<std::size_t> cols) {
  detail::require_2d("pick", x);
  const std::size_t n = x.extent(0), c = x.extent(1);
  if (cols.size() != n) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for shape " +
                     shape_str(x.shape()));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= c) throw ShapeError("pick: index out of range");
    out[i] = x[i * c + cols[i]];
  }
  return detail::finish(
      "pick", Shape{n}, std::move(out), {x},
      [cols, c](const auto&, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{scatter_pick(g, cols, c)};
      },
      [cols](const auto& in) { return pick(in[0], cols); });
}

inline Tensor scatter_pick(const Tensor& x, std::vector<std::size_t> cols, std::size_t n_cols) {
  if (x.dim() != 1 || x.numel() != cols.size()) throw ShapeError("scatter_pick: shape mismatch");
  std::vector<double> out(cols.size() * n_cols, 0.0);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= n_cols) throw ShapeError("scatter_pick: index out of range");
    out[i * n_cols + cols[i]] = x[i];
  }
  return detail::finish(
      "scatter_pick", Shape{cols.size(), n_cols}, std::move(out), {x},
      [cols](const auto&, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{pick(g, cols)};
      },
      [cols, n_cols](const auto& in) { return scatter_pick(in[0], cols, n_cols); });
}

namespace detail {
// outer = product of extents before axis, inner = product after.
inline std::pair<std::size_t, std::size_t> split_axis(const Shape& s, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, inner};
}
}  // namespace detail

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= x.dim() || start + len > x.extent(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") on axis " + std::to_string(axis) + " of shape " + shape_str(x.shape()));
  }
  auto [outer, inner] = detail::split_axis(x.shape(), axis);
  const std::size_t ext = x.extent(axis);
  Shape s = x.shape();
  s[axis] = len;
  std::vector<double> out(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + (o * ext + start) * inner, len * inner, out.data() + o * len * inner);
  return detail::finish(
      "slice", std::move(s), std::move(out), {x},
      [axis, start](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{pad(g, axis, start, in[0].extent(axis))};
      },
      [axis, start, len](const auto& in) { return slice(in[0], axis, start, len); });
}

/// Zero-pads `x` along `axis` so it occupies [start, start + len) of `total`.
inline Tensor pad(const Tensor& x, std::size_t axis, std::size_t start, std::size_t total) {
  if (axis >= x.dim() || start + x.extent(axis) > total) throw ShapeError("pad: range out of bounds");
  auto [outer, inner] = detail::split_axis(x.shape(), axis);
  const std::size_t len = x.extent(axis);
  Shape s = x.shape();
  s[axis] = total;
  std::vector<double> out(outer * total * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.data() + o * len * inner, len * inner, out.data() + (o * total + start) * inner);
  return detail::finish(
      "pad", std::move(s), std::move(out), {x},
      [axis, start](const auto& in, const Tensor&, const Tensor& g, const auto&) {
        return std::vector<Tensor>{slice(g, axis, start, in[0].extent(axis))};
      },
      [axis, start, total](const auto& in) { return pad(in[0], axis, start, total); });
}

inline Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no operands");
  Shape s = xs[0].shape();
  if (axis >= s.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& x : xs) {
    Shape a = x.shape(), b = s;
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw ShapeError("concat: shapes " + shape_str(xs[0].shape()) + " and " +
                       shape_str(x.shape()) + " differ off axis " + std::to_string(axis));
    }
    total += x.extent(axis);
  }
  s[axis] = total;
  auto [outer, inner] = detail::split_axis(s, axis);
  std::vector<double> out(shape_numel(s));
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t len = x.extent(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.data() + o * len * inner, len * inner, out.data() + (o * total + offset) * inner);
    offset += len;
  }
  return detail::finish(
      "concat", std::move(s), std::move(out), xs,
      [axis](const auto& in, const Tensor&, const Tensor& g, const auto& needs) {
        std::vector<Tensor> r(in.size());
        std::size_t off = 0;
        for (std::size_t i = 0; i < in.size(); ++i) {
          const std::size_t len = in[i].extent(axis);
          if (needs[i]) r[i] = slice(g, axis, off, len);
          off += len;
        }
        return r;
      },
      [axis](const auto& in) { return concat(in, axis); });
}

// Composites.

inline Tensor sum(const Tensor& x) { return sum_to(x, Shape{}); }
inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }
inline Tensor sum_last(const Tensor& x) { return sum_to(x, detail::last_axis_kept(x.shape())); }
inline Tensor mean_last(const Tensor& x) {
  return scale(sum_last(x), 1.0 / static_cast<double>(x.shape().back()));
}

/// Layer normalization over the last axis with elementwise gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  Tensor centered = sub(x, mean_last(x));
  Tensor var = mean_last(mul(centered, centered));
  Tensor inv = pow_scalar(add_scalar(var, eps), -0.5);
  return add(mul(mul(centered, inv), gain), bias);
}

/// tanh approximation of GELU.
inline Tensor gelu(const Tensor& x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  Tensor inner = scale(add(x, scale(pow_scalar(x, 3.0), 0.044715)), k);
  return mul(scale(x, 0.5), add_scalar(tanh(inner), 1.0));
}

enum class Reduction { kSum, kMean };

/// KL(softmax(p) || softmax(q)) over the last axis, reduced over the others.
inline Tensor kl_divergence(const Tensor& p_logits, const Tensor& q_logits,
                            Reduction reduction = Reduction::kSum) {
  if (p_logits.shape() != q_logits.shape()) {
    throw ShapeError("kl_divergence: shapes " + shape_str(p_logits.shape()) + " and " +
                     shape_str(q_logits.shape()) + " differ");
  }
  Tensor lp = log_softmax(p_logits);
  Tensor lq = log_softmax(q_logits);
  Tensor per_row = sum_last(mul(exp(lp), sub(lp, lq)));
  return reduction == Reduction::kSum ? sum(per_row) : mean(per_row);
}

}  // namespace camels
