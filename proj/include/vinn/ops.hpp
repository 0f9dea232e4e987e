#pragma once

// Differentiable tensor operations. Elementwise binary operations accept equal
// shapes or a single-element operand broadcast against the other; matrix
// products use Eigen kernels over row-major maps.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vinn/tensor.hpp"

namespace vinn {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap as_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline MutMap as_matrix(std::span<double> v, std::size_t rows, std::size_t cols) {
  return MutMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary operations and matrix product
// ---------------------------------------------------------------------------

enum class BinaryKind { add, sub, mul, div, matmul };

namespace detail {

inline Shape broadcast_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.size() == 1) return b.shape();
  if (b.size() == 1) return a.shape();
  throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()) + " do not conform");
}

// Reduce an output-shaped gradient onto an operand that may have been broadcast.
inline void accumulate_broadcast(Tape& tape, const Tensor& operand, const std::vector<double>& g) {
  if (!tape.wants_grad(operand)) return;
  if (operand.size() == g.size()) {
    tape.accumulate(operand, g);
  } else {
    double s = 0.0;
    for (double v : g) s += v;
    tape.accumulate_fill(operand, s);
  }
}

inline Tensor elementwise(BinaryKind kind, const Tensor& a, const Tensor& b) {
  static constexpr std::string_view names[] = {"add", "sub", "mul", "div"};
  const std::string_view op = names[static_cast<int>(kind)];
  Shape shape = broadcast_shape(op, a, b);
  Tensor out(shape);
  auto o = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  const bool sa = a.size() == 1 && out.size() != 1;
  const bool sb = b.size() == 1 && out.size() != 1;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x = av[sa ? 0 : i];
    const double y = bv[sb ? 0 : i];
    switch (kind) {
      case BinaryKind::add: o[i] = x + y; break;
      case BinaryKind::sub: o[i] = x - y; break;
      case BinaryKind::mul: o[i] = x * y; break;
      case BinaryKind::div:
        if (y == 0.0) throw DomainError("div: division by a zero entry");
        o[i] = x / y;
        break;
      default: break;
    }
  }
  Tape* tape = tape_of(a, b);
  return finish(op, std::move(out), tape, {&a, &b}, [kind, a, b, sa, sb](const std::vector<double>& g, Tape& t) {
    const std::size_t n = g.size();
    auto av = a.values();
    auto bv = b.values();
    std::vector<double> ga, gb;
    if (t.wants_grad(a)) ga.resize(n);
    if (t.wants_grad(b)) gb.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = av[sa ? 0 : i];
      const double y = bv[sb ? 0 : i];
      switch (kind) {
        case BinaryKind::add:
          if (!ga.empty()) ga[i] = g[i];
          if (!gb.empty()) gb[i] = g[i];
          break;
        case BinaryKind::sub:
          if (!ga.empty()) ga[i] = g[i];
          if (!gb.empty()) gb[i] = -g[i];
          break;
        case BinaryKind::mul:
          if (!ga.empty()) ga[i] = g[i] * y;
          if (!gb.empty()) gb[i] = g[i] * x;
          break;
        case BinaryKind::div:
          if (!ga.empty()) ga[i] = g[i] / y;
          if (!gb.empty()) gb[i] = -g[i] * x / (y * y);
          break;
        default: break;
      }
    }
    if (!ga.empty()) accumulate_broadcast(t, a, ga);
    if (!gb.empty()) accumulate_broadcast(t, b, gb);
  });
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2("matmul", a);
  detail::require_rank2("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out(Shape{n, m});
  detail::as_matrix(out.mutable_values(), n, m).noalias() =
      detail::as_matrix(a.values(), n, k) * detail::as_matrix(b.values(), k, m);
  Tape* tape = detail::tape_of(a, b);
  return detail::finish("matmul", std::move(out), tape, {&a, &b},
                        [a, b, n, k, m](const std::vector<double>& g, Tape& t) {
                          auto G = detail::as_matrix(std::span<const double>(g), n, m);
                          if (t.wants_grad(a)) {
                            std::vector<double> ga(n * k);
                            detail::as_matrix(std::span<double>(ga), n, k).noalias() =
                                G * detail::as_matrix(b.values(), k, m).transpose();
                            t.accumulate(a, ga);
                          }
                          if (t.wants_grad(b)) {
                            std::vector<double> gb(k * m);
                            detail::as_matrix(std::span<double>(gb), k, m).noalias() =
                                detail::as_matrix(a.values(), n, k).transpose() * G;
                            t.accumulate(b, gb);
                          }
                        });
}

inline Tensor apply_binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
  if (kind == BinaryKind::matmul) return matmul(a, b);
  return detail::elementwise(kind, a, b);
}

inline Tensor add(const Tensor& a, const Tensor& b) { return apply_binary(BinaryKind::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return apply_binary(BinaryKind::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return apply_binary(BinaryKind::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return apply_binary(BinaryKind::div, a, b); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Elementwise unary operations
// ---------------------------------------------------------------------------

enum class UnaryKind { tanh, exp, log, neg, softplus, relu, square, sqrt, sigmoid };

inline Tensor apply_unary(UnaryKind kind, const Tensor& a) {
  static constexpr std::string_view names[] = {"tanh", "exp",    "log",  "neg",    "softplus",
                                                "relu", "square", "sqrt", "sigmoid"};
  const std::string_view op = names[static_cast<int>(kind)];
  Tensor out(a.shape());
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    switch (kind) {
      case UnaryKind::tanh: o[i] = std::tanh(v); break;
      case UnaryKind::exp: o[i] = std::exp(v); break;
      case UnaryKind::log:
        if (!(v > 0.0)) throw DomainError("log: entry " + std::to_string(v) + " is not positive");
        o[i] = std::log(v);
        break;
      case UnaryKind::neg: o[i] = -v; break;
      case UnaryKind::softplus: o[i] = detail::stable_softplus(v); break;
      case UnaryKind::relu: o[i] = v > 0.0 ? v : 0.0; break;
      case UnaryKind::square: o[i] = v * v; break;
      case UnaryKind::sqrt:
        if (v < 0.0) throw DomainError("sqrt: entry " + std::to_string(v) + " is negative");
        o[i] = std::sqrt(v);
        break;
      case UnaryKind::sigmoid: o[i] = detail::stable_sigmoid(v); break;
    }
  }
  Tape* tape = detail::tape_of(a);
  Tensor y = out;
  return detail::finish(op, std::move(out), tape, {&a}, [kind, a, y](const std::vector<double>& g, Tape& t) {
    auto x = a.values();
    auto yv = y.values();
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case UnaryKind::tanh: d = 1.0 - yv[i] * yv[i]; break;
        case UnaryKind::exp: d = yv[i]; break;
        case UnaryKind::log: d = 1.0 / x[i]; break;
        case UnaryKind::neg: d = -1.0; break;
        case UnaryKind::softplus: d = detail::stable_sigmoid(x[i]); break;
        case UnaryKind::relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
        case UnaryKind::square: d = 2.0 * x[i]; break;
        case UnaryKind::sqrt: d = 0.5 / yv[i]; break;
        case UnaryKind::sigmoid: d = yv[i] * (1.0 - yv[i]); break;
      }
      ga[i] = g[i] * d;
    }
    t.accumulate(a, ga);
  });
}

inline Tensor tanh(const Tensor& a) { return apply_unary(UnaryKind::tanh, a); }
inline Tensor exp(const Tensor& a) { return apply_unary(UnaryKind::exp, a); }
inline Tensor log(const Tensor& a) { return apply_unary(UnaryKind::log, a); }
inline Tensor neg(const Tensor& a) { return apply_unary(UnaryKind::neg, a); }
inline Tensor softplus(const Tensor& a) { return apply_unary(UnaryKind::softplus, a); }
inline Tensor relu(const Tensor& a) { return apply_unary(UnaryKind::relu, a); }
inline Tensor square(const Tensor& a) { return apply_unary(UnaryKind::square, a); }
inline Tensor sqrt(const Tensor& a) { return apply_unary(UnaryKind::sqrt, a); }
inline Tensor sigmoid(const Tensor& a) { return apply_unary(UnaryKind::sigmoid, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// a * c for a constant c.
inline Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = c * x[i];
  return detail::finish("scale", std::move(out), a.tape(), {&a}, [a, c](const std::vector<double>& g, Tape& t) {
    std::vector<double> ga(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = c * g[i];
    t.accumulate(a, ga);
  });
}

/// a + c for a constant c.
inline Tensor shift(const Tensor& a, double c) {
  Tensor out(a.shape());
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = x[i] + c;
  return detail::finish("shift", std::move(out), a.tape(), {&a},
                        [a](const std::vector<double>& g, Tape& t) { t.accumulate(a, g); });
}

/// c * tanh(a / c): smooth clamp into (-c, c) with unit slope at the origin.
inline Tensor soft_clamp(const Tensor& a, double c) {
  if (!(c > 0.0)) throw DomainError("soft_clamp: bound must be positive");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = c * std::tanh(x[i] / c);
  Tensor y = out;
  return detail::finish("soft_clamp", std::move(out), a.tape(), {&a},
                        [a, y, c](const std::vector<double>& g, Tape& t) {
                          auto yv = y.values();
                          std::vector<double> ga(g.size());
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const double r = yv[i] / c;
                            ga[i] = g[i] * (1.0 - r * r);
                          }
                          t.accumulate(a, ga);
                        });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class ReduceKind { sum, mean, sum_of_squares };

/// Reduces all entries (axis empty, scalar result) or one axis (that axis is
/// removed from the shape).
inline Tensor reduce(ReduceKind kind, const Tensor& a, std::optional<std::size_t> axis = std::nullopt) {
  static constexpr std::string_view names[] = {"sum", "mean", "sum_of_squares"};
  const std::string_view op = names[static_cast<int>(kind)];
  if (a.empty()) throw ShapeError(std::string(op) + ": empty tensor");
  if (axis && *axis >= a.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(*axis) + " out of range for rank " +
                     std::to_string(a.rank()));
  }
  std::size_t outer = 1, len = a.size(), inner = 1;
  Shape out_shape{};
  if (axis) {
    const auto& s = a.shape();
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < *axis; ++i) outer *= s[i];
    len = s[*axis];
    for (std::size_t i = *axis + 1; i < s.size(); ++i) inner *= s[i];
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != *axis) out_shape.push_back(s[i]);
  }
  Tensor out(out_shape);
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t q = 0; q < inner; ++q) {
      double acc = 0.0;
      for (std::size_t r = 0; r < len; ++r) {
        const double v = x[(p * len + r) * inner + q];
        acc += kind == ReduceKind::sum_of_squares ? v * v : v;
      }
      o[p * inner + q] = kind == ReduceKind::mean ? acc / static_cast<double>(len) : acc;
    }
  }
  return detail::finish(op, std::move(out), a.tape(), {&a},
                        [kind, a, outer, len, inner](const std::vector<double>& g, Tape& t) {
                          auto x = a.values();
                          std::vector<double> ga(a.size());
                          const double inv = 1.0 / static_cast<double>(len);
                          for (std::size_t p = 0; p < outer; ++p)
                            for (std::size_t r = 0; r < len; ++r)
                              for (std::size_t q = 0; q < inner; ++q) {
                                const std::size_t i = (p * len + r) * inner + q;
                                const double go = g[p * inner + q];
                                switch (kind) {
                                  case ReduceKind::sum: ga[i] = go; break;
                                  case ReduceKind::mean: ga[i] = go * inv; break;
                                  case ReduceKind::sum_of_squares: ga[i] = 2.0 * x[i] * go; break;
                                }
                              }
                          t.accumulate(a, ga);
                        });
}

inline Tensor sum(const Tensor& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(ReduceKind::sum, a, axis);
}
inline Tensor mean(const Tensor& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(ReduceKind::mean, a, axis);
}
inline Tensor sum_of_squares(const Tensor& a, std::optional<std::size_t> axis = std::nullopt) {
  return reduce(ReduceKind::sum_of_squares, a, axis);
}

// ---------------------------------------------------------------------------
// Structural operations on matrices (rows are samples, columns features)
// ---------------------------------------------------------------------------

inline Tensor transpose(const Tensor& a) {
  detail::require_rank2("transpose", a);
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out(Shape{m, n});
  detail::as_matrix(out.mutable_values(), m, n) = detail::as_matrix(a.values(), n, m).transpose();
  return detail::finish("transpose", std::move(out), a.tape(), {&a},
                        [a, n, m](const std::vector<double>& g, Tape& t) {
                          std::vector<double> ga(n * m);
                          detail::as_matrix(std::span<double>(ga), n, m) =
                              detail::as_matrix(std::span<const double>(g), m, n).transpose();
                          t.accumulate(a, ga);
                        });
}

/// Same data under a new shape with an equal number of entries.
inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  return detail::finish("reshape", std::move(out), a.tape(), {&a},
                        [a](const std::vector<double>& g, Tape& t) { t.accumulate(a, g); });
}

/// Adds a length-m vector to every row of an n x m matrix.
inline Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  detail::require_rank2("add_rowwise", a);
  const std::size_t n = a.rows(), m = a.cols();
  if (bias.size() != m) {
    throw ShapeError("add_rowwise: bias of size " + std::to_string(bias.size()) + " for " + std::to_string(m) +
                     " columns");
  }
  Tensor out(a.shape());
  auto o = out.mutable_values();
  auto x = a.values();
  auto b = bias.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) o[i * m + j] = x[i * m + j] + b[j];
  Tape* tape = detail::tape_of(a, bias);
  return detail::finish("add_rowwise", std::move(out), tape, {&a, &bias},
                        [a, bias, n, m](const std::vector<double>& g, Tape& t) {
                          t.accumulate(a, g);
                          if (t.wants_grad(bias)) {
                            std::vector<double> gb(m, 0.0);
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
                            t.accumulate(bias, gb);
                          }
                        });
}

/// Columns [begin, end) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_rank2("slice_cols", a);
  const std::size_t n = a.rows(), m = a.cols();
  if (begin > end || end > m) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                     std::to_string(m) + " columns");
  }
  const std::size_t w = end - begin;
  Tensor out(Shape{n, w});
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * m + begin), w, o.begin() + static_cast<std::ptrdiff_t>(i * w));
  return detail::finish("slice_cols", std::move(out), a.tape(), {&a},
                        [a, n, m, begin, w](const std::vector<double>& g, Tape& t) {
                          std::vector<double> ga(n * m, 0.0);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < w; ++j) ga[i * m + begin + j] = g[i * w + j];
                          t.accumulate(a, ga);
                        });
}

/// Horizontal concatenation [a | b] of two matrices with equal row counts.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require_rank2("concat_cols", a);
  detail::require_rank2("concat_cols", b);
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row counts " + std::to_string(a.rows()) + " and " + std::to_string(b.rows()));
  }
  const std::size_t n = a.rows(), ma = a.cols(), mb = b.cols(), m = ma + mb;
  Tensor out(Shape{n, m});
  auto o = out.mutable_values();
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ma; ++j) o[i * m + j] = x[i * ma + j];
    for (std::size_t j = 0; j < mb; ++j) o[i * m + ma + j] = y[i * mb + j];
  }
  Tape* tape = detail::tape_of(a, b);
  return detail::finish("concat_cols", std::move(out), tape, {&a, &b},
                        [a, b, n, ma, mb, m](const std::vector<double>& g, Tape& t) {
                          if (t.wants_grad(a)) {
                            std::vector<double> ga(n * ma);
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < ma; ++j) ga[i * ma + j] = g[i * m + j];
                            t.accumulate(a, ga);
                          }
                          if (t.wants_grad(b)) {
                            std::vector<double> gb(n * mb);
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < mb; ++j) gb[i * mb + j] = g[i * m + ma + j];
                            t.accumulate(b, gb);
                          }
                        });
}

/// Output column j is input column perm[j].
inline Tensor permute_cols(const Tensor& a, const std::vector<std::size_t>& perm) {
  detail::require_rank2("permute_cols", a);
  const std::size_t n = a.rows(), m = a.cols();
  if (perm.size() != m) throw ShapeError("permute_cols: permutation length does not match columns");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) o[i * m + j] = x[i * m + perm[j]];
  return detail::finish("permute_cols", std::move(out), a.tape(), {&a},
                        [a, perm, n, m](const std::vector<double>& g, Tape& t) {
                          std::vector<double> ga(n * m);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < m; ++j) ga[i * m + perm[j]] = g[i * m + j];
                          t.accumulate(a, ga);
                        });
}

/// Pairwise squared Euclidean distances between the rows of x (n x d) and
/// y (m x d), as an n x m matrix.
inline Tensor sq_dist(const Tensor& x, const Tensor& y) {
  detail::require_rank2("sq_dist", x);
  detail::require_rank2("sq_dist", y);
  if (x.cols() != y.cols()) throw ShapeError("sq_dist: feature dimensions differ");
  const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
  Tensor out(Shape{n, m});
  auto o = out.mutable_values();
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = xv[i * d + k] - yv[j * d + k];
        acc += diff * diff;
      }
      o[i * m + j] = acc;
    }
  Tape* tape = detail::tape_of(x, y);
  return detail::finish("sq_dist", std::move(out), tape, {&x, &y},
                        [x, y, n, m, d](const std::vector<double>& g, Tape& t) {
                          auto xv = x.values();
                          auto yv = y.values();
                          std::vector<double> gx(t.wants_grad(x) ? n * d : 0, 0.0);
                          std::vector<double> gy(t.wants_grad(y) ? m * d : 0, 0.0);
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < m; ++j) {
                              const double w = 2.0 * g[i * m + j];
                              if (w == 0.0) continue;
                              for (std::size_t k = 0; k < d; ++k) {
                                const double diff = w * (xv[i * d + k] - yv[j * d + k]);
                                if (!gx.empty()) gx[i * d + k] += diff;
                                if (!gy.empty()) gy[j * d + k] -= diff;
                              }
                            }
                          if (!gx.empty()) t.accumulate(x, gx);
                          if (!gy.empty()) t.accumulate(y, gy);
                        });
}

// ---------------------------------------------------------------------------
// Untracked helpers for data handling
// ---------------------------------------------------------------------------

/// Rows of an untracked matrix selected by index (used for mini-batching).
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  detail::require_rank2("gather_rows", a);
  const std::size_t m = a.cols();
  Tensor out(Shape{idx.size(), m});
  auto o = out.mutable_values();
  auto x = a.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(idx[i] * m), m, o.begin() + static_cast<std::ptrdiff_t>(i * m));
  }
  return out;
}

/// Rows [begin, end) of an untracked matrix.
inline Tensor row_range(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_rank2("row_range", a);
  if (begin > end || end > a.rows()) throw ShapeError("row_range: range out of bounds");
  const std::size_t m = a.cols();
  auto x = a.values();
  return Tensor(Shape{end - begin, m},
                std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(begin * m),
                                    x.begin() + static_cast<std::ptrdiff_t>(end * m)));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: sizes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace vinn
