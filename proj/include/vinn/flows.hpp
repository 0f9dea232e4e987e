#pragma once

// Invertible building blocks: affine coupling blocks, constrained residual
// (iResNet) blocks, fixed permutations, and their composition into a flow
// T = (T_y, T_z) with exact inverse and log-determinant.

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <optional>
#include <variant>
#include <vector>

#include "vinn/nn.hpp"
#include "vinn/ops.hpp"
#include "vinn/random.hpp"

namespace vinn {

/// Output of a block or model evaluated in the forward direction.
struct BlockResult {
  Tensor out;
  Tensor logdet;  // one entry per row
};

// ---------------------------------------------------------------------------
// Affine coupling block
// ---------------------------------------------------------------------------

/// Two complementary affine coupling layers. The input u = [u1, u2] with
/// |u1| = split is mapped to
///   v1 = u1 * exp(s1(u2)) + t1(u2)
///   o2 = u2 * exp(s2(v1)) + t2(v1),    o = [v1, o2]
/// where every raw scale is soft-clamped to (-clamp, clamp).
struct CouplingBlock {
  std::size_t dim = 0;
  std::size_t split = 0;
  Mlp s1, t1, s2, t2;
  double clamp = 2.0;

  void collect(std::vector<Parameter*>& out) {
    s1.collect(out);
    t1.collect(out);
    s2.collect(out);
    t2.collect(out);
  }
};

struct CouplingOptions {
  std::size_t split = 0;  // 0 selects floor(dim / 2)
  double clamp = 2.0;
  Activation activation = Activation::relu;
  InitMode init = InitMode::scaled;
};

inline CouplingBlock make_coupling_block(std::size_t dim, std::size_t hidden, Rng& rng,
                                         const CouplingOptions& opts = {}) {
  if (dim < 2) throw ShapeError("coupling block needs dim >= 2");
  CouplingBlock b;
  b.dim = dim;
  b.split = opts.split == 0 ? dim / 2 : opts.split;
  if (b.split < 1 || b.split > dim - 1) throw ShapeError("coupling split must lie in [1, dim-1]");
  b.clamp = opts.clamp;
  // Scaled init zeroes the output layers so the block starts as the identity.
  const bool zero_last = opts.init == InitMode::scaled;
  const std::size_t d1 = b.split, d2 = dim - b.split;
  b.s1 = make_mlp({d2, hidden, d1}, opts.activation, opts.init, rng, zero_last);
  b.t1 = make_mlp({d2, hidden, d1}, opts.activation, opts.init, rng, zero_last);
  b.s2 = make_mlp({d1, hidden, d2}, opts.activation, opts.init, rng, zero_last);
  b.t2 = make_mlp({d1, hidden, d2}, opts.activation, opts.init, rng, zero_last);
  return b;
}

namespace detail {
inline void require_width(std::string_view op, const Tensor& x, std::size_t d) {
  if (x.rank() != 2 || x.cols() != d) {
    throw ShapeError(std::string(op) + ": expected n x " + std::to_string(d) + " input, got " +
                     shape_string(x.shape()));
  }
}
}  // namespace detail

inline BlockResult coupling_forward(const CouplingBlock& b, const Tensor& u, Tape* tape = nullptr) {
  detail::require_width("coupling_forward", u, b.dim);
  Tensor u1 = slice_cols(u, 0, b.split);
  Tensor u2 = slice_cols(u, b.split, b.dim);
  Tensor sc1 = soft_clamp(b.s1(u2, tape), b.clamp);
  Tensor v1 = u1 * exp(sc1) + b.t1(u2, tape);
  Tensor sc2 = soft_clamp(b.s2(v1, tape), b.clamp);
  Tensor o2 = u2 * exp(sc2) + b.t2(v1, tape);
  return {concat_cols(v1, o2), sum(sc1, 1) + sum(sc2, 1)};
}

inline Tensor coupling_inverse(const CouplingBlock& b, const Tensor& o, Tape* tape = nullptr) {
  detail::require_width("coupling_inverse", o, b.dim);
  Tensor o1 = slice_cols(o, 0, b.split);
  Tensor o2 = slice_cols(o, b.split, b.dim);
  Tensor sc2 = soft_clamp(b.s2(o1, tape), b.clamp);
  Tensor u2 = (o2 - b.t2(o1, tape)) * exp(neg(sc2));
  Tensor sc1 = soft_clamp(b.s1(u2, tape), b.clamp);
  Tensor u1 = (o1 - b.t1(u2, tape)) * exp(neg(sc1));
  return concat_cols(u1, u2);
}

// ---------------------------------------------------------------------------
// Spectral norm control
// ---------------------------------------------------------------------------

/// Largest singular value of a matrix by power iteration on W^T W from a
/// fixed-seed start vector.
inline double spectral_norm_estimate(const Tensor& w, std::size_t steps = 30, std::uint64_t seed = 0x5eedULL) {
  detail::require_rank2("spectral_norm_estimate", w);
  const auto rows = static_cast<Eigen::Index>(w.rows());
  const auto cols = static_cast<Eigen::Index>(w.cols());
  auto m = detail::as_matrix(w.values(), w.rows(), w.cols());
  if (m.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  Rng rng(seed);
  Eigen::VectorXd v(cols);
  for (Eigen::Index i = 0; i < cols; ++i) v(i) = rng.normal();
  v.normalize();
  Eigen::VectorXd u(rows);
  // Runs at least `steps` iterations, then continues while the estimate still
  // moves: a close second singular value slows convergence, and an
  // underestimate would let the projected norm exceed its bound.
  double prev = 0.0;
  for (std::size_t k = 0; k < std::max<std::size_t>(steps, 2000); ++k) {
    u.noalias() = m * v;
    v.noalias() = m.transpose() * u;
    const double nv = v.norm();
    if (nv == 0.0) return 0.0;
    v /= nv;
    const double est = std::sqrt(nv);
    if (k + 1 >= steps && std::abs(est - prev) <= 1e-13 * est) break;
    prev = est;
  }
  return (m * v).norm();
}

/// Rescales W by s / sigma_max when its estimated operator norm exceeds s.
inline Tensor spectral_project(const Tensor& w, double s, std::size_t steps = 30) {
  if (!(s > 0.0 && s < 1.0)) throw DomainError("spectral_project: bound must lie in (0, 1)");
  const double sigma = spectral_norm_estimate(w, steps);
  if (sigma <= s) return w;
  Tensor out = w.detach();
  const double f = s / sigma;
  for (double& v : out.mutable_values()) v *= f;
  return out;
}

// ---------------------------------------------------------------------------
// Invertible residual block
// ---------------------------------------------------------------------------

/// x -> x + F(x) with F(x) = W2 tanh(W1 x + b1) + b2 and operator norms of
/// W1, W2 kept at or below `spectral_bound` by spectral_project.
struct IResNetBlock {
  Parameter w1;  // hidden x dim
  Parameter b1;  // hidden
  Parameter w2;  // dim x hidden
  Parameter b2;  // dim
  double spectral_bound = 0.9;
  double tol = 1e-10;
  std::size_t max_iter = 200;

  std::size_t dim() const { return w1.value.cols(); }
  std::size_t hidden() const { return w1.value.rows(); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&w1);
    out.push_back(&b1);
    out.push_back(&w2);
    out.push_back(&b2);
  }

  void project() {
    w1.value = spectral_project(w1.value, spectral_bound);
    w2.value = spectral_project(w2.value, spectral_bound);
  }
};

inline constexpr std::size_t kMaxDenseLogdetDim = 64;

inline IResNetBlock make_iresnet_block(std::size_t dim, std::size_t hidden, double spectral_bound, Rng& rng,
                                       InitMode init = InitMode::scaled) {
  IResNetBlock b;
  b.spectral_bound = spectral_bound;
  const double sd1 = init == InitMode::scaled ? 1.0 / std::sqrt(static_cast<double>(dim)) : 1.0;
  const double sd2 = init == InitMode::scaled ? 1.0 / std::sqrt(static_cast<double>(hidden)) : 1.0;
  b.w1.value = rng.normal_tensor(Shape{hidden, dim}, 0.0, sd1);
  b.b1.value = Tensor(Shape{hidden}, 0.0);
  b.w2.value = rng.normal_tensor(Shape{dim, hidden}, 0.0, sd2);
  b.b2.value = Tensor(Shape{dim}, 0.0);
  b.project();
  return b;
}

/// F(x) for a batch of rows.
inline Tensor iresnet_residual(const IResNetBlock& b, const Tensor& x, Tape* tape = nullptr) {
  Tensor h = tanh(add_rowwise(matmul(x, transpose(use(b.w1, tape))), use(b.b1, tape)));
  return add_rowwise(matmul(h, transpose(use(b.w2, tape))), use(b.b2, tape));
}

namespace detail {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Mat param_matrix(const Tensor& t) {
  return as_matrix(t.values(), t.rows(), t.cols());
}

inline Vec row_vector(std::span<const double> v, std::size_t row, std::size_t d) {
  Vec out(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) out(static_cast<Eigen::Index>(j)) = v[row * d + j];
  return out;
}

/// log det(I + W2 diag(sech^2(W1 x + b1)) W1) for every row of x, with the
/// exact gradient obtained from the adjoint A^{-T} of each dense Jacobian.
inline Tensor iresnet_logdet(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2) {
  const std::size_t n = x.rows(), d = x.cols(), hdim = w1.rows();
  if (d > kMaxDenseLogdetDim) {
    throw ShapeError("iresnet_forward: dense log-determinant is capped at dim " +
                     std::to_string(kMaxDenseLogdetDim));
  }
  const Mat W1 = param_matrix(w1), W2 = param_matrix(w2);
  const Vec B1 = row_vector(b1.values(), 0, hdim);
  Tensor out(Shape{n});
  auto o = out.mutable_values();
  Tape* tape = x.tracked() ? x.tape() : (w1.tracked() ? w1.tape() : (b1.tracked() ? b1.tape() : w2.tape()));
  std::vector<Mat> inverses;
  if (tape) inverses.reserve(n);
  std::vector<Vec> hs;
  if (tape) hs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec z = W1 * row_vector(x.values(), i, d) + B1;
    const Vec h = z.array().tanh().matrix();
    const Vec dd = (1.0 - h.array().square()).matrix();
    Mat a = Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) + W2 * dd.asDiagonal() * W1;
    Eigen::PartialPivLU<Mat> lu(a);
    const Mat& f = lu.matrixLU();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < f.rows(); ++k) acc += std::log(std::abs(f(k, k)));
    o[i] = acc;
    if (tape) {
      inverses.push_back(lu.inverse());
      hs.push_back(h);
    }
  }
  auto backward = [x, w1, b1, w2, W1, W2, n, d, hdim, inverses = std::move(inverses), hs = std::move(hs)](
                      const std::vector<double>& g, Tape& t) {
    const bool want_x = t.wants_grad(x), want_w1 = t.wants_grad(w1), want_b1 = t.wants_grad(b1),
               want_w2 = t.wants_grad(w2);
    Mat gW1 = Mat::Zero(W1.rows(), W1.cols()), gW2 = Mat::Zero(W2.rows(), W2.cols());
    Vec gB1 = Vec::Zero(static_cast<Eigen::Index>(hdim));
    std::vector<double> gx(want_x ? n * d : 0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (g[i] == 0.0) continue;
      const Mat& m = inverses[i];  // A^{-1}
      const Vec& h = hs[i];
      const Vec dd = (1.0 - h.array().square()).matrix();
      const Mat q = m * W2;  // d x H
      // d logdet / dD_k = (W1 A^{-1} W2)_kk
      Vec g_dd(static_cast<Eigen::Index>(hdim));
      for (Eigen::Index k = 0; k < g_dd.size(); ++k) g_dd(k) = W1.row(k).dot(q.col(k));
      if (want_w2) gW2.noalias() += g[i] * (W1 * m).transpose() * dd.asDiagonal();
      if (want_w1) gW1.noalias() += g[i] * dd.asDiagonal() * q.transpose();
      // dD/dz = -2 tanh(z) sech^2(z)
      const Vec gz = (g[i] * g_dd.array() * (-2.0) * h.array() * dd.array()).matrix();
      if (want_b1) gB1 += gz;
      const Vec xi = row_vector(x.values(), i, d);
      if (want_w1) gW1.noalias() += gz * xi.transpose();
      if (want_x) {
        const Vec gxi = W1.transpose() * gz;
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += gxi(static_cast<Eigen::Index>(j));
      }
    }
    auto flat = [](const Mat& m) {
      std::vector<double> v(static_cast<std::size_t>(m.size()));
      as_matrix(std::span<double>(v), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())) = m;
      return v;
    };
    if (want_x) t.accumulate(x, gx);
    if (want_w1) t.accumulate(w1, flat(gW1));
    if (want_w2) t.accumulate(w2, flat(gW2));
    if (want_b1) t.accumulate(b1, std::vector<double>(gB1.data(), gB1.data() + gB1.size()));
  };
  return finish("iresnet_logdet", std::move(out), tape, {&x, &w1, &b1, &w2}, std::move(backward));
}

}  // namespace detail

/// x + F(x) and the exact log|det(I + JF(x))| per row.
inline BlockResult iresnet_forward(const IResNetBlock& b, const Tensor& x, Tape* tape = nullptr) {
  detail::require_width("iresnet_forward", x, b.dim());
  Tensor w1 = use(b.w1, tape), b1 = use(b.b1, tape), w2 = use(b.w2, tape), b2 = use(b.b2, tape);
  Tensor h = tanh(add_rowwise(matmul(x, transpose(w1)), b1));
  Tensor f = add_rowwise(matmul(h, transpose(w2)), b2);
  Tensor logdet = detail::iresnet_logdet(x, w1, b1, w2);
  return {x + f, logdet};
}

/// Diagnostics from the fixed-point inversion of one residual block.
struct InverseTrace {
  Tensor x;
  std::vector<double> update_norms;  // Frobenius norm of x_{k+1} - x_k
  std::size_t iterations = 0;
  double residual = 0.0;  // max |x + F(x) - o|
};

/// Banach iteration x <- o - F(x) from x0 = o until the max-abs update falls
/// below the block tolerance.
inline InverseTrace iresnet_inverse_trace(const IResNetBlock& b, const Tensor& o) {
  detail::require_width("iresnet_inverse", o, b.dim());
  InverseTrace tr;
  Tensor target = o.detach();
  Tensor x = target;
  double last = 0.0;
  for (std::size_t k = 0; k < b.max_iter; ++k) {
    Tensor next = target - iresnet_residual(b, x);
    double max_upd = 0.0, fro = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double u = next[i] - x[i];
      max_upd = std::max(max_upd, std::abs(u));
      fro += u * u;
    }
    tr.update_norms.push_back(std::sqrt(fro));
    x = next;
    last = max_upd;
    // A pass that changes nothing only confirms convergence; it is not counted.
    if (max_upd < b.tol) break;
    tr.iterations = k + 1;
  }
  Tensor r = x + iresnet_residual(b, x) - target;
  for (double v : r.values()) tr.residual = std::max(tr.residual, std::abs(v));
  if (last >= b.tol) throw ConvergenceError("iresnet_inverse: fixed-point iteration did not converge", tr.iterations, last);
  tr.x = x;
  return tr;
}

/// Inverse of x -> x + F(x). With a tape the result is differentiable through
/// the implicit function theorem: dx = (I + JF(x))^{-1} (do - dF_theta(x)).
inline Tensor iresnet_inverse(const IResNetBlock& b, const Tensor& o, Tape* tape = nullptr) {
  InverseTrace tr = iresnet_inverse_trace(b, o);
  if (tape == nullptr && !o.tracked()) return tr.x;
  if (tape == nullptr) tape = o.tape();
  Tensor w1 = use(b.w1, tape), b1 = use(b.b1, tape), w2 = use(b.w2, tape), b2 = use(b.b2, tape);
  const Tensor x = tr.x;
  const std::size_t n = x.rows(), d = x.cols(), hdim = b.hidden();
  auto backward = [o, x, w1, b1, w2, b2, n, d, hdim](const std::vector<double>& g, Tape& t) {
    using detail::Mat;
    using detail::Vec;
    const Mat W1 = detail::param_matrix(w1), W2 = detail::param_matrix(w2);
    const Vec B1 = detail::row_vector(b1.values(), 0, hdim);
    Mat gW1 = Mat::Zero(W1.rows(), W1.cols()), gW2 = Mat::Zero(W2.rows(), W2.cols());
    Vec gB1 = Vec::Zero(static_cast<Eigen::Index>(hdim)), gB2 = Vec::Zero(static_cast<Eigen::Index>(d));
    std::vector<double> go(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec xi = detail::row_vector(x.values(), i, d);
      const Vec gi = detail::row_vector(std::span<const double>(g), i, d);
      const Vec h = (W1 * xi + B1).array().tanh().matrix();
      const Vec dd = (1.0 - h.array().square()).matrix();
      const Mat a = Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)) +
                    W2 * dd.asDiagonal() * W1;
      const Vec lambda = a.transpose().partialPivLu().solve(gi);
      for (std::size_t j = 0; j < d; ++j) go[i * d + j] = lambda(static_cast<Eigen::Index>(j));
      const Vec v = -lambda;  // gradient flowing into F(x) with x held fixed
      gB2 += v;
      gW2.noalias() += v * h.transpose();
      const Vec gz = ((W2.transpose() * v).array() * dd.array()).matrix();
      gB1 += gz;
      gW1.noalias() += gz * xi.transpose();
    }
    auto flat = [](const Mat& m) {
      std::vector<double> v(static_cast<std::size_t>(m.size()));
      detail::as_matrix(std::span<double>(v), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())) = m;
      return v;
    };
    t.accumulate(o, go);
    t.accumulate(w1, flat(gW1));
    t.accumulate(w2, flat(gW2));
    t.accumulate(b1, std::vector<double>(gB1.data(), gB1.data() + gB1.size()));
    t.accumulate(b2, std::vector<double>(gB2.data(), gB2.data() + gB2.size()));
  };
  return tape->record("iresnet_inverse", x, {&o, &w1, &b1, &w2, &b2}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Fixed permutation
// ---------------------------------------------------------------------------

/// Output column j takes input column perm[j]; volume preserving.
struct Permutation {
  std::vector<std::size_t> perm;

  static Permutation reverse(std::size_t d) {
    Permutation p;
    p.perm.resize(d);
    for (std::size_t i = 0; i < d; ++i) p.perm[i] = d - 1 - i;
    return p;
  }

  std::vector<std::size_t> inverse() const {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = j;
    return inv;
  }
};

// ---------------------------------------------------------------------------
// Flow model
// ---------------------------------------------------------------------------

using FlowBlock = std::variant<CouplingBlock, IResNetBlock, Permutation>;

struct FlowOutput {
  Tensor y;       // first dim_y columns
  Tensor z;       // remaining dim_z columns
  Tensor logdet;  // per row
};

class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(std::size_t dim, std::size_t dim_y) : dim_(dim), dim_y_(dim_y) {
    if (dim_y > dim) throw ShapeError("flow: dim_y exceeds dim");
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t dim_y() const noexcept { return dim_y_; }
  std::size_t dim_z() const noexcept { return dim_ - dim_y_; }

  std::vector<FlowBlock>& blocks() noexcept { return blocks_; }
  const std::vector<FlowBlock>& blocks() const noexcept { return blocks_; }

  void add(FlowBlock b) { blocks_.push_back(std::move(b)); }

  /// Full forward map with per-block log-determinants (for diagnostics).
  BlockResult forward_full(const Tensor& x, Tape* tape = nullptr, std::vector<Tensor>* per_block = nullptr) const {
    detail::require_width("model_forward", x, dim_);
    Tensor h = x;
    Tensor logdet(Shape{x.rows()}, 0.0);
    for (const auto& blk : blocks_) {
      BlockResult r = std::visit(
          [&](const auto& b) -> BlockResult {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, CouplingBlock>) return coupling_forward(b, h, tape);
            else if constexpr (std::is_same_v<B, IResNetBlock>) return iresnet_forward(b, h, tape);
            else return {permute_cols(h, b.perm), Tensor(Shape{h.rows()}, 0.0)};
          },
          blk);
      if (per_block) per_block->push_back(r.logdet.detach());
      h = r.out;
      logdet = logdet + r.logdet;
    }
    return {h, logdet};
  }

  FlowOutput forward(const Tensor& x, Tape* tape = nullptr) const {
    BlockResult r = forward_full(x, tape);
    return {slice_cols(r.out, 0, dim_y_), slice_cols(r.out, dim_y_, dim_), r.logdet};
  }

  Tensor inverse_full(const Tensor& o, Tape* tape = nullptr) const {
    detail::require_width("model_inverse", o, dim_);
    Tensor h = o;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
      h = std::visit(
          [&](const auto& b) -> Tensor {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, CouplingBlock>) return coupling_inverse(b, h, tape);
            else if constexpr (std::is_same_v<B, IResNetBlock>) return iresnet_inverse(b, h, tape);
            else return permute_cols(h, b.inverse());
          },
          *it);
    }
    return h;
  }

  Tensor inverse(const Tensor& y, const Tensor& z, Tape* tape = nullptr) const {
    if (y.rank() != 2 || z.rank() != 2 || y.cols() != dim_y_ || z.cols() != dim_z()) {
      throw ShapeError("model_inverse: expected widths " + std::to_string(dim_y_) + " and " +
                       std::to_string(dim_z()));
    }
    if (dim_y_ == 0) return inverse_full(z, tape);
    if (dim_z() == 0) return inverse_full(y, tape);
    return inverse_full(concat_cols(y, z), tape);
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& blk : blocks_) {
      std::visit(
          [&](auto& b) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(b)>, Permutation>) b.collect(out);
          },
          blk);
    }
    return out;
  }

  /// Re-impose the spectral constraint on every residual block.
  void project() {
    for (auto& blk : blocks_)
      if (auto* b = std::get_if<IResNetBlock>(&blk)) b->project();
  }

 private:
  std::size_t dim_ = 0;
  std::size_t dim_y_ = 0;
  std::vector<FlowBlock> blocks_;
};

enum class Architecture { coupling, iresnet };

struct FlowSpec {
  Architecture arch = Architecture::coupling;
  std::size_t dim = 2;
  std::size_t dim_y = 0;
  std::size_t blocks = 4;
  std::size_t hidden = 64;
  CouplingOptions coupling{};
  double spectral_bound = 0.9;
  InitMode init = InitMode::scaled;
  bool permute = true;  // reverse-coordinate permutation between coupling blocks
};

inline FlowModel make_flow(const FlowSpec& spec, Rng& rng) {
  FlowModel m(spec.dim, spec.dim_y);
  for (std::size_t i = 0; i < spec.blocks; ++i) {
    if (spec.arch == Architecture::coupling) {
      CouplingOptions opts = spec.coupling;
      opts.init = spec.init;
      if (i > 0 && spec.permute) m.add(Permutation::reverse(spec.dim));
      m.add(make_coupling_block(spec.dim, spec.hidden, rng, opts));
    } else {
      m.add(make_iresnet_block(spec.dim, spec.hidden, spec.spectral_bound, rng, spec.init));
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

enum class PadMode { zero, repeat };

struct PaddingSpec {
  std::size_t original = 0;
  std::size_t padded = 0;
  PadMode mode = PadMode::zero;
  double noise = 0.0;  // std of Gaussian noise on padded entries during training

  bool active() const noexcept { return padded > original; }
};

/// Widens rows to spec.padded columns. Zero mode appends zeros (plus noise of
/// scale spec.noise when a noise stream is supplied); repeat mode cycles the
/// original coordinates.
inline Tensor pad(const Tensor& x, const PaddingSpec& spec, Rng* noise = nullptr) {
  if (spec.padded < spec.original) throw DomainError("pad: padded dim is smaller than the original dim");
  detail::require_width("pad", x, spec.original);
  const std::size_t n = x.rows(), d0 = spec.original, d = spec.padded;
  Tensor out(Shape{n, d});
  auto o = out.mutable_values();
  auto v = x.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      if (j < d0) o[i * d + j] = v[i * d0 + j];
      else if (spec.mode == PadMode::repeat) o[i * d + j] = v[i * d0 + (j % d0)];
      else o[i * d + j] = (noise && spec.noise > 0.0) ? noise->normal(0.0, spec.noise) : 0.0;
    }
  return out;
}

/// Drops padded coordinates (differentiable).
inline Tensor unpad(const Tensor& x, const PaddingSpec& spec) {
  detail::require_width("unpad", x, spec.padded);
  return slice_cols(x, 0, spec.original);
}

}  // namespace vinn
