#pragma once

// Training losses: variational f-divergences with a neural critic, flow NLL,
// MMD, entropic optimal transport (Sinkhorn), supervised MSE, prior and
// reconstruction penalties.

#include <algorithm>
#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vinn/flows.hpp"
#include "vinn/nn.hpp"
#include "vinn/ops.hpp"

namespace vinn {

// ---------------------------------------------------------------------------
// f-divergence generators
// ---------------------------------------------------------------------------

/// `js` uses the shifted conjugate log(1+e^t) - log 2; `js_classical` uses
/// -log(2 - e^t), whose optimum is the Jensen-Shannon divergence itself.
enum class FDivergence { kl, reverse_kl, js, js_classical };

struct FDivergenceSpec {
  FDivergence kind = FDivergence::kl;
  double bound = 0.0;  // > 0 squashes raw critic output to b tanh(v / b)

  std::string name() const {
    switch (kind) {
      case FDivergence::kl: return "KL";
      case FDivergence::reverse_kl: return "ReverseKL";
      case FDivergence::js: return "JS";
      case FDivergence::js_classical: return "JSClassical";
    }
    return "?";
  }
};

inline FDivergenceSpec fdiv_from_name(const std::string& s) {
  if (s == "KL" || s == "kl") return {FDivergence::kl};
  if (s == "ReverseKL" || s == "reverse_kl" || s == "rkl") return {FDivergence::reverse_kl};
  if (s == "JS" || s == "js") return {FDivergence::js};
  if (s == "JSClassical" || s == "js_classical") return {FDivergence::js_classical};
  throw ConfigError("unknown f-divergence '" + s + "'");
}

namespace detail {
inline const double kLog2 = std::numbers::ln2;
}

/// Output activation g_f mapping raw critic values into the conjugate's domain.
inline Tensor gf_eval(const FDivergenceSpec& spec, const Tensor& v) {
  switch (spec.kind) {
    case FDivergence::kl: return v;
    case FDivergence::reverse_kl: return neg(exp(neg(v)));
    case FDivergence::js:
    case FDivergence::js_classical: return shift(neg(softplus(neg(v))), detail::kLog2);
  }
  return v;
}

/// Raw conjugate f*(t); throws DomainError outside its domain.
inline Tensor fstar_eval(const FDivergenceSpec& spec, const Tensor& t) {
  switch (spec.kind) {
    case FDivergence::kl: return exp(shift(t, -1.0));
    case FDivergence::reverse_kl:
      for (double v : t.values())
        if (!(v < 0.0)) throw DomainError("ReverseKL conjugate needs t < 0");
      return shift(neg(log(neg(t))), -1.0);
    case FDivergence::js: return shift(softplus(t), -detail::kLog2);
    case FDivergence::js_classical:
      for (double v : t.values())
        if (!(v < detail::kLog2)) throw DomainError("classical JS conjugate needs t < log 2");
      return neg(log(shift(neg(exp(t)), 2.0)));
  }
  return t;
}

/// f*(g_f(v)) in closed form, finite for every real v.
///   KL: e^{v-1}   ReverseKL: v - 1   JS: softplus(g_f(v)) - log 2
///   JSClassical: softplus(v) - log 2
inline Tensor fstar_gf(const FDivergenceSpec& spec, const Tensor& v) {
  switch (spec.kind) {
    case FDivergence::kl: return exp(shift(v, -1.0));
    case FDivergence::reverse_kl: return shift(v, -1.0);
    case FDivergence::js: return shift(softplus(gf_eval(spec, v)), -detail::kLog2);
    case FDivergence::js_classical: return shift(softplus(v), -detail::kLog2);
  }
  return v;
}

/// sup over t in [-b, b] of |f*'(t)|; empty when the interval leaves the domain.
inline std::optional<double> fstar_sup_derivative(const FDivergenceSpec& spec, double b) {
  switch (spec.kind) {
    case FDivergence::kl: return std::exp(b - 1.0);
    case FDivergence::reverse_kl: return std::nullopt;
    case FDivergence::js: return 1.0 / (1.0 + std::exp(-b));
    case FDivergence::js_classical:
      if (b >= detail::kLog2) return std::nullopt;
      return std::exp(b) / (2.0 - std::exp(b));
  }
  return std::nullopt;
}

/// sup over t in [-b, b] of |f*(t)|; empty when the interval leaves the domain.
inline std::optional<double> fstar_sup_value(const FDivergenceSpec& spec, double b) {
  switch (spec.kind) {
    case FDivergence::kl: return std::exp(b - 1.0);
    case FDivergence::reverse_kl: return std::nullopt;
    case FDivergence::js:
      return std::max(std::abs(std::log1p(std::exp(b)) - detail::kLog2),
                      std::abs(std::log1p(std::exp(-b)) - detail::kLog2));
    case FDivergence::js_classical:
      if (b >= detail::kLog2) return std::nullopt;
      return std::max(std::abs(std::log(2.0 - std::exp(b))), std::abs(std::log(2.0 - std::exp(-b))));
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Shared reductions
// ---------------------------------------------------------------------------

/// mean over rows of the squared Euclidean row norm.
inline Tensor mean_row_sq_norm(const Tensor& a) { return mean(sum(square(a), 1)); }

/// mean_i g(p_i) - mean_j f*(g(q_j)) with g = g_f o V.
inline Tensor variational_gap(const FDivergenceSpec& spec, const Mlp& critic, const Tensor& samples_p,
                              const Tensor& samples_q, Tape* tape = nullptr) {
  if (samples_p.rank() != 2 || samples_q.rank() != 2 || samples_p.cols() != samples_q.cols())
    throw ShapeError("variational_gap: sample sets must share the feature dimension");
  if (samples_p.cols() != critic.in_dim()) throw ShapeError("variational_gap: critic input width mismatch");
  Tensor vp = critic(samples_p, tape);
  Tensor vq = critic(samples_q, tape);
  if (spec.bound > 0.0) {
    vp = scale(tanh(scale(vp, 1.0 / spec.bound)), spec.bound);
    vq = scale(tanh(scale(vq, 1.0 / spec.bound)), spec.bound);
  }
  return mean(gf_eval(spec, vp)) - mean(fstar_gf(spec, vq));
}

// ---------------------------------------------------------------------------
// INN losses
// ---------------------------------------------------------------------------

enum class Pairing { y_true, y_model };  // (Y, T_z(X)) or (T_y(X), T_z(X))

namespace detail {
inline void require_batch(const FlowModel& m, const Tensor& x, const Tensor& y, const Tensor& z) {
  if (x.rank() != 2 || y.rank() != 2 || z.rank() != 2 || x.rows() != y.rows() || x.rows() != z.rows() ||
      x.cols() != m.dim() || y.cols() != m.dim_y() || z.cols() != m.dim_z())
    throw ShapeError("INN loss: X, Y, Z must be batch-aligned with widths d_x, d_y, d_z");
}
}  // namespace detail

/// Critic on input space: gap between T^{-1}(Y, Z) and X plus the paired
/// squared error.
inline Tensor inn_backward_loss(const FlowModel& model, const Mlp& critic, const FDivergenceSpec& spec,
                                const Tensor& x, const Tensor& y, const Tensor& z, Tape* tape = nullptr) {
  detail::require_batch(model, x, y, z);
  Tensor x_rec = model.inverse(y, z, tape);
  return variational_gap(spec, critic, x_rec, x, tape) + mean_row_sq_norm(x_rec - x);
}

/// Critic on the joint output space: gap between (Y, Z) and T(X) plus the
/// paired squared error.
inline Tensor inn_forward_loss(const FlowModel& model, const Mlp& critic, const FDivergenceSpec& spec,
                               const Tensor& x, const Tensor& y, const Tensor& z, Tape* tape = nullptr) {
  detail::require_batch(model, x, y, z);
  Tensor out = model.forward_full(x, tape).out;
  Tensor target = concat_cols(y, z);
  return variational_gap(spec, critic, target, out, tape) + mean_row_sq_norm(out - target);
}

/// Unsupervised latent loss on the (y, z) space.
inline Tensor inn_unsup_loss_lz(const FlowModel& model, const Mlp& critic, const FDivergenceSpec& spec,
                                const Tensor& x, const Tensor& y, const Tensor& z, Tape* tape = nullptr,
                                Pairing pairing = Pairing::y_true) {
  detail::require_batch(model, x, y, z);
  FlowOutput out = model.forward(x, tape);
  Tensor first = pairing == Pairing::y_true ? y : out.y;
  return variational_gap(spec, critic, concat_cols(y, z), concat_cols(first, out.z), tape);
}

/// mean of 1/2 |T_y - y|^2 / sigma^2 + 1/2 |T_z|^2 - logdet, from a forward pass.
inline Tensor nll_from_output(const FlowOutput& out, const Tensor& y_gt, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("nll_loss: sigma must be positive");
  if (y_gt.rank() != 2 || y_gt.rows() != out.y.rows() || y_gt.cols() != out.y.cols())
    throw ShapeError("nll_loss: y_gt shape does not match T_y(X)");
  Tensor per_row = scale(sum(square(out.y - y_gt), 1), 0.5 / (sigma * sigma)) - out.logdet;
  if (out.z.cols() > 0) per_row = per_row + scale(sum(square(out.z), 1), 0.5);
  return mean(per_row);
}

inline Tensor nll_loss(const FlowModel& model, const Tensor& x, const Tensor& y_gt, double sigma,
                       Tape* tape = nullptr) {
  return nll_from_output(model.forward(x, tape), y_gt, sigma);
}

/// Negative log-likelihood of data under a flow with a standard normal
/// latent (T maps data to latent), including the d/2 log 2 pi constant.
inline Tensor nf_nll(const FlowModel& model, const Tensor& x, Tape* tape = nullptr) {
  BlockResult r = model.forward_full(x, tape);
  const double c = 0.5 * static_cast<double>(model.dim()) * std::log(2.0 * std::numbers::pi);
  return shift(mean(scale(sum(square(r.out), 1), 0.5) - r.logdet), c);
}

/// mean |T_y(X) - Y|^2.
inline Tensor supervised_mse(const FlowModel& model, const Tensor& x, const Tensor& y, Tape* tape = nullptr) {
  FlowOutput out = model.forward(x, tape);
  if (y.rank() != 2 || y.rows() != out.y.rows() || y.cols() != out.y.cols())
    throw ShapeError("supervised_mse: Y shape does not match T_y(X)");
  return mean_row_sq_norm(out.y - y);
}

enum class PriorKind { gaussian, uniform };

/// Gaussian: mean |x_rec - x_true|^2. Uniform: mean over rows of the summed
/// hinge max(0, x - b) + max(0, a - x).
inline Tensor prior_loss_gaussian(const Tensor& x_rec, const Tensor& x_true) {
  if (x_rec.shape() != x_true.shape()) throw ShapeError("prior_loss: x_rec and x_true differ in shape");
  return mean_row_sq_norm(x_rec - x_true);
}

inline Tensor prior_loss_uniform(const Tensor& x_rec, double a, double b) {
  if (!(a < b)) throw DomainError("prior_loss: uniform bounds need a < b");
  Tensor hinge = relu(shift(x_rec, -b)) + relu(shift(neg(x_rec), a));
  return x_rec.rank() == 2 ? mean(sum(hinge, 1)) : mean(hinge);
}

/// Mean squared magnitude of padded output coordinates.
inline Tensor reconstruction_loss(const Tensor& z_pad) {
  if (z_pad.empty()) return Tensor::scalar(0.0);
  return mean(square(z_pad));
}

// ---------------------------------------------------------------------------
// MMD
// ---------------------------------------------------------------------------

enum class MmdEstimator { biased, unbiased };

/// Squared MMD with kernel exp(-gamma |x - x'|^2).
inline Tensor mmd2(const Tensor& x, const Tensor& y, double gamma, MmdEstimator est = MmdEstimator::biased) {
  if (!(gamma > 0.0)) throw DomainError("mmd2: gamma must be positive");
  if (x.rank() != 2 || y.rank() != 2 || x.rows() == 0 || y.rows() == 0) throw ShapeError("mmd2: empty sample set");
  if (x.cols() != y.cols()) throw ShapeError("mmd2: feature dimensions differ");
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  Tensor kxx = sum(exp(scale(sq_dist(x, x), -gamma)));
  Tensor kyy = sum(exp(scale(sq_dist(y, y), -gamma)));
  Tensor kxy = sum(exp(scale(sq_dist(x, y), -gamma)));
  if (est == MmdEstimator::biased) {
    return scale(kxx, 1.0 / (n * n)) + scale(kyy, 1.0 / (m * m)) - scale(kxy, 2.0 / (n * m));
  }
  if (x.rows() < 2 || y.rows() < 2) throw ShapeError("mmd2: unbiased estimator needs at least 2 samples per set");
  // The diagonal of each self-kernel is exactly 1.
  return scale(shift(kxx, -n), 1.0 / (n * (n - 1))) + scale(shift(kyy, -m), 1.0 / (m * (m - 1))) -
         scale(kxy, 2.0 / (n * m));
}

/// gamma = 1 / (2 median^2) over pairwise distances of the pooled sample
/// (distinct pairs only).
inline double median_heuristic_gamma(const Tensor& x, const Tensor& y) {
  std::vector<double> pooled;
  const std::size_t d = x.cols();
  auto add_rows = [&](const Tensor& t) { pooled.insert(pooled.end(), t.values().begin(), t.values().end()); };
  add_rows(x);
  add_rows(y);
  const std::size_t n = pooled.size() / d;
  std::vector<double> dist;
  dist.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double t = pooled[i * d + k] - pooled[j * d + k];
        s += t * t;
      }
      dist.push_back(std::sqrt(s));
    }
  if (dist.empty()) throw ShapeError("median_heuristic_gamma: need at least two points");
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  const double med = *mid;
  if (!(med > 0.0)) return 1.0;
  return 1.0 / (2.0 * med * med);
}

// ---------------------------------------------------------------------------
// Entropic optimal transport
// ---------------------------------------------------------------------------

struct SinkhornOptions {
  double epsilon = 0.1;
  std::size_t max_iter = 500;
  double tol = 1e-9;  // on the dual sup-norm change or the L1 marginal violation
};

struct SinkhornResult {
  std::vector<double> f, g;     // dual potentials
  std::vector<double> plan;     // n x m, row-major
  double transport_cost = 0.0;  // <plan, C>
  double objective = 0.0;       // <a, f> + <b, g>
  std::size_t iterations = 0;   // at the target epsilon
  double residual = 0.0;        // last sup-norm change of the potentials
};

namespace detail {

inline std::vector<double> sq_cost(const Tensor& x, const Tensor& y) {
  const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
  std::vector<double> c(n * m);
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double t = xv[i * d + k] - yv[j * d + k];
        s += t * t;
      }
      c[i * m + j] = s;
    }
  return c;
}

// f_i <- -eps log sum_j w_j exp((g_j - C_ij) / eps); returns sup-norm change.
inline double softmin_update(std::vector<double>& f, const std::vector<double>& g, const std::vector<double>& c,
                             bool transpose, std::size_t n, std::size_t m, double logw, double eps) {
  double change = 0.0;
  std::vector<double> terms(m);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const double cij = transpose ? c[j * n + i] : c[i * m + j];
      terms[j] = (g[j] - cij) / eps;
      mx = std::max(mx, terms[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(terms[j] - mx);
    const double next = -eps * (logw + mx + std::log(s));
    change = std::max(change, std::abs(next - f[i]));
    f[i] = next;
  }
  return change;
}

// Lexicographic order on (rows, cols, values), used to make the solver
// exactly symmetric in its arguments.
inline bool cloud_less(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  if (a.cols() != b.cols()) return a.cols() < b.cols();
  return std::lexicographical_compare(a.values().begin(), a.values().end(), b.values().begin(), b.values().end());
}

inline SinkhornResult transpose_result(SinkhornResult r, std::size_t n, std::size_t m) {
  std::swap(r.f, r.g);
  std::vector<double> p(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) p[i * m + j] = r.plan[j * n + i];
  r.plan = std::move(p);
  return r;
}

// Semi-dual Newton step on g with f eliminated exactly by a softmin update.
// Maximizes F(g) = <a, f(g)> + <b, g>, a smooth concave function whose
// gradient is the column-marginal violation; the gauge direction is removed
// by pinning the last coordinate. Returns the sup-norm change of (f, g), or
// the L1 marginal violation without stepping once that is below `tol`.
inline double newton_update(std::vector<double>& f, std::vector<double>& g, const std::vector<double>& c, std::size_t n,
                            std::size_t m, double loga, double logb, double eps, double tol) {
  auto value = [&](const std::vector<double>& gg, std::vector<double>& ff) {
    softmin_update(ff, gg, c, false, n, m, logb, eps);
    double v = 0.0;
    for (double x : ff) v += x;
    v /= static_cast<double>(n);
    for (double x : gg) v += x / static_cast<double>(m);
    return v;
  };
  std::vector<double> fg = f;
  const double v0 = value(g, fg);
  double change = 0.0;
  for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(fg[i] - f[i]));
  f = fg;
  Eigen::MatrixXd pi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::exp(loga + logb + (f[i] + g[j] - c[i * m + j]) / eps);
  const auto k = static_cast<Eigen::Index>(m) - 1;
  const Eigen::VectorXd col = pi.colwise().sum().transpose();
  const Eigen::VectorXd grad =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m)) - col;
  if (k == 0 || grad.lpNorm<1>() < tol) return grad.lpNorm<1>();
  // -eps H = diag(col) - pi^T diag(1/a) pi, positive semidefinite.
  Eigen::MatrixXd h = -(static_cast<double>(n) * pi.transpose() * pi);
  h.diagonal() += col;
  Eigen::MatrixXd hk = h.topLeftCorner(k, k) / eps;
  // Levenberg damping scaled by the marginal violation keeps steps bounded in
  // nearly flat directions while preserving fast local convergence.
  const double dmax = hk.diagonal().maxCoeff();
  hk.diagonal().array() += (0.1 * grad.head(k).norm() * static_cast<double>(m) + 1e-14) * dmax;
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  dir.head(k) = hk.ldlt().solve(grad.head(k));
  if (!dir.allFinite()) return std::numeric_limits<double>::infinity();
  std::vector<double> gt(m), ft(n);
  double t = 1.0;
  for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
    for (std::size_t j = 0; j < m; ++j) gt[j] = g[j] + t * dir(static_cast<Eigen::Index>(j));
    if (value(gt, ft) >= v0 - 1e-15 * std::abs(v0)) break;
  }
  for (std::size_t j = 0; j < m; ++j) change = std::max(change, std::abs(gt[j] - g[j]));
  for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(ft[i] - f[i]));
  g = std::move(gt);
  f = std::move(ft);
  return change;
}

inline constexpr std::size_t kSinkhornNewtonMax = 1024;

inline SinkhornResult sinkhorn_solve(const Tensor& x, const Tensor& y, const SinkhornOptions& opt) {
  const std::size_t n = x.rows(), m = y.rows();
  const std::vector<double> c = sq_cost(x, y);
  const double loga = -std::log(static_cast<double>(n)), logb = -std::log(static_cast<double>(m));
  SinkhornResult r;
  r.f.assign(n, 0.0);
  r.g.assign(m, 0.0);
  const double cmax = *std::max_element(c.begin(), c.end());
  // Epsilon scaling: anneal from the cost scale down to the target, warm
  // starting the potentials at each stage.
  double eps = std::max(cmax, opt.epsilon);
  while (eps > opt.epsilon) {
    for (int k = 0; k < 3; ++k) {
      softmin_update(r.f, r.g, c, false, n, m, logb, eps);
      softmin_update(r.g, r.f, c, true, m, n, loga, eps);
    }
    eps = std::max(opt.epsilon, eps * 0.5);
  }
  eps = opt.epsilon;
  // A few plain sweeps, then Newton polishing on the semi-dual when the
  // problem is small enough for a dense solve.
  const bool newton = m <= kSinkhornNewtonMax;
  double change = std::numeric_limits<double>::infinity();
  for (r.iterations = 0; r.iterations < opt.max_iter && change >= opt.tol; ++r.iterations) {
    if (newton && r.iterations >= 5) {
      change = newton_update(r.f, r.g, c, n, m, loga, logb, eps, opt.tol);
    } else {
      const double cf = softmin_update(r.f, r.g, c, false, n, m, logb, eps);
      const double cg = softmin_update(r.g, r.f, c, true, m, n, loga, eps);
      change = std::max(cf, cg);
    }
  }
  r.residual = change;
  if (change >= opt.tol) {
    throw ConvergenceError("sinkhorn: dual potentials did not converge at epsilon " + std::to_string(eps),
                           r.iterations, change);
  }
  r.plan.resize(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double p = std::exp(loga + logb + (r.f[i] + r.g[j] - c[i * m + j]) / eps);
      r.plan[i * m + j] = p;
      r.transport_cost += p * c[i * m + j];
    }
  for (std::size_t i = 0; i < n; ++i) r.objective += r.f[i] / static_cast<double>(n);
  for (std::size_t j = 0; j < m; ++j) r.objective += r.g[j] / static_cast<double>(m);
  return r;
}

}  // namespace detail

/// Log-domain Sinkhorn between uniform empirical measures with squared
/// Euclidean cost. Exactly symmetric: swapping the clouds transposes the plan.
inline SinkhornResult sinkhorn(const Tensor& x, const Tensor& y, const SinkhornOptions& opt = {}) {
  if (!(opt.epsilon > 0.0)) throw DomainError("sinkhorn: epsilon must be positive");
  if (x.rank() != 2 || y.rank() != 2 || x.rows() == 0 || y.rows() == 0) throw ShapeError("sinkhorn: empty cloud");
  if (x.cols() != y.cols()) throw ShapeError("sinkhorn: feature dimensions differ");
  if (detail::cloud_less(y, x)) return detail::transpose_result(detail::sinkhorn_solve(y, x, opt), x.rows(), y.rows());
  return detail::sinkhorn_solve(x, y, opt);
}

/// <pi*, C> at the entropic optimum.
inline double sinkhorn_cost(const Tensor& x, const Tensor& y, const SinkhornOptions& opt = {}) {
  return sinkhorn(x, y, opt).transport_cost;
}

/// Entropic OT value <a, f> + <b, g> = <pi*, C> + eps KL(pi* | a b^T),
/// differentiable in both clouds. Its gradient is exact at the optimum:
/// d/dx_i = sum_j pi_ij 2 (x_i - y_j).
inline Tensor entropic_ot(const Tensor& x, const Tensor& y, const SinkhornOptions& opt = {}) {
  SinkhornResult r = sinkhorn(x, y, opt);
  const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
  auto backward = [x, y, n, m, d, plan = std::move(r.plan)](const std::vector<double>& g, Tape& t) {
    const double s = g[0];
    auto xv = x.values();
    auto yv = y.values();
    std::vector<double> gx(t.wants_grad(x) ? n * d : 0, 0.0), gy(t.wants_grad(y) ? m * d : 0, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double p = plan[i * m + j];
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = 2.0 * p * (xv[i * d + k] - yv[j * d + k]) * s;
          if (!gx.empty()) gx[i * d + k] += diff;
          if (!gy.empty()) gy[j * d + k] -= diff;
        }
      }
    if (!gx.empty()) t.accumulate(x, gx);
    if (!gy.empty()) t.accumulate(y, gy);
  };
  return detail::finish("entropic_ot", Tensor::scalar(r.objective), detail::tape_of(x, y), {&x, &y},
                        std::move(backward));
}

/// Debiased divergence OT(X, Y) - 1/2 OT(X, X) - 1/2 OT(Y, Y).
inline Tensor sinkhorn_divergence(const Tensor& x, const Tensor& y, const SinkhornOptions& opt = {}) {
  return entropic_ot(x, y, opt) - scale(entropic_ot(x, x, opt), 0.5) - scale(entropic_ot(y, y, opt), 0.5);
}

}  // namespace vinn
