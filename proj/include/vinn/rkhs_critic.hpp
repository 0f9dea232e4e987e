#pragma once

// Gaussian-RKHS critic ball truncated to a cube, a Donsker-Varadhan style KL
// estimator over that class, and the growth schedule for its parameters.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "vinn/errors.hpp"
#include "vinn/tensor.hpp"

namespace vinn {

/// h(x) = 1{|x|_inf <= K} sum_i alpha_i exp(-gamma |c_i - x|^2), |h|_k <= b.
struct RKHSCritic {
  Eigen::MatrixXd centers;  // m x d
  Eigen::VectorXd alpha;    // m
  double gamma = 1.0;
  double b = 1.0;
  double K = 1.0;
  Eigen::MatrixXd gram_cache;  // m x m

  std::size_t size() const { return static_cast<std::size_t>(centers.rows()); }
};

namespace detail {
inline Eigen::MatrixXd to_eigen(const Tensor& t) {
  require_rank2("rkhs", t);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t(i, j);
  return m;
}

/// exp(-gamma |a_i - b_j|^2) for all pairs.
inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd k = -2.0 * a * b.transpose();
  k.colwise() += na;
  k.rowwise() += nb.transpose();
  return (-gamma * k.cwiseMax(0.0)).array().exp().matrix();
}

inline bool in_cube(const Eigen::RowVectorXd& x, double K) { return x.cwiseAbs().maxCoeff() <= K; }
}  // namespace detail

inline Eigen::MatrixXd gram(const Eigen::MatrixXd& centers, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("gram: gamma must be positive");
  return detail::kernel_matrix(centers, centers, gamma);
}

inline Eigen::MatrixXd gram(const Tensor& centers, double gamma) { return gram(detail::to_eigen(centers), gamma); }

/// sqrt(alpha^T G alpha), negative rounding clipped at zero.
inline double rkhs_norm(const Eigen::VectorXd& alpha, const Eigen::MatrixXd& g) {
  if (alpha.size() != g.rows() || g.rows() != g.cols()) throw ShapeError("rkhs_norm: size mismatch");
  return std::sqrt(std::max(0.0, alpha.dot(g * alpha)));
}

inline RKHSCritic make_rkhs_critic(const Eigen::MatrixXd& centers, double gamma, double b, double K) {
  if (!(gamma > 0.0) || !(b > 0.0) || !(K > 0.0)) throw DomainError("rkhs critic: gamma, b, K must be positive");
  RKHSCritic c;
  c.centers = centers;
  c.alpha = Eigen::VectorXd::Zero(centers.rows());
  c.gamma = gamma;
  c.b = b;
  c.K = K;
  c.gram_cache = gram(centers, gamma);
  return c;
}

inline double rkhs_norm(const RKHSCritic& c) { return rkhs_norm(c.alpha, c.gram_cache); }

/// Radial projection onto the ball of radius b.
inline void project_ball(RKHSCritic& c) {
  const double nrm = rkhs_norm(c);
  if (nrm > c.b) c.alpha *= c.b / nrm;
}

/// Critic values at the rows of x.
inline Eigen::VectorXd critic_eval(const RKHSCritic& c, const Eigen::MatrixXd& x) {
  if (x.cols() != c.centers.cols()) throw ShapeError("critic_eval: dimension mismatch");
  Eigen::VectorXd h = detail::kernel_matrix(x, c.centers, c.gamma) * c.alpha;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    if (!detail::in_cube(x.row(i), c.K)) h(i) = 0.0;
  return h;
}

inline Eigen::VectorXd critic_eval(const RKHSCritic& c, const Tensor& x) { return critic_eval(c, detail::to_eigen(x)); }

// ---------------------------------------------------------------------------
// Parameter schedule
// ---------------------------------------------------------------------------

struct ScheduleParams {
  double K = 0.0;
  double gamma = 0.0;
  double b = 0.0;
};

/// K = M (s sqrt(H) + B) + sqrt(d) + sqrt(2 log n), gamma = K^{2+eps},
/// b = C_b gamma^{d/4} K^{2 + d/2}.
inline ScheduleParams schedule_params(double n, double M, double s, double H, double B, double d, double eps,
                                      double C_b) {
  if (!(n >= 2.0)) throw DomainError("schedule_params: n must be at least 2");
  if (!(s > 0.0 && s < 1.0)) throw DomainError("schedule_params: s must lie in (0, 1)");
  if (!(eps > 0.0)) throw DomainError("schedule_params: epsilon must be positive");
  if (!(M >= 0.0 && H >= 0.0 && B >= 0.0 && d >= 1.0 && C_b > 0.0))
    throw DomainError("schedule_params: M, H, B must be nonnegative, d >= 1, C_b > 0");
  ScheduleParams p;
  p.K = M * (s * std::sqrt(H) + B) + std::sqrt(d) + std::sqrt(2.0 * std::log(n));
  p.gamma = std::pow(p.K, 2.0 + eps);
  p.b = C_b * std::pow(p.gamma, d / 4.0) * std::pow(p.K, 2.0 + d / 2.0);
  return p;
}

// ---------------------------------------------------------------------------
// KL estimation over the critic ball
// ---------------------------------------------------------------------------

struct DvOptions {
  double gamma = 0.5;
  double b = 8.0;
  double K = 8.0;
  std::size_t steps = 300;
  double lr = 0.05;
  std::optional<std::vector<double>> p_weights;  // default uniform
  std::optional<std::vector<double>> q_weights;
  std::optional<Eigen::MatrixXd> extra_centers;  // appended to the center set
};

struct DvResult {
  double estimate = 0.0;
  RKHSCritic critic;
};

inline constexpr double kDvClip = 30.0;

/// Maximizes sum_i w_i h(p_i) - sum_j v_j e^{h(q_j)} + 1 over the critic ball
/// by functional gradient ascent in the RKHS followed by projection onto the
/// ball after every step. Centers are the union of both sample sets (plus any
/// extra centers); only in-cube samples ever receive coefficient mass.
inline DvResult dv_kl_estimate(const Tensor& samples_p, const Tensor& samples_q, const DvOptions& opt = {}) {
  if (samples_p.rank() != 2 || samples_q.rank() != 2 || samples_p.cols() != samples_q.cols())
    throw ShapeError("dv_kl_estimate: sample sets must share the feature dimension");
  const auto n = static_cast<Eigen::Index>(samples_p.rows()), m = static_cast<Eigen::Index>(samples_q.rows());
  if (n == 0 || m == 0) throw ShapeError("dv_kl_estimate: empty sample set");
  auto weights = [](const std::optional<std::vector<double>>& w, Eigen::Index k) {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    if (w) {
      if (static_cast<Eigen::Index>(w->size()) != k) throw ShapeError("dv_kl_estimate: weight count mismatch");
      double s = 0.0;
      for (Eigen::Index i = 0; i < k; ++i) s += out(i) = (*w)[static_cast<std::size_t>(i)];
      if (!(s > 0.0)) throw DomainError("dv_kl_estimate: weights must have positive mass");
      out /= s;
    }
    return out;
  };
  const Eigen::VectorXd wp = weights(opt.p_weights, n), wq = weights(opt.q_weights, m);
  Eigen::MatrixXd samples(n + m, samples_p.cols());
  samples << detail::to_eigen(samples_p), detail::to_eigen(samples_q);
  Eigen::MatrixXd centers = samples;
  if (opt.extra_centers) {
    if (opt.extra_centers->cols() != samples.cols()) throw ShapeError("dv_kl_estimate: extra centers dimension");
    centers.conservativeResize(samples.rows() + opt.extra_centers->rows(), Eigen::NoChange);
    centers.bottomRows(opt.extra_centers->rows()) = *opt.extra_centers;
  }
  DvResult res;
  res.critic = make_rkhs_critic(centers, opt.gamma, opt.b, opt.K);
  RKHSCritic& c = res.critic;
  std::vector<char> inside(static_cast<std::size_t>(n + m));
  for (Eigen::Index i = 0; i < n + m; ++i) inside[static_cast<std::size_t>(i)] = detail::in_cube(samples.row(i), opt.K);
  // Sample rows are the first n + m centers, so the sample/center kernel is a
  // block of the cached Gram matrix.
  auto kernel = c.gram_cache.topRows(n + m);

  auto objective = [&](const Eigen::VectorXd& h) {
    double val = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) val += wp(i) * h(i);
    for (Eigen::Index j = 0; j < m; ++j) val -= wq(j) * std::exp(std::clamp(h(n + j), -kDvClip, kDvClip));
    return val;
  };
  auto values = [&]() {
    Eigen::VectorXd h = kernel * c.alpha;
    for (Eigen::Index i = 0; i < n + m; ++i)
      if (!inside[static_cast<std::size_t>(i)]) h(i) = 0.0;
    return h;
  };

  Eigen::VectorXd h = values();
  for (std::size_t step = 0; step < opt.steps; ++step) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (inside[static_cast<std::size_t>(i)]) c.alpha(i) += opt.lr * wp(i);
    for (Eigen::Index j = 0; j < m; ++j)
      if (inside[static_cast<std::size_t>(n + j)])
        c.alpha(n + j) -= opt.lr * wq(j) * std::exp(std::clamp(h(n + j), -kDvClip, kDvClip));
    project_ball(c);
    h = values();
  }
  res.estimate = objective(h);
  if (!std::isfinite(res.estimate)) throw NonFiniteError("dv_kl_estimate: non-finite objective");
  return res;
}

}  // namespace vinn
