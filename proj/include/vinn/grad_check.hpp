#pragma once

// Finite-difference oracles for gradients and Jacobians.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "vinn/ops.hpp"

namespace vinn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

namespace detail {

inline void fold_error(GradCheckReport& r, std::size_t i, double analytic, double central) {
  const double abs_err = std::abs(analytic - central);
  const double rel = abs_err / (std::abs(central) + 1e-12);
  r.max_abs_error = std::max(r.max_abs_error, abs_err);
  if (rel > r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst_index = i;
  }
  r.analytic.push_back(analytic);
  r.numeric.push_back(central);
}

inline double finite_scalar(const Tensor& t) {
  const double v = t.item();
  if (!std::isfinite(v)) throw NonFiniteError("grad_check: non-finite function value");
  return v;
}

}  // namespace detail

/// Compares the reverse-mode gradient of a scalar function with central
/// differences (f(θ + h e_i) - f(θ - h e_i)) / 2h, coordinate by coordinate.
/// `f` receives a tracked tensor for the analytic pass and plain tensors for
/// the numeric passes.
inline GradCheckReport grad_check_report(const std::function<Tensor(const Tensor&)>& f, const Tensor& theta,
                                         double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("grad_check: step must be positive");
  Tape tape;
  Tensor x = tape.leaf(theta);
  Tensor out = f(x);
  detail::finite_scalar(out);
  std::vector<double> analytic(theta.size(), 0.0);
  if (out.tracked()) {
    tape.backward(out);
    Tensor g = tape.gradient(x);
    analytic.assign(g.values().begin(), g.values().end());
  }
  GradCheckReport report;
  Tensor probe = theta.detach();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    probe.mutable_values()[i] = orig + h;
    const double fp = detail::finite_scalar(f(probe));
    probe.mutable_values()[i] = orig - h;
    const double fm = detail::finite_scalar(f(probe));
    probe.mutable_values()[i] = orig;
    detail::fold_error(report, i, analytic[i], (fp - fm) / (2.0 * h));
  }
  return report;
}

/// Max relative error between analytic and central-difference gradients.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& theta, double h = 1e-5) {
  return grad_check_report(f, theta, h).max_rel_error;
}

/// Same check with respect to a set of parameters: `f(tape)` builds the loss
/// using `use(param, tape)`; it is called with a tape once and with nullptr for
/// every perturbed evaluation. Parameters are restored afterwards.
inline GradCheckReport grad_check_parameters(const std::function<Tensor(Tape*)>& f,
                                             const std::vector<Parameter*>& params, double h = 1e-5) {
  if (!(h > 0.0)) throw DomainError("grad_check: step must be positive");
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor out = f(&tape);
    detail::finite_scalar(out);
    if (out.tracked()) tape.backward(out);
    for (const Parameter* p : params) {
      Tensor g = tape.gradient(*p);
      analytic.insert(analytic.end(), g.values().begin(), g.values().end());
    }
  }
  GradCheckReport report;
  std::size_t k = 0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i, ++k) {
      const double orig = p->value[i];
      p->value.mutable_values()[i] = orig + h;
      const double fp = detail::finite_scalar(f(nullptr));
      p->value.mutable_values()[i] = orig - h;
      const double fm = detail::finite_scalar(f(nullptr));
      p->value.mutable_values()[i] = orig;
      detail::fold_error(report, k, analytic[k], (fp - fm) / (2.0 * h));
    }
  }
  return report;
}

/// Central-difference Jacobian of a map R^d -> R^d evaluated at a single point
/// x (length d); row i holds d f_i / d x_j.
inline Eigen::MatrixXd numeric_jacobian(const std::function<std::vector<double>(const std::vector<double>&)>& f,
                                        const std::vector<double>& x, double h = 1e-6) {
  const auto d_in = x.size();
  const auto d_out = f(x).size();
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
  std::vector<double> probe = x;
  for (std::size_t j = 0; j < d_in; ++j) {
    probe[j] = x[j] + h;
    const auto fp = f(probe);
    probe[j] = x[j] - h;
    const auto fm = f(probe);
    probe[j] = x[j];
    for (std::size_t i = 0; i < d_out; ++i)
      jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return jac;
}

/// log|det A| through a partially pivoted LU factorization.
inline double log_abs_det(const Eigen::MatrixXd& a) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::MatrixXd& m = lu.matrixLU();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) acc += std::log(std::abs(m(i, i)));
  return acc;
}

}  // namespace vinn
