#pragma once

// Data generators and task metrics: planar-arm inverse kinematics, Pareto
// sources, uniform supports, resimulation error.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "vinn/errors.hpp"
#include "vinn/flows.hpp"
#include "vinn/random.hpp"
#include "vinn/training.hpp"

namespace vinn {

// ---------------------------------------------------------------------------
// Inverse kinematics
// ---------------------------------------------------------------------------

struct IKConfig {
  double l1 = 0.5, l2 = 0.5, l3 = 1.0;
  std::array<double, 4> sigmas{0.25, 0.5, 0.5, 0.5};

  void validate() const {
    if (!(l1 > 0 && l2 > 0 && l3 > 0)) throw ConfigError("ik: segment lengths must be positive");
    for (double s : sigmas)
      if (!(s > 0)) throw ConfigError("ik: prior standard deviations must be positive");
  }
};

/// End-effector position of the rail-mounted three-segment arm.
inline std::array<double, 2> ik_forward(const IKConfig& c, const std::array<double, 4>& x) {
  const double a = x[1], b = x[2] - x[1], g = x[3] - x[1] - x[2];
  return {x[0] + c.l1 * std::sin(a) + c.l2 * std::sin(b) + c.l3 * std::sin(g),
          c.l1 * std::cos(a) + c.l2 * std::cos(b) + c.l3 * std::cos(g)};
}

/// Row-wise forward kinematics of an n x 4 batch.
inline Tensor ik_forward(const IKConfig& c, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != 4) throw ShapeError("ik_forward: expected n x 4 input");
  Tensor y(Shape{x.rows(), 2});
  auto yv = y.mutable_values();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = ik_forward(c, {x(i, 0), x(i, 1), x(i, 2), x(i, 3)});
    yv[2 * i] = r[0];
    yv[2 * i + 1] = r[1];
  }
  return y;
}

struct Dataset {
  Tensor x;
  Tensor y;
};

/// X ~ N(0, diag(sigma^2)), Y = ik_forward(X), noiseless.
inline Dataset ik_generate(const IKConfig& c, std::size_t n, Rng& rng) {
  c.validate();
  if (n == 0) throw DomainError("ik_generate: n must be at least 1");
  Tensor x(Shape{n, 4});
  auto xv = x.mutable_values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 4; ++j) xv[i * 4 + j] = rng.normal(0.0, c.sigmas[j]);
  return {x, ik_forward(c, x)};
}

/// Mean over rows of |ik_forward(x_hat) - y*|_2.
inline double resim_error(const IKConfig& c, const Tensor& samples, const std::array<double, 2>& y_star) {
  Tensor y = ik_forward(c, samples);
  double s = 0.0;
  for (std::size_t i = 0; i < y.rows(); ++i) s += std::hypot(y(i, 0) - y_star[0], y(i, 1) - y_star[1]);
  return s / static_cast<double>(y.rows());
}

/// Resimulation error of n posterior samples drawn from a trained model.
inline double resim_error(const IKConfig& c, const FlowModel& model, const std::array<double, 2>& y_star,
                          std::size_t n, const LatentSampler& latent, Rng& rng, const PaddingSpec& padding = {}) {
  Tensor xs = sample_posterior(model, {y_star[0], y_star[1]}, n, latent, rng, padding);
  return resim_error(c, xs, y_star);
}

// ---------------------------------------------------------------------------
// Pareto and uniform sources
// ---------------------------------------------------------------------------

struct ParetoConfig {
  double alpha = 2.0;
  double x_m = 1.0;
  std::size_t dim = 2;

  void validate() const {
    if (!(alpha > 0.0 && x_m > 0.0)) throw ConfigError("pareto: alpha and x_m must be positive");
    if (dim == 0) throw ConfigError("pareto: dim must be positive");
  }
};

/// Inverse CDF x_m (1 - u)^{-1/alpha}.
inline double pareto_quantile(const ParetoConfig& c, double u) { return c.x_m * std::pow(1.0 - u, -1.0 / c.alpha); }

inline Tensor pareto_sample(const ParetoConfig& c, std::size_t n, Rng& rng) {
  c.validate();
  Tensor t(Shape{n, c.dim});
  for (double& v : t.mutable_values()) v = pareto_quantile(c, rng.uniform());
  return t;
}

inline double pareto_pdf(const ParetoConfig& c, double x) {
  c.validate();
  if (x < c.x_m) return 0.0;
  return c.alpha * std::pow(c.x_m, c.alpha) / std::pow(x, c.alpha + 1.0);
}

inline Tensor uniform_sample(double a, double b, std::size_t n, std::size_t dim, Rng& rng) {
  if (!(a < b)) throw DomainError("uniform_sample: need a < b");
  return rng.uniform_tensor(Shape{n, dim}, a, b);
}

/// Empirical p-th absolute moment of all entries.
inline double empirical_moment(const Tensor& x, double p) {
  double s = 0.0;
  for (double v : x.values()) s += std::pow(std::abs(v), p);
  return s / static_cast<double>(x.size());
}

/// Per-column affine map (x - shift) / scale, fitted as shift = x_m and scale
/// = interquartile range of the training column.
struct Standardizer {
  std::vector<double> shift, scale;

  static Standardizer fit_pareto(const Tensor& train, double x_m) {
    Standardizer s;
    const std::size_t n = train.rows(), d = train.cols();
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = train(i, j);
      std::sort(col.begin(), col.end());
      const double q1 = col[n / 4], q3 = col[(3 * n) / 4];
      s.shift.push_back(x_m);
      s.scale.push_back(q3 > q1 ? q3 - q1 : 1.0);
    }
    return s;
  }

  Tensor apply(const Tensor& x) const {
    Tensor out = x.detach();
    auto v = out.mutable_values();
    const std::size_t d = x.cols();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - shift[i % d]) / scale[i % d];
    return out;
  }

  Tensor invert(const Tensor& x) const {
    Tensor out = x.detach();
    auto v = out.mutable_values();
    const std::size_t d = x.cols();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] * scale[i % d] + shift[i % d];
    return out;
  }
};

/// Writes a dataset as CSV with header x1..xd,y1..yk.
inline void write_dataset_csv(const std::string& path, const Tensor& x, const Tensor* y = nullptr) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset to " + path);
  out.precision(17);
  for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "," : "") << "x" << j + 1;
  if (y)
    for (std::size_t j = 0; j < y->cols(); ++j) out << ",y" << j + 1;
  out << "\n";
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "," : "") << x(i, j);
    if (y)
      for (std::size_t j = 0; j < y->cols(); ++j) out << "," << (*y)(i, j);
    out << "\n";
  }
}

}  // namespace vinn
