#pragma once

// Evaluation oracles independent of training: exact 1-D and small-instance
// Wasserstein distances, Gaussian KL, finite-support divergences, and
// numerical witnesses for the Pinsker-type and truncation inequalities.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vinn/errors.hpp"
#include "vinn/tensor.hpp"

namespace vinn {

namespace detail {
inline std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}
}  // namespace detail

/// Exact W1 between equal-size, equal-weight 1-D empirical measures.
inline double w1_1d(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw ShapeError("w1_1d: empty sample");
  if (x.size() != y.size()) throw ShapeError("w1_1d: sample counts differ");
  auto a = detail::sorted_copy(x), b = detail::sorted_copy(y);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Exact squared W2 between equal-size 1-D empirical measures.
inline double w2sq_1d(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || x.size() != y.size()) throw ShapeError("w2sq_1d: need equal nonzero counts");
  auto a = detail::sorted_copy(x), b = detail::sorted_copy(y);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

/// Minimum-cost perfect matching of a square cost matrix (row-major n x n)
/// by the O(n^3) shortest augmenting path method with dual potentials.
/// Returns assignment[row] = column.
inline std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw ShapeError("hungarian: cost matrix is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assign(n);
  for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

inline constexpr std::size_t kMaxAssignmentSize = 64;

/// Exact W1 between two equal-size uniform clouds (rows of X, Y) with the
/// Euclidean ground metric, by optimal assignment.
inline double w1_exact_small(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows() || x.cols() != y.cols())
    throw ShapeError("w1_exact_small: clouds must have equal shape");
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw ShapeError("w1_exact_small: empty cloud");
  if (n > kMaxAssignmentSize) throw ShapeError("w1_exact_small: at most 64 points");
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (x(i, k) - y(j, k)) * (x(i, k) - y(j, k));
      c[i * n + j] = std::sqrt(s);
    }
  auto assign = hungarian(c, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += c[i * n + assign[i]];
  return total / static_cast<double>(n);
}

/// KL(N(mu1, s1^2) || N(mu2, s2^2)).
inline double kl_gaussian(double mu1, double s1, double mu2, double s2) {
  if (!(s1 > 0.0 && s2 > 0.0)) throw DomainError("kl_gaussian: standard deviations must be positive");
  return std::log(s2 / s1) + (s1 * s1 + (mu1 - mu2) * (mu1 - mu2)) / (2.0 * s2 * s2) - 0.5;
}

// ---------------------------------------------------------------------------
// Finite-support measures
// ---------------------------------------------------------------------------

struct DiscreteDist {
  std::vector<std::vector<double>> atoms;  // k points in R^d
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  std::size_t dim() const noexcept { return atoms.empty() ? 0 : atoms.front().size(); }

  void validate() const {
    if (atoms.size() != probs.size() || atoms.empty()) throw ShapeError("DiscreteDist: atoms and probs differ");
    for (const auto& a : atoms)
      if (a.size() != dim()) throw ShapeError("DiscreteDist: atoms of unequal dimension");
    double s = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw DomainError("DiscreteDist: negative probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-12) throw DomainError("DiscreteDist: probabilities do not sum to 1");
  }
};

struct DiscreteDivergences {
  double kl = 0.0;
  double js = 0.0;  // 1/2 KL(p | m) + 1/2 KL(q | m), m = (p + q) / 2, natural log
  double tv = 0.0;
};

/// Direct finite sums over a shared atom list. KL requires p << q.
inline DiscreteDivergences discrete_divergences(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty()) throw ShapeError("discrete_divergences: probability vectors differ");
  DiscreteDivergences r;
  for (std::size_t i = 0; i < p.size(); ++i) {
    r.tv += 0.5 * std::abs(p[i] - q[i]);
    if (p[i] > 0.0) {
      if (q[i] == 0.0) throw DomainError("discrete_divergences: KL undefined, p is not absolutely continuous wrt q");
      r.kl += p[i] * std::log(p[i] / q[i]);
    }
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) r.js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) r.js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return r;
}

inline DiscreteDivergences discrete_divergences(const DiscreteDist& p, const DiscreteDist& q) {
  p.validate();
  q.validate();
  if (p.atoms != q.atoms) throw ShapeError("discrete_divergences: atom lists differ");
  return discrete_divergences(p.probs, q.probs);
}

struct InequalityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// TV <= sqrt(KL / 2).
inline InequalityCheck check_pinsker(const std::vector<double>& p, const std::vector<double>& q) {
  DiscreteDivergences d = discrete_divergences(p, q);
  InequalityCheck r{d.tv, std::sqrt(std::max(d.kl, 0.0) / 2.0), false};
  r.holds = r.lhs <= r.rhs + 1e-12;
  return r;
}

inline InequalityCheck check_pinsker(const DiscreteDist& p, const DiscreteDist& q) {
  p.validate();
  q.validate();
  if (p.atoms != q.atoms) throw ShapeError("check_pinsker: atom lists differ");
  return check_pinsker(p.probs, q.probs);
}

namespace detail {
inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}
}  // namespace detail

/// Exact W1 between discrete measures with arbitrary weights: the
/// transportation problem solved by successive shortest paths (Bellman-Ford on
/// the residual network). Each augmentation exhausts a supply or a demand, so
/// at most k1 + k2 augmentations are needed.
inline double w1_discrete_exact(const DiscreteDist& mu, const DiscreteDist& nu) {
  mu.validate();
  nu.validate();
  if (mu.dim() != nu.dim()) throw ShapeError("w1_discrete_exact: dimensions differ");
  const std::size_t k1 = mu.size(), k2 = nu.size();
  // Nodes: 0 = source, 1..k1 = mu atoms, k1+1..k1+k2 = nu atoms, k1+k2+1 = sink.
  struct Edge {
    std::size_t to;
    double cap, cost;
  };
  const std::size_t nodes = k1 + k2 + 2, src = 0, sink = k1 + k2 + 1;
  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> adj(nodes);
  auto add_edge = [&](std::size_t a, std::size_t b, double cap, double cost) {
    adj[a].push_back(edges.size());
    edges.push_back({b, cap, cost});
    adj[b].push_back(edges.size());
    edges.push_back({a, 0.0, -cost});
  };
  const double big = 4.0;  // exceeds any total mass
  for (std::size_t i = 0; i < k1; ++i) add_edge(src, 1 + i, mu.probs[i], 0.0);
  for (std::size_t j = 0; j < k2; ++j) add_edge(1 + k1 + j, sink, nu.probs[j], 0.0);
  for (std::size_t i = 0; i < k1; ++i)
    for (std::size_t j = 0; j < k2; ++j) add_edge(1 + i, 1 + k1 + j, big, detail::euclid(mu.atoms[i], nu.atoms[j]));
  const double inf = std::numeric_limits<double>::infinity();
  const double eps_cap = 1e-12;
  double total = 0.0, sent = 0.0;
  for (std::size_t round = 0; round < 4 * (k1 + k2) + 4; ++round) {
    std::vector<double> dist(nodes, inf);
    std::vector<std::size_t> prev_edge(nodes, SIZE_MAX);
    dist[src] = 0.0;
    for (std::size_t it = 0; it + 1 < nodes; ++it) {
      bool changed = false;
      for (std::size_t a = 0; a < nodes; ++a) {
        if (dist[a] == inf) continue;
        for (std::size_t e : adj[a]) {
          const Edge& ed = edges[e];
          if (ed.cap > eps_cap && dist[a] + ed.cost < dist[ed.to] - 1e-12) {
            dist[ed.to] = dist[a] + ed.cost;
            prev_edge[ed.to] = e;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (dist[sink] == inf) break;
    std::vector<std::size_t> path;
    for (std::size_t v = sink; v != src; v = edges[prev_edge[v] ^ 1].to) {
      if (path.size() > nodes) throw ConvergenceError("w1_discrete_exact: cyclic augmenting path", round, sent);
      path.push_back(prev_edge[v]);
    }
    double push = inf;
    for (std::size_t e : path) push = std::min(push, edges[e].cap);
    for (std::size_t e : path) {
      edges[e].cap -= push;
      edges[e ^ 1].cap += push;
      if (edges[e].cap < eps_cap) edges[e].cap = 0.0;
    }
    total += push * dist[sink];
    sent += push;
  }
  if (std::abs(sent - 1.0) > 1e-9) throw ConvergenceError("w1_discrete_exact: flow did not saturate", 0, 1.0 - sent);
  return total;
}

/// Exact W1 by splitting every atom into equal-mass units of size
/// 1/resolution and solving the resulting assignment problem. Requires every
/// probability to be a multiple of 1/resolution (to 1e-9).
inline double w1_discrete_split(const DiscreteDist& mu, const DiscreteDist& nu, std::size_t resolution = 120) {
  mu.validate();
  nu.validate();
  auto units = [&](const DiscreteDist& m) {
    std::vector<std::size_t> owner;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double u = m.probs[i] * static_cast<double>(resolution);
      const double r = std::round(u);
      if (std::abs(u - r) > 1e-9) throw DomainError("w1_discrete_split: probability is not a multiple of the unit mass");
      owner.insert(owner.end(), static_cast<std::size_t>(r), i);
    }
    return owner;
  };
  auto a = units(mu), b = units(nu);
  if (a.size() != resolution || b.size() != resolution) throw DomainError("w1_discrete_split: unit count mismatch");
  const std::size_t n = resolution;
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = detail::euclid(mu.atoms[a[i]], nu.atoms[b[j]]);
  auto assign = hungarian(c, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += c[i * n + assign[i]];
  return total / static_cast<double>(n);
}

/// Total variation between measures on possibly different atom lists
/// (identical atoms are merged).
inline double tv_distance(const DiscreteDist& mu, const DiscreteDist& nu) {
  std::vector<std::vector<double>> atoms;
  std::vector<double> diff;
  auto index_of = [&](const std::vector<double>& a) {
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (atoms[i] == a) return i;
    atoms.push_back(a);
    diff.push_back(0.0);
    return atoms.size() - 1;
  };
  for (std::size_t i = 0; i < mu.size(); ++i) diff[index_of(mu.atoms[i])] += mu.probs[i];
  for (std::size_t j = 0; j < nu.size(); ++j) diff[index_of(nu.atoms[j])] -= nu.probs[j];
  double s = 0.0;
  for (double v : diff) s += std::abs(v);
  return 0.5 * s;
}

struct TruncationCheck {
  double w1 = 0.0;
  double tv = 0.0;
  double moment = 0.0;  // R
  double c_a = 0.0;
  double bound = 0.0;
  bool holds = false;
};

inline double truncation_constant(double a) {
  return 2.0 * (std::pow(a, 1.0 / (1.0 + a)) + std::pow(a, -a / (1.0 + a)));
}

/// W1(mu, nu) <= C_a R^{1/(1+a)} TV^{a/(1+a)} with R the larger (1+a)-th
/// absolute moment.
inline TruncationCheck check_truncation_lemma(const DiscreteDist& mu, const DiscreteDist& nu, double a) {
  if (!(a > 0.0)) throw DomainError("check_truncation_lemma: moment exponent must be positive");
  mu.validate();
  nu.validate();
  if (mu.dim() > 3 || mu.size() > 10 || nu.size() > 10) throw ShapeError("check_truncation_lemma: instance too large");
  TruncationCheck r;
  r.w1 = w1_discrete_exact(mu, nu);
  r.tv = tv_distance(mu, nu);
  auto moment = [&](const DiscreteDist& m) {
    double s = 0.0;
    const std::vector<double> zero(m.dim(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) s += m.probs[i] * std::pow(detail::euclid(m.atoms[i], zero), 1.0 + a);
    return s;
  };
  r.moment = std::max(moment(mu), moment(nu));
  r.c_a = truncation_constant(a);
  r.bound = r.c_a * std::pow(r.moment, 1.0 / (1.0 + a)) * std::pow(r.tv, a / (1.0 + a));
  r.holds = r.w1 <= r.bound + 1e-9;
  return r;
}

}  // namespace vinn
