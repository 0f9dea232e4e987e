#pragma once

// Invariant suite: invertibility, log-determinant and gradient oracles, OT
// consistency, exact transport agreement and inequality witnesses on random
// instances. Each check reports its worst statistic against a threshold.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vinn/divergences.hpp"
#include "vinn/flows.hpp"
#include "vinn/grad_check.hpp"
#include "vinn/metrics.hpp"
#include "vinn/random.hpp"

namespace vinn {

struct CheckStat {
  std::string name;
  double value = 0.0;      // worst observed statistic
  double threshold = 0.0;  // pass when value < threshold (or the check's own rule)
  bool passed = false;
  std::string detail;
};

struct CheckSuite {
  std::string name;
  std::vector<CheckStat> stats;
  double wall_time_s = 0.0;

  bool passed() const {
    return std::all_of(stats.begin(), stats.end(), [](const CheckStat& s) { return s.passed; });
  }
};

namespace detail {

inline void randomize_mlp(Mlp& m, Rng& rng, double scale) {
  for (auto& l : m.layers) {
    for (double& w : l.weight.value.mutable_values()) w = rng.normal(0.0, scale);
    for (double& w : l.bias.value.mutable_values()) w = rng.normal(0.0, scale / 2);
  }
}

inline CouplingBlock random_coupling_block(std::size_t d, std::size_t hidden, Rng& rng, double scale) {
  CouplingOptions opts;
  opts.activation = Activation::tanh;
  CouplingBlock b = make_coupling_block(d, hidden, rng, opts);
  for (Mlp* m : {&b.s1, &b.t1, &b.s2, &b.t2}) randomize_mlp(*m, rng, scale);
  return b;
}

inline IResNetBlock random_iresnet_block(std::size_t d, std::size_t hidden, double s, Rng& rng) {
  IResNetBlock b = make_iresnet_block(d, hidden, s, rng, InitMode::standard_normal);
  for (double& v : b.b1.value.mutable_values()) v = rng.normal(0.0, 0.5);
  for (double& v : b.b2.value.mutable_values()) v = rng.normal(0.0, 0.5);
  return b;
}

inline CheckStat below(std::string name, double value, double threshold, std::string detail = {}) {
  return {std::move(name), value, threshold, value < threshold, std::move(detail)};
}

inline std::vector<double> row_of(const Tensor& x, std::size_t i) {
  std::vector<double> r(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) r[j] = x(i, j);
  return r;
}

}  // namespace detail

/// Round trips of random coupling stacks (d <= 16, <= 6 blocks) and random
/// iResNet stacks (s <= 0.7, fixed-point tol 1e-10).
inline CheckSuite check_invertibility(std::uint64_t seed, std::size_t models = 100) {
  CheckSuite suite{"invertibility", {}, 0.0};
  Rng rng = Rng(seed).child("invertibility");
  double worst_c = 0.0, worst_r = 0.0;
  for (std::size_t k = 0; k < models; ++k) {
    const std::size_t d = 2 + rng.index(15), blocks = 1 + rng.index(6);
    FlowModel m(d, d / 2);
    for (std::size_t b = 0; b < blocks; ++b) {
      if (b > 0) m.add(Permutation::reverse(d));
      m.add(detail::random_coupling_block(d, 8, rng, 0.6));
    }
    Tensor x = rng.normal_tensor(Shape{16, d});
    worst_c = std::max(worst_c, max_abs_diff(m.inverse_full(m.forward_full(x).out), x));
  }
  for (std::size_t k = 0; k < models; ++k) {
    const std::size_t d = 2 + rng.index(15), blocks = 1 + rng.index(6);
    const double s = 0.1 + 0.6 * rng.uniform();
    FlowModel m(d, d / 2);
    for (std::size_t b = 0; b < blocks; ++b) {
      IResNetBlock blk = detail::random_iresnet_block(d, 8, s, rng);
      blk.tol = 1e-10;
      m.add(std::move(blk));
    }
    Tensor x = rng.normal_tensor(Shape{16, d});
    worst_r = std::max(worst_r, max_abs_diff(m.inverse_full(m.forward_full(x).out), x));
  }
  suite.stats.push_back(detail::below("coupling_roundtrip_max_abs", worst_c, 1e-10));
  suite.stats.push_back(detail::below("iresnet_roundtrip_max_abs", worst_r, 1e-7));
  return suite;
}

/// Analytic log-determinants of random mixed stacks against log|det| of a
/// central-difference Jacobian.
inline CheckSuite check_logdet(std::uint64_t seed, std::size_t models = 50, std::size_t rows = 3) {
  CheckSuite suite{"logdet", {}, 0.0};
  Rng rng = Rng(seed).child("logdet");
  const std::size_t dims[] = {2, 4, 8};
  double worst = 0.0;
  for (std::size_t k = 0; k < models; ++k) {
    const std::size_t d = dims[k % 3];
    FlowModel m(d, d / 2);
    const std::size_t blocks = 2 + rng.index(3);
    for (std::size_t b = 0; b < blocks; ++b) {
      if (rng.uniform() < 0.5) m.add(detail::random_coupling_block(d, 8, rng, 0.5));
      else m.add(detail::random_iresnet_block(d, 8, 0.3 + 0.4 * rng.uniform(), rng));
      if (rng.uniform() < 0.5) m.add(Permutation::reverse(d));
    }
    Tensor x = rng.normal_tensor(Shape{rows, d});
    Tensor logdet = m.forward_full(x).logdet;
    for (std::size_t i = 0; i < rows; ++i) {
      auto map = [&](const std::vector<double>& v) {
        Tensor out = m.forward_full(Tensor::matrix(1, d, v)).out;
        return std::vector<double>(out.values().begin(), out.values().end());
      };
      const double numeric = log_abs_det(numeric_jacobian(map, detail::row_of(x, i), 1e-6));
      worst = std::max(worst, std::abs(logdet[i] - numeric) / (std::abs(numeric) + 1e-6));
    }
  }
  suite.stats.push_back(detail::below("logdet_rel_error", worst, 1e-4));
  return suite;
}

/// Reverse-mode gradients of every training loss with respect to the
/// parameters of a two-block d = 4 model against central differences.
inline CheckSuite check_loss_gradients(std::uint64_t seed) {
  CheckSuite suite{"gradients", {}, 0.0};
  Rng rng = Rng(seed).child("gradients");
  FlowModel m(4, 2);
  m.add(detail::random_coupling_block(4, 4, rng, 0.4));
  m.add(Permutation::reverse(4));
  m.add(detail::random_coupling_block(4, 4, rng, 0.4));
  Mlp critic = make_mlp({4, 8, 8, 1}, Activation::tanh, InitMode::scaled, rng);
  const std::size_t n = 5;
  Tensor x = rng.normal_tensor(Shape{n, 4});
  Tensor y = rng.normal_tensor(Shape{n, 2});
  Tensor z = rng.normal_tensor(Shape{n, 2});
  Tensor x2 = slice_cols(x, 0, 2);
  auto params = m.parameters();
  auto run = [&](const std::string& name, const std::function<Tensor(Tape*)>& f) {
    suite.stats.push_back(detail::below(name, grad_check_parameters(f, params).max_rel_error, 1e-4));
  };
  run("nll", [&](Tape* t) { return nll_loss(m, x, y, 0.7, t); });
  run("nf_nll", [&](Tape* t) { return nf_nll(m, x, t); });
  run("mse", [&](Tape* t) { return supervised_mse(m, x, y, t); });
  for (FDivergence kind : {FDivergence::kl, FDivergence::reverse_kl, FDivergence::js}) {
    const FDivergenceSpec spec{kind};
    run("fdiv_backward_" + spec.name(), [&](Tape* t) { return inn_backward_loss(m, critic, spec, x, y, z, t); });
    run("fdiv_forward_" + spec.name(), [&](Tape* t) { return inn_forward_loss(m, critic, spec, x, y, z, t); });
    run("fdiv_latent_" + spec.name(),
        [&](Tape* t) { return inn_unsup_loss_lz(m, critic, spec, x, y, z, t, Pairing::y_model); });
  }
  run("mmd", [&](Tape* t) { return mmd2(m.inverse(y, z, t), x, 0.4); });
  const SinkhornOptions sk{0.5, 5000, 1e-12};
  run("sinkhorn_divergence", [&](Tape* t) { return sinkhorn_divergence(m.inverse(y, z, t), x, sk); });
  run("sinkhorn_approx", [&](Tape* t) { return entropic_ot(m.inverse(y, z, t), x, sk); });
  run("prior_gaussian", [&](Tape* t) { return prior_loss_gaussian(slice_cols(m.inverse(y, z, t), 0, 2), x2); });
  // Wide box keeps every entry inside one linear piece of the hinge.
  run("prior_uniform_hinge", [&](Tape* t) { return prior_loss_uniform(m.inverse(y, z, t), -100.0, -90.0); });
  run("reconstruction", [&](Tape* t) { return reconstruction_loss(slice_cols(m.inverse(y, z, t), 2, 4)); });
  return suite;
}

/// |sinkhorn_cost - exact W2^2| strictly decreasing over eps in {1, 0.1,
/// 0.01} on fixed 1-D clouds, and the debiased divergence vanishing on X, X.
inline CheckSuite check_sinkhorn_consistency(std::uint64_t seed, std::size_t n = 64) {
  CheckSuite suite{"sinkhorn", {}, 0.0};
  Rng rng = Rng(seed).child("sinkhorn");
  Tensor x = rng.normal_tensor(Shape{n, 1});
  Tensor y = rng.normal_tensor(Shape{n, 1}, 1.0, 1.5);
  const double w2 = w2sq_1d(x.values(), y.values());
  std::vector<double> err;
  double self = 0.0;
  for (double eps : {1.0, 0.1, 0.01}) {
    err.push_back(std::abs(sinkhorn_cost(x, y, {eps}) - w2));
    self = std::max(self, std::abs(sinkhorn_divergence(x, x, {eps}).item()));
  }
  const bool decreasing = err[1] < err[0] && err[2] < err[1];
  suite.stats.push_back({"cost_gap_eps_0.01", err[2], err[1], decreasing,
                         "gaps " + std::to_string(err[0]) + " > " + std::to_string(err[1]) + " > " +
                             std::to_string(err[2])});
  suite.stats.push_back(detail::below("self_divergence", self, 1e-8));
  return suite;
}

/// Assignment-based W1 against the sorted 1-D formula, and metric axioms on
/// random triples.
inline CheckSuite check_exact_ot(std::uint64_t seed, std::size_t clouds = 100) {
  CheckSuite suite{"exact_ot", {}, 0.0};
  Rng rng = Rng(seed).child("exact_ot");
  double worst_1d = 0.0, axiom = 0.0;
  for (std::size_t k = 0; k < clouds; ++k) {
    const std::size_t n = 1 + rng.index(40);
    Tensor a = rng.normal_tensor(Shape{n, 1}), b = rng.normal_tensor(Shape{n, 1}, rng.normal(), 2.0);
    worst_1d = std::max(worst_1d, std::abs(w1_exact_small(a, b) - w1_1d(a.values(), b.values())));
  }
  for (std::size_t k = 0; k < clouds; ++k) {
    const std::size_t n = 2 + rng.index(12), d = 1 + rng.index(3);
    Tensor a = rng.normal_tensor(Shape{n, d}), b = rng.normal_tensor(Shape{n, d}, 0.5),
           c = rng.normal_tensor(Shape{n, d}, 0.0, 2.0);
    const double ab = w1_exact_small(a, b), ba = w1_exact_small(b, a), bc = w1_exact_small(b, c),
                 ac = w1_exact_small(a, c);
    axiom = std::max({axiom, std::abs(w1_exact_small(a, a)), std::abs(ab - ba), ac - (ab + bc), -ab});
  }
  suite.stats.push_back(detail::below("w1_vs_1d_max_abs", worst_1d, 1e-12));
  suite.stats.push_back(detail::below("metric_axiom_violation", axiom, 1e-9));
  return suite;
}

namespace detail {

/// Random measure on a shared pool with masses that are multiples of 1/120.
inline DiscreteDist lattice_dist(Rng& rng, const std::vector<std::vector<double>>& pool, std::size_t k) {
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.index(pool.size() - i)]);
  std::vector<int> units(k, 0);
  for (int u = 0; u < 120; ++u) ++units[rng.index(k)];
  DiscreteDist d;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    if (units[i] > 0) {
      d.atoms.push_back(pool[idx[i]]);
      d.probs.push_back(units[i] / 120.0);
      acc += units[i] / 120.0;
    }
  d.probs.back() += 1.0 - acc;
  return d;
}

}  // namespace detail

/// Pinsker on random discrete pairs and the truncation lemma on random pairs
/// for a in {0.5, 1, 2}, plus the unit-distance hand case.
inline CheckSuite check_inequalities(std::uint64_t seed, std::size_t pinsker_pairs = 1000,
                                     std::size_t truncation_pairs = 200) {
  CheckSuite suite{"inequalities", {}, 0.0};
  Rng rng = Rng(seed).child("inequalities");
  double pinsker_slack = -1e300;
  for (std::size_t k = 0; k < pinsker_pairs; ++k) {
    const std::size_t m = 2 + rng.index(8);
    std::vector<double> p(m), q(m);
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      sp += p[i] = rng.uniform() + 1e-3;
      sq += q[i] = rng.uniform() + 1e-3;
    }
    for (std::size_t i = 0; i < m; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    const auto c = check_pinsker(p, q);
    pinsker_slack = std::max(pinsker_slack, c.lhs - c.rhs);
  }
  suite.stats.push_back({"pinsker_max_tv_minus_bound", pinsker_slack, 1e-12, pinsker_slack <= 1e-12, ""});

  double trunc_slack = -1e300;
  for (double a : {0.5, 1.0, 2.0}) {
    for (std::size_t r = 0; r < truncation_pairs; ++r) {
      const std::size_t d = 1 + rng.index(3);
      std::vector<std::vector<double>> pool(12, std::vector<double>(d));
      for (auto& at : pool)
        for (double& v : at) v = rng.normal(0.0, 3.0);
      const DiscreteDist mu = detail::lattice_dist(rng, pool, 1 + rng.index(10));
      const DiscreteDist nu = detail::lattice_dist(rng, pool, 1 + rng.index(10));
      const auto c = check_truncation_lemma(mu, nu, a);
      trunc_slack = std::max(trunc_slack, c.w1 - c.bound);
    }
  }
  suite.stats.push_back({"truncation_max_w1_minus_bound", trunc_slack, 1e-9, trunc_slack <= 1e-9, ""});
  const DiscreteDist mu{{{0.0}}, {1.0}}, nu{{{1.0}}, {1.0}};
  const auto hand = check_truncation_lemma(mu, nu, 1.0);
  suite.stats.push_back({"truncation_hand_case_w1", hand.w1, hand.bound,
                         hand.holds && hand.w1 == 1.0 && hand.bound == 4.0,
                         "bound " + std::to_string(hand.bound)});
  return suite;
}

struct NamedCheck {
  std::string name;
  std::function<CheckSuite(std::uint64_t)> run;
};

inline const std::vector<NamedCheck>& selfcheck_suites() {
  static const std::vector<NamedCheck> suites{
      {"invertibility", [](std::uint64_t s) { return check_invertibility(s); }},
      {"logdet", [](std::uint64_t s) { return check_logdet(s); }},
      {"gradients", [](std::uint64_t s) { return check_loss_gradients(s); }},
      {"sinkhorn", [](std::uint64_t s) { return check_sinkhorn_consistency(s); }},
      {"exact_ot", [](std::uint64_t s) { return check_exact_ot(s); }},
      {"inequalities", [](std::uint64_t s) { return check_inequalities(s); }},
  };
  return suites;
}

}  // namespace vinn
