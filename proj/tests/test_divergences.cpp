#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace vinn;
using namespace vinn::testing;

namespace {

const FDivergenceSpec kKL{FDivergence::kl};
const FDivergenceSpec kRKL{FDivergence::reverse_kl};
const FDivergenceSpec kJS{FDivergence::js};
const FDivergenceSpec kJSC{FDivergence::js_classical};

double gauss_pdf(double x, double mu) { return std::exp(-0.5 * (x - mu) * (x - mu)) / std::sqrt(2.0 * std::numbers::pi); }

// D_f for f(u) = u log u - (u + 1) log((u + 1) / 2), i.e. twice the JS
// divergence, by midpoint quadrature.
double js_classical_oracle(double mu_p, double mu_q) {
  const double lo = -12.0, hi = 13.0;
  const int steps = 200000;
  const double h = (hi - lo) / steps;
  double s = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double x = lo + (i + 0.5) * h;
    const double p = gauss_pdf(x, mu_p), q = gauss_pdf(x, mu_q), m = p + q;
    if (p > 0) s += p * std::log(2 * p / m) * h;
    if (q > 0) s += q * std::log(2 * q / m) * h;
  }
  return s;
}

// Reverse KL: D_f(P||Q) = KL(Q||P); equal to forward KL for unit-variance pairs.
double oracle(const FDivergenceSpec& spec, double mu_p, double mu_q) {
  switch (spec.kind) {
    case FDivergence::kl:
    case FDivergence::reverse_kl: return kl_gaussian(mu_p, 1, mu_q, 1);
    case FDivergence::js_classical: return js_classical_oracle(mu_p, mu_q);
    default: return INFINITY;
  }
}

Tensor gaussian(Rng& rng, std::size_t n, double mu) { return rng.normal_tensor(Shape{n, 1}, mu, 1.0); }

}  // namespace

TEST(FDiv, ConjugateExamples) {
  EXPECT_NEAR(fstar_eval(kJS, Tensor::scalar(0.0)).item(), 0.0, 1e-15);
  EXPECT_NEAR(fstar_eval(kKL, Tensor::scalar(1.0)).item(), 1.0, 1e-15);
  EXPECT_NEAR(fstar_gf(kRKL, Tensor::scalar(0.0)).item(), -1.0, 1e-15);
  EXPECT_NEAR(gf_eval(kJS, Tensor::scalar(0.0)).item(), 0.0, 1e-15);
  EXPECT_THROW(fstar_eval(kRKL, Tensor::scalar(0.5)), DomainError);
  EXPECT_THROW(fstar_eval(kJSC, Tensor::scalar(1.0)), DomainError);
}

TEST(FDiv, ComposedFormMatchesRawConjugate) {
  for (const auto& spec : {kKL, kRKL, kJS, kJSC}) {
    for (double v = -6.0; v <= 6.0; v += 0.25) {
      Tensor t = gf_eval(spec, Tensor::scalar(v));
      EXPECT_NEAR(fstar_gf(spec, Tensor::scalar(v)).item(), fstar_eval(spec, t).item(), 1e-11)
          << spec.name() << " v=" << v;
    }
  }
  // Large critic outputs stay finite in the composed form.
  for (const auto& spec : {kRKL, kJS, kJSC}) {
    EXPECT_TRUE(std::isfinite(fstar_gf(spec, Tensor::scalar(500.0)).item()));
    EXPECT_TRUE(std::isfinite(fstar_gf(spec, Tensor::scalar(-500.0)).item()) || spec.kind == FDivergence::kl);
  }
}

TEST(FDiv, ReverseKlCompositionAgainstNumericConjugation) {
  // f(u) = -log u; f*(t) = sup_u (u t + log u) by golden-section search.
  for (double v : {-2.0, -0.5, 0.0, 0.7, 2.5}) {
    const double t = -std::exp(-v);
    double lo = 1e-9, hi = 1e4;
    const double phi = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 300; ++it) {
      const double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
      if (a * t + std::log(a) > b * t + std::log(b)) hi = b;
      else lo = a;
    }
    const double u = 0.5 * (lo + hi);
    EXPECT_NEAR(fstar_gf(kRKL, Tensor::scalar(v)).item(), u * t + std::log(u), 1e-9);
  }
}

TEST(FDiv, SupBoundsMatchGridSearch) {
  const double b = 0.6;
  for (const auto& spec : {kKL, kJS, kJSC}) {
    double sup_d = 0.0, sup_v = 0.0;
    for (int i = 0; i <= 20000; ++i) {
      const double t = -b + 2 * b * i / 20000.0;
      const double h = 1e-6;
      const double f0 = fstar_eval(spec, Tensor::scalar(t)).item();
      const double fd = (fstar_eval(spec, Tensor::scalar(t + h)).item() - fstar_eval(spec, Tensor::scalar(t - h)).item()) / (2 * h);
      sup_v = std::max(sup_v, std::abs(f0));
      sup_d = std::max(sup_d, std::abs(fd));
    }
    EXPECT_NEAR(*fstar_sup_derivative(spec, b), sup_d, 1e-6) << spec.name();
    EXPECT_NEAR(*fstar_sup_value(spec, b), sup_v, 1e-9) << spec.name();
  }
  EXPECT_FALSE(fstar_sup_value(kRKL, 0.5).has_value());
  EXPECT_FALSE(fstar_sup_derivative(kJSC, 1.0).has_value());
}

TEST(Gap, ZeroCriticClosedForm) {
  Rng rng(1);
  Mlp critic = make_critic(2, rng);
  zero_mlp(critic);
  Tensor p = rng.normal_tensor(Shape{50, 2}), q = rng.normal_tensor(Shape{40, 2}, 3.0);
  EXPECT_NEAR(variational_gap(kKL, critic, p, q).item(), -std::exp(-1.0), 1e-15);
  EXPECT_NEAR(variational_gap(kRKL, critic, p, q).item(), 0.0, 1e-15);  // -1 - (-1)
  EXPECT_THROW(variational_gap(kKL, critic, p, Tensor(Shape{3, 3})), ShapeError);
}

TEST(Gap, TrainedCriticOnGaussianPair) {
  Rng rng(2);
  Tensor p = gaussian(rng, 10000, 0.0), q = gaussian(rng, 10000, 1.0);
  Tensor pe = gaussian(rng, 10000, 0.0), qe = gaussian(rng, 10000, 1.0);
  Rng init(3);
  Mlp critic = make_critic(1, init);
  CriticFitConfig cfg;
  cfg.steps = 800;
  cfg.batch_size = 256;
  const double gap = fit_critic_estimate(kKL, critic, p, q, pe, qe, cfg, rng);
  EXPECT_GE(gap, 0.35);
  EXPECT_LE(gap, 0.55);
}

TEST(Gap, SameSampleSetGivesNearZero) {
  Rng rng(4);
  Tensor p = gaussian(rng, 2000, 0.0);
  for (const auto& spec : {kKL, kRKL, kJSC}) {
    Rng init(5);
    Mlp critic = make_critic(1, init);
    CriticFitConfig cfg;
    cfg.steps = 400;
    cfg.batch_size = 256;
    const double gap = fit_critic_estimate(spec, critic, p, p, p, p, cfg, rng);
    EXPECT_LT(std::abs(gap), 0.05) << spec.name();
  }
}

TEST(Gap, ShiftedJsConjugateAdmitsPositiveGapOnEqualLaws) {
  // With the shifted conjugate the supremum over constant critics on P == Q is
  // log(4/3) > 0, reached as the critic output grows.
  Rng rng(6);
  Mlp critic = make_critic(1, rng);
  zero_mlp(critic);
  critic.layers.back().bias.value = Tensor::vector({40.0});
  Tensor p = gaussian(rng, 100, 0.0);
  EXPECT_NEAR(variational_gap(kJS, critic, p, p).item(), std::log(4.0 / 3.0), 1e-12);
}

TEST(Gap, BoundedCriticSquashesOutput) {
  Rng rng(16);
  Mlp critic = make_critic(1, rng);
  zero_mlp(critic);
  critic.layers.back().bias.value = Tensor::vector({40.0});
  Tensor p = gaussian(rng, 50, 0.0), q = gaussian(rng, 60, 2.0);
  FDivergenceSpec spec{FDivergence::kl};
  spec.bound = 5.0;
  const double v = 5.0 * std::tanh(8.0);
  EXPECT_NEAR(variational_gap(spec, critic, p, q).item(), v - std::exp(v - 1.0), 1e-9);
  EXPECT_NEAR(variational_gap(kKL, critic, p, q).item(), 40.0 - std::exp(39.0), 1e3);
}

TEST(Gap, LowerBoundForFixedCritics) {
  for (const auto& spec : {kKL, kRKL, kJSC}) {
    Rng init(7);
    Mlp critic = make_critic(1, init);
    for (int c = 0; c < 3; ++c) {
      // A different fixed critic per round: perturb the output layer.
      for (double& w : critic.layers.back().weight.value.mutable_values()) w = init.normal(0.0, 0.5);
      std::vector<double> gaps;
      for (int r = 0; r < 20; ++r) {
        Rng rng(100 + r);
        gaps.push_back(variational_gap(spec, critic, gaussian(rng, 500, 0.0), gaussian(rng, 500, 1.0)).item());
      }
      EXPECT_LE(mean_of(gaps), oracle(spec, 0.0, 1.0) + 2 * stderr_of(gaps)) << spec.name();
    }
  }
}

TEST(Gap, LongerCriticTrainingDoesNotLoosen) {
  std::vector<double> short_run, long_run;
  for (int seed = 0; seed < 3; ++seed) {
    Rng rng(200 + seed);
    Tensor p = gaussian(rng, 4000, 0.0), q = gaussian(rng, 4000, 1.0);
    Tensor pe = gaussian(rng, 4000, 0.0), qe = gaussian(rng, 4000, 1.0);
    for (std::size_t steps : {50u, 500u}) {
      Rng init(300 + seed), batches(400 + seed);
      Mlp critic = make_critic(1, init);
      CriticFitConfig cfg;
      cfg.steps = steps;
      cfg.batch_size = 128;
      (steps == 50 ? short_run : long_run).push_back(fit_critic_estimate(kKL, critic, p, q, pe, qe, cfg, batches));
    }
  }
  std::vector<double> diff;
  for (std::size_t i = 0; i < short_run.size(); ++i) diff.push_back(long_run[i] - short_run[i]);
  EXPECT_GE(mean_of(diff), -3 * std::max(stderr_of(diff), 1e-3));
}

TEST(InnLoss, BackwardPlugInExamples) {
  Rng rng(8);
  FlowModel id(2, 1);
  Mlp critic = make_critic(2, rng);
  zero_mlp(critic);
  Tensor x = rng.normal_tensor(Shape{30, 2});
  Tensor y = slice_cols(x, 0, 1), z = slice_cols(x, 1, 2);
  EXPECT_NEAR(inn_backward_loss(id, critic, kKL, x, y, z).item(), -std::exp(-1.0), 1e-14);
  Tensor xp = shift(x, 1.0);
  EXPECT_NEAR(inn_backward_loss(id, critic, kKL, x, slice_cols(xp, 0, 1), slice_cols(xp, 1, 2)).item(),
              -std::exp(-1.0) + 2.0, 1e-12);
  EXPECT_THROW(inn_backward_loss(id, critic, kKL, x, y, Tensor(Shape{30, 2})), ShapeError);
}

TEST(InnLoss, ForwardPlugInExamples) {
  Rng rng(9);
  FlowModel id(2, 1);
  Mlp critic = make_critic(2, rng);
  zero_mlp(critic);
  Tensor x = rng.normal_tensor(Shape{30, 2});
  EXPECT_NEAR(inn_forward_loss(id, critic, kKL, x, slice_cols(x, 0, 1), slice_cols(x, 1, 2)).item(),
              -std::exp(-1.0), 1e-14);
  Tensor xm = shift(x, -1.0);
  EXPECT_NEAR(inn_forward_loss(id, critic, kKL, x, slice_cols(xm, 0, 1), slice_cols(xm, 1, 2)).item(),
              -std::exp(-1.0) + 2.0, 1e-12);
}

TEST(InnLoss, GradientsOnTinyModel) {
  for (const auto& spec : {kKL, kRKL, kJS}) {
    Rng rng(10);
    FlowModel m = tiny_model(4, 2, rng);
    Mlp critic = smooth_critic(4, rng);
    Tensor x = rng.normal_tensor(Shape{6, 4});
    Tensor y = rng.normal_tensor(Shape{6, 2}), z = rng.normal_tensor(Shape{6, 2});
    auto params = concat(m.parameters(), parameters_of(critic));
    auto bwd = [&](Tape* t) { return inn_backward_loss(m, critic, spec, x, y, z, t); };
    auto fwd = [&](Tape* t) { return inn_forward_loss(m, critic, spec, x, y, z, t); };
    auto lz = [&](Tape* t) { return inn_unsup_loss_lz(m, critic, spec, x, y, z, t, Pairing::y_model); };
    EXPECT_LT(grad_check_parameters(bwd, params).max_rel_error, 1e-4) << spec.name();
    EXPECT_LT(grad_check_parameters(fwd, params).max_rel_error, 1e-4) << spec.name();
    EXPECT_LT(grad_check_parameters(lz, params).max_rel_error, 1e-4) << spec.name();
  }
}

TEST(InnLoss, LatentLossExamples) {
  Rng rng(11);
  FlowModel id(3, 1);
  Mlp critic = make_critic(3, rng);
  zero_mlp(critic);
  Tensor x = rng.normal_tensor(Shape{20, 3});
  Tensor y = slice_cols(x, 0, 1), z = rng.normal_tensor(Shape{20, 2});
  EXPECT_NEAR(inn_unsup_loss_lz(id, critic, kKL, x, y, z).item(), -std::exp(-1.0), 1e-14);
  // T_y(X) == Y here, so both pairings coincide for any critic.
  Mlp c2 = make_critic(3, rng);
  EXPECT_EQ(inn_unsup_loss_lz(id, c2, kKL, x, y, z, nullptr, Pairing::y_true).item(),
            inn_unsup_loss_lz(id, c2, kKL, x, y, z, nullptr, Pairing::y_model).item());
  // With Y != T_y(X) the pairing flag changes the second argument.
  Tensor y_other = shift(y, 0.5);
  EXPECT_NE(inn_unsup_loss_lz(id, c2, kKL, x, y_other, z, nullptr, Pairing::y_true).item(),
            inn_unsup_loss_lz(id, c2, kKL, x, y_other, z, nullptr, Pairing::y_model).item());
}

TEST(InnLoss, RealizableLatentLossTrainsToNearZero) {
  // Identity model on standard normal X: T_z(X) has the law of Z, paired with Y.
  Rng rng(12);
  FlowModel id(2, 1);
  Tensor x = rng.normal_tensor(Shape{4000, 2});
  Tensor y = slice_cols(x, 0, 1), z = rng.normal_tensor(Shape{4000, 1});
  Rng init(13);
  Mlp critic = make_critic(2, init);
  Adam opt(parameters_of(critic), AdamConfig{1e-3});
  for (int s = 0; s < 300; ++s) {
    std::vector<std::size_t> idx(256);
    for (auto& i : idx) i = rng.index(4000);
    Tape t;
    Tensor l = inn_unsup_loss_lz(id, critic, kKL, gather_rows(x, idx), gather_rows(y, idx), gather_rows(z, idx), &t);
    t.backward(neg(l));
    opt.step(t);
  }
  EXPECT_LE(inn_unsup_loss_lz(id, critic, kKL, x, y, z).item(), 0.05);
}

TEST(Nll, Examples) {
  Tensor y_gt = Tensor::matrix(1, 1, {0.3});
  FlowOutput out{Tensor::matrix(1, 1, {0.3}), Tensor::matrix(1, 1, {0.0}), Tensor::vector({0.0})};
  EXPECT_DOUBLE_EQ(nll_from_output(out, y_gt, 0.5).item(), 0.0);
  FlowOutput off{Tensor::matrix(1, 1, {1.3}), Tensor::matrix(1, 1, {0.0}), Tensor::vector({0.0})};
  EXPECT_DOUBLE_EQ(nll_from_output(off, y_gt, 1.0).item(), 0.5);
  FlowOutput vol{Tensor::matrix(1, 1, {0.3}), Tensor::matrix(1, 1, {0.0}), Tensor::vector({1.0})};
  EXPECT_DOUBLE_EQ(nll_from_output(vol, y_gt, 1.0).item(), -1.0);
  EXPECT_THROW(nll_from_output(out, y_gt, 0.0), DomainError);
}

TEST(Nll, Gradient) {
  Rng rng(14);
  FlowModel m = tiny_model(4, 2, rng);
  Tensor x = rng.normal_tensor(Shape{5, 4}), y = rng.normal_tensor(Shape{5, 2});
  auto f = [&](Tape* t) { return nll_loss(m, x, y, 0.7, t); };
  EXPECT_LT(grad_check_parameters(f, m.parameters()).max_rel_error, 1e-4);
  auto g = [&](Tape* t) { return nf_nll(m, x, t); };
  EXPECT_LT(grad_check_parameters(g, m.parameters()).max_rel_error, 1e-4);
}

TEST(Mmd, Examples) {
  Rng rng(15);
  Tensor x = rng.normal_tensor(Shape{10, 2});
  EXPECT_NEAR(mmd2(x, x, 0.7).item(), 0.0, 1e-14);
  EXPECT_NEAR(mmd2(Tensor::matrix(1, 1, {0}), Tensor::matrix(1, 1, {1}), 1.0).item(), 2 * (1 - std::exp(-1.0)), 1e-12);
  EXPECT_THROW(mmd2(x, x, 0.0), DomainError);
  EXPECT_THROW(mmd2(Tensor(Shape{0, 2}), x, 1.0), ShapeError);
  EXPECT_THROW(mmd2(Tensor::matrix(1, 2, {0, 0}), x, 1.0, MmdEstimator::unbiased), ShapeError);
}

TEST(Mmd, UnbiasedMeanIsZeroUnderNull) {
  std::vector<double> vals;
  for (int r = 0; r < 200; ++r) {
    Rng rng(500 + r);
    vals.push_back(mmd2(rng.normal_tensor(Shape{20, 2}), rng.normal_tensor(Shape{20, 2}), 0.5, MmdEstimator::unbiased).item());
  }
  EXPECT_LT(std::abs(mean_of(vals)), 3 * stderr_of(vals));
}

TEST(Mmd, SignBounds) {
  Rng rng(16);
  for (int r = 0; r < 50; ++r) {
    const std::size_t n = 2 + rng.index(10), m = 2 + rng.index(10);
    Tensor x = rng.normal_tensor(Shape{n, 2}), y = rng.normal_tensor(Shape{m, 2}, 0.3);
    EXPECT_GE(mmd2(x, y, 1.0).item(), -1e-15);
    EXPECT_GE(mmd2(x, y, 1.0, MmdEstimator::unbiased).item(), -2.0 / static_cast<double>(std::min(n, m)));
  }
}

TEST(Mmd, GradientAndMedianHeuristic) {
  Rng rng(17);
  Tensor x = rng.normal_tensor(Shape{6, 2}), y = rng.normal_tensor(Shape{5, 2}, 1.0);
  EXPECT_LT(grad_check([&](const Tensor& a) { return mmd2(a, y, 0.4); }, x), 1e-4);
  EXPECT_LT(grad_check([&](const Tensor& a) { return mmd2(a, y, 0.4, MmdEstimator::unbiased); }, x), 1e-4);
  // Two points at distance 2: median distance over the pooled pair is 2.
  EXPECT_NEAR(median_heuristic_gamma(Tensor::matrix(1, 1, {0}), Tensor::matrix(1, 1, {2})), 1.0 / 8.0, 1e-15);
}

TEST(Sinkhorn, Examples) {
  Rng rng(18);
  Tensor x = rng.normal_tensor(Shape{30, 2});
  for (double eps : {1.0, 0.1, 0.01}) {
    EXPECT_LT(std::abs(sinkhorn_divergence(x, x, {eps}).item()), 1e-8);
    EXPECT_NEAR(sinkhorn_cost(Tensor::matrix(1, 1, {0}), Tensor::matrix(1, 1, {1}), {eps}), 1.0, 1e-12);
  }
}

TEST(Sinkhorn, ApproachesExactW2AsEpsilonShrinks) {
  Rng rng(19);
  Tensor x = rng.normal_tensor(Shape{64, 1}), y = rng.normal_tensor(Shape{64, 1}, 1.0, 0.5);
  const double w2 = w2sq_1d(x.values(), y.values());
  double prev = INFINITY;
  for (double eps : {1.0, 0.1, 0.01}) {
    const double gap = std::abs(sinkhorn_cost(x, y, {eps}) - w2);
    EXPECT_LT(gap, prev) << "eps " << eps;
    prev = gap;
  }
}

TEST(Sinkhorn, SymmetricAndNonConvergence) {
  Rng rng(20);
  for (int r = 0; r < 10; ++r) {
    Tensor x = rng.normal_tensor(Shape{15, 2}), y = rng.normal_tensor(Shape{11, 2}, 0.5);
    EXPECT_LT(std::abs(sinkhorn_cost(x, y, {0.1}) - sinkhorn_cost(y, x, {0.1})), 1e-10);
  }
  Tensor x = rng.normal_tensor(Shape{20, 2}), y = rng.normal_tensor(Shape{20, 2}, 2.0);
  SinkhornOptions tight{0.001, 2, 1e-12};
  try {
    sinkhorn(x, y, tight);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 2u);
    EXPECT_GT(e.residual(), 0.0);
  }
  EXPECT_THROW(sinkhorn(x, y, {0.0}), DomainError);
}

TEST(Sinkhorn, Gradients) {
  Rng rng(21);
  Tensor x = rng.normal_tensor(Shape{6, 2}), y = rng.normal_tensor(Shape{5, 2}, 0.7);
  for (double eps : {1.0, 0.3}) {
    SinkhornOptions o{eps, 5000, 1e-12};
    EXPECT_LT(grad_check([&](const Tensor& a) { return entropic_ot(a, y, o); }, x), 1e-4);
    EXPECT_LT(grad_check([&](const Tensor& a) { return sinkhorn_divergence(a, y, o); }, x), 1e-4);
  }
}

TEST(Prior, Examples) {
  Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(prior_loss_gaussian(x, x).item(), 0.0);
  EXPECT_DOUBLE_EQ(prior_loss_uniform(Tensor::matrix(1, 1, {0.5}), 0, 1).item(), 0.0);
  EXPECT_DOUBLE_EQ(prior_loss_uniform(Tensor::matrix(1, 1, {1.5}), 0, 1).item(), 0.5);
  EXPECT_DOUBLE_EQ(prior_loss_uniform(Tensor::matrix(1, 1, {-0.3}), 0, 1).item(), 0.3);
  EXPECT_THROW(prior_loss_uniform(x, 1, 1), DomainError);
  EXPECT_THROW(prior_loss_gaussian(x, Tensor::matrix(1, 2, {0, 0})), ShapeError);
  Rng rng(22);
  Tensor t = rng.normal_tensor(Shape{4, 3});
  Tensor a = rng.normal_tensor(Shape{4, 3}, 0.0, 2.0);
  for (double& v : a.mutable_values())
    if (std::abs(v) < 0.05 || std::abs(v - 1) < 0.05) v += 0.2;  // away from hinge kinks
  EXPECT_LT(grad_check([&](const Tensor& v) { return prior_loss_gaussian(v, t); }, a), 1e-4);
  EXPECT_LT(grad_check([&](const Tensor& v) { return prior_loss_uniform(v, 0, 1); }, a), 1e-4);
}

TEST(Reconstruction, Examples) {
  EXPECT_DOUBLE_EQ(reconstruction_loss(Tensor(Shape{3, 2}, 0.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_loss(Tensor::matrix(1, 2, {1, -1})).item(), 1.0);
  // One descent step on a linear toy shrinks the padded coordinates.
  Parameter w{Tensor::matrix(2, 2, {0.5, -0.3, 0.2, 0.8}), "w"};
  Tensor x = Tensor::matrix(3, 2, {1, 2, -1, 0.5, 0.3, 0.3});
  auto loss = [&](Tape* t) { return reconstruction_loss(matmul(x, use(w, t))); };
  const double before = loss(nullptr).item();
  Tape t;
  t.backward(loss(&t));
  Tensor g = t.gradient(w);
  for (std::size_t i = 0; i < 4; ++i) w.value.mutable_values()[i] -= 0.05 * g[i];
  EXPECT_LT(loss(nullptr).item(), before);
  EXPECT_LT(grad_check([&](const Tensor& v) { return reconstruction_loss(v); }, x), 1e-4);
}

TEST(Mse, ExamplesAndGradient) {
  Rng rng(23);
  FlowModel id(3, 2);
  Tensor x = rng.normal_tensor(Shape{7, 3});
  EXPECT_DOUBLE_EQ(supervised_mse(id, x, slice_cols(x, 0, 2)).item(), 0.0);
  EXPECT_NEAR(supervised_mse(id, x, shift(slice_cols(x, 0, 2), 1.0)).item(), 2.0, 1e-12);
  FlowModel m = tiny_model(4, 2, rng);
  Tensor x4 = rng.normal_tensor(Shape{5, 4}), y = rng.normal_tensor(Shape{5, 2});
  EXPECT_LT(grad_check_parameters([&](Tape* t) { return supervised_mse(m, x4, y, t); }, m.parameters()).max_rel_error,
            1e-4);
}
