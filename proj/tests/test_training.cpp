#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace vinn;
using namespace vinn::testing;

namespace {

FlowModel identity_flow(std::size_t d, std::size_t d_y, Rng& rng, std::size_t blocks = 2, std::size_t hidden = 16) {
  FlowSpec spec;
  spec.dim = d;
  spec.dim_y = d_y;
  spec.blocks = blocks;
  spec.hidden = hidden;
  return make_flow(spec, rng);
}

std::vector<double> snapshot(const std::vector<Parameter*>& ps) {
  std::vector<double> out;
  for (const Parameter* p : ps) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

Tensor gaussian_task(Rng& rng, std::size_t n) {
  Tensor x = rng.normal_tensor(Shape{n, 2});
  auto v = x.mutable_values();
  for (std::size_t i = 0; i < n; ++i) {
    v[2 * i] = 1.0 + 1.5 * v[2 * i];
    v[2 * i + 1] = -0.5 + 0.6 * v[2 * i + 1] + 0.3 * v[2 * i];
  }
  return x;
}

// KL(generated || data) from a freshly trained critic on held-out draws.
double fresh_kl_estimate(const FlowModel& m, const Tensor& data, std::uint64_t seed) {
  Rng r(seed);
  Mlp c = make_critic(2, r);
  CriticFitConfig fit;
  fit.steps = 1000;
  fit.batch_size = 256;
  Tensor gen = m.inverse_full(r.normal_tensor(Shape{4096, 2}));
  Tensor gen_eval = m.inverse_full(r.normal_tensor(Shape{4096, 2}));
  return fit_critic_estimate({FDivergence::kl}, c, gen, data, gen_eval, data, fit, r);
}

}  // namespace

TEST(Adam, FirstStepExample) {
  Parameter p{Tensor::vector({3.0}), "p"};
  Adam opt({&p}, AdamConfig{0.1});
  opt.step({Tensor::vector({1.0})});
  EXPECT_NEAR(p.value[0], 3.0 - 0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Parameter p{Tensor::vector({1.0, -2.0}), "p"};
  Adam opt({&p}, AdamConfig{0.1});
  for (int i = 0; i < 10; ++i) opt.step({Tensor::vector({0.0, 0.0})});
  EXPECT_EQ(p.value[0], 1.0);
  EXPECT_EQ(p.value[1], -2.0);
}

TEST(Adam, QuadraticDescent) {
  // Bias-corrected Adam on theta^2 from 5 at lr 0.1 descends monotonically
  // until the momentum overshoots zero at step 88; afterwards it oscillates
  // in a shrinking band around the minimum.
  Parameter p{Tensor::vector({5.0}), "p"};
  Adam opt({&p}, AdamConfig{0.1});
  double prev = 5.0;
  for (int i = 1; i <= 100; ++i) {
    opt.step({Tensor::vector({2.0 * p.value[0]})});
    if (i < 88) EXPECT_LT(std::abs(p.value[0]), prev) << "step " << i;
    else EXPECT_LT(std::abs(p.value[0]), 0.05) << "step " << i;
    prev = std::abs(p.value[0]);
  }
}

TEST(Adam, Errors) {
  Parameter p{Tensor::vector({1.0}), "p"};
  Adam opt({&p}, AdamConfig{0.1});
  EXPECT_THROW(opt.step({Tensor::vector({NAN})}), NonFiniteError);
  EXPECT_THROW(opt.step({Tensor::vector({1.0, 2.0})}), ShapeError);
  EXPECT_THROW(opt.step(std::vector<Tensor>{}), ShapeError);
  EXPECT_EQ(p.value[0], 1.0);
}

TEST(Adam, DecoupledWeightDecay) {
  Parameter p{Tensor::vector({2.0}), "p"};
  Adam frozen({&p}, AdamConfig{0.0, 0.9, 0.999, 1e-8, 0.5});
  for (int i = 0; i < 5; ++i) frozen.step({Tensor::vector({1.0})});
  EXPECT_EQ(p.value[0], 2.0);
  Adam decay({&p}, AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
  decay.step({Tensor::vector({0.0})});
  EXPECT_NEAR(p.value[0], 2.0 * (1.0 - 0.05), 1e-15);
}

TEST(TrainConfig, ValidationAndNames) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda_prior = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sigma = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  for (auto k : {LossKind::nll, LossKind::mmd, LossKind::sinkhorn, LossKind::sinkhorn_approx, LossKind::fdiv})
    EXPECT_EQ(loss_from_name(to_string(k)), k);
  for (auto d : {Direction::forward, Direction::backward, Direction::bidirectional, Direction::alternating})
    EXPECT_EQ(direction_from_name(to_string(d)), d);
  EXPECT_THROW(loss_from_name("kl"), ConfigError);
  EXPECT_THROW(direction_from_name("sideways"), ConfigError);
}

TEST(CriticFreeze, ModelAndCriticStepsTouchOnlyTheirOwnParameters) {
  Rng rng(1);
  FlowModel m = tiny_model(4, 2, rng);
  Mlp critic = smooth_critic(4, rng);
  Adam model_opt(m.parameters(), AdamConfig{1e-2});
  Adam critic_opt(parameters_of(critic), AdamConfig{1e-2});
  Tensor x = rng.normal_tensor(Shape{16, 4}), y = rng.normal_tensor(Shape{16, 2}), z = rng.normal_tensor(Shape{16, 2});
  const FDivergenceSpec kl{FDivergence::kl};

  auto critic_before = snapshot(parameters_of(critic));
  auto model_before = snapshot(m.parameters());
  Tape tape;
  Tensor loss = inn_backward_loss(m, critic, kl, x, y, z, &tape);
  tape.backward(loss);
  EXPECT_GT(max_abs_diff(tape.gradient(*parameters_of(critic)[0]), Tensor(parameters_of(critic)[0]->value.shape(), 0.0)),
            0.0);  // the critic did receive gradient
  model_opt.step(tape);
  EXPECT_EQ(snapshot(parameters_of(critic)), critic_before);
  EXPECT_NE(snapshot(m.parameters()), model_before);

  model_before = snapshot(m.parameters());
  critic_ascent_step(kl, critic, critic_opt, m.inverse(y, z), x);
  EXPECT_EQ(snapshot(m.parameters()), model_before);
  EXPECT_NE(snapshot(parameters_of(critic)), critic_before);
}

TEST(Minimax, CriticAscentIncreasesGapOnFrozenModel) {
  Rng rng(2);
  Tensor p = rng.normal_tensor(Shape{512, 2}), q = rng.normal_tensor(Shape{512, 2}, 1.0);
  Rng init(3);
  Mlp critic = make_critic(2, init);
  Adam opt(parameters_of(critic), AdamConfig{1e-3});
  const FDivergenceSpec kl{FDivergence::kl};
  std::vector<double> gaps;
  for (int s = 0; s < 200; ++s) gaps.push_back(critic_ascent_step(kl, critic, opt, p, q));
  const double early = mean_of({gaps.begin(), gaps.begin() + 20}), late = mean_of({gaps.end() - 20, gaps.end()});
  EXPECT_GT(late, early);
  EXPECT_GT(variational_gap(kl, critic, p, q).item(), 0.5);
}

TEST(Minimax, GapAfterEpochIsBoundedByOracle) {
  // Identity flow with frozen weights: generated law N(0, I), data N((1,0), I),
  // KL = 0.5.
  Rng rng(4);
  FlowModel m = identity_flow(2, 0, rng);
  Rng init(5);
  Mlp critic = make_critic(2, init);
  TrainConfig cfg;
  cfg.lr_model = 0.0;
  cfg.lr_critic = 1e-3;
  cfg.critic_steps = 5;
  cfg.fdiv = {FDivergence::kl};
  Adam model_opt(m.parameters(), cfg.model_adam());
  Adam critic_opt(parameters_of(critic), cfg.critic_adam());
  std::vector<std::pair<Tensor, Tensor>> batches;
  for (int b = 0; b < 40; ++b) {
    Tensor x = rng.normal_tensor(Shape{256, 2});
    for (std::size_t i = 0; i < 256; ++i) x.mutable_values()[2 * i] += 1.0;
    batches.emplace_back(x, rng.normal_tensor(Shape{256, 2}));
  }
  auto comps = minimax_epoch(m, critic, cfg.fdiv, model_opt, critic_opt, batches, cfg);
  EXPECT_EQ(comps.front().first, "critic_gap");
  Tensor pe = rng.normal_tensor(Shape{20000, 2}), qe = rng.normal_tensor(Shape{20000, 2});
  for (std::size_t i = 0; i < 20000; ++i) qe.mutable_values()[2 * i] += 1.0;
  const double gap = variational_gap(cfg.fdiv, critic, m.inverse_full(pe), qe).item();
  EXPECT_GE(gap, 0.0);
  EXPECT_LE(gap, 0.5 + 0.1);
  cfg.critic_steps = 0;
  EXPECT_THROW(minimax_epoch(m, critic, cfg.fdiv, model_opt, critic_opt, batches, cfg), ConfigError);
}

TEST(TrainNf, NllAtIdentityMatchesGaussianEntropy) {
  Rng rng(6);
  FlowModel m = identity_flow(2, 0, rng);
  Tensor data = rng.normal_tensor(Shape{8192, 2});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr_model = 1e-5;
  Rng train(7);
  TrainHistory h = train_nf(m, data, cfg, train);
  ASSERT_EQ(h.epochs.size(), 1u);
  EXPECT_NEAR(h.epochs[0].get("loss"), 1.0 + std::log(2.0 * std::numbers::pi), 0.05);
}

TEST(TrainNf, MmdIsSmallForMatchedDistributions) {
  Rng rng(8);
  FlowModel m = identity_flow(2, 0, rng);
  Tensor data = rng.normal_tensor(Shape{2048, 2});
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.loss = LossKind::mmd;
  Rng train(9);
  EXPECT_LT(train_nf(m, data, cfg, train).epochs[0].get("loss"), 0.05);
}

class TrainNfTrend : public ::testing::TestWithParam<LossKind> {};

TEST_P(TrainNfTrend, FinalLossBelowInitial) {
  Rng rng(10);
  FlowModel m = identity_flow(2, 0, rng, 2, 32);
  Tensor data = gaussian_task(rng, 2048);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 128;
  cfg.lr_model = 2e-3;
  cfg.lr_critic = 2e-3;
  cfg.loss = GetParam();
  cfg.fdiv = {FDivergence::kl};
  cfg.sinkhorn.epsilon = 0.5;
  cfg.mmd_gamma = 0.25;
  Rng train(11);
  if (cfg.loss == LossKind::fdiv) {
    // The critic needs several ascent steps per batch to stay informed.
    cfg.critic_steps = 5;
    cfg.lr_model = cfg.lr_critic = 1e-3;
  }
  const double kl_before = cfg.loss == LossKind::fdiv ? fresh_kl_estimate(m, data, 30) : 0.0;
  TrainHistory h = train_nf(m, data, cfg, train);
  ASSERT_EQ(h.epochs.size(), 10u);
  const double first = h.epochs.front().get("loss"), last = h.epochs.back().get("loss");
  EXPECT_LT(last, first) << to_string(GetParam());
  for (std::size_t e = 1; e < h.epochs.size(); ++e) EXPECT_GE(h.epochs[e].wall_time_s, h.epochs[e - 1].wall_time_s);
  if (cfg.loss == LossKind::fdiv) EXPECT_LT(fresh_kl_estimate(m, data, 31), 0.5 * kl_before);
}

INSTANTIATE_TEST_SUITE_P(Losses, TrainNfTrend,
                         ::testing::Values(LossKind::nll, LossKind::mmd, LossKind::sinkhorn, LossKind::fdiv),
                         [](const auto& info) { return to_string(info.param); });

TEST(TrainNf, Determinism) {
  auto run = [](LossKind k) {
    Rng rng(12);
    FlowModel m = identity_flow(2, 0, rng);
    Tensor data = gaussian_task(rng, 512);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 128;
    cfg.lr_model = 1e-3;
    cfg.loss = k;
    Rng train(13);
    TrainHistory h = train_nf(m, data, cfg, train);
    std::vector<double> out = snapshot(m.parameters());
    for (const auto& e : h.epochs)
      for (const auto& [name, v] : e.components) out.push_back(v);
    return out;
  };
  for (auto k : {LossKind::nll, LossKind::fdiv}) EXPECT_EQ(run(k), run(k));
}

TEST(TrainNf, Errors) {
  Rng rng(14);
  FlowModel m = identity_flow(2, 0, rng);
  TrainConfig cfg;
  EXPECT_THROW(train_nf(m, Tensor(Shape{10, 3}), cfg, rng), ShapeError);
  cfg.batch_size = 0;
  EXPECT_THROW(train_nf(m, Tensor(Shape{10, 2}), cfg, rng), ConfigError);
  // An absurd learning rate blows the flow up; the error names the epoch.
  Tensor data = gaussian_task(rng, 256);
  cfg = {};
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.lr_model = 1e6;
  try {
    train_nf(m, data, cfg, rng);
    SUCCEED();  // coupling clamps can keep it finite; both outcomes are allowed
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(TrainInn, SupervisedRegressionOnRealizableToy) {
  Rng rng(15);
  FlowModel m = tiny_model(2, 1, rng);
  Tensor x = rng.normal_tensor(Shape{2560, 2});
  Tensor y = slice_cols(x, 0, 1);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 128;  // 20 batches per epoch, 200 steps
  cfg.lambda = 0.0;
  cfg.lr_model = 3e-2;
  Rng train(16);
  TrainHistory h = train_inn(m, x, y, cfg, train);
  EXPECT_GT(h.epochs.front().get("mse"), 1e-2);
  EXPECT_LT(supervised_mse(m, x, y).item(), 1e-3);
}

TEST(TrainInn, PaddedReconstructionBecomesInactive) {
  Rng rng(17);
  IKConfig ik;
  Dataset ds = ik_generate(ik, 8192, rng);
  FlowModel m = identity_flow(8, 2, rng, 4, 64);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 256;
  cfg.lr_model = 1e-3;
  cfg.padding = {4, 8, PadMode::zero, 0.0};
  Rng train(18);
  TrainHistory h = train_inn(m, ds.x, ds.y, cfg, train);
  EXPECT_LT(h.epochs.back().get("recon"), 0.01);
  Rng z(19);
  Tensor xr = m.inverse(ds.y, cfg.latent.sample(ds.y.rows(), m.dim_z(), z));
  EXPECT_LT(reconstruction_loss(slice_cols(xr, 4, 8)).item(), 0.01);
}

TEST(TrainInn, DominantMisspecifiedPriorHurtsSupervisedFit) {
  auto final_mse = [](double lambda_prior) {
    Rng rng(20);
    IKConfig ik;
    Dataset ds = ik_generate(ik, 4096, rng);
    FlowModel m = identity_flow(4, 2, rng, 4, 32);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 256;
    cfg.lr_model = 1e-3;
    cfg.lambda_prior = lambda_prior;
    cfg.prior = PriorKind::uniform;
    cfg.prior_a = 0.0;
    cfg.prior_b = 1.0;
    Rng train(21);
    train_inn(m, ds.x, ds.y, cfg, train);
    return supervised_mse(m, ds.x, ds.y).item();
  };
  EXPECT_GT(final_mse(100.0), final_mse(0.0));
}

TEST(TrainInn, DirectionsAndDeterminism) {
  auto run = [](Direction d, LossKind k) {
    Rng rng(22);
    Dataset ds = ik_generate(IKConfig{}, 512, rng);
    FlowModel m = identity_flow(4, 2, rng);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 128;
    cfg.lr_model = 1e-3;
    cfg.loss = k;
    cfg.direction = d;
    cfg.fdiv = {FDivergence::reverse_kl};
    cfg.sinkhorn.epsilon = 0.5;
    Rng train(23);
    TrainHistory h = train_inn(m, ds.x, ds.y, cfg, train);
    std::vector<double> out = snapshot(m.parameters());
    for (const auto& e : h.epochs)
      for (const auto& [name, v] : e.components) out.push_back(v);
    return out;
  };
  for (auto d : {Direction::forward, Direction::backward, Direction::bidirectional, Direction::alternating}) {
    auto a = run(d, LossKind::fdiv);
    EXPECT_EQ(a, run(d, LossKind::fdiv)) << to_string(d);
    for (double v : a) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(run(Direction::bidirectional, LossKind::sinkhorn), run(Direction::bidirectional, LossKind::sinkhorn));
  EXPECT_NE(run(Direction::forward, LossKind::mmd), run(Direction::backward, LossKind::mmd));
}

TEST(TrainInn, BidirectionalSumsBothDirections) {
  Rng rng(24);
  FlowModel m = tiny_model(4, 2, rng);
  Mlp c = smooth_critic(4, rng);
  TrainConfig cfg;
  cfg.loss = LossKind::mmd;
  cfg.mmd_gamma = 0.3;
  InnBatch b;
  b.x_orig = b.x = rng.normal_tensor(Shape{20, 4});
  b.y = rng.normal_tensor(Shape{20, 2});
  b.z = rng.normal_tensor(Shape{20, 2});
  const double f = inn_total_loss(m, &c, cfg, b, Direction::forward, nullptr).item();
  const double bw = inn_total_loss(m, &c, cfg, b, Direction::backward, nullptr).item();
  const double mse = supervised_mse(m, b.x, b.y).item();
  EXPECT_NEAR(f - mse, mmd2(m.forward_full(b.x).out, concat_cols(b.y, b.z), 0.3).item(), 1e-12);
  EXPECT_NEAR(bw - mse, mmd2(m.inverse(b.y, b.z), b.x, 0.3).item(), 1e-12);
}

TEST(TrainInn, Errors) {
  Rng rng(25);
  FlowModel m = identity_flow(4, 2, rng);
  TrainConfig cfg;
  EXPECT_THROW(train_inn(m, Tensor(Shape{8, 4}), Tensor(Shape{8, 3}), cfg, rng), ShapeError);
  EXPECT_THROW(train_inn(m, Tensor(Shape{8, 3}), Tensor(Shape{8, 2}), cfg, rng), ShapeError);
  cfg.padding = {3, 4, PadMode::zero, 0.0};
  EXPECT_THROW(train_inn(m, Tensor(Shape{8, 2}), Tensor(Shape{8, 2}), cfg, rng), ShapeError);
}

TEST(SamplePosterior, IdentityModel) {
  FlowModel id(2, 1);
  Rng rng(26), ref(26);
  Tensor s = sample_posterior(id, {1.0}, 50, LatentSampler{}, rng);
  Tensor z = LatentSampler{}.sample(50, 1, ref);
  ASSERT_EQ(s.rows(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(s(i, 0), 1.0);
    EXPECT_EQ(s(i, 1), z(i, 0));
  }
  EXPECT_THROW(sample_posterior(id, {1.0, 2.0}, 5, LatentSampler{}, rng), ShapeError);
}

TEST(SamplePosterior, UnpadsToOriginalWidth) {
  Rng rng(27);
  FlowModel m = identity_flow(8, 2, rng);
  Tensor s = sample_posterior(m, {0.5, 1.5}, 30, LatentSampler::uniform(0, 1), rng, PaddingSpec{4, 8});
  EXPECT_EQ(s.rows(), 30u);
  EXPECT_EQ(s.cols(), 4u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_GE(s(i, 2), 0.0);
    EXPECT_LT(s(i, 2), 1.0);
  }
}
