#pragma once

// Experiment harness: each experiment expands a resolved configuration into
// independent cells, runs them (optionally in parallel) and streams their
// ResultRows through a single CSV writer in cell order.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "vinn/benchmarks.hpp"
#include "vinn/checkpoint.hpp"
#include "vinn/config.hpp"
#include "vinn/metrics.hpp"
#include "vinn/results.hpp"
#include "vinn/rkhs_critic.hpp"
#include "vinn/selfcheck.hpp"
#include "vinn/training.hpp"

namespace vinn {

/// Per-seed generator handles, each an independent child of one root.
struct Streams {
  Rng data;
  Rng model;
  Rng train;
  Rng eval;
};

inline Streams seed_everything(std::uint64_t seed) {
  const Rng root(seed);
  return {root.child("data"), root.child("model"), root.child("train"), root.child("eval")};
}

/// One metric produced by a cell. A negative wall time means "cell total".
struct Metric {
  std::string name;
  double value = 0.0;
  std::string epoch = "final";
  double wall_time_s = -1.0;
  bool failed = false;
};

struct Cell {
  std::string run_id;
  std::string architecture = "-";
  std::string loss = "-";
  std::string direction = "-";
  std::string seed = "-";
  std::function<std::vector<Metric>()> run;
};

struct Plan {
  std::string experiment;
  ExperimentConfig config;
  std::vector<Cell> cells;
  // Summary rows computed from every cell's rows, written last.
  std::vector<std::string> aggregate_ids;
  std::function<std::vector<ResultRow>(const std::vector<ResultRow>&)> aggregate;

  std::vector<std::string> run_ids() const {
    std::vector<std::string> ids;
    for (const auto& c : cells) ids.push_back(c.run_id);
    ids.insert(ids.end(), aggregate_ids.begin(), aggregate_ids.end());
    return ids;
  }
};

struct ExperimentDef {
  std::string name;
  std::string summary;
  std::function<ExperimentConfig()> defaults;
  std::function<Plan(const ExperimentConfig&)> plan;
};

namespace detail {

inline std::string run_id(const std::string& experiment, std::initializer_list<std::string> parts) {
  std::string id = experiment;
  for (const auto& p : parts) id += "/" + p;
  return id;
}

inline std::string target_label(const std::array<double, 2>& t) { return pair_string(t); }

inline std::vector<Metric> history_metrics(const TrainHistory& h) {
  std::vector<Metric> out;
  for (const auto& e : h.epochs)
    for (const auto& [k, v] : e.components) out.push_back({k, v, std::to_string(e.epoch), e.wall_time_s});
  return out;
}

inline void maybe_checkpoint(const ExperimentConfig& cfg, const std::string& id, const FlowModel& model) {
  if (cfg.checkpoint_dir.empty()) return;
  std::string file = id;
  for (char& c : file)
    if (c == '/' || c == ':' || c == '=') c = '_';
  std::filesystem::create_directories(cfg.checkpoint_dir);
  save_checkpoint(model, (std::filesystem::path(cfg.checkpoint_dir) / (file + ".json")).string());
}

inline FlowSpec flow_spec(const ExperimentConfig& c, Architecture arch, std::size_t dim, std::size_t dim_y) {
  FlowSpec s;
  s.arch = arch;
  s.dim = dim;
  s.dim_y = dim_y;
  s.blocks = c.blocks;
  s.hidden = c.hidden;
  s.coupling.clamp = c.clamp;
  s.spectral_bound = c.spectral_bound;
  s.init = c.init;
  return s;
}

/// Padding of the 4-D IK input up to d_y + d_z columns.
inline PaddingSpec ik_padding(const ExperimentConfig& c, std::size_t d_z) {
  const std::size_t width = 2 + d_z;
  if (width < 4) throw ConfigError("IK needs d_z >= 2 so that d_y + d_z covers the 4 inputs");
  if (width == 4) return {};
  return {4, width, c.padding, c.pad_noise};
}

inline double resim_over_targets(const IKConfig& ik, const FlowModel& model, const ExperimentConfig& c,
                                 const TrainConfig& t, const Rng& eval, const std::string& tag,
                                 std::vector<Metric>* per_target) {
  double sum = 0.0;
  for (std::size_t i = 0; i < c.targets.size(); ++i) {
    Rng r = eval.child(tag, i);
    const double e = resim_error(ik, model, c.targets[i], c.n_eval, t.latent, r, t.padding);
    if (per_target) per_target->push_back({tag + "@" + target_label(c.targets[i]), e});
    sum += e;
  }
  return sum / static_cast<double>(c.targets.size());
}

/// Trains one IK INN and reports baseline, per-epoch and final resimulation
/// metrics.
inline std::vector<Metric> ik_cell(const ExperimentConfig& c, const std::string& id, Architecture arch,
                                   TrainConfig t, std::size_t d_z, std::uint64_t seed) {
  const IKConfig ik;
  Streams s = seed_everything(seed);
  t.padding = ik_padding(c, d_z);
  t.seed = seed;
  const Dataset ds = ik_generate(ik, c.n_train, s.data);
  FlowModel model = make_flow(flow_spec(c, arch, 2 + d_z, 2), s.model);
  std::vector<Metric> out;
  out.push_back({"baseline_resim_error", resim_over_targets(ik, model, c, t, s.eval, "baseline", nullptr)});
  const TrainHistory h = train_inn(model, ds.x, ds.y, t, s.train);
  for (auto& m : history_metrics(h)) out.push_back(std::move(m));
  std::vector<Metric> per_target;
  out.push_back({"resim_error", resim_over_targets(ik, model, c, t, s.eval, "resim_error", &per_target)});
  for (auto& m : per_target) out.push_back(std::move(m));
  maybe_checkpoint(c, id, model);
  return out;
}

inline double mmd_to_uniform(const FlowModel& model, const LatentSampler& latent, std::size_t n, std::size_t dim,
                             Rng& eval) {
  Tensor gen = model.inverse_full(latent.sample(n, dim, eval));
  Tensor truth = eval.uniform_tensor(Shape{n, dim}, 0.0, 1.0);
  return std::sqrt(std::max(0.0, mmd2(gen, truth, 1.0).item()));
}

inline double w1_per_coordinate(const Tensor& a, const Tensor& b) {
  double w = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    std::vector<double> x(a.rows()), y(b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) x[i] = a(i, j);
    for (std::size_t i = 0; i < b.rows(); ++i) y[i] = b(i, j);
    w += w1_1d(x, y);
  }
  return w / static_cast<double>(a.cols());
}

inline TrainConfig with_loss(TrainConfig t, const std::string& token) {
  apply_loss_token(t, token);
  return t;
}

inline std::string seed_label(std::uint64_t s) { return std::to_string(s); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// IK with NLL training across prior weights lambda' and prior families.
inline Plan plan_prior_effect(const ExperimentConfig& c) {
  Plan p{"prior-effect", c, {}, {}, {}};
  std::vector<std::pair<double, std::optional<PriorKind>>> grid;
  for (double lp : c.lambda_primes) {
    if (lp == 0.0) {
      grid.emplace_back(0.0, std::nullopt);
      continue;
    }
    for (PriorKind pk : c.priors) grid.emplace_back(lp, pk);
  }
  for (const auto& [lp, pk] : grid)
    for (auto seed : c.seeds) {
      const std::string prior = pk ? to_string(*pk) : "none";
      const std::string id = detail::run_id(p.experiment, {to_string(c.architecture), loss_label(c.train),
                                                           "lambda_prime=" + detail::fmt_double(lp), "prior=" + prior,
                                                           "seed=" + detail::seed_label(seed)});
      TrainConfig t = c.train;
      t.lambda_prior = lp;
      if (pk) t.prior = *pk;
      p.cells.push_back({id, to_string(c.architecture), loss_label(t), to_string(t.direction), detail::seed_label(seed),
                         [c, id, t, seed, lp] {
                           auto out = detail::ik_cell(c, id, c.architecture, t, c.d_z, seed);
                           out.insert(out.begin(), Metric{"lambda_prime", lp});
                           return out;
                         }});
    }
  return p;
}

/// IK across architectures, f-divergences and directions, with mean/std
/// summaries over seeds.
inline Plan plan_fdiv_compare(const ExperimentConfig& c) {
  Plan p{"fdiv-compare", c, {}, {}, {}};
  for (Architecture arch : c.architectures)
    for (FDivergence f : c.fdivs)
      for (Direction d : c.directions) {
        TrainConfig t = c.train;
        t.loss = LossKind::fdiv;
        t.fdiv.kind = f;
        t.direction = d;
        for (auto seed : c.seeds) {
          const std::string id = detail::run_id(p.experiment, {to_string(arch), loss_label(t), to_string(d),
                                                               "seed=" + detail::seed_label(seed)});
          p.cells.push_back({id, to_string(arch), loss_label(t), to_string(d), detail::seed_label(seed),
                             [c, id, arch, t, seed] { return detail::ik_cell(c, id, arch, t, c.d_z, seed); }});
        }
        p.aggregate_ids.push_back(detail::run_id(p.experiment, {to_string(arch), loss_label(t), to_string(d), "aggregate"}));
      }
  const std::string experiment = p.experiment;
  p.aggregate = [experiment](const std::vector<ResultRow>& rows) {
    std::map<std::string, std::vector<const ResultRow*>> groups;
    std::vector<std::string> order;
    for (const auto& r : rows) {
      if (r.metric_name != "resim_error" || r.epoch != "final" || r.status != "ok") continue;
      const std::string key = detail::run_id(experiment, {r.architecture, r.loss, r.direction, "aggregate"});
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(&r);
    }
    std::vector<ResultRow> out;
    for (const auto& key : order) {
      const auto& g = groups[key];
      double m = 0.0, mw = 0.0;
      for (const auto* r : g) {
        m += r->metric_value;
        mw += r->wall_time_s;
      }
      const double n = static_cast<double>(g.size());
      m /= n;
      mw /= n;
      double v = 0.0, vw = 0.0;
      for (const auto* r : g) {
        v += (r->metric_value - m) * (r->metric_value - m);
        vw += (r->wall_time_s - mw) * (r->wall_time_s - mw);
      }
      const double sd = g.size() > 1 ? std::sqrt(v / (n - 1.0)) : 0.0;
      const double sdw = g.size() > 1 ? std::sqrt(vw / (n - 1.0)) : 0.0;
      auto row = [&](const char* name, double value, double wall) {
        ResultRow r;
        r.run_id = key;
        r.experiment = experiment;
        r.architecture = g[0]->architecture;
        r.loss = g[0]->loss;
        r.direction = g[0]->direction;
        r.seed = "all";
        r.metric_name = name;
        r.metric_value = value;
        r.wall_time_s = wall;
        out.push_back(finalize_row(r));
      };
      row("resim_error_mean", m, mw);
      row("resim_error_std", sd, sdw);
      row("runs", n, 0.0);
    }
    return out;
  };
  return p;
}

/// IK across latent dimensions (via padding) and losses.
inline Plan plan_latent_sweep(const ExperimentConfig& c) {
  Plan p{"latent-sweep", c, {}, {}, {}};
  for (const auto& loss : c.losses)
    for (std::size_t d_z : c.latent_dims) {
      detail::ik_padding(c, d_z);
      const TrainConfig t = detail::with_loss(c.train, loss);
      for (auto seed : c.seeds) {
        const std::string id = detail::run_id(p.experiment, {to_string(c.architecture), loss_label(t), to_string(t.direction),
                                                             "latent_dim=" + std::to_string(d_z),
                                                             "seed=" + detail::seed_label(seed)});
        p.cells.push_back({id, to_string(c.architecture), loss_label(t), to_string(t.direction), detail::seed_label(seed),
                           [c, id, t, d_z, seed] {
                             auto out = detail::ik_cell(c, id, c.architecture, t, d_z, seed);
                             out.insert(out.begin(), Metric{"latent_dim", static_cast<double>(d_z)});
                             return out;
                           }});
      }
    }
  return p;
}

/// IK across entropic regularization strengths for the debiased divergence
/// and the plain entropic cost.
inline Plan plan_epsilon_sweep(const ExperimentConfig& c) {
  Plan p{"epsilon-sweep", c, {}, {}, {}};
  for (const auto& loss : c.losses)
    for (double eps : c.epsilons) {
      TrainConfig t = detail::with_loss(c.train, loss);
      t.sinkhorn.epsilon = eps;
      for (auto seed : c.seeds) {
        const std::string id = detail::run_id(p.experiment, {to_string(c.architecture), loss_label(t), to_string(t.direction),
                                                             "epsilon=" + detail::fmt_double(eps),
                                                             "seed=" + detail::seed_label(seed)});
        p.cells.push_back({id, to_string(c.architecture), loss_label(t), to_string(t.direction), detail::seed_label(seed),
                           [c, id, t, eps, seed] {
                             auto out = detail::ik_cell(c, id, c.architecture, t, c.d_z, seed);
                             out.insert(out.begin(), Metric{"epsilon", eps});
                             return out;
                           }});
      }
    }
  return p;
}

/// NF on U(0,1)^d with latents U(a,b) of shifted support; MMD to fresh data.
inline std::vector<Metric> support_mismatch_cell(const ExperimentConfig& c, const std::string& id, TrainConfig t,
                                                 std::array<double, 2> support, std::uint64_t seed) {
  Streams s = seed_everything(seed);
  t.latent = LatentSampler::uniform(support[0], support[1]);
  t.seed = seed;
  Tensor data = uniform_sample(0.0, 1.0, c.n_train, c.data_dim, s.data);
  FlowModel model = make_flow(detail::flow_spec(c, c.architecture, c.data_dim, 0), s.model);
  const TrainHistory h = train_nf(model, data, t, s.train);
  std::vector<Metric> out{{"latent_a", support[0]}, {"latent_b", support[1]}};
  for (auto& m : detail::history_metrics(h)) out.push_back(std::move(m));
  out.push_back({"mmd", detail::mmd_to_uniform(model, t.latent, c.n_eval, c.data_dim, s.eval)});
  detail::maybe_checkpoint(c, id, model);
  return out;
}

inline Plan plan_support_mismatch(const ExperimentConfig& c) {
  Plan p{"support-mismatch", c, {}, {}, {}};
  for (const auto& loss : c.losses)
    for (const auto& sup : c.supports) {
      const TrainConfig t = detail::with_loss(c.train, loss);
      for (auto seed : c.seeds) {
        const std::string id = detail::run_id(p.experiment, {to_string(c.architecture), loss_label(t), to_string(t.direction),
                                                             "support=" + detail::pair_string(sup),
                                                             "seed=" + detail::seed_label(seed)});
        p.cells.push_back({id, to_string(c.architecture), loss_label(t), to_string(t.direction), detail::seed_label(seed),
                           [c, id, t, sup, seed] { return support_mismatch_cell(c, id, t, sup, seed); }});
      }
    }
  return p;
}

/// NF on standardized Pareto data; W1 per coordinate on the raw scale.
inline std::vector<Metric> pareto_cell(const ExperimentConfig& c, const std::string& id, TrainConfig t, double alpha,
                                       std::uint64_t seed) {
  Streams s = seed_everything(seed);
  t.seed = seed;
  ParetoConfig pc{alpha, c.x_m, c.data_dim};
  const Tensor raw = pareto_sample(pc, c.n_train, s.data);
  const Standardizer st = Standardizer::fit_pareto(raw, c.x_m);
  FlowModel model = make_flow(detail::flow_spec(c, c.architecture, c.data_dim, 0), s.model);
  const TrainHistory h = train_nf(model, st.apply(raw), t, s.train);
  std::vector<Metric> out{{"alpha", alpha}};
  for (auto& m : detail::history_metrics(h)) out.push_back(std::move(m));
  Tensor gen = st.invert(model.inverse_full(t.latent.sample(c.n_eval, c.data_dim, s.eval)));
  Tensor truth = pareto_sample(pc, c.n_eval, s.eval);
  out.push_back({"w1", detail::w1_per_coordinate(gen, truth)});
  detail::maybe_checkpoint(c, id, model);
  return out;
}

inline Plan plan_pareto_moments(const ExperimentConfig& c) {
  Plan p{"pareto-moments", c, {}, {}, {}};
  for (double alpha : c.alphas)
    for (auto seed : c.seeds) {
      const TrainConfig t = c.train;
      const std::string id = detail::run_id(p.experiment, {to_string(c.architecture), loss_label(t), to_string(t.direction),
                                                           "alpha=" + detail::fmt_double(alpha),
                                                           "seed=" + detail::seed_label(seed)});
      p.cells.push_back({id, to_string(c.architecture), loss_label(t), to_string(t.direction), detail::seed_label(seed),
                         [c, id, t, alpha, seed] { return pareto_cell(c, id, t, alpha, seed); }});
    }
  return p;
}

/// KL(N(0,1) || N(1,1)) estimated from n samples per side with the MLP critic
/// (fitted on one draw, evaluated on a fresh one) or the RKHS ball critic.
inline std::vector<Metric> kl_oracle_cell(const std::string& critic, std::size_t n, std::uint64_t seed) {
  Streams s = seed_everything(seed);
  const double oracle = kl_gaussian(0.0, 1.0, 1.0, 1.0);
  Tensor pt = s.data.normal_tensor(Shape{n, 1}, 0.0, 1.0), qt = s.data.normal_tensor(Shape{n, 1}, 1.0, 1.0);
  double est = 0.0;
  if (critic == "mlp") {
    Tensor pe = s.eval.normal_tensor(Shape{n, 1}, 0.0, 1.0), qe = s.eval.normal_tensor(Shape{n, 1}, 1.0, 1.0);
    Mlp net = make_critic(1, s.model);
    est = fit_critic_estimate(FDivergenceSpec{FDivergence::kl}, net, pt, qt, pe, qe, CriticFitConfig{}, s.train);
  } else {
    est = dv_kl_estimate(pt, qt).estimate;
  }
  return {{"n", static_cast<double>(n)}, {"estimate", est}, {"oracle", oracle}, {"abs_error", std::abs(est - oracle)}};
}

inline Plan plan_kl_oracle(const ExperimentConfig& c) {
  Plan p{"kl-oracle", c, {}, {}, {}};
  for (const auto& critic : c.critics)
    for (std::size_t n : c.sample_sizes)
      for (auto seed : c.seeds) {
        const std::string id = detail::run_id(p.experiment, {critic, "KL", "n=" + std::to_string(n),
                                                             "seed=" + detail::seed_label(seed)});
        p.cells.push_back({id, critic, "KL", "-", detail::seed_label(seed),
                           [critic, n, seed] { return kl_oracle_cell(critic, n, seed); }});
      }
  return p;
}

/// Invariant suites; a failing statistic yields a failed row.
inline Plan plan_selfcheck(const ExperimentConfig& c) {
  Plan p{"selfcheck", c, {}, {}, {}};
  for (const auto& suite : selfcheck_suites())
    for (auto seed : c.seeds) {
      const std::string id = detail::run_id(p.experiment, {suite.name, "seed=" + detail::seed_label(seed)});
      p.cells.push_back({id, "-", "-", "-", detail::seed_label(seed), [run = suite.run, seed] {
                           std::vector<Metric> out;
                           for (const auto& st : run(seed).stats) out.push_back({st.name, st.value, "final", -1.0, !st.passed});
                           return out;
                         }});
    }
  return p;
}

// ---------------------------------------------------------------------------
// Defaults and registry
// ---------------------------------------------------------------------------

namespace detail {

inline ExperimentConfig ik_defaults(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.output = name + ".csv";
  c.train.epochs = 10;
  c.train.batch_size = 512;
  c.train.lr_model = 1e-4;
  c.train.loss = LossKind::nll;
  return c;
}

inline ExperimentConfig nf_defaults(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.output = name + ".csv";
  c.seeds = {0, 1, 2, 3, 4};
  c.n_train = 2048;
  c.train.epochs = 10;
  c.train.batch_size = 128;
  c.train.critic_steps = 5;
  return c;
}

}  // namespace detail

inline const std::vector<ExperimentDef>& experiments() {
  static const std::vector<ExperimentDef> defs{
      {"prior-effect", "IK: prior weight lambda' x prior family with NLL training",
       [] {
         auto c = detail::ik_defaults("prior-effect");
         c.lambda_primes = {0.0, 1.0, 100.0};
         c.priors = {PriorKind::gaussian, PriorKind::uniform};
         return c;
       },
       plan_prior_effect},
      {"fdiv-compare", "IK: architectures x f-divergences x directions over seeds, with mean/std",
       [] {
         auto c = detail::ik_defaults("fdiv-compare");
         c.seeds = detail::parse_seeds("0-19");
         c.n_train = 20000;
         c.train.epochs = 5;
         c.train.lr_model = 2e-4;
         c.train.lr_critic = 2e-4;
         c.architectures = {Architecture::coupling, Architecture::iresnet};
         c.fdivs = {FDivergence::kl, FDivergence::reverse_kl, FDivergence::js};
         c.directions = {Direction::forward, Direction::backward};
         return c;
       },
       plan_fdiv_compare},
      {"latent-sweep", "IK: latent dimension via padding x {KL, sinkhorn}",
       [] {
         auto c = detail::ik_defaults("latent-sweep");
         c.n_train = 20000;
         c.train.epochs = 5;
         c.latent_dims = {2, 6, 14, 30};
         c.losses = {"KL", "sinkhorn"};
         return c;
       },
       plan_latent_sweep},
      {"epsilon-sweep", "IK: entropic epsilon x {sinkhorn divergence, entropic approximation}",
       [] {
         auto c = detail::ik_defaults("epsilon-sweep");
         c.n_train = 20000;
         c.train.epochs = 5;
         c.train.sinkhorn.max_iter = 2000;
         c.epsilons = {1.0, 0.1, 0.01};
         c.losses = {"sinkhorn", "sinkhorn_approx"};
         return c;
       },
       plan_epsilon_sweep},
      {"support-mismatch", "NF on U(0,1)^2: latent support U(a,b) x {KL, sinkhorn}, MMD to truth",
       [] {
         auto c = detail::nf_defaults("support-mismatch");
         c.hidden = 32;
         c.train.lr_model = 1e-3;
         c.train.lr_critic = 1e-3;
         c.train.sinkhorn.epsilon = 0.05;
         c.supports = {{0.0, 1.0}, {3.0, 4.0}, {5.0, 6.0}, {10.0, 11.0}, {15.0, 16.0}};
         c.losses = {"KL", "sinkhorn"};
         return c;
       },
       plan_support_mismatch},
      {"pareto-moments", "NF on Pareto(alpha) data with the KL critic loss, W1 per coordinate",
       [] {
         auto c = detail::nf_defaults("pareto-moments");
         c.n_eval = 2000;
         c.blocks = 2;
         c.train.lr_model = 1e-4;
         c.train.lr_critic = 1e-4;
         c.train.loss = LossKind::fdiv;
         c.train.fdiv.kind = FDivergence::kl;
         c.train.fdiv.bound = 5.0;
         c.alphas = {1.0, 2.0, 5.0, 10.0};
         return c;
       },
       plan_pareto_moments},
      {"kl-oracle", "KL estimates of N(0,1) vs N(1,1) by the MLP and RKHS critics across n",
       [] {
         ExperimentConfig c;
         c.name = "kl-oracle";
         c.output = "kl-oracle.csv";
         c.seeds = detail::parse_seeds("0-9");
         c.sample_sizes = {250, 500, 1000, 2000};
         c.critics = {"mlp", "rkhs"};
         return c;
       },
       plan_kl_oracle},
      {"selfcheck", "invariant suites: invertibility, logdet, gradients, sinkhorn, exact OT, inequalities",
       [] {
         ExperimentConfig c;
         c.name = "selfcheck";
         c.output = "selfcheck.csv";
         return c;
       },
       plan_selfcheck},
  };
  return defs;
}

inline const ExperimentDef& find_experiment(const std::string& name) {
  for (const auto& d : experiments())
    if (d.name == name) return d;
  throw ConfigError("unknown experiment '" + name + "'");
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

inline constexpr const char* kOutputRootEnv = "VINN_OUTPUT_ROOT";

/// Absolute or explicitly relative paths are kept; bare relative paths land
/// under $VINN_OUTPUT_ROOT (default "results").
inline std::string resolve_output_path(const std::string& output) {
  const std::filesystem::path p(output);
  if (p.is_absolute() || output.rfind("./", 0) == 0 || output.rfind("../", 0) == 0) return output;
  const char* root = std::getenv(kOutputRootEnv);
  return (std::filesystem::path(root && *root ? root : "results") / p).string();
}

struct RunOptions {
  bool dry_run = false;
  bool force = false;
  std::size_t jobs = 1;
};

struct RunSummary {
  std::string output;
  std::size_t cells = 0;
  std::size_t rows = 0;
  std::size_t failed_rows = 0;

  bool ok() const { return failed_rows == 0; }
};

namespace detail {

/// Rows of one cell; an exception becomes a single failed "error" row and
/// its message is returned through `error`.
inline std::vector<ResultRow> execute_cell(const std::string& experiment, const Cell& cell, std::string& error) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Metric> metrics;
  try {
    metrics = cell.run();
  } catch (const std::exception& e) {
    error = e.what();
    metrics.assign(1, {"error", std::nan(""), "final", -1.0, true});
  }
  const double total = elapsed(t0);
  std::vector<ResultRow> rows;
  for (const auto& m : metrics) {
    ResultRow r{cell.run_id, experiment, cell.architecture, cell.loss, cell.direction, cell.seed, m.epoch, m.name,
                m.value, m.wall_time_s < 0.0 ? total : m.wall_time_s};
    if (m.failed) r.status = "failed";
    rows.push_back(finalize_row(r));
  }
  return rows;
}

}  // namespace detail

inline void print_plan(const Plan& plan, const std::string& output, std::ostream& os) {
  os << "# experiment: " << plan.experiment << "\n# output: " << output << "\n\n"
     << config_to_text(plan.config) << "\n# run matrix: " << plan.cells.size() << " cell(s)";
  if (!plan.aggregate_ids.empty()) os << " + " << plan.aggregate_ids.size() << " aggregate(s)";
  os << "\n";
  for (const auto& id : plan.run_ids()) os << id << "\n";
}

/// Runs every cell; rows reach the CSV in cell order whatever the job count.
inline RunSummary run_plan(const Plan& plan, const RunOptions& opt, std::ostream& log) {
  RunSummary sum;
  sum.output = resolve_output_path(plan.config.output.empty() ? plan.experiment + ".csv" : plan.config.output);
  sum.cells = plan.cells.size();
  if (opt.dry_run) {
    print_plan(plan, sum.output, log);
    return sum;
  }
  ResultWriter writer(sum.output, plan.run_ids(), opt.force);
  const std::size_t n = plan.cells.size();
  std::vector<std::optional<std::vector<ResultRow>>> done(n);
  std::vector<ResultRow> all;
  std::size_t next_to_write = 0;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto flush_ready = [&] {
    while (next_to_write < n && done[next_to_write]) {
      auto& rows = *done[next_to_write];
      writer.append(rows);
      for (auto& r : rows) {
        sum.failed_rows += r.status != "ok";
        ++sum.rows;
        all.push_back(std::move(r));
      }
      done[next_to_write].reset();
      ++next_to_write;
    }
  };
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      std::string error;
      auto rows = detail::execute_cell(plan.experiment, plan.cells[i], error);
      std::lock_guard<std::mutex> lock(mu);
      const bool failed = std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status != "ok"; });
      log << "[" << i + 1 << "/" << n << "] " << plan.cells[i].run_id << (failed ? "  FAILED" : "");
      if (!error.empty()) log << ": " << error;
      log << "\n";
      log.flush();
      done[i] = std::move(rows);
      flush_ready();
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, n));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (plan.aggregate) {
    auto rows = plan.aggregate(all);
    writer.append(rows);
    for (const auto& r : rows) {
      sum.failed_rows += r.status != "ok";
      ++sum.rows;
    }
  }
  return sum;
}

}  // namespace vinn
