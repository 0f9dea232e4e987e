#pragma once

// Adam with decoupled weight decay, descent loops for likelihood and
// distance-based objectives, minimax alternation for critic-based
// f-divergence objectives, and posterior sampling.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vinn/divergences.hpp"
#include "vinn/flows.hpp"
#include "vinn/nn.hpp"
#include "vinn/random.hpp"

namespace vinn {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, scaled by lr
};

/// theta <- theta - lr m_hat / (sqrt(v_hat) + eps) - lr wd theta
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const Parameter* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  const AdamConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }
  const std::vector<Parameter*>& params() const noexcept { return params_; }

  void step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("adam_step: one gradient per parameter expected");
    for (std::size_t k = 0; k < grads.size(); ++k) {
      if (grads[k].size() != params_[k]->value.size()) throw ShapeError("adam_step: gradient shape mismatch");
      detail::require_finite("adam_step gradient", grads[k].values());
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto theta = params_[k]->value.mutable_values();
      auto g = grads[k].values();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        theta[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps) + cfg_.lr * cfg_.weight_decay * theta[i];
      }
    }
  }

  /// Step with the gradients recorded on `tape` (zeros for untouched params).
  void step(const Tape& tape) {
    std::vector<Tensor> grads;
    grads.reserve(params_.size());
    for (const Parameter* p : params_) grads.push_back(tape.gradient(*p));
    step(grads);
  }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration and history
// ---------------------------------------------------------------------------

enum class LossKind { nll, mmd, sinkhorn, sinkhorn_approx, fdiv };
enum class Direction { forward, backward, bidirectional, alternating };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::nll: return "nll";
    case LossKind::mmd: return "mmd";
    case LossKind::sinkhorn: return "sinkhorn";
    case LossKind::sinkhorn_approx: return "sinkhorn_approx";
    case LossKind::fdiv: return "fdiv";
  }
  return "?";
}

inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::forward: return "forward";
    case Direction::backward: return "backward";
    case Direction::bidirectional: return "bidirectional";
    case Direction::alternating: return "alternating";
  }
  return "?";
}

inline LossKind loss_from_name(const std::string& s) {
  if (s == "nll") return LossKind::nll;
  if (s == "mmd") return LossKind::mmd;
  if (s == "sinkhorn") return LossKind::sinkhorn;
  if (s == "sinkhorn_approx") return LossKind::sinkhorn_approx;
  if (s == "fdiv") return LossKind::fdiv;
  throw ConfigError("unknown loss '" + s + "'");
}

inline Direction direction_from_name(const std::string& s) {
  if (s == "forward") return Direction::forward;
  if (s == "backward") return Direction::backward;
  if (s == "bidirectional") return Direction::bidirectional;
  if (s == "alternating") return Direction::alternating;
  throw ConfigError("unknown direction '" + s + "'");
}

/// Latent law: standard normal, or i.i.d. uniform on [a, b).
struct LatentSampler {
  enum class Kind { normal, uniform } kind = Kind::normal;
  double a = 0.0;
  double b = 1.0;

  Tensor sample(std::size_t n, std::size_t d, Rng& rng) const {
    if (kind == Kind::normal) return rng.normal_tensor(Shape{n, d});
    if (!(a < b)) throw DomainError("latent sampler: uniform bounds need a < b");
    return rng.uniform_tensor(Shape{n, d}, a, b);
  }

  static LatentSampler uniform(double a, double b) { return {Kind::uniform, a, b}; }
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 512;
  std::size_t max_batches_per_epoch = 0;  // 0 = full pass over the data
  double lr_model = 1e-4;
  double lr_critic = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double critic_weight_decay = 2e-5;
  std::size_t critic_steps = 1;
  std::size_t model_steps = 1;
  LossKind loss = LossKind::nll;
  Direction direction = Direction::backward;
  FDivergenceSpec fdiv{};
  double lambda = 1.0;        // unsupervised weight
  double lambda_prior = 0.0;  // prior weight
  PriorKind prior = PriorKind::gaussian;
  double prior_a = 0.0;
  double prior_b = 1.0;
  double sigma = 0.1;  // NLL observation scale
  SinkhornOptions sinkhorn{};
  double mmd_gamma = 0.0;  // 0 = median heuristic per batch
  Pairing pairing = Pairing::y_true;
  PaddingSpec padding{};  // inactive unless padded > original
  LatentSampler latent{};
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch_size must be positive");
    if (critic_steps == 0 || model_steps == 0) throw ConfigError("train: critic_steps and model_steps must be >= 1");
    if (lambda < 0.0 || lambda_prior < 0.0) throw ConfigError("train: lambda and lambda_prior must be >= 0");
    if (!(sigma > 0.0)) throw ConfigError("train: sigma must be positive");
    if (!(lr_model >= 0.0) || !(lr_critic >= 0.0)) throw ConfigError("train: learning rates must be >= 0");
  }

  AdamConfig model_adam() const { return {lr_model, beta1, beta2, 1e-8, weight_decay}; }
  AdamConfig critic_adam() const { return {lr_critic, beta1, beta2, 1e-8, critic_weight_decay}; }
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::vector<std::pair<std::string, double>> components;  // batch means, stable order
  double wall_time_s = 0.0;

  double get(const std::string& name) const {
    for (const auto& [k, v] : components)
      if (k == name) return v;
    throw Error("epoch record has no component '" + name + "'");
  }
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

namespace detail {

/// Running batch means keyed by insertion order.
class ComponentMeans {
 public:
  void add(const std::string& k, double v) {
    for (auto& e : entries_)
      if (e.name == k) {
        e.sum += v;
        ++e.count;
        return;
      }
    entries_.push_back({k, v, 1});
  }

  std::vector<std::pair<std::string, double>> means() const {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : entries_) out.emplace_back(e.name, e.sum / static_cast<double>(e.count));
    return out;
  }

 private:
  struct Entry {
    std::string name;
    double sum;
    std::size_t count;
  };
  std::vector<Entry> entries_;
};

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Calls `body(batch_rows, batch_index)` over one shuffled pass.
inline void for_each_batch(std::size_t n, const TrainConfig& cfg, Rng& rng,
                           const std::function<void(const std::vector<std::size_t>&, std::size_t)>& body) {
  std::vector<std::size_t> perm = rng.permutation(n);
  std::size_t count = 0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size, ++count) {
    if (cfg.max_batches_per_epoch && count >= cfg.max_batches_per_epoch) break;
    const std::size_t end = std::min(n, start + cfg.batch_size);
    body(std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                  perm.begin() + static_cast<std::ptrdiff_t>(end)),
         count);
  }
}

inline Tensor rows_of(const Tensor& t, const std::vector<std::size_t>& idx) { return gather_rows(t, idx); }

[[noreturn]] inline void diverged(std::size_t epoch, const std::exception& e) {
  throw NonFiniteError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Critic fitting
// ---------------------------------------------------------------------------

/// One ascent step of the critic on the variational gap between fixed
/// sample sets; returns the gap before the step.
inline double critic_ascent_step(const FDivergenceSpec& spec, Mlp& critic, Adam& opt, const Tensor& p,
                                 const Tensor& q) {
  Tape tape;
  Tensor gap = variational_gap(spec, critic, p, q, &tape);
  tape.backward(neg(gap));
  opt.step(tape);
  return gap.item();
}

struct CriticFitConfig {
  std::size_t steps = 1000;
  std::size_t batch_size = 512;
  double lr = 1e-3;
  double weight_decay = 0.0;
};

/// Trains `critic` by Adam ascent on mini-batches of (p_train, q_train) and
/// returns the variational gap evaluated on (p_eval, q_eval).
inline double fit_critic_estimate(const FDivergenceSpec& spec, Mlp& critic, const Tensor& p_train,
                                  const Tensor& q_train, const Tensor& p_eval, const Tensor& q_eval,
                                  const CriticFitConfig& cfg, Rng& rng) {
  Adam opt(parameters_of(critic), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::vector<std::size_t> ip(cfg.batch_size), iq(cfg.batch_size);
    for (auto& i : ip) i = rng.index(p_train.rows());
    for (auto& i : iq) i = rng.index(q_train.rows());
    critic_ascent_step(spec, critic, opt, gather_rows(p_train, ip), gather_rows(q_train, iq));
  }
  return variational_gap(spec, critic, p_eval, q_eval).item();
}

// ---------------------------------------------------------------------------
// Normalizing-flow training (T maps data to latent)
// ---------------------------------------------------------------------------

/// Distance-type NF objective between generated samples T^{-1}(Z) and data.
inline Tensor nf_distance_loss(const FlowModel& model, const Tensor& x, const Tensor& z, const TrainConfig& cfg,
                               Tape* tape) {
  Tensor gen = model.inverse_full(z, tape);
  switch (cfg.loss) {
    case LossKind::mmd: {
      const double g = cfg.mmd_gamma > 0.0 ? cfg.mmd_gamma : median_heuristic_gamma(gen.detach(), x);
      return mmd2(gen, x, g);
    }
    case LossKind::sinkhorn: return sinkhorn_divergence(gen, x, cfg.sinkhorn);
    case LossKind::sinkhorn_approx: return entropic_ot(gen, x, cfg.sinkhorn);
    default: throw ConfigError("nf_distance_loss: not a distance loss");
  }
}

/// Critic inputs for the NF variational objective: backward compares
/// T^{-1}(Z) with data in data space, forward compares Z with T(X) in latent
/// space.
inline std::pair<Tensor, Tensor> nf_critic_pair(const FlowModel& model, const Tensor& x, const Tensor& z,
                                                Direction dir, Tape* tape) {
  if (dir == Direction::forward) return {z, model.forward_full(x, tape).out};
  return {model.inverse_full(z, tape), x};
}

/// Alternation over one epoch: per batch, critic_steps ascent steps on the
/// gap with the model frozen, then model_steps descent steps with the critic
/// frozen.
inline std::vector<std::pair<std::string, double>> minimax_epoch(
    FlowModel& model, Mlp& critic, const FDivergenceSpec& spec, Adam& model_opt, Adam& critic_opt,
    const std::vector<std::pair<Tensor, Tensor>>& batches, const TrainConfig& cfg) {
  if (cfg.critic_steps == 0 || cfg.model_steps == 0) throw ConfigError("minimax: steps must be >= 1");
  detail::ComponentMeans means;
  for (const auto& [x, z] : batches) {
    {
      auto [p, q] = nf_critic_pair(model, x, z, cfg.direction, nullptr);
      for (std::size_t k = 0; k < cfg.critic_steps; ++k)
        means.add("critic_gap", critic_ascent_step(spec, critic, critic_opt, p, q));
    }
    for (std::size_t k = 0; k < cfg.model_steps; ++k) {
      Tape tape;
      auto [p, q] = nf_critic_pair(model, x, z, cfg.direction, &tape);
      Tensor loss = variational_gap(spec, critic, p, q, &tape);
      tape.backward(loss);
      model_opt.step(tape);
      model.project();
      means.add("loss", loss.item());
    }
  }
  return means.means();
}

inline TrainHistory train_nf(FlowModel& model, const Tensor& data, const TrainConfig& cfg, Rng& rng,
                             Mlp* critic = nullptr) {
  cfg.validate();
  detail::require_width("train_nf", data, model.dim());
  Rng shuffle_rng = rng.child("shuffle");
  Rng latent_rng = rng.child("latent");
  Adam model_opt(model.parameters(), cfg.model_adam());
  Mlp own_critic;
  if (cfg.loss == LossKind::fdiv && critic == nullptr) {
    Rng init = rng.child("critic_init");
    own_critic = make_critic(model.dim(), init);
    critic = &own_critic;
  }
  std::optional<Adam> critic_opt;
  if (critic) critic_opt.emplace(parameters_of(*critic), cfg.critic_adam());
  TrainHistory hist;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      if (cfg.loss == LossKind::fdiv) {
        std::vector<std::pair<Tensor, Tensor>> batches;
        detail::for_each_batch(data.rows(), cfg, shuffle_rng, [&](const std::vector<std::size_t>& idx, std::size_t) {
          batches.emplace_back(detail::rows_of(data, idx), cfg.latent.sample(idx.size(), model.dim(), latent_rng));
        });
        rec.components = minimax_epoch(model, *critic, cfg.fdiv, model_opt, *critic_opt, batches, cfg);
      } else {
        detail::ComponentMeans means;
        detail::for_each_batch(data.rows(), cfg, shuffle_rng, [&](const std::vector<std::size_t>& idx, std::size_t) {
          Tensor x = detail::rows_of(data, idx);
          Tape tape;
          Tensor loss = cfg.loss == LossKind::nll
                            ? nf_nll(model, x, &tape)
                            : nf_distance_loss(model, x, cfg.latent.sample(idx.size(), model.dim(), latent_rng), cfg,
                                               &tape);
          tape.backward(loss);
          model_opt.step(tape);
          model.project();
          means.add("loss", loss.item());
        });
        rec.components = means.means();
      }
    } catch (const NonFiniteError& e) {
      detail::diverged(epoch, e);
    }
    rec.wall_time_s = detail::elapsed(t0);
    hist.epochs.push_back(std::move(rec));
  }
  return hist;
}

// ---------------------------------------------------------------------------
// INN training
// ---------------------------------------------------------------------------

struct InnBatch {
  Tensor x_orig;  // unpadded inputs
  Tensor x;       // padded inputs (model width)
  Tensor y;
  Tensor z;
};

namespace detail {

inline Tensor inn_usl(const FlowModel& model, const Mlp* critic, const TrainConfig& cfg, const InnBatch& b,
                      Direction dir, Tape* tape) {
  switch (cfg.loss) {
    case LossKind::nll: return nll_loss(model, b.x, b.y, cfg.sigma, tape);
    case LossKind::fdiv:
      if (dir == Direction::forward) return inn_forward_loss(model, *critic, cfg.fdiv, b.x, b.y, b.z, tape);
      return inn_backward_loss(model, *critic, cfg.fdiv, b.x, b.y, b.z, tape);
    case LossKind::mmd:
    case LossKind::sinkhorn:
    case LossKind::sinkhorn_approx: {
      Tensor gen, ref;
      if (dir == Direction::forward) {
        gen = model.forward_full(b.x, tape).out;
        ref = concat_cols(b.y, b.z);
      } else {
        gen = model.inverse(b.y, b.z, tape);
        ref = b.x;
      }
      if (cfg.loss == LossKind::mmd) {
        const double g = cfg.mmd_gamma > 0.0 ? cfg.mmd_gamma : median_heuristic_gamma(gen.detach(), ref);
        return mmd2(gen, ref, g);
      }
      if (cfg.loss == LossKind::sinkhorn) return sinkhorn_divergence(gen, ref, cfg.sinkhorn);
      return entropic_ot(gen, ref, cfg.sinkhorn);
    }
  }
  throw ConfigError("unknown loss");
}

/// Critic inputs used for the ascent step in a given direction.
inline std::pair<Tensor, Tensor> inn_critic_pair(const FlowModel& model, const InnBatch& b, Direction dir) {
  if (dir == Direction::forward) return {concat_cols(b.y, b.z), model.forward_full(b.x).out};
  return {model.inverse(b.y, b.z), b.x};
}

}  // namespace detail

/// Full INN objective for one batch in one direction:
///   mse + lambda * USL + lambda' * prior + reconstruction (when padded).
inline Tensor inn_total_loss(const FlowModel& model, const Mlp* critic, const TrainConfig& cfg, const InnBatch& b,
                             Direction dir, Tape* tape, detail::ComponentMeans* means = nullptr) {
  Tensor mse = supervised_mse(model, b.x, b.y, tape);
  Tensor usl = detail::inn_usl(model, critic, cfg, b, dir, tape);
  Tensor total = mse + scale(usl, cfg.lambda);
  double prior_v = 0.0, recon_v = 0.0;
  const bool padded = cfg.padding.active();
  if (cfg.lambda_prior > 0.0 || padded) {
    Tensor x_rec = model.inverse(b.y, b.z, tape);
    if (cfg.lambda_prior > 0.0) {
      Tensor x_rec_orig = padded ? unpad(x_rec, cfg.padding) : x_rec;
      Tensor prior = cfg.prior == PriorKind::gaussian ? prior_loss_gaussian(x_rec_orig, b.x_orig)
                                                      : prior_loss_uniform(x_rec_orig, cfg.prior_a, cfg.prior_b);
      prior_v = prior.item();
      total = total + scale(prior, cfg.lambda_prior);
    }
    if (padded) {
      Tensor recon = reconstruction_loss(slice_cols(x_rec, cfg.padding.original, cfg.padding.padded));
      recon_v = recon.item();
      total = total + recon;
    }
  }
  if (means) {
    means->add("mse", mse.item());
    means->add("usl", usl.item());
    if (cfg.lambda_prior > 0.0) means->add("prior", prior_v);
    if (padded) means->add("recon", recon_v);
    means->add("loss", total.item());
  }
  return total;
}

/// X: n x d_original inputs, Y: n x d_y observations. The model acts on the
/// padded width cfg.padding.padded (or d_original when padding is inactive).
inline TrainHistory train_inn(FlowModel& model, const Tensor& x, const Tensor& y, const TrainConfig& cfg, Rng& rng,
                              Mlp* critic = nullptr) {
  cfg.validate();
  const bool padded = cfg.padding.active();
  const std::size_t width = padded ? cfg.padding.padded : x.cols();
  if (padded && cfg.padding.original != x.cols()) throw ShapeError("train_inn: padding spec does not match X");
  if (width != model.dim()) throw ShapeError("train_inn: model width does not match (padded) X");
  if (y.rank() != 2 || y.rows() != x.rows() || y.cols() != model.dim_y())
    throw ShapeError("train_inn: Y must be n x d_y");
  Rng shuffle_rng = rng.child("shuffle");
  Rng latent_rng = rng.child("latent");
  Rng pad_rng = rng.child("pad_noise");
  Adam model_opt(model.parameters(), cfg.model_adam());
  Mlp own_critic;
  Mlp own_critic_fwd;
  Mlp* critic_fwd = nullptr;
  const bool uses_critic = cfg.loss == LossKind::fdiv;
  const bool both = cfg.direction == Direction::bidirectional || cfg.direction == Direction::alternating;
  if (uses_critic && critic == nullptr) {
    // Backward critic lives on input space, forward critic on output space
    // (same width for an INN).
    Rng init = rng.child("critic_init");
    own_critic = make_critic(model.dim(), init);
    critic = &own_critic;
  }
  if (uses_critic && both) {
    Rng init = rng.child("critic_init_forward");
    own_critic_fwd = make_critic(model.dim(), init);
    critic_fwd = &own_critic_fwd;
  }
  std::optional<Adam> critic_opt, critic_fwd_opt;
  if (uses_critic) critic_opt.emplace(parameters_of(*critic), cfg.critic_adam());
  if (critic_fwd) critic_fwd_opt.emplace(parameters_of(*critic_fwd), cfg.critic_adam());

  TrainHistory hist;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    detail::ComponentMeans means;
    try {
      detail::for_each_batch(x.rows(), cfg, shuffle_rng, [&](const std::vector<std::size_t>& idx, std::size_t bi) {
        InnBatch b;
        b.x_orig = detail::rows_of(x, idx);
        b.x = padded ? pad(b.x_orig, cfg.padding, &pad_rng) : b.x_orig;
        b.y = detail::rows_of(y, idx);
        b.z = cfg.latent.sample(idx.size(), model.dim_z(), latent_rng);
        std::vector<Direction> dirs;
        if (cfg.direction == Direction::bidirectional) dirs = {Direction::forward, Direction::backward};
        else if (cfg.direction == Direction::alternating)
          dirs = {bi % 2 == 0 ? Direction::forward : Direction::backward};
        else dirs = {cfg.direction};
        auto critic_for = [&](Direction d) { return (d == Direction::forward && critic_fwd) ? critic_fwd : critic; };
        auto opt_for = [&](Direction d) -> Adam& {
          return (d == Direction::forward && critic_fwd) ? *critic_fwd_opt : *critic_opt;
        };
        if (uses_critic) {
          for (Direction d : dirs) {
            auto [p, q] = detail::inn_critic_pair(model, b, d);
            for (std::size_t k = 0; k < cfg.critic_steps; ++k)
              means.add("critic_gap", critic_ascent_step(cfg.fdiv, *critic_for(d), opt_for(d), p, q));
          }
        }
        for (std::size_t k = 0; k < cfg.model_steps; ++k) {
          Tape tape;
          // Gradients from every selected direction accumulate on one tape
          // before a single optimizer step.
          Tensor total = inn_total_loss(model, critic_for(dirs[0]), cfg, b, dirs[0], &tape, &means);
          for (std::size_t i = 1; i < dirs.size(); ++i)
            total = total + inn_total_loss(model, critic_for(dirs[i]), cfg, b, dirs[i], &tape, &means);
          tape.backward(total);
          model_opt.step(tape);
          model.project();
        }
      });
    } catch (const NonFiniteError& e) {
      detail::diverged(epoch, e);
    }
    rec.components = means.means();
    rec.wall_time_s = detail::elapsed(t0);
    hist.epochs.push_back(std::move(rec));
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Posterior sampling
// ---------------------------------------------------------------------------

/// Rows T^{-1}(y*, Z_i) for n latent draws, unpadded when padding is active.
inline Tensor sample_posterior(const FlowModel& model, const std::vector<double>& y_star, std::size_t n,
                               const LatentSampler& latent, Rng& rng, const PaddingSpec& padding = {}) {
  if (y_star.size() != model.dim_y()) throw ShapeError("sample_posterior: y* must have d_y entries");
  Tensor y(Shape{n, model.dim_y()});
  auto yv = y.mutable_values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < y_star.size(); ++j) yv[i * y_star.size() + j] = y_star[j];
  Tensor z = latent.sample(n, model.dim_z(), rng);
  Tensor x = model.inverse(y, z);
  return padding.active() ? unpad(x, padding) : x;
}

}  // namespace vinn
