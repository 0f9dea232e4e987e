#pragma once

// Experiment configuration: flat sectioned key = value text with sections
// [experiment], [arch], [train] and [sweep], plus --key=value overrides.

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vinn/benchmarks.hpp"
#include "vinn/training.hpp"

namespace vinn {

struct ExperimentConfig {
  // [experiment]
  std::string name;
  std::vector<std::uint64_t> seeds{0};
  std::string output;  // CSV path; relative paths resolve under the output root
  std::size_t n_train = 100000;
  std::size_t n_eval = 1000;
  std::vector<std::array<double, 2>> targets{{0.5, 1.5}, {0.0, 2.0}, {-0.3, 1.2}};  // held-out y*
  std::size_t data_dim = 2;  // NF experiments
  double x_m = 1.0;
  std::string checkpoint_dir;  // empty = no checkpoints

  // [arch]
  Architecture architecture = Architecture::coupling;
  std::size_t blocks = 4;
  std::size_t hidden = 128;
  std::size_t d_z = 14;
  PadMode padding = PadMode::zero;
  double pad_noise = 0.05;
  double clamp = 2.0;
  double spectral_bound = 0.9;
  InitMode init = InitMode::scaled;

  // [train]
  TrainConfig train{};

  // [sweep]
  std::vector<double> lambda_primes;
  std::vector<PriorKind> priors;
  std::vector<Architecture> architectures;
  std::vector<FDivergence> fdivs;
  std::vector<Direction> directions;
  std::vector<std::size_t> latent_dims;
  std::vector<std::string> losses;
  std::vector<double> epsilons;
  std::vector<std::array<double, 2>> supports;
  std::vector<double> alphas;
  std::vector<std::size_t> sample_sizes;
  std::vector<std::string> critics;
};

// ---------------------------------------------------------------------------
// Value parsing and names
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) throw ConfigError("'" + s + "' is not a number");
  return v;
}

inline std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
    throw ConfigError("'" + s + "' is not a nonnegative integer");
  return v;
}

inline bool parse_bool(const std::string& s) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + s + "' is not a boolean");
}

/// "a:b" pair.
inline std::array<double, 2> parse_pair(const std::string& s) {
  const auto parts = split_list(s, ':');
  if (parts.size() != 2) throw ConfigError("'" + s + "' is not an a:b pair");
  return {parse_double(parts[0]), parse_double(parts[1])};
}

/// Seeds as a comma list with optional ranges "0-19".
inline std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_uint(item));
      continue;
    }
    const auto lo = parse_uint(item.substr(0, dash)), hi = parse_uint(item.substr(dash + 1));
    if (hi < lo) throw ConfigError("seed range '" + item + "' is empty");
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& s, F f) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) out.push_back(f(item));
  return out;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

template <class T, class F>
std::string join(const std::vector<T>& v, F f, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + f(v[i]);
  return out;
}

inline std::string pair_string(const std::array<double, 2>& p) { return fmt_double(p[0]) + ":" + fmt_double(p[1]); }

}  // namespace detail

inline std::string to_string(Architecture a) { return a == Architecture::coupling ? "coupling" : "iresnet"; }

inline Architecture architecture_from_name(const std::string& s) {
  if (s == "coupling") return Architecture::coupling;
  if (s == "iresnet") return Architecture::iresnet;
  throw ConfigError("unknown architecture '" + s + "'");
}

inline std::string to_string(PriorKind p) { return p == PriorKind::gaussian ? "gaussian" : "uniform"; }

inline PriorKind prior_from_name(const std::string& s) {
  if (s == "gaussian") return PriorKind::gaussian;
  if (s == "uniform") return PriorKind::uniform;
  throw ConfigError("unknown prior '" + s + "'");
}

inline std::string to_string(PadMode m) { return m == PadMode::zero ? "zero" : "repeat"; }

inline PadMode pad_mode_from_name(const std::string& s) {
  if (s == "zero") return PadMode::zero;
  if (s == "repeat") return PadMode::repeat;
  throw ConfigError("unknown padding mode '" + s + "'");
}

inline std::string to_string(InitMode m) { return m == InitMode::scaled ? "scaled" : "standard_normal"; }

inline InitMode init_from_name(const std::string& s) {
  if (s == "scaled") return InitMode::scaled;
  if (s == "standard_normal") return InitMode::standard_normal;
  throw ConfigError("unknown init mode '" + s + "'");
}

inline std::string to_string(Pairing p) { return p == Pairing::y_true ? "y_true" : "y_model"; }

inline Pairing pairing_from_name(const std::string& s) {
  if (s == "y_true") return Pairing::y_true;
  if (s == "y_model") return Pairing::y_model;
  throw ConfigError("unknown pairing '" + s + "'");
}

/// Loss tokens accept both training-loss names and f-divergence names; an
/// f-divergence name selects the variational loss with that generator.
inline void apply_loss_token(TrainConfig& t, const std::string& token) {
  try {
    const FDivergenceSpec f = fdiv_from_name(token);
    t.loss = LossKind::fdiv;
    t.fdiv.kind = f.kind;
  } catch (const ConfigError&) {
    t.loss = loss_from_name(token);
  }
}

/// Name of the effective loss: the generator name for f-divergences.
inline std::string loss_label(const TrainConfig& t) {
  return t.loss == LossKind::fdiv ? t.fdiv.name() : to_string(t.loss);
}

// ---------------------------------------------------------------------------
// Key registry
// ---------------------------------------------------------------------------

struct ConfigKey {
  std::string section;
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  using namespace detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto add = [&](const char* sec, const char* name, auto set, auto get) {
      k.push_back({sec, name, set, get});
    };
    auto num = [](double C::*field) {
      return std::pair{[field](C& c, const std::string& v) { c.*field = parse_double(v); },
                       [field](const C& c) { return fmt_double(c.*field); }};
    };
    auto count = [](std::size_t C::*field) {
      return std::pair{[field](C& c, const std::string& v) { c.*field = parse_uint(v); },
                       [field](const C& c) { return std::to_string(c.*field); }};
    };
    auto tnum = [](double TrainConfig::*field) {
      return std::pair{[field](C& c, const std::string& v) { c.train.*field = parse_double(v); },
                       [field](const C& c) { return fmt_double(c.train.*field); }};
    };
    auto tcount = [](std::size_t TrainConfig::*field) {
      return std::pair{[field](C& c, const std::string& v) { c.train.*field = parse_uint(v); },
                       [field](const C& c) { return std::to_string(c.train.*field); }};
    };
    auto add2 = [&](const char* sec, const char* name, auto p) { add(sec, name, p.first, p.second); };

    // [experiment]
    add("experiment", "name", [](C& c, const std::string& v) { c.name = trim(v); },
        [](const C& c) { return c.name; });
    add("experiment", "seeds", [](C& c, const std::string& v) { c.seeds = parse_seeds(v); },
        [](const C& c) { return join(c.seeds, [](auto s) { return std::to_string(s); }); });
    add("experiment", "output", [](C& c, const std::string& v) { c.output = trim(v); },
        [](const C& c) { return c.output; });
    add2("experiment", "n_train", count(&C::n_train));
    add2("experiment", "n_eval", count(&C::n_eval));
    add("experiment", "targets", [](C& c, const std::string& v) { c.targets = parse_list<std::array<double, 2>>(v, parse_pair); },
        [](const C& c) { return join(c.targets, pair_string); });
    add2("experiment", "data_dim", count(&C::data_dim));
    add2("experiment", "x_m", num(&C::x_m));
    add("experiment", "checkpoint_dir", [](C& c, const std::string& v) { c.checkpoint_dir = trim(v); },
        [](const C& c) { return c.checkpoint_dir; });

    // [arch]
    add("arch", "architecture", [](C& c, const std::string& v) { c.architecture = architecture_from_name(trim(v)); },
        [](const C& c) { return to_string(c.architecture); });
    add2("arch", "blocks", count(&C::blocks));
    add2("arch", "hidden", count(&C::hidden));
    add2("arch", "d_z", count(&C::d_z));
    add("arch", "padding", [](C& c, const std::string& v) { c.padding = pad_mode_from_name(trim(v)); },
        [](const C& c) { return to_string(c.padding); });
    add2("arch", "pad_noise", num(&C::pad_noise));
    add2("arch", "clamp", num(&C::clamp));
    add2("arch", "spectral_bound", num(&C::spectral_bound));
    add("arch", "init", [](C& c, const std::string& v) { c.init = init_from_name(trim(v)); },
        [](const C& c) { return to_string(c.init); });

    // [train]
    add2("train", "epochs", tcount(&TrainConfig::epochs));
    add2("train", "batch_size", tcount(&TrainConfig::batch_size));
    add2("train", "max_batches", tcount(&TrainConfig::max_batches_per_epoch));
    add2("train", "lr_model", tnum(&TrainConfig::lr_model));
    add2("train", "lr_critic", tnum(&TrainConfig::lr_critic));
    add2("train", "beta1", tnum(&TrainConfig::beta1));
    add2("train", "beta2", tnum(&TrainConfig::beta2));
    add2("train", "weight_decay", tnum(&TrainConfig::weight_decay));
    add2("train", "critic_weight_decay", tnum(&TrainConfig::critic_weight_decay));
    add2("train", "critic_steps", tcount(&TrainConfig::critic_steps));
    add2("train", "model_steps", tcount(&TrainConfig::model_steps));
    add("train", "loss", [](C& c, const std::string& v) { apply_loss_token(c.train, trim(v)); },
        [](const C& c) { return loss_label(c.train); });
    add("train", "critic_bound", [](C& c, const std::string& v) { c.train.fdiv.bound = parse_double(v); },
        [](const C& c) { return fmt_double(c.train.fdiv.bound); });
    add("train", "direction", [](C& c, const std::string& v) { c.train.direction = direction_from_name(trim(v)); },
        [](const C& c) { return to_string(c.train.direction); });
    add2("train", "lambda", tnum(&TrainConfig::lambda));
    add2("train", "lambda_prior", tnum(&TrainConfig::lambda_prior));
    add("train", "prior", [](C& c, const std::string& v) { c.train.prior = prior_from_name(trim(v)); },
        [](const C& c) { return to_string(c.train.prior); });
    add2("train", "prior_a", tnum(&TrainConfig::prior_a));
    add2("train", "prior_b", tnum(&TrainConfig::prior_b));
    add2("train", "sigma", tnum(&TrainConfig::sigma));
    add("train", "epsilon", [](C& c, const std::string& v) { c.train.sinkhorn.epsilon = parse_double(v); },
        [](const C& c) { return fmt_double(c.train.sinkhorn.epsilon); });
    add("train", "sinkhorn_max_iter", [](C& c, const std::string& v) { c.train.sinkhorn.max_iter = parse_uint(v); },
        [](const C& c) { return std::to_string(c.train.sinkhorn.max_iter); });
    add("train", "sinkhorn_tol", [](C& c, const std::string& v) { c.train.sinkhorn.tol = parse_double(v); },
        [](const C& c) { return fmt_double(c.train.sinkhorn.tol); });
    add2("train", "mmd_gamma", tnum(&TrainConfig::mmd_gamma));
    add("train", "pairing", [](C& c, const std::string& v) { c.train.pairing = pairing_from_name(trim(v)); },
        [](const C& c) { return to_string(c.train.pairing); });
    add("train", "latent",
        [](C& c, const std::string& v) {
          const auto t = trim(v);
          if (t == "normal") c.train.latent.kind = LatentSampler::Kind::normal;
          else if (t == "uniform") c.train.latent.kind = LatentSampler::Kind::uniform;
          else throw ConfigError("unknown latent law '" + t + "'");
        },
        [](const C& c) { return std::string(c.train.latent.kind == LatentSampler::Kind::normal ? "normal" : "uniform"); });
    add("train", "latent_a", [](C& c, const std::string& v) { c.train.latent.a = parse_double(v); },
        [](const C& c) { return fmt_double(c.train.latent.a); });
    add("train", "latent_b", [](C& c, const std::string& v) { c.train.latent.b = parse_double(v); },
        [](const C& c) { return fmt_double(c.train.latent.b); });

    // [sweep]
    add("sweep", "lambda_primes", [](C& c, const std::string& v) { c.lambda_primes = parse_list<double>(v, parse_double); },
        [](const C& c) { return join(c.lambda_primes, fmt_double); });
    add("sweep", "priors",
        [](C& c, const std::string& v) {
          c.priors = parse_list<PriorKind>(v, [](const std::string& s) { return prior_from_name(s); });
        },
        [](const C& c) { return join(c.priors, [](PriorKind p) { return to_string(p); }); });
    add("sweep", "architectures",
        [](C& c, const std::string& v) {
          c.architectures = parse_list<Architecture>(v, [](const std::string& s) { return architecture_from_name(s); });
        },
        [](const C& c) { return join(c.architectures, [](Architecture a) { return to_string(a); }); });
    add("sweep", "fdivs",
        [](C& c, const std::string& v) {
          c.fdivs = parse_list<FDivergence>(v, [](const std::string& s) { return fdiv_from_name(s).kind; });
        },
        [](const C& c) { return join(c.fdivs, [](FDivergence f) { return FDivergenceSpec{f}.name(); }); });
    add("sweep", "directions",
        [](C& c, const std::string& v) {
          c.directions = parse_list<Direction>(v, [](const std::string& s) { return direction_from_name(s); });
        },
        [](const C& c) { return join(c.directions, [](Direction d) { return to_string(d); }); });
    add("sweep", "latent_dims",
        [](C& c, const std::string& v) {
          c.latent_dims = parse_list<std::size_t>(v, [](const std::string& s) { return std::size_t(parse_uint(s)); });
        },
        [](const C& c) { return join(c.latent_dims, [](std::size_t d) { return std::to_string(d); }); });
    add("sweep", "losses",
        [](C& c, const std::string& v) {
          c.losses = split_list(v);
          TrainConfig probe;
          for (const auto& l : c.losses) apply_loss_token(probe, l);
        },
        [](const C& c) { return join(c.losses, [](const std::string& s) { return s; }); });
    add("sweep", "epsilons", [](C& c, const std::string& v) { c.epsilons = parse_list<double>(v, parse_double); },
        [](const C& c) { return join(c.epsilons, fmt_double); });
    add("sweep", "supports", [](C& c, const std::string& v) { c.supports = parse_list<std::array<double, 2>>(v, parse_pair); },
        [](const C& c) { return join(c.supports, pair_string); });
    add("sweep", "alphas", [](C& c, const std::string& v) { c.alphas = parse_list<double>(v, parse_double); },
        [](const C& c) { return join(c.alphas, fmt_double); });
    add("sweep", "sample_sizes",
        [](C& c, const std::string& v) {
          c.sample_sizes = parse_list<std::size_t>(v, [](const std::string& s) { return std::size_t(parse_uint(s)); });
        },
        [](const C& c) { return join(c.sample_sizes, [](std::size_t d) { return std::to_string(d); }); });
    add("sweep", "critics",
        [](C& c, const std::string& v) {
          c.critics = split_list(v);
          for (const auto& s : c.critics)
            if (s != "mlp" && s != "rkhs") throw ConfigError("unknown critic '" + s + "'");
        },
        [](const C& c) { return join(c.critics, [](const std::string& s) { return s; }); });
    return k;
  }();
  return keys;
}

namespace detail {

inline const ConfigKey* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name && (section.empty() || k.section == section)) return &k;
  return nullptr;
}

inline std::string join_errors(const std::vector<std::string>& errors) {
  std::string msg = std::to_string(errors.size()) + " configuration error(s):";
  for (const auto& e : errors) msg += "\n  " + e;
  return msg;
}

}  // namespace detail

/// Applies `section.key = value` or bare `key = value` assignments; every
/// failure is collected before throwing.
inline void apply_assignments(ExperimentConfig& cfg, const std::vector<std::pair<std::string, std::string>>& kv,
                              std::vector<std::string>& errors, const std::string& origin,
                              const std::vector<std::string>* locations = nullptr) {
  for (std::size_t i = 0; i < kv.size(); ++i) {
    const auto& [full, value] = kv[i];
    const std::string& where = locations ? (*locations)[i] : origin;
    std::string section, name = full;
    if (const auto dot = full.find('.'); dot != std::string::npos) {
      section = full.substr(0, dot);
      name = full.substr(dot + 1);
    }
    const ConfigKey* key = detail::find_key(section, name);
    if (!key) {
      errors.push_back(where + ": unknown key '" + full + "'");
      continue;
    }
    try {
      key->set(cfg, value);
    } catch (const Error& e) {
      errors.push_back(where + ": " + key->section + "." + key->name + ": " + e.what());
    }
  }
}

/// Parses sectioned key = value text. '#' and ';' start comments. When
/// `locations` is given it receives "origin:line" for each returned entry.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                          std::vector<std::string>& errors,
                                                                          const std::string& origin = "config",
                                                                          std::vector<std::string>* locations = nullptr) {
  static const std::set<std::string> sections{"experiment", "arch", "train", "sweep"};
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line, section;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    const std::string where = origin + ":" + std::to_string(lineno);
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.resize(c);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + ": malformed section header");
        continue;
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) errors.push_back(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + ": expected key = value");
      continue;
    }
    if (section.empty()) {
      errors.push_back(where + ": key outside of a section");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string full = section + "." + key;
    if (!seen.insert(full).second) errors.push_back(where + ": duplicate key '" + full + "'");
    if (!sections.count(section)) continue;
    const ConfigKey* k = detail::find_key(section, key);
    if (!k) {
      errors.push_back(where + ": unknown key '" + key + "' in [" + section + "]");
      continue;
    }
    out.emplace_back(full, detail::trim(line.substr(eq + 1)));
    if (locations) locations->push_back(where);
  }
  return out;
}

/// Field-level checks beyond what parsing enforces; returns every failure.
inline std::vector<std::string> validation_errors(const ExperimentConfig& c) {
  std::vector<std::string> e;
  if (c.seeds.empty()) e.push_back("experiment.seeds: at least one seed required");
  if (c.n_train == 0 || c.n_eval == 0) e.push_back("experiment.n_train and n_eval must be positive");
  if (c.data_dim == 0) e.push_back("experiment.data_dim must be positive");
  if (!(c.x_m > 0.0)) e.push_back("experiment.x_m must be positive");
  if (c.blocks == 0 || c.hidden == 0) e.push_back("arch.blocks and arch.hidden must be positive");
  if (!(c.clamp > 0.0)) e.push_back("arch.clamp must be positive");
  if (!(c.spectral_bound > 0.0 && c.spectral_bound < 1.0)) e.push_back("arch.spectral_bound must lie in (0, 1)");
  if (c.pad_noise < 0.0) e.push_back("arch.pad_noise must be >= 0");
  try {
    c.train.validate();
  } catch (const Error& ex) {
    e.push_back(ex.what());
  }
  if (!(c.train.sinkhorn.epsilon > 0.0)) e.push_back("train.epsilon must be positive");
  if (c.train.fdiv.bound < 0.0) e.push_back("train.critic_bound must be >= 0");
  if (c.train.latent.kind == LatentSampler::Kind::uniform && !(c.train.latent.a < c.train.latent.b))
    e.push_back("train.latent_a must be below train.latent_b");
  if (c.train.prior == PriorKind::uniform && !(c.train.prior_a < c.train.prior_b))
    e.push_back("train.prior_a must be below train.prior_b");
  for (double v : c.lambda_primes)
    if (v < 0.0) e.push_back("sweep.lambda_primes entries must be >= 0");
  for (double v : c.epsilons)
    if (!(v > 0.0)) e.push_back("sweep.epsilons entries must be positive");
  for (double v : c.alphas)
    if (!(v > 0.0)) e.push_back("sweep.alphas entries must be positive");
  for (const auto& s : c.supports)
    if (!(s[0] < s[1])) e.push_back("sweep.supports entries need a < b");
  for (std::size_t n : c.sample_sizes)
    if (n < 2) e.push_back("sweep.sample_sizes entries must be >= 2");
  return e;
}

/// Resolved configuration as sectioned text (round-trips through the parser).
inline std::string config_to_text(const ExperimentConfig& c) {
  std::string out, section;
  for (const auto& k : config_keys()) {
    if (k.section != section) {
      section = k.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += k.name + " = " + k.get(c) + "\n";
  }
  return out;
}

/// Base configuration, then file text, then overrides; throws one ConfigError
/// listing every problem found.
inline ExperimentConfig resolve_config(ExperimentConfig base, const std::string& file_text,
                                       const std::vector<std::pair<std::string, std::string>>& overrides,
                                       const std::string& origin = "config") {
  std::vector<std::string> errors;
  if (!file_text.empty()) {
    std::vector<std::string> locations;
    const auto kv = parse_config_text(file_text, errors, origin, &locations);
    apply_assignments(base, kv, errors, origin, &locations);
  }
  apply_assignments(base, overrides, errors, "override");
  for (auto& e : validation_errors(base)) errors.push_back(std::move(e));
  if (!errors.empty()) throw ConfigError(detail::join_errors(errors));
  return base;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace vinn
