#pragma once

// Versioned textual checkpoint of a flow: block kinds, dims and parameter
// arrays as JSON. Doubles are written with round-trip precision.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "vinn/flows.hpp"

namespace vinn {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "vinn-flow";

namespace detail {

using json = nlohmann::json;

inline void require_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) throw NonFiniteError("checkpoint: non-finite parameter");
}

inline json tensor_to_json(const Tensor& t) {
  require_finite(t);
  return json{{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

inline Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("values").get<std::vector<double>>());
}

inline std::string activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw Error("checkpoint: unknown activation '" + s + "'");
}

inline json mlp_to_json(const Mlp& m) {
  json layers = json::array();
  for (const auto& l : m.layers)
    layers.push_back({{"weight", tensor_to_json(l.weight.value)}, {"bias", tensor_to_json(l.bias.value)}});
  return {{"activation", activation_name(m.hidden)}, {"layers", layers}};
}

inline Mlp mlp_from_json(const json& j) {
  Mlp m;
  m.hidden = activation_from_name(j.at("activation").get<std::string>());
  for (const auto& l : j.at("layers")) {
    Linear lin;
    lin.weight.value = tensor_from_json(l.at("weight"));
    lin.bias.value = tensor_from_json(l.at("bias"));
    m.layers.push_back(std::move(lin));
  }
  if (m.layers.empty()) throw Error("checkpoint: subnet without layers");
  return m;
}

/// Checked before any json is built so a failure leaves nothing half-constructed.
inline void require_finite(const FlowBlock& blk) {
  std::visit(
      [](const auto& b) {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, CouplingBlock>) {
          for (const Mlp* m : {&b.s1, &b.t1, &b.s2, &b.t2})
            for (const auto& l : m->layers) {
              require_finite(l.weight.value);
              require_finite(l.bias.value);
            }
        } else if constexpr (std::is_same_v<B, IResNetBlock>) {
          for (const Parameter* p : {&b.w1, &b.b1, &b.w2, &b.b2}) require_finite(p->value);
        }
      },
      blk);
}

inline json block_to_json(const FlowBlock& blk) {
  return std::visit(
      [](const auto& b) -> json {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, CouplingBlock>) {
          return {{"kind", "coupling"}, {"dim", b.dim},           {"split", b.split},
                  {"clamp", b.clamp},   {"s1", mlp_to_json(b.s1)}, {"t1", mlp_to_json(b.t1)},
                  {"s2", mlp_to_json(b.s2)}, {"t2", mlp_to_json(b.t2)}};
        } else if constexpr (std::is_same_v<B, IResNetBlock>) {
          return {{"kind", "iresnet"},
                  {"spectral_bound", b.spectral_bound},
                  {"tol", b.tol},
                  {"max_iter", b.max_iter},
                  {"w1", tensor_to_json(b.w1.value)},
                  {"b1", tensor_to_json(b.b1.value)},
                  {"w2", tensor_to_json(b.w2.value)},
                  {"b2", tensor_to_json(b.b2.value)}};
        } else {
          return {{"kind", "permutation"}, {"perm", b.perm}};
        }
      },
      blk);
}

inline FlowBlock block_from_json(const json& j, std::size_t dim) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "coupling") {
    CouplingBlock b;
    b.dim = j.at("dim").get<std::size_t>();
    b.split = j.at("split").get<std::size_t>();
    b.clamp = j.at("clamp").get<double>();
    b.s1 = mlp_from_json(j.at("s1"));
    b.t1 = mlp_from_json(j.at("t1"));
    b.s2 = mlp_from_json(j.at("s2"));
    b.t2 = mlp_from_json(j.at("t2"));
    if (b.dim != dim || b.split == 0 || b.split >= dim) throw ShapeError("checkpoint: coupling dims inconsistent");
    return b;
  }
  if (kind == "iresnet") {
    IResNetBlock b;
    b.spectral_bound = j.at("spectral_bound").get<double>();
    b.tol = j.at("tol").get<double>();
    b.max_iter = j.at("max_iter").get<std::size_t>();
    b.w1.value = tensor_from_json(j.at("w1"));
    b.b1.value = tensor_from_json(j.at("b1"));
    b.w2.value = tensor_from_json(j.at("w2"));
    b.b2.value = tensor_from_json(j.at("b2"));
    if (b.dim() != dim || b.w2.value.rows() != dim) throw ShapeError("checkpoint: iresnet dims inconsistent");
    return b;
  }
  if (kind == "permutation") {
    Permutation p;
    p.perm = j.at("perm").get<std::vector<std::size_t>>();
    if (p.perm.size() != dim) throw ShapeError("checkpoint: permutation length");
    return p;
  }
  throw Error("checkpoint: unknown block kind '" + kind + "'");
}

}  // namespace detail

inline std::string checkpoint_dump(const FlowModel& model) {
  for (const auto& b : model.blocks()) detail::require_finite(b);
  detail::json blocks = detail::json::array();
  for (const auto& b : model.blocks()) blocks.push_back(detail::block_to_json(b));
  detail::json j{{"format", kCheckpointFormat},
                 {"version", kCheckpointVersion},
                 {"dim", model.dim()},
                 {"dim_y", model.dim_y()},
                 {"blocks", blocks}};
  return j.dump(1);
}

inline FlowModel checkpoint_parse(const std::string& text) {
  detail::json j;
  try {
    j = detail::json::parse(text);
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw Error("checkpoint: not a flow checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw Error("checkpoint: unsupported version " + std::to_string(version));
    FlowModel m(j.at("dim").get<std::size_t>(), j.at("dim_y").get<std::size_t>());
    for (const auto& b : j.at("blocks")) m.add(detail::block_from_json(b, m.dim()));
    return m;
  } catch (const detail::json::exception& e) {
    throw Error(std::string("checkpoint: malformed document: ") + e.what());
  }
}

inline void save_checkpoint(const FlowModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << checkpoint_dump(model) << "\n";
}

inline FlowModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_parse(ss.str());
}

}  // namespace vinn
