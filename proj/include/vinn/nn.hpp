#pragma once

// Fully connected building blocks shared by flow subnets and critics.

#include <cmath>
#include <string>
#include <vector>

#include "vinn/ops.hpp"
#include "vinn/random.hpp"

namespace vinn {

enum class Activation { tanh, relu };

/// Weight initialization for fully connected layers.
///   scaled:          W ~ N(0, 1/fan_in), b = 0
///   standard_normal: W ~ N(0, 1),        b = 0
enum class InitMode { scaled, standard_normal };

inline Tensor activate(Activation act, const Tensor& x) { return act == Activation::tanh ? tanh(x) : relu(x); }

/// y = x W + b with W stored fan_in x fan_out.
struct Linear {
  Parameter weight;
  Parameter bias;

  std::size_t fan_in() const { return weight.value.rows(); }
  std::size_t fan_out() const { return weight.value.cols(); }

  Tensor operator()(const Tensor& x, Tape* tape) const {
    return add_rowwise(matmul(x, use(weight, tape)), use(bias, tape));
  }
};

inline Linear make_linear(std::size_t fan_in, std::size_t fan_out, InitMode init, Rng& rng, bool zero = false) {
  Linear l;
  l.weight.value = Tensor(Shape{fan_in, fan_out}, 0.0);
  l.bias.value = Tensor(Shape{fan_out}, 0.0);
  if (!zero) {
    const double sd = init == InitMode::scaled ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
    for (double& w : l.weight.value.mutable_values()) w = rng.normal(0.0, sd);
  }
  return l;
}

/// Multilayer perceptron with a shared hidden activation and a linear output.
struct Mlp {
  std::vector<Linear> layers;
  Activation hidden = Activation::relu;

  std::size_t in_dim() const { return layers.front().fan_in(); }
  std::size_t out_dim() const { return layers.back().fan_out(); }

  Tensor operator()(const Tensor& x, Tape* tape) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](h, tape);
      if (i + 1 < layers.size()) h = activate(hidden, h);
    }
    return h;
  }

  void collect(std::vector<Parameter*>& out) {
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
};

/// Builds an MLP with layer widths `sizes` (input first, output last).
inline Mlp make_mlp(const std::vector<std::size_t>& sizes, Activation hidden, InitMode init, Rng& rng,
                    bool zero_last = false) {
  if (sizes.size() < 2) throw ShapeError("make_mlp: need at least input and output widths");
  Mlp m;
  m.hidden = hidden;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const bool last = i + 2 == sizes.size();
    m.layers.push_back(make_linear(sizes[i], sizes[i + 1], init, rng, last && zero_last));
  }
  return m;
}

/// Critic V'(x): two hidden ReLU layers of width 64 and a scalar output.
inline Mlp make_critic(std::size_t in_dim, Rng& rng, std::size_t width = 64) {
  return make_mlp({in_dim, width, width, 1}, Activation::relu, InitMode::scaled, rng);
}

inline std::vector<Parameter*> parameters_of(Mlp& m) {
  std::vector<Parameter*> out;
  m.collect(out);
  return out;
}

}  // namespace vinn
