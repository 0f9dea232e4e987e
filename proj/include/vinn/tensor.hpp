#pragma once

// Dense float64 tensors with a define-by-run reverse-mode gradient record.
//
// A Tensor is an immutable-by-default value (shape + row-major data) that may
// carry a reference into a Tape. Every operation whose inputs include a
// tracked tensor appends a node to that tape; Tape::backward walks the nodes
// in reverse insertion order, which is a valid topological order because a
// node's parents always exist before it does.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vinn/errors.hpp"

namespace vinn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class Tape;

class Tensor {
 public:
  Tensor() : Tensor(Shape{0}) {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)),
        buf_(std::make_shared<std::vector<double>>(shape_size(shape_), fill)) {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), buf_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (shape_size(shape_) != buf_->size()) {
      throw ShapeError("tensor shape " + shape_string(shape_) + " does not hold " +
                       std::to_string(buf_->size()) + " values");
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return buf_->size(); }
  bool empty() const noexcept { return buf_->empty(); }

  /// Leading dimension (1 for scalars).
  std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
  /// Trailing dimension of a matrix, 1 otherwise.
  std::size_t cols() const noexcept { return shape_.size() == 2 ? shape_[1] : 1; }

  std::span<const double> values() const noexcept { return {buf_->data(), buf_->size()}; }

  /// Writable view. Only untracked tensors may be written; shared buffers are
  /// copied first so other holders never observe the write.
  std::span<double> mutable_values() {
    if (tape_ != nullptr) throw std::logic_error("cannot write into a tracked tensor");
    if (buf_.use_count() > 1) buf_ = std::make_shared<std::vector<double>>(*buf_);
    return {buf_->data(), buf_->size()};
  }

  double operator[](std::size_t i) const { return (*buf_)[i]; }
  double operator()(std::size_t r, std::size_t c) const { return (*buf_)[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return (*buf_)[0];
  }

  bool tracked() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }

  /// Same values, no gradient tracking.
  Tensor detach() const {
    Tensor t = *this;
    t.tape_ = nullptr;
    t.node_ = 0;
    return t;
  }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<std::vector<double>> buf_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// A trainable array. Identity (for gradient lookup) is the object address.
struct Parameter {
  Tensor value;
  std::string name;
};

/// Append-only gradient record for one forward/backward pass. Confined to a
/// single thread; tensors recorded on it must not be used after it dies.
class Tape {
 public:
  using Backward = std::function<void(const std::vector<double>& grad_out, Tape& tape)>;

  struct Node {
    std::string_view op;
    std::vector<std::size_t> parents;
    Shape shape;
    Backward backward;
    std::vector<double> grad;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tracked leaf holding a copy of `value`'s data.
  Tensor leaf(const Tensor& value) {
    Tensor t = value.detach();
    attach(t, "leaf", {}, nullptr);
    return t;
  }

  /// Tracked view of a parameter; repeated calls within one pass share a node.
  Tensor watch(const Parameter& p) {
    if (auto it = params_.find(&p); it != params_.end()) {
      Tensor t = p.value.detach();
      t.tape_ = this;
      t.node_ = it->second;
      return t;
    }
    Tensor t = p.value.detach();
    attach(t, "parameter", {}, nullptr);
    params_.emplace(&p, t.node_);
    return t;
  }

  /// Record `value` as the output of `op` with the given inputs. Untracked
  /// inputs are ignored; if none are tracked the value is returned as-is.
  Tensor record(std::string_view op, Tensor value, std::initializer_list<const Tensor*> inputs,
                Backward backward) {
    std::vector<std::size_t> parents;
    for (const Tensor* in : inputs) {
      if (in->tracked()) {
        if (in->tape_ != this) throw Error("operation mixes tensors from different tapes");
        parents.push_back(in->node_);
      }
    }
    if (parents.empty()) return value.detach();
    Tensor t = value.detach();
    attach(t, op, std::move(parents), std::move(backward));
    return t;
  }

  /// Add `g` into the gradient accumulator of `t` (no-op when untracked).
  void accumulate(const Tensor& t, std::span<const double> g) {
    if (!t.tracked() || t.tape_ != this) return;
    auto& acc = nodes_[t.node_].grad;
    if (acc.empty()) acc.assign(g.begin(), g.end());
    else
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  }

  /// Scalar-broadcast accumulation: adds `g` to every entry.
  void accumulate_fill(const Tensor& t, double g) {
    if (!t.tracked() || t.tape_ != this) return;
    auto& acc = nodes_[t.node_].grad;
    if (acc.empty()) acc.assign(shape_size(nodes_[t.node_].shape), g);
    else
      for (double& a : acc) a += g;
  }

  bool wants_grad(const Tensor& t) const noexcept { return t.tracked() && t.tape_ == this; }

  void backward(const Tensor& root) {
    if (!root.tracked() || root.tape_ != this) throw Error("backward: root is not tracked on this tape");
    if (root.size() != 1) throw ShapeError("backward: root must be scalar, got " + shape_string(root.shape()));
    for (auto& n : nodes_) n.grad.clear();
    nodes_[root.node_].grad.assign(1, 1.0);
    for (std::size_t i = root.node_ + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(n.grad, *this);
    }
  }

  /// d(root)/d(t) after backward; zeros when `t` received no gradient.
  Tensor gradient(const Tensor& t) const {
    if (!t.tracked() || t.tape_ != this) return Tensor(t.shape(), 0.0);
    const Node& n = nodes_[t.node_];
    if (n.grad.empty()) return Tensor(n.shape, 0.0);
    return Tensor(n.shape, n.grad);
  }

  /// Gradient with respect to a watched parameter (zeros if never watched).
  Tensor gradient(const Parameter& p) const {
    auto it = params_.find(&p);
    if (it == params_.end()) return Tensor(p.value.shape(), 0.0);
    const Node& n = nodes_[it->second];
    if (n.grad.empty()) return Tensor(n.shape, 0.0);
    return Tensor(n.shape, n.grad);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }

 private:
  void attach(Tensor& t, std::string_view op, std::vector<std::size_t> parents, Backward backward) {
    t.tape_ = this;
    t.node_ = nodes_.size();
    nodes_.push_back(Node{op, std::move(parents), t.shape(), std::move(backward), {}});
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> params_;
};

/// The parameter as seen by a forward pass: tracked when a tape is active.
inline Tensor use(const Parameter& p, Tape* tape) { return tape ? tape->watch(p) : p.value; }

namespace detail {

inline Tape* tape_of(const Tensor& a) { return a.tape(); }

inline Tape* tape_of(const Tensor& a, const Tensor& b) {
  if (a.tracked() && b.tracked() && a.tape() != b.tape())
    throw Error("operation mixes tensors from different tapes");
  return a.tracked() ? a.tape() : b.tape();
}

inline void require_finite(std::string_view op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string(op) + ": non-finite output");
  }
}

/// Wraps a freshly computed value as the output of `op`.
inline Tensor finish(std::string_view op, Tensor out, Tape* tape,
                     std::initializer_list<const Tensor*> inputs, Tape::Backward backward) {
  require_finite(op, out.values());
  if (tape == nullptr) return out;
  return tape->record(op, std::move(out), inputs, std::move(backward));
}

inline void require_rank2(std::string_view op, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

}  // namespace detail

}  // namespace vinn
