// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "tsiars/numerics/tensor.hpp"

namespace tsiars::numerics {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

/// Reverse-mode gradient tape.
///
/// Values are appended in execution order, so node ids are already a
/// topological order. Values are never mutated after they are recorded.
/// Leaf gradients accumulate across backward() calls until zero_grad();
/// interior gradients are rebuilt by every backward() call.
template <typename T>
class Tape {
 public:
  /// Receives the gradient of the node's output and pushes partials to inputs
  /// through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Var leaf(Tensor<T> value, bool requires_grad);

  /// Records an operation output. The backward closure is kept only when at
  /// least one input requires a gradient. `tag` labels the node for counting.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward,
             std::string_view tag = {});

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient of a node, or nullptr when none has been accumulated.
  const Tensor<T>* grad(Var v) const;

  /// Adds `partial` into the gradient buffer of `v`; no-op when `v` needs none.
  void accumulate(Var v, const Tensor<T>& partial);

  /// Back-propagates from a one-element node.
  void backward(Var loss);

  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_calls() const { return backward_calls_; }
  /// Number of backward closures executed across all backward() calls.
  std::size_t backward_steps() const { return backward_steps_; }
  /// Nodes carrying `tag` that hold a backward closure.
  std::size_t count_tracked(std::string_view tag) const;
  /// Backward closures executed for nodes carrying `tag`.
  std::size_t backward_steps(std::string_view tag) const;

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
    std::string_view tag;
    std::size_t backward_runs = 0;
  };

  std::deque<Node> nodes_;
  std::size_t backward_calls_ = 0;
  std::size_t backward_steps_ = 0;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace tsiars::numerics
