// SPDX-License-Identifier: Apache-2.0
#include "tsiars/numerics/tape.hpp"

#include <stdexcept>

namespace tsiars::numerics {

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward,
                    std::string_view tag) {
  Node node;
  node.value = std::move(value);
  node.tag = tag;
  for (Var in : inputs) {
    if (in.id >= nodes_.size()) throw std::out_of_range("tape input refers to an unknown node");
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>* Tape<T>::grad(Var v) const {
  const auto& node = nodes_.at(v.id);
  return node.grad ? &*node.grad : nullptr;
}

template <typename T>
void Tape<T>::accumulate(Var v, const Tensor<T>& partial) {
  auto& node = nodes_.at(v.id);
  if (!node.requires_grad) return;
  if (partial.shape() != node.value.shape()) {
    throw std::logic_error("gradient shape " + to_string(partial.shape()) + " does not match value shape " +
                           to_string(node.value.shape()));
  }
  if (!node.grad) {
    node.grad = partial;
    return;
  }
  auto dst = node.grad->values();
  auto src = partial.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::backward(Var loss) {
  auto& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " + to_string(root.value.shape()));
  }
  for (auto& node : nodes_) {
    if (!node.is_leaf) node.grad.reset();
  }
  ++backward_calls_;
  if (!root.requires_grad) return;
  accumulate(loss, Tensor<T>(root.value.shape(), T{1}));
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.backward || !node.grad) continue;
    // The closure may accumulate into earlier nodes only; this node's grad stays put.
    node.backward(*this, *node.grad);
    ++node.backward_runs;
    ++backward_steps_;
  }
}

template <typename T>
void Tape<T>::zero_grad() {
  for (auto& node : nodes_) node.grad.reset();
}

template <typename T>
std::size_t Tape<T>::count_tracked(std::string_view tag) const {
  std::size_t n = 0;
  for (const auto& node : nodes_) {
    if (node.tag == tag && node.backward) ++n;
  }
  return n;
}

template <typename T>
std::size_t Tape<T>::backward_steps(std::string_view tag) const {
  std::size_t n = 0;
  for (const auto& node : nodes_) {
    if (node.tag == tag) n += node.backward_runs;
  }
  return n;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace tsiars::numerics
