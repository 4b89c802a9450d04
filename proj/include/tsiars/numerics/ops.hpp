// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsiars/numerics/tape.hpp"
#include "tsiars/numerics/tensor.hpp"

namespace tsiars::numerics {

enum class PoolMode { kMax, kAvg };

PoolMode parse_pool_mode(std::string_view text);
std::string to_string(PoolMode mode);

/// Length after one width-2 pooling step.
constexpr std::size_t pooled_length(std::size_t length) { return (length + 1) / 2; }

// ---------------------------------------------------------------------------
// Plain kernels. No tape involvement; used directly by forward-only paths.
// ---------------------------------------------------------------------------

/// Same-padded 1-D convolution: x is B x Cin x L, w is Cout x Cin x W (W odd).
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w);

/// Partials of conv1d_forward. Either output pointer may be null.
template <typename T>
void conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out, Tensor<T>* grad_x,
                     Tensor<T>* grad_w);

/// Non-overlapping width-2 pooling along the last axis of a B x C x L tensor.
/// An odd tail element forms its own window. For max pooling, `argmax`
/// (if given) receives the flat input index chosen for each output element;
/// ties go to the earlier element.
template <typename T>
Tensor<T> pool1d_forward(const Tensor<T>& x, PoolMode mode, std::vector<std::uint32_t>* argmax = nullptr);

/// Numerically stable softmax via max subtraction.
std::vector<double> softmax(std::span<const double> logits);

// ---------------------------------------------------------------------------
// Differentiable operations recorded on a tape.
// ---------------------------------------------------------------------------

template <typename T>
Var conv1d(Tape<T>& tape, Var x, Var kernel);

template <typename T>
Var pool1d(Tape<T>& tape, Var x, PoolMode mode);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// x is B x C x L, bias has C entries broadcast over batch and time.
template <typename T>
Var add_channel_bias(Tape<T>& tape, Var x, Var bias);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);

/// (m x k) @ (k x n).
template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b);

template <typename T>
Var sum(Tape<T>& tape, Var x);

template <typename T>
Var mean(Tape<T>& tape, Var x);

template <typename T>
Var dot(Tape<T>& tape, Var a, Var b);

/// 1-D tensor of the elements whose mask entry is true, in flat order.
template <typename T>
Var masked_select(Tape<T>& tape, Var x, const std::vector<bool>& mask);

/// x[:, :, begin:end] of a B x C x L tensor.
template <typename T>
Var slice_time(Tape<T>& tape, Var x, std::size_t begin, std::size_t end);

/// Normalizes each (batch, time) column over the channel axis, no affine terms.
template <typename T>
Var layer_norm_channels(Tape<T>& tape, Var x, T eps = T(1e-5));

}  // namespace tsiars::numerics
