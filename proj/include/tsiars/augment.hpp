// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "tsiars/numerics/tape.hpp"
#include "tsiars/numerics/tensor.hpp"

namespace tsiars::augment {

/// Two crops [a_start, a_end) and [b_start, b_end) whose intersection is
/// [b_start, a_end). View A covers the left part, view B the right part.
struct CropPlan {
  std::size_t a_start = 0;
  std::size_t a_end = 0;
  std::size_t b_start = 0;
  std::size_t b_end = 0;

  std::size_t overlap_start() const { return b_start; }
  std::size_t overlap_end() const { return a_end; }
  std::size_t overlap_length() const { return a_end - b_start; }
  std::size_t a_length() const { return a_end - a_start; }
  std::size_t b_length() const { return b_end - b_start; }

  /// Throws std::invalid_argument unless 0 <= a_start <= b_start < a_end <= b_end <= length.
  void validate(std::size_t length) const;

  friend bool operator==(const CropPlan&, const CropPlan&) = default;
};

/// Overlap-first sampling: overlap length uniform in [2^(min_overlap_pow+1), length],
/// overlap position uniform, then independent uniform extensions of view A to
/// the left and view B to the right.
CropPlan sample_crop(std::size_t length, int min_overlap_pow, std::mt19937_64& rng);

/// Contiguous slices of a B x D x L tensor.
template <typename T>
std::pair<numerics::Tensor<T>, numerics::Tensor<T>> apply_crop(const numerics::Tensor<T>& batch,
                                                               const CropPlan& plan);

/// Per (instance, timestep) keep flags, row-major B x L.
struct MaskPlan {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::uint8_t> keep;

  std::size_t dropped() const;
};

void validate_drop_probability(double p_drop);

MaskPlan sample_mask(std::size_t batch, std::size_t length, double p_drop, std::mt19937_64& rng);

/// Zeroes whole latent columns f[b, :, t] where the plan drops (b, t).
template <typename T>
numerics::Var apply_mask(numerics::Tape<T>& tape, numerics::Var features, const MaskPlan& plan);

/// Timestamp masking of a B x K x L feature map. Identity when not training
/// or when p_drop is 0; no random draws are made in either case.
template <typename T>
numerics::Var mask_latent(numerics::Tape<T>& tape, numerics::Var features, double p_drop, std::mt19937_64& rng,
                          bool training);

}  // namespace tsiars::augment
