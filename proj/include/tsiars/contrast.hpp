// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "tsiars/numerics/ops.hpp"
#include "tsiars/numerics/tape.hpp"
#include "tsiars/numerics/tensor.hpp"

namespace tsiars::contrast {

struct LossConfig {
  double alpha = 0.5;  // weight of the temporal term
  numerics::PoolMode pool_mode = numerics::PoolMode::kMax;
  bool include_unpooled = true;

  void validate() const;
};

/// Tag carried by every gradient-tracked combined-loss node.
inline constexpr const char* kLossHeadTag = "loss_head";

/// One resolution of the overlap pyramid, forward values only.
template <typename T>
struct PyramidLevel {
  numerics::Tensor<T> f_o;
  numerics::Tensor<T> f_o_prime;
  std::size_t pooled_length = 0;
  std::size_t canonical_index = 0;
  std::optional<double> temporal_loss;
  std::optional<double> instance_loss;
  std::optional<double> combined_loss;
};

/// One resolution of the overlap pyramid recorded on a tape.
struct TrackedLevel {
  numerics::Var f_o;
  numerics::Var f_o_prime;
  std::size_t pooled_length = 0;
  std::size_t canonical_index = 0;
};

/// Lengths of the pyramid levels for an overlap of `length` timesteps.
std::vector<std::size_t> pyramid_lengths(std::size_t length, bool include_unpooled);

// --- forward-only ----------------------------------------------------------

/// Temporal contrast over the overlap (B x K x L maps), symmetrized over the
/// two views, averaged over instances and timesteps. Zero when L = 1.
template <typename T>
double temporal_loss(const numerics::Tensor<T>& f, const numerics::Tensor<T>& f_prime);

/// Instance contrast at each timestep against the other batch members,
/// symmetrized and averaged. Zero when B = 1.
template <typename T>
double instance_loss(const numerics::Tensor<T>& f, const numerics::Tensor<T>& f_prime);

inline double combined_loss(double temporal, double instance, double alpha) {
  return alpha * temporal + (1.0 - alpha) * instance;
}

template <typename T>
std::vector<PyramidLevel<T>> build_pyramid(const numerics::Tensor<T>& f_o, const numerics::Tensor<T>& f_o_prime,
                                           const LossConfig& config);

/// Fills the three loss fields of every level.
template <typename T>
void evaluate_levels(std::vector<PyramidLevel<T>>& pyramid, double alpha);

/// Sum of the combined losses in pyramid order; levels must be evaluated.
template <typename T>
double hierarchical_loss(const std::vector<PyramidLevel<T>>& pyramid);

// --- gradient-tracked --------------------------------------------------------

/// Pools on the tape. With `stop_at_index` set, pooling stops once the level
/// with that canonical index has been produced.
template <typename T>
std::vector<TrackedLevel> build_pyramid(numerics::Tape<T>& tape, numerics::Var f_o, numerics::Var f_o_prime,
                                        const LossConfig& config,
                                        std::optional<std::size_t> stop_at_index = std::nullopt);

template <typename T>
numerics::Var temporal_loss(numerics::Tape<T>& tape, numerics::Var f, numerics::Var f_prime);

template <typename T>
numerics::Var instance_loss(numerics::Tape<T>& tape, numerics::Var f, numerics::Var f_prime);

/// alpha * temporal + (1 - alpha) * instance as one fused node tagged kLossHeadTag.
template <typename T>
numerics::Var combined_loss(numerics::Tape<T>& tape, numerics::Var f, numerics::Var f_prime, double alpha);

/// Sum of per-level combined losses (the full hierarchical objective).
template <typename T>
numerics::Var hierarchical_loss(numerics::Tape<T>& tape, const std::vector<TrackedLevel>& pyramid, double alpha);

}  // namespace tsiars::contrast
