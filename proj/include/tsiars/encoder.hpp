// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tsiars/augment.hpp"
#include "tsiars/numerics/tape.hpp"
#include "tsiars/numerics/tensor.hpp"

namespace tsiars::encoder {

struct EncoderConfig {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 128;
  std::size_t num_blocks = 8;
  std::size_t kernel_width = 3;
  bool layer_norm = false;  // per-timestep normalization after each residual unit
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parameter tensors in a fixed order:
/// input projection (H x D x 1, bias H), one H x H x W kernel per residual
/// unit, output projection (K x H x 1, bias K).
template <typename T>
struct EncoderParams {
  EncoderConfig config;
  std::vector<std::string> names;
  std::vector<numerics::Tensor<T>> tensors;

  std::size_t parameter_count() const;

  template <typename U>
  EncoderParams<U> cast() const {
    EncoderParams<U> out;
    out.config = config;
    out.names = names;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }
};

/// Fan-in scaled uniform initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& config);

/// Parameters placed on a tape, aligned with EncoderParams::tensors.
struct BoundParams {
  std::vector<numerics::Var> vars;
};

template <typename T>
BoundParams bind(numerics::Tape<T>& tape, const EncoderParams<T>& params, bool requires_grad);

struct MaskSettings {
  double p_drop = 0.5;
  std::mt19937_64* rng = nullptr;  // required when training with p_drop > 0
};

/// B x D x L view -> B x K x L feature map:
/// input projection, latent timestamp masking (training only), residual
/// units y = x + Conv1D(ReLU(x)), output projection.
template <typename T>
numerics::Var encode(numerics::Tape<T>& tape, numerics::Var view, const BoundParams& params,
                     const EncoderConfig& config, const MaskSettings& mask, bool training);

/// Inference helper: no masking, no gradients.
template <typename T>
numerics::Tensor<T> encode_values(const numerics::Tensor<T>& view, const EncoderParams<T>& params);

/// Overlap parts of the two view feature maps, aligned to the same absolute timesteps.
template <typename T>
std::pair<numerics::Var, numerics::Var> slice_overlap(numerics::Tape<T>& tape, numerics::Var view_a,
                                                      numerics::Var view_b, const augment::CropPlan& plan);

/// FNV-1a over the raw parameter bytes.
template <typename T>
std::uint64_t fingerprint(const EncoderParams<T>& params);

}  // namespace tsiars::encoder
