// SPDX-License-Identifier: Apache-2.0
#include "tsiars/encoder.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "tsiars/error.hpp"
#include "tsiars/numerics/ops.hpp"

namespace tsiars::encoder {

using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

void EncoderConfig::validate() const {
  if (input_dim == 0) throw ConfigError("encoder input_dim must be positive");
  if (hidden_dim == 0 || output_dim == 0) throw ConfigError("encoder widths must be positive");
  if (num_blocks == 0) throw ConfigError("encoder needs at least one residual block");
  if (kernel_width % 2 == 0) throw ConfigError("encoder kernel_width must be odd");
}

template <typename T>
std::size_t EncoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  EncoderParams<T> params;
  params.config = config;
  auto add = [&](std::string name, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
    params.names.push_back(std::move(name));
    params.tensors.push_back(std::move(t));
  };
  const std::size_t d = config.input_dim, h = config.hidden_dim, k = config.output_dim, w = config.kernel_width;
  add("input_proj.weight", {h, d, 1}, d);
  add("input_proj.bias", {h}, d);
  for (std::size_t b = 0; b < config.num_blocks; ++b) add("block" + std::to_string(b) + ".kernel", {h, h, w}, h * w);
  add("output_proj.weight", {k, h, 1}, h);
  add("output_proj.bias", {k}, h);
  return params;
}

template <typename T>
BoundParams bind(Tape<T>& tape, const EncoderParams<T>& params, bool requires_grad) {
  BoundParams bound;
  for (const auto& t : params.tensors) bound.vars.push_back(tape.leaf(t, requires_grad));
  return bound;
}

template <typename T>
Var encode(Tape<T>& tape, Var view, const BoundParams& params, const EncoderConfig& config, const MaskSettings& mask,
           bool training) {
  const auto& x = tape.value(view);
  if (x.rank() != 3) throw std::invalid_argument("encode expects a B x D x L view, got " + numerics::to_string(x.shape()));
  if (x.dim(1) != config.input_dim) {
    throw std::invalid_argument("encode: view has " + std::to_string(x.dim(1)) + " channels, encoder expects " +
                                std::to_string(config.input_dim));
  }
  if (x.dim(2) == 0) throw std::invalid_argument("encode: empty view");
  if (params.vars.size() != config.num_blocks + 4) throw std::invalid_argument("encode: parameter count mismatch");

  const auto& p = params.vars;
  Var h = numerics::add_channel_bias(tape, numerics::conv1d(tape, view, p[0]), p[1]);
  if (training && mask.p_drop > 0.0) {
    if (!mask.rng) throw std::invalid_argument("encode: masking requires a random generator");
    h = augment::mask_latent(tape, h, mask.p_drop, *mask.rng, training);
  }
  for (std::size_t b = 0; b < config.num_blocks; ++b) {
    Var branch = numerics::conv1d(tape, numerics::relu(tape, h), p[2 + b]);
    h = numerics::add(tape, h, branch);
    if (config.layer_norm) h = numerics::layer_norm_channels(tape, h);
  }
  const std::size_t out = 2 + config.num_blocks;
  return numerics::add_channel_bias(tape, numerics::conv1d(tape, h, p[out]), p[out + 1]);
}

template <typename T>
Tensor<T> encode_values(const Tensor<T>& view, const EncoderParams<T>& params) {
  Tape<T> tape;
  const BoundParams bound = bind(tape, params, false);
  const Var v = tape.leaf(view, false);
  const Var out = encode(tape, v, bound, params.config, MaskSettings{0.0, nullptr}, false);
  return tape.value(out);
}

template <typename T>
std::pair<Var, Var> slice_overlap(Tape<T>& tape, Var view_a, Var view_b, const augment::CropPlan& plan) {
  const auto& fa = tape.value(view_a);
  const auto& fb = tape.value(view_b);
  if (fa.rank() != 3 || fb.rank() != 3 || fa.dim(2) != plan.a_length() || fb.dim(2) != plan.b_length() ||
      plan.b_start < plan.a_start || plan.a_end <= plan.b_start) {
    throw std::invalid_argument("slice_overlap: crop plan is inconsistent with feature map lengths " +
                                numerics::to_string(fa.shape()) + " and " + numerics::to_string(fb.shape()));
  }
  const std::size_t overlap = plan.overlap_length();
  const std::size_t a_offset = plan.b_start - plan.a_start;
  return {numerics::slice_time(tape, view_a, a_offset, a_offset + overlap),
          numerics::slice_time(tape, view_b, 0, overlap)};
}

template <typename T>
std::uint64_t fingerprint(const EncoderParams<T>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : params.tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

#define TSIARS_INSTANTIATE_ENCODER(T)                                                                         \
  template struct EncoderParams<T>;                                                                           \
  template EncoderParams<T> init_encoder<T>(const EncoderConfig&);                                            \
  template BoundParams bind(Tape<T>&, const EncoderParams<T>&, bool);                                         \
  template Var encode(Tape<T>&, Var, const BoundParams&, const EncoderConfig&, const MaskSettings&, bool);   \
  template Tensor<T> encode_values(const Tensor<T>&, const EncoderParams<T>&);                                \
  template std::pair<Var, Var> slice_overlap(Tape<T>&, Var, Var, const augment::CropPlan&);                   \
  template std::uint64_t fingerprint(const EncoderParams<T>&);

TSIARS_INSTANTIATE_ENCODER(float)
TSIARS_INSTANTIATE_ENCODER(double)

}  // namespace tsiars::encoder
