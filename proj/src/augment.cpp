// SPDX-License-Identifier: Apache-2.0
#include "tsiars/augment.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace tsiars::augment {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

void CropPlan::validate(std::size_t length) const {
  if (!(a_start <= b_start && b_start < a_end && a_end <= b_end && b_end <= length)) {
    throw std::invalid_argument("crop plan a=[" + std::to_string(a_start) + "," + std::to_string(a_end) + ") b=[" +
                                std::to_string(b_start) + "," + std::to_string(b_end) +
                                ") is invalid for length " + std::to_string(length));
  }
}

CropPlan sample_crop(std::size_t length, int min_overlap_pow, std::mt19937_64& rng) {
  if (min_overlap_pow < 0 || min_overlap_pow > 40) {
    throw std::invalid_argument("min_overlap_pow must lie in [0, 40]");
  }
  const std::size_t min_overlap = std::size_t{1} << (min_overlap_pow + 1);
  if (length < min_overlap) {
    throw std::invalid_argument("series length " + std::to_string(length) + " is below the minimum overlap " +
                                std::to_string(min_overlap));
  }
  using Uniform = std::uniform_int_distribution<std::size_t>;
  const std::size_t overlap = Uniform(min_overlap, length)(rng);
  const std::size_t start = Uniform(0, length - overlap)(rng);
  const std::size_t end = start + overlap;
  CropPlan plan;
  plan.b_start = start;
  plan.a_end = end;
  plan.a_start = Uniform(0, start)(rng);
  plan.b_end = Uniform(end, length)(rng);
  return plan;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> apply_crop(const Tensor<T>& batch, const CropPlan& plan) {
  if (batch.rank() != 3) throw std::invalid_argument("apply_crop expects a B x D x L tensor");
  const std::size_t length = batch.dim(2), rows = batch.dim(0) * batch.dim(1);
  plan.validate(length);
  auto slice = [&](std::size_t begin, std::size_t end) {
    Tensor<T> out({batch.dim(0), batch.dim(1), end - begin});
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(batch.data() + r * length + begin, end - begin, out.data() + r * (end - begin));
    }
    return out;
  };
  return {slice(plan.a_start, plan.a_end), slice(plan.b_start, plan.b_end)};
}

std::size_t MaskPlan::dropped() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{0}));
}

void validate_drop_probability(double p_drop) {
  if (!(p_drop >= 0.0 && p_drop < 1.0)) {
    throw std::invalid_argument("mask drop probability must lie in [0, 1), got " + std::to_string(p_drop));
  }
}

MaskPlan sample_mask(std::size_t batch, std::size_t length, double p_drop, std::mt19937_64& rng) {
  validate_drop_probability(p_drop);
  MaskPlan plan{batch, length, std::vector<std::uint8_t>(batch * length, 1)};
  std::bernoulli_distribution drop(p_drop);
  for (auto& k : plan.keep) k = drop(rng) ? 0 : 1;
  return plan;
}

template <typename T>
Var apply_mask(Tape<T>& tape, Var features, const MaskPlan& plan) {
  const Tensor<T>& f = tape.value(features);
  if (f.rank() != 3 || f.dim(0) != plan.batch || f.dim(2) != plan.length) {
    throw std::invalid_argument("mask plan " + std::to_string(plan.batch) + "x" + std::to_string(plan.length) +
                                " does not fit feature map " + numerics::to_string(f.shape()));
  }
  const std::size_t channels = f.dim(1), length = plan.length;
  Tensor<T> out = f;
  for (std::size_t b = 0; b < plan.batch; ++b) {
    for (std::size_t t = 0; t < length; ++t) {
      if (plan.keep[b * length + t]) continue;
      for (std::size_t c = 0; c < channels; ++c) out.at(b, c, t) = T{0};
    }
  }
  return tape.record(std::move(out), {features}, [features, plan](Tape<T>& tp, const Tensor<T>& g) {
    Tensor<T> gx = g;
    const std::size_t channels = g.dim(1);
    for (std::size_t b = 0; b < plan.batch; ++b) {
      for (std::size_t t = 0; t < plan.length; ++t) {
        if (plan.keep[b * plan.length + t]) continue;
        for (std::size_t c = 0; c < channels; ++c) gx.at(b, c, t) = T{0};
      }
    }
    tp.accumulate(features, gx);
  });
}

template <typename T>
Var mask_latent(Tape<T>& tape, Var features, double p_drop, std::mt19937_64& rng, bool training) {
  validate_drop_probability(p_drop);
  if (!training || p_drop == 0.0) return features;
  const Tensor<T>& f = tape.value(features);
  const MaskPlan plan = sample_mask(f.dim(0), f.dim(2), p_drop, rng);
  return apply_mask(tape, features, plan);
}

template std::pair<Tensor<float>, Tensor<float>> apply_crop(const Tensor<float>&, const CropPlan&);
template std::pair<Tensor<double>, Tensor<double>> apply_crop(const Tensor<double>&, const CropPlan&);
template Var apply_mask(Tape<float>&, Var, const MaskPlan&);
template Var apply_mask(Tape<double>&, Var, const MaskPlan&);
template Var mask_latent(Tape<float>&, Var, double, std::mt19937_64&, bool);
template Var mask_latent(Tape<double>&, Var, double, std::mt19937_64&, bool);

}  // namespace tsiars::augment
