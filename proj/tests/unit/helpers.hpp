// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tsiars/numerics/tape.hpp"
#include "tsiars/numerics/tensor.hpp"

namespace testing {

using tsiars::numerics::Shape;
using tsiars::numerics::Tape;
using tsiars::numerics::Tensor;
using tsiars::numerics::Var;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

inline oracle::Map to_map(const Tensor<double>& t) {
  return oracle::Map{t.dim(0), t.dim(1), t.dim(2), std::vector<double>(t.values().begin(), t.values().end())};
}

using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

inline double evaluate(const Builder& build, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x, false));
  return tape.value(build(tape, vars)).item();
}

/// Largest elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor)
/// over every input, with centered differences of step h.
inline double max_gradient_error(const Builder& build, std::vector<Tensor<double>> inputs, double h = 1e-5,
                                 double floor = 1e-6) {
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.leaf(x, true));
  tape.backward(build(tape, vars));
  double worst = 0.0;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Tensor<double>* g = tape.grad(vars[a]);
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double saved = inputs[a][i];
      inputs[a][i] = saved + h;
      const double up = evaluate(build, inputs);
      inputs[a][i] = saved - h;
      const double down = evaluate(build, inputs);
      inputs[a][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g ? (*g)[i] : 0.0;
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
      worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace testing
