// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "tsiars/contrast.hpp"
#include "tsiars/error.hpp"

using namespace tsiars;
using testing::random_tensor;
using testing::to_map;
using numerics::Tensor;

TEST_CASE("pyramid lengths halve with ceiling down to one") {
  CHECK(contrast::pyramid_lengths(8, true) == std::vector<std::size_t>{8, 4, 2, 1});
  CHECK(contrast::pyramid_lengths(1, true) == std::vector<std::size_t>{1});
  CHECK(contrast::pyramid_lengths(5, true) == std::vector<std::size_t>{5, 3, 2, 1});
  CHECK(contrast::pyramid_lengths(8, false) == std::vector<std::size_t>{4, 2, 1});
  CHECK(contrast::pyramid_lengths(1, false) == std::vector<std::size_t>{1});
}

TEST_CASE("pyramid levels carry canonical indices and pooled values") {
  std::mt19937_64 rng(3);
  const auto f = random_tensor({2, 3, 5}, rng);
  const auto g = random_tensor({2, 3, 5}, rng);
  const auto levels = contrast::build_pyramid(f, g, contrast::LossConfig{});
  REQUIRE(levels.size() == 4);
  CHECK(levels[0].canonical_index == 3);
  CHECK(levels[1].canonical_index == 2);
  CHECK(levels[2].canonical_index == 1);
  CHECK(levels[3].canonical_index == 0);
  const auto ref = oracle::pyramid(to_map(f), true);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    CHECK(std::vector<double>(levels[i].f_o.values().begin(), levels[i].f_o.values().end()) == ref[i].v);
  }
  CHECK_THROWS_AS(contrast::build_pyramid(f, random_tensor({2, 3, 4}, rng), contrast::LossConfig{}),
                  std::invalid_argument);
}

TEST_CASE("losses vanish where no negatives exist") {
  std::mt19937_64 rng(5);
  CHECK(contrast::temporal_loss(random_tensor({3, 4, 1}, rng), random_tensor({3, 4, 1}, rng)) == 0.0);
  CHECK(contrast::instance_loss(random_tensor({1, 4, 6}, rng), random_tensor({1, 4, 6}, rng)) == 0.0);
}

TEST_CASE("closed forms when every dot product is equal") {
  Tensor<double> f({2, 3, 4}, 0.25);
  CHECK(contrast::temporal_loss(f, f) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  CHECK(oracle::temporal_loss(to_map(f), to_map(f)) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  CHECK(contrast::instance_loss(f, f) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(oracle::instance_loss(to_map(f), to_map(f)) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("vectorized losses match loop oracles") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const auto f = random_tensor({4, 8, 16}, rng, 0.5);
    const auto g = random_tensor({4, 8, 16}, rng, 0.5);
    CHECK(std::fabs(contrast::temporal_loss(f, g) - oracle::temporal_loss(to_map(f), to_map(g))) < 1e-9);
    CHECK(std::fabs(contrast::instance_loss(f, g) - oracle::instance_loss(to_map(f), to_map(g))) < 1e-9);
  }
}

TEST_CASE("losses are symmetric, non-negative and permutation invariant") {
  std::mt19937_64 rng(13);
  const auto f = random_tensor({3, 4, 6}, rng);
  const auto g = random_tensor({3, 4, 6}, rng);
  CHECK(contrast::temporal_loss(f, g) == doctest::Approx(contrast::temporal_loss(g, f)).epsilon(1e-14));
  CHECK(contrast::instance_loss(f, g) == doctest::Approx(contrast::instance_loss(g, f)).epsilon(1e-14));
  CHECK(contrast::temporal_loss(f, g) >= 0.0);
  CHECK(contrast::instance_loss(f, g) >= 0.0);
  // swap instances 0 and 2 in both views
  auto fp = f, gp = g;
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t t = 0; t < 6; ++t) {
      std::swap(fp.at(0, k, t), fp.at(2, k, t));
      std::swap(gp.at(0, k, t), gp.at(2, k, t));
    }
  }
  CHECK(contrast::instance_loss(fp, gp) == doctest::Approx(contrast::instance_loss(f, g)).epsilon(1e-13));
  CHECK(contrast::temporal_loss(fp, gp) == doctest::Approx(contrast::temporal_loss(f, g)).epsilon(1e-13));
}

TEST_CASE("NaN inputs are rejected") {
  Tensor<double> f({2, 2, 3}, 0.1);
  f[4] = std::nan("");
  CHECK_THROWS_AS(contrast::temporal_loss(f, f), NumericalError);
  CHECK_THROWS_AS(contrast::instance_loss(f, f), NumericalError);
}

TEST_CASE("combined and hierarchical losses") {
  CHECK(contrast::combined_loss(2.0, 4.0, 0.5) == 3.0);
  CHECK(contrast::combined_loss(2.0, 4.0, 1.0) == 2.0);
  CHECK(contrast::combined_loss(2.0, 4.0, 0.0) == 4.0);
  std::mt19937_64 rng(17);
  const auto f = random_tensor({3, 5, 4}, rng);
  const auto g = random_tensor({3, 5, 4}, rng);
  auto levels = contrast::build_pyramid(f, g, contrast::LossConfig{});
  REQUIRE(levels.size() == 3);
  contrast::evaluate_levels(levels, 0.5);
  double manual = 0.0;
  for (const auto& l : levels) manual += *l.combined_loss;
  CHECK(contrast::hierarchical_loss(levels) == manual);
  CHECK(std::fabs(manual - oracle::hierarchical_loss(to_map(f), to_map(g), 0.5, true, true)) < 1e-9);

  auto single = contrast::build_pyramid(random_tensor({2, 3, 1}, rng), random_tensor({2, 3, 1}, rng),
                                        contrast::LossConfig{});
  contrast::evaluate_levels(single, 0.3);
  CHECK(contrast::hierarchical_loss(single) == *single[0].combined_loss);
}

TEST_CASE("tracked losses equal forward-only values") {
  std::mt19937_64 rng(19);
  const auto f = random_tensor({4, 6, 9}, rng);
  const auto g = random_tensor({4, 6, 9}, rng);
  for (auto mode : {numerics::PoolMode::kMax, numerics::PoolMode::kAvg}) {
    contrast::LossConfig cfg;
    cfg.pool_mode = mode;
    cfg.alpha = 0.3;
    auto levels = contrast::build_pyramid(f, g, cfg);
    contrast::evaluate_levels(levels, cfg.alpha);
    numerics::Tape<double> tape;
    const auto a = tape.leaf(f, true);
    const auto b = tape.leaf(g, true);
    const auto tracked = contrast::build_pyramid(tape, a, b, cfg);
    REQUIRE(tracked.size() == levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto head = contrast::combined_loss(tape, tracked[i].f_o, tracked[i].f_o_prime, cfg.alpha);
      CHECK(tape.value(head).item() == *levels[i].combined_loss);
    }
    const auto total = contrast::hierarchical_loss(tape, tracked, cfg.alpha);
    CHECK(tape.value(total).item() == doctest::Approx(contrast::hierarchical_loss(levels)).epsilon(1e-14));
    CHECK(tape.count_tracked(contrast::kLossHeadTag) == 2 * levels.size());
  }
}

TEST_CASE("stop_at_index truncates the tracked pyramid") {
  std::mt19937_64 rng(23);
  numerics::Tape<double> tape;
  const auto a = tape.leaf(random_tensor({2, 3, 8}, rng), true);
  const auto b = tape.leaf(random_tensor({2, 3, 8}, rng), true);
  const auto levels = contrast::build_pyramid(tape, a, b, contrast::LossConfig{}, std::size_t{2});
  REQUIRE(levels.size() == 2);
  CHECK(levels.back().canonical_index == 2);
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(29);
  const auto f = random_tensor({3, 4, 6}, rng, 0.7);
  const auto g = random_tensor({3, 4, 6}, rng, 0.7);
  const testing::Builder temporal = [](auto& tape, const auto& v) { return contrast::temporal_loss(tape, v[0], v[1]); };
  const testing::Builder instance = [](auto& tape, const auto& v) { return contrast::instance_loss(tape, v[0], v[1]); };
  const testing::Builder combined = [](auto& tape, const auto& v) {
    return contrast::combined_loss(tape, v[0], v[1], 0.4);
  };
  const testing::Builder hier = [](auto& tape, const auto& v) {
    contrast::LossConfig cfg;
    cfg.pool_mode = numerics::PoolMode::kAvg;
    return contrast::hierarchical_loss(tape, contrast::build_pyramid(tape, v[0], v[1], cfg), 0.5);
  };
  const testing::Builder hier_max = [](auto& tape, const auto& v) {
    return contrast::hierarchical_loss(tape, contrast::build_pyramid(tape, v[0], v[1], contrast::LossConfig{}), 0.5);
  };
  CHECK(testing::max_gradient_error(temporal, {f, g}) < 1e-4);
  CHECK(testing::max_gradient_error(instance, {f, g}) < 1e-4);
  CHECK(testing::max_gradient_error(combined, {f, g}) < 1e-4);
  CHECK(testing::max_gradient_error(hier, {f, g}) < 1e-4);
  CHECK(testing::max_gradient_error(hier_max, {f, g}) < 1e-4);
}
