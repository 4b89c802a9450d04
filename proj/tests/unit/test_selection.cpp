// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "tsiars/contrast.hpp"
#include "tsiars/error.hpp"
#include "tsiars/numerics/ops.hpp"
#include "tsiars/selection.hpp"

using namespace tsiars;
using selection::ImportanceDistribution;
using selection::ResolutionLedger;

namespace {

std::vector<double> frequencies(const ImportanceDistribution& d, std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> f(d.candidates.size(), 0.0);
  for (std::size_t n = 0; n < draws; ++n) {
    const std::size_t k = selection::pick_resolution(d, rng);
    for (std::size_t i = 0; i < d.candidates.size(); ++i)
      if (d.candidates[i] == k) f[i] += 1.0;
  }
  for (double& x : f) x /= static_cast<double>(draws);
  return f;
}

}  // namespace

TEST_CASE("canonical index") {
  CHECK(selection::canonical_index(1) == 0);
  CHECK(selection::canonical_index(2) == 1);
  CHECK(selection::canonical_index(5) == 3);
  CHECK(selection::canonical_index(8) == 3);
  CHECK(selection::canonical_index(9) == 4);
  CHECK_THROWS_AS(selection::canonical_index(0), std::invalid_argument);
  // overlaps of 100 and 37 share their coarse slots
  const auto a = contrast::pyramid_lengths(100, true);
  const auto b = contrast::pyramid_lengths(37, true);
  CHECK(selection::canonical_index(a.back()) == 0);
  CHECK(selection::canonical_index(b.back()) == 0);
  CHECK(selection::canonical_index(a[a.size() - 2]) == 1);
  CHECK(selection::canonical_index(b[b.size() - 2]) == 1);
}

TEST_CASE("ledger records and retains slots") {
  ResolutionLedger ledger(3);
  CHECK_FALSE(ledger.last_loss(0));
  ledger.record_epoch({{0, 1.0}, {1, 2.0}}, 0);
  CHECK(*ledger.last_loss(0) == 1.0);
  CHECK(*ledger.last_loss(1) == 2.0);
  ledger.record_epoch({{0, 0.9}}, 1);
  CHECK(*ledger.last_loss(0) == 0.9);
  CHECK(*ledger.last_loss(1) == 2.0);
  CHECK(*ledger.slot(1).last_epoch == 0);
  ledger.record_epoch({{0, 0.9}}, 1);
  CHECK(*ledger.last_loss(0) == 0.9);
  CHECK(*ledger.slot(0).last_epoch == 1);
  for (long e = 2; e < 20; ++e) ledger.record_epoch({{3, 0.1 * static_cast<double>(e)}}, e);
  CHECK(*ledger.last_loss(1) == 2.0);
  CHECK_THROWS(ledger.record_epoch({{0, -0.5}}, 30));
  CHECK_THROWS(ledger.record_epoch({{0, std::nan("")}}, 30));
  CHECK_THROWS(ledger.record_epoch({{0, 0.5}}, 0));
  ledger.record_epoch({{5, 0.5}}, 30);
  CHECK(ledger.max_index() == 5);
  CHECK_FALSE(ledger.last_loss(4));
}

TEST_CASE("importance is a softmax over loss deltas") {
  ResolutionLedger ledger(2);
  ledger.record_epoch({{0, 1.0}, {1, 1.0}, {2, 1.0}}, 0);
  const auto d = selection::importance({{0, 1.2}, {1, 0.9}, {2, 1.0}}, ledger);
  const auto ref = oracle::softmax({0.2, -0.1, 0.0});
  REQUIRE(d.candidates == std::vector<std::size_t>{0, 1, 2});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d.scores[i] == doctest::Approx(std::vector<double>{0.2, -0.1, 0.0}[i]).epsilon(1e-12));
    CHECK(std::fabs(d.probabilities[i] - ref[i]) < 1e-9);
    CHECK(d.probabilities[i] > 0.0);
  }
  CHECK(std::fabs(d.probabilities[0] + d.probabilities[1] + d.probabilities[2] - 1.0) <= 1e-12);
  CHECK(d.probability_of(0) > d.probability_of(2));
  CHECK(d.probability_of(2) > d.probability_of(1));

  const auto uniform = selection::importance({{0, 1.5}, {1, 1.5}, {2, 1.5}}, ledger);
  for (double p : uniform.probabilities) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // constant shift of every delta leaves the distribution unchanged
  const auto shifted = selection::importance({{0, 1.7}, {1, 1.4}, {2, 1.5}}, ledger);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(shifted.probabilities[i] - d.probabilities[i]) <= 1e-12);

  CHECK(selection::importance({{1, 3.0}}, ledger).probabilities == std::vector<double>{1.0});
  CHECK_THROWS_AS(selection::importance({}, ledger), std::invalid_argument);
}

TEST_CASE("absent and unseen slots") {
  ResolutionLedger ledger(3);
  ledger.record_epoch({{0, 1.0}, {1, 2.0}}, 0);
  // slot 1 is a candidate without a current value, slot 3 has never been seen
  const auto d = selection::importance({{0, 1.5}, {3, 4.0}}, {0, 1, 3}, ledger);
  CHECK(d.scores == std::vector<double>{0.5, 0.0, 0.0});
}

TEST_CASE("score options") {
  ResolutionLedger ledger(1);
  ledger.record_epoch({{0, 1.0}, {1, 1.0}}, 0);
  selection::SelectionOptions level;
  level.score_mode = selection::ScoreMode::kLevel;
  const auto by_level = selection::importance({{0, 0.5}, {1, 2.0}}, ledger, level);
  CHECK(by_level.scores == std::vector<double>{0.5, 2.0});
  selection::SelectionOptions twice;
  twice.double_softmax = true;
  const auto single = selection::importance({{0, 1.2}, {1, 0.9}}, ledger);
  const auto dbl = selection::importance({{0, 1.2}, {1, 0.9}}, ledger, twice);
  const auto ref = oracle::softmax(oracle::softmax({0.2, -0.1}));
  CHECK(std::fabs(dbl.probabilities[0] - ref[0]) < 1e-12);
  CHECK(dbl.probabilities[0] < single.probabilities[0]);
  CHECK(selection::parse_score_mode("level") == selection::ScoreMode::kLevel);
  CHECK(selection::parse_observe_mode("selected") == selection::ObserveMode::kSelected);
  CHECK(selection::to_string(selection::ObserveMode::kAll) == "all");
  CHECK_THROWS_AS(selection::parse_observe_mode("some"), ConfigError);
}

TEST_CASE("pick_resolution frequencies") {
  std::mt19937_64 rng(1);
  const auto single = selection::uniform_distribution({4});
  for (int i = 0; i < 100; ++i) CHECK(selection::pick_resolution(single, rng) == 4);

  const auto uniform = selection::uniform_distribution({0, 1, 2, 3});
  for (double f : frequencies(uniform, 100000, 2)) CHECK(std::fabs(f - 0.25) <= 0.01);

  ImportanceDistribution d{{0, 1, 2}, {0.2, -0.1, 0.0}, numerics::softmax(std::vector<double>{0.2, -0.1, 0.0})};
  const auto freq = frequencies(d, 100000, 3);
  const auto ref = oracle::softmax_sampler(d.probabilities, 100000, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::fabs(freq[i] - d.probabilities[i]) <= 0.01);
    CHECK(std::fabs(ref[i] - d.probabilities[i]) <= 0.01);
  }
  CHECK(frequencies(d, 1000, 9) == frequencies(d, 1000, 9));
}

TEST_CASE("selected loss picks one level") {
  std::mt19937_64 rng(4);
  const auto f = testing::random_tensor({3, 4, 8}, rng);
  const auto g = testing::random_tensor({3, 4, 8}, rng);
  auto levels = contrast::build_pyramid(f, g, contrast::LossConfig{});
  contrast::evaluate_levels(levels, 0.5);
  numerics::Tape<double> tape;
  const auto a = tape.leaf(f, true);
  const auto b = tape.leaf(g, true);
  const auto tracked = contrast::build_pyramid(tape, a, b, contrast::LossConfig{});
  const auto head = selection::selected_loss(tape, tracked, 2, 0.5);
  CHECK(tape.value(head).item() == selection::selected_loss(levels, 2));
  CHECK(tape.count_tracked(contrast::kLossHeadTag) == 1);
  tape.backward(head);
  CHECK(tape.backward_steps(contrast::kLossHeadTag) == 1);
  CHECK_THROWS_AS(selection::selected_loss(tape, tracked, 7, 0.5), std::invalid_argument);

  auto single = contrast::build_pyramid(testing::random_tensor({2, 3, 1}, rng), testing::random_tensor({2, 3, 1}, rng),
                                        contrast::LossConfig{});
  contrast::evaluate_levels(single, 0.5);
  CHECK(selection::selected_loss(single, 0) == *single[0].combined_loss);
}

TEST_CASE("scheduler draws once per epoch from the replayed distribution") {
  selection::ResolutionScheduler sched(3, {}, 5);
  const std::size_t k0 = sched.choose(0);
  CHECK(k0 <= 3);
  const std::map<std::size_t, double> e0{{0, 1.0}, {1, 2.0}, {2, 3.0}, {3, 4.0}};
  const auto r0 = sched.finish_epoch(e0, {0, 1, 2, 3}, 0, k0);
  REQUIRE(r0.size() == 4);
  for (const auto& r : r0) CHECK(r.probability == doctest::Approx(0.25).epsilon(1e-12));

  const std::size_t k1 = sched.choose(1);
  const std::map<std::size_t, double> e1{{0, 1.3}, {1, 1.5}, {2, 3.0}};
  const auto r1 = sched.finish_epoch(e1, {0, 1, 2}, 1, k1);
  const auto ref = oracle::softmax({0.3, -0.5, 0.0});
  REQUIRE(r1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r1[i].slot == i);
    CHECK(std::fabs(r1[i].probability - ref[i]) < 1e-12);
    CHECK(r1[i].selected == (i == k1));
  }
  CHECK(*sched.ledger().last_loss(3) == 4.0);
  CHECK(*sched.ledger().last_loss(1) == 1.5);
  const std::size_t k2 = sched.choose(2);
  CHECK(k2 <= 2);

  selection::ResolutionScheduler twin(3, {}, 5);
  CHECK(twin.choose(0) == k0);
}
