// SPDX-License-Identifier: Apache-2.0
#include "tsiars/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tsiars/error.hpp"
#include "tsiars/numerics/ops.hpp"

namespace tsiars::selection {

ScoreMode parse_score_mode(std::string_view text) {
  if (text == "delta") return ScoreMode::kDelta;
  if (text == "level") return ScoreMode::kLevel;
  throw ConfigError("unknown score mode '" + std::string(text) + "' (expected delta or level)");
}

ObserveMode parse_observe_mode(std::string_view text) {
  if (text == "all") return ObserveMode::kAll;
  if (text == "selected") return ObserveMode::kSelected;
  throw ConfigError("unknown observe mode '" + std::string(text) + "' (expected all or selected)");
}

std::string to_string(ScoreMode mode) { return mode == ScoreMode::kDelta ? "delta" : "level"; }
std::string to_string(ObserveMode mode) { return mode == ObserveMode::kAll ? "all" : "selected"; }

ResolutionLedger::ResolutionLedger(std::size_t max_index) : slots_(max_index + 1) {}

std::optional<double> ResolutionLedger::last_loss(std::size_t k) const {
  if (k >= slots_.size()) return std::nullopt;
  return slots_[k].last_loss;
}

void ResolutionLedger::record_epoch(const std::map<std::size_t, double>& observed, long epoch) {
  for (const auto& [k, loss] : observed) {
    if (!std::isfinite(loss)) throw NumericalError("ledger: non-finite loss for slot " + std::to_string(k));
    if (loss < 0.0) throw std::invalid_argument("ledger: negative loss for slot " + std::to_string(k));
    if (k >= slots_.size()) slots_.resize(k + 1);
    if (slots_[k].last_epoch && *slots_[k].last_epoch > epoch) {
      throw std::invalid_argument("ledger: slot " + std::to_string(k) + " already holds epoch " +
                                  std::to_string(*slots_[k].last_epoch));
    }
  }
  for (const auto& [k, loss] : observed) {
    slots_[k].last_loss = loss;
    slots_[k].last_epoch = epoch;
  }
}

double ImportanceDistribution::probability_of(std::size_t k) const {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] == k) return probabilities[i];
  }
  return 0.0;
}

ImportanceDistribution uniform_distribution(std::vector<std::size_t> candidates) {
  if (candidates.empty()) throw std::invalid_argument("uniform_distribution: no candidates");
  ImportanceDistribution d;
  d.candidates = std::move(candidates);
  d.scores.assign(d.candidates.size(), 0.0);
  d.probabilities.assign(d.candidates.size(), 1.0 / static_cast<double>(d.candidates.size()));
  return d;
}

ImportanceDistribution importance(const std::map<std::size_t, double>& current,
                                  const std::vector<std::size_t>& candidates, const ResolutionLedger& ledger,
                                  const SelectionOptions& options) {
  if (candidates.empty()) throw std::invalid_argument("importance: empty candidate set");
  ImportanceDistribution d;
  d.candidates = candidates;
  std::sort(d.candidates.begin(), d.candidates.end());
  d.candidates.erase(std::unique(d.candidates.begin(), d.candidates.end()), d.candidates.end());
  for (std::size_t k : d.candidates) {
    const std::optional<double> previous = ledger.last_loss(k);
    const auto it = current.find(k);
    const std::optional<double> now = it != current.end() ? std::optional<double>(it->second) : previous;
    if (now && !std::isfinite(*now)) throw NumericalError("importance: non-finite loss for slot " + std::to_string(k));
    if (options.score_mode == ScoreMode::kLevel) {
      d.scores.push_back(now.value_or(0.0));
    } else {
      d.scores.push_back(now && previous ? *now - *previous : 0.0);
    }
  }
  d.probabilities = numerics::softmax(d.scores);
  if (options.double_softmax) d.probabilities = numerics::softmax(d.probabilities);
  return d;
}

ImportanceDistribution importance(const std::map<std::size_t, double>& current, const ResolutionLedger& ledger,
                                  const SelectionOptions& options) {
  std::vector<std::size_t> candidates;
  for (const auto& [k, _] : current) candidates.push_back(k);
  return importance(current, candidates, ledger, options);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t pick_resolution(const ImportanceDistribution& dist, std::mt19937_64& rng) {
  if (dist.candidates.empty() || dist.candidates.size() != dist.probabilities.size()) {
    throw std::invalid_argument("pick_resolution: malformed distribution");
  }
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < dist.candidates.size(); ++i) {
    cumulative += dist.probabilities[i];
    if (u < cumulative) return dist.candidates[i];
  }
  // u landed in the rounding gap above the final cumulative sum.
  return dist.candidates.back();
}

template <typename T>
numerics::Var selected_loss(numerics::Tape<T>& tape, const std::vector<contrast::TrackedLevel>& pyramid,
                            std::size_t k, double alpha) {
  for (const auto& level : pyramid) {
    if (level.canonical_index == k) return contrast::combined_loss(tape, level.f_o, level.f_o_prime, alpha);
  }
  throw std::invalid_argument("selected_loss: no pyramid level with canonical index " + std::to_string(k));
}

template <typename T>
double selected_loss(const std::vector<contrast::PyramidLevel<T>>& pyramid, std::size_t k) {
  for (const auto& level : pyramid) {
    if (level.canonical_index != k) continue;
    if (!level.combined_loss) throw std::logic_error("selected_loss: level not evaluated");
    return *level.combined_loss;
  }
  throw std::invalid_argument("selected_loss: no pyramid level with canonical index " + std::to_string(k));
}

ResolutionScheduler::ResolutionScheduler(std::size_t max_index, SelectionOptions options, std::uint64_t seed)
    : max_index_(max_index), options_(options), rng_(seed), ledger_(max_index) {}

std::size_t ResolutionScheduler::choose(long epoch) {
  if (epoch == 0 || !has_next_) {
    std::vector<std::size_t> all(max_index_ + 1);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return pick_resolution(uniform_distribution(std::move(all)), rng_);
  }
  return pick_resolution(next_, rng_);
}

std::vector<SlotRecord> ResolutionScheduler::finish_epoch(const std::map<std::size_t, double>& observed,
                                                          const std::vector<std::size_t>& present, long epoch,
                                                          std::size_t selected) {
  std::vector<std::size_t> candidates = present;
  for (const auto& [k, _] : observed) candidates.push_back(k);
  next_ = importance(observed, candidates, ledger_, options_);
  has_next_ = true;
  std::vector<SlotRecord> records;
  for (std::size_t i = 0; i < next_.candidates.size(); ++i) {
    SlotRecord r;
    r.slot = next_.candidates[i];
    const auto it = observed.find(r.slot);
    if (it != observed.end()) r.loss = it->second;
    const auto prev = ledger_.last_loss(r.slot);
    r.delta = (r.loss && prev) ? *r.loss - *prev : 0.0;
    r.probability = next_.probabilities[i];
    r.selected = r.slot == selected;
    records.push_back(r);
  }
  ledger_.record_epoch(observed, epoch);
  return records;
}

template numerics::Var selected_loss(numerics::Tape<float>&, const std::vector<contrast::TrackedLevel>&, std::size_t,
                                     double);
template numerics::Var selected_loss(numerics::Tape<double>&, const std::vector<contrast::TrackedLevel>&,
                                     std::size_t, double);
template double selected_loss(const std::vector<contrast::PyramidLevel<float>>&, std::size_t);
template double selected_loss(const std::vector<contrast::PyramidLevel<double>>&, std::size_t);

}  // namespace tsiars::selection
