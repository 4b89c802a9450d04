// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tsiars/contrast.hpp"
#include "tsiars/resolution.hpp"

namespace tsiars::selection {

/// How a resolution is scored before the softmax.
enum class ScoreMode {
  kDelta,  // current loss minus the previously recorded loss
  kLevel,  // current loss value
};

/// Which levels get a forward loss evaluation each batch.
enum class ObserveMode {
  kAll,       // every level, without gradient tracking except the selected one
  kSelected,  // only the selected level; the rest keep their ledger values
};

struct SelectionOptions {
  ScoreMode score_mode = ScoreMode::kDelta;
  bool double_softmax = false;
  ObserveMode observe = ObserveMode::kAll;
};

ScoreMode parse_score_mode(std::string_view text);
ObserveMode parse_observe_mode(std::string_view text);
std::string to_string(ScoreMode mode);
std::string to_string(ObserveMode mode);

struct LedgerSlot {
  std::optional<double> last_loss;
  std::optional<long> last_epoch;
};

/// Last observed loss per canonical resolution slot. Slots that an epoch does
/// not observe keep their previous values.
class ResolutionLedger {
 public:
  explicit ResolutionLedger(std::size_t max_index = 0);

  std::size_t max_index() const { return slots_.size() - 1; }
  const LedgerSlot& slot(std::size_t k) const { return slots_.at(k); }
  std::optional<double> last_loss(std::size_t k) const;

  /// Overwrites the observed slots. Losses must be finite and non-negative;
  /// epochs may not move backwards for a slot.
  void record_epoch(const std::map<std::size_t, double>& observed, long epoch);

 private:
  std::vector<LedgerSlot> slots_;
};

struct ImportanceDistribution {
  std::vector<std::size_t> candidates;
  std::vector<double> scores;
  std::vector<double> probabilities;

  double probability_of(std::size_t k) const;
};

/// Uniform distribution over the given slots.
ImportanceDistribution uniform_distribution(std::vector<std::size_t> candidates);

/// Scores every candidate slot against the ledger (which must still hold the
/// previous epoch's values) and normalizes with a softmax. A candidate with
/// no value in `current` reuses its ledger value; one with no prior value at
/// all gets a delta of zero.
ImportanceDistribution importance(const std::map<std::size_t, double>& current,
                                  const std::vector<std::size_t>& candidates, const ResolutionLedger& ledger,
                                  const SelectionOptions& options = {});

/// Convenience overload: candidates are the keys of `current`.
ImportanceDistribution importance(const std::map<std::size_t, double>& current, const ResolutionLedger& ledger,
                                  const SelectionOptions& options = {});

/// Inverse-CDF draw from one uniform variate.
std::size_t pick_resolution(const ImportanceDistribution& dist, std::mt19937_64& rng);

/// Uniform double in [0, 1) from the top 53 bits of one engine output.
double uniform01(std::mt19937_64& rng);

/// The combined loss of the level with canonical index k, as the sole objective.
template <typename T>
numerics::Var selected_loss(numerics::Tape<T>& tape, const std::vector<contrast::TrackedLevel>& pyramid,
                            std::size_t k, double alpha);

template <typename T>
double selected_loss(const std::vector<contrast::PyramidLevel<T>>& pyramid, std::size_t k);

/// Per-slot outcome of one epoch, for reporting.
struct SlotRecord {
  std::size_t slot = 0;
  std::optional<double> loss;
  double delta = 0.0;
  double probability = 0.0;
  bool selected = false;
};

/// Epoch-level driver: draws the resolution for an epoch and, after the
/// epoch, scores the observed losses and folds them into the ledger.
class ResolutionScheduler {
 public:
  ResolutionScheduler(std::size_t max_index, SelectionOptions options, std::uint64_t seed);

  /// Epoch 0 draws uniformly over [0, max_index]; later epochs draw from the
  /// distribution produced by the previous finish_epoch().
  std::size_t choose(long epoch);

  /// `observed` holds batch-mean losses per slot, `present` every slot that
  /// appeared in some pyramid this epoch.
  std::vector<SlotRecord> finish_epoch(const std::map<std::size_t, double>& observed,
                                       const std::vector<std::size_t>& present, long epoch, std::size_t selected);

  const ResolutionLedger& ledger() const { return ledger_; }
  const ImportanceDistribution& next_distribution() const { return next_; }
  const SelectionOptions& options() const { return options_; }

 private:
  std::size_t max_index_;
  SelectionOptions options_;
  std::mt19937_64 rng_;
  ResolutionLedger ledger_;
  ImportanceDistribution next_;
  bool has_next_ = false;
};

}  // namespace tsiars::selection
