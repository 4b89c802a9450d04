// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tsiars/augment.hpp"
#include "tsiars/contrast.hpp"
#include "tsiars/dataio.hpp"
#include "tsiars/encoder.hpp"
#include "tsiars/selection.hpp"

namespace tsiars::trainer {

enum class Mode { kHier, kIars };
enum class Precision { kF32, kF64 };

Mode parse_mode(std::string_view text);
Precision parse_precision(std::string_view text);
std::string to_string(Mode mode);
std::string to_string(Precision precision);

struct TrainConfig {
  Mode mode = Mode::kIars;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 40;
  double mask_prob = 0.5;
  int min_overlap_pow = 0;
  bool normalize = true;  // per-channel z-score fitted on the training split
  std::uint64_t seed = 0;
  Precision precision = Precision::kF64;
  std::size_t threads = 1;
  contrast::LossConfig loss;
  selection::SelectionOptions selection;
  /// input_dim is taken from the data at fit time; output_dim is K.
  encoder::EncoderConfig encoder{.input_dim = 1, .output_dim = 128};

  void validate() const;
};

/// Adaptive moment estimation with bias correction.
template <typename T>
struct AdamState {
  std::vector<numerics::Tensor<T>> first_moment;
  std::vector<numerics::Tensor<T>> second_moment;
  long step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

template <typename T>
void adam_step(std::vector<numerics::Tensor<T>>& params, const std::vector<numerics::Tensor<T>>& grads,
               AdamState<T>& state, double learning_rate);

struct EpochRecord {
  long epoch = 0;
  double seconds = 0.0;
  double objective = 0.0;  // batch mean of the back-propagated objective
  std::map<std::size_t, double> slot_losses;        // batch-mean loss per observed slot
  std::map<std::size_t, double> first_batch_losses;  // per-slot losses of the epoch's first batch
  std::vector<std::size_t> present_slots;
  std::optional<std::size_t> selected;  // IARS only
  std::vector<selection::SlotRecord> distribution;  // IARS only; drives the next epoch
  std::size_t batches = 0;
  std::size_t backward_passes = 0;
  std::size_t tracked_loss_heads = 0;
  std::size_t fallback_batches = 0;
};

struct Environment {
  std::size_t threads = 1;
  std::string precision;
  std::string compiler;
  unsigned hardware_concurrency = 0;
};

struct RunReport {
  TrainConfig config;
  std::string dataset;
  std::size_t instances = 0;
  std::size_t dims = 0;
  std::size_t length = 0;
  std::vector<EpochRecord> epochs;
  double training_seconds = 0.0;
  std::size_t backward_passes = 0;
  std::size_t tracked_loss_heads = 0;
  Environment environment;
  std::map<std::string, double> metrics;  // downstream evaluation, filled by callers

  double mean_epoch_seconds() const;
};

/// Owns parameters, optimizer state and random streams for one run.
/// Crop plans, masks and batch orders come from one stream seeded identically
/// in both modes; resolution draws use a separate stream.
template <typename T>
class Trainer {
 public:
  Trainer(const TrainConfig& config, std::size_t input_dim, std::size_t series_length);

  /// Full hierarchical objective: every level's loss is back-propagated.
  EpochRecord train_epoch_hier(const dataio::TimeSeriesDataset& data);

  /// Single-resolution objective chosen once for the epoch.
  EpochRecord train_epoch_iars(const dataio::TimeSeriesDataset& data);

  EpochRecord train_epoch(const dataio::TimeSeriesDataset& data);

  const encoder::EncoderParams<T>& params() const { return params_; }
  const TrainConfig& config() const { return config_; }
  const selection::ResolutionScheduler& scheduler() const { return scheduler_; }
  long epochs_done() const { return epoch_; }

 private:
  struct BatchOutcome {
    double objective = 0.0;
    std::map<std::size_t, double> slot_losses;
    std::vector<std::size_t> present;
    std::size_t tracked_heads = 0;
    bool fallback = false;
  };

  BatchOutcome run_batch(const numerics::Tensor<T>& values, std::optional<std::size_t> selected);
  EpochRecord run_epoch(const dataio::TimeSeriesDataset& data, std::optional<std::size_t> selected);

  TrainConfig config_;
  std::size_t series_length_;
  encoder::EncoderParams<T> params_;
  AdamState<T> adam_;
  std::mt19937_64 data_rng_;
  selection::ResolutionScheduler scheduler_;
  long epoch_ = 0;
};

template <typename T>
struct FitResult {
  encoder::EncoderParams<T> params;
  std::optional<selection::ResolutionLedger> ledger;
  RunReport report;
};

/// Trains for config.epochs epochs; writes the checkpoint when a directory is given.
/// The dataset is used as given (normalize first if desired).
template <typename T>
FitResult<T> fit(const dataio::TimeSeriesDataset& dataset, const TrainConfig& config,
                 const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// Largest slot a pyramid over a series of this length can contain.
std::size_t max_slot(std::size_t series_length, bool include_unpooled);

}  // namespace tsiars::trainer
