// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsiars/numerics/tensor.hpp"

namespace tsiars::dataio {

enum class Split { kTrain, kTest };

/// N equal-length series of D channels, stored N x D x L.
struct TimeSeriesDataset {
  numerics::Tensor<double> values;
  std::vector<int> labels;  // empty for unlabeled data
  std::vector<std::string> class_names;
  std::string name;
  Split split = Split::kTrain;

  std::size_t size() const { return values.rank() == 3 ? values.dim(0) : 0; }
  std::size_t dims() const { return values.rank() == 3 ? values.dim(1) : 0; }
  std::size_t length() const { return values.rank() == 3 ? values.dim(2) : 0; }
  bool has_labels() const { return !labels.empty(); }
  std::size_t num_classes() const { return class_names.size(); }

  /// Gathers the given rows into a |rows| x D x L tensor.
  numerics::Tensor<double> gather(std::span<const std::size_t> rows) const;
};

struct Batch {
  numerics::Tensor<double> values;  // B x D x L
  std::vector<std::size_t> indices;
};

struct ParseOptions {
  /// Replace '?' entries by linear interpolation along time instead of failing.
  bool fill_missing = false;
  Split split = Split::kTrain;
};

/// Parses the UEA `.ts` text format (equal-length series, no timestamps).
TimeSeriesDataset parse_ts(std::string_view text, const ParseOptions& options = {});

/// Serializes to `.ts`; values use shortest round-trip formatting.
std::string write_ts(const TimeSeriesDataset& dataset);

/// One univariate series per line, label first.
TimeSeriesDataset parse_ucr_delimited(std::string_view text, char delimiter, const ParseOptions& options = {});

/// Dispatches on extension: `.ts`, `.tsv` (tab), `.csv` (comma), `.txt` (whitespace).
TimeSeriesDataset load_dataset(const std::filesystem::path& path, const ParseOptions& options = {});
void save_ts(const std::filesystem::path& path, const TimeSeriesDataset& dataset);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-channel statistics over every instance and timestep.
ChannelStats fit_channel_stats(const TimeSeriesDataset& train);

/// (x - mean) / std per channel with statistics fitted on `train` only.
/// Channels with std < 1e-8 are only centered.
TimeSeriesDataset zscore(const TimeSeriesDataset& train, const TimeSeriesDataset& apply_to);

/// Class c is a sinusoid with 2(c+1) cycles over the series, random phase per
/// instance and channel, plus Gaussian noise. Rows are ordered class-major.
TimeSeriesDataset synth_classification(std::size_t n_per_class, std::size_t dims, std::size_t length,
                                       std::size_t num_classes, std::uint64_t seed, double noise_sigma = 0.3);

/// Index groups covering [0, n) exactly once; the final partial batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::mt19937_64& rng,
                                                    bool shuffle);

std::vector<Batch> batches(const TimeSeriesDataset& dataset, std::size_t batch_size, std::uint64_t seed,
                           bool shuffle);

}  // namespace tsiars::dataio
