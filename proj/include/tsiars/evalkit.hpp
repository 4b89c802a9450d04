// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsiars/dataio.hpp"
#include "tsiars/encoder.hpp"
#include "tsiars/numerics/tensor.hpp"

namespace tsiars::evalkit {

enum class Metric { kEmbeddingEuclidean, kRawEuclidean, kDtwDependent, kDtwIndependent };
enum class DtwMode { kDependent, kIndependent };

enum class Method {
  kEmbed1nn,     // 1-NN, Euclidean on embeddings
  kEmbedLinear,  // softmax probe on embeddings
  k1nnEd,
  k1nnDtwD,
  k1nnDtwI,
};

Method parse_method(std::string_view text);
std::string to_string(Method method);
bool needs_encoder(Method method);

/// N x K matrix: encode each full series without masking, then average over time.
template <typename T>
numerics::Tensor<double> embed(const dataio::TimeSeriesDataset& dataset, const encoder::EncoderParams<T>& params,
                               std::size_t chunk = 16);

/// Accumulated squared step cost along the optimal warping path; no square root.
/// x and y are D x L (rank 1 means D = 1). Lengths may differ.
/// `window` is a Sakoe-Chiba band |i - j| <= window.
double dtw_distance(const numerics::Tensor<double>& x, const numerics::Tensor<double>& y, DtwMode mode,
                    std::optional<std::size_t> window = std::nullopt);

/// Same, on raw channel-major buffers of shape D x lx and D x ly.
double dtw_distance(std::span<const double> x, std::size_t lx, std::span<const double> y, std::size_t ly,
                    std::size_t dims, DtwMode mode, std::optional<std::size_t> window = std::nullopt);

/// Nearest train item per test item; ties go to the lowest train index.
/// Euclidean metrics flatten each row; DTW metrics need N x D x L inputs.
std::vector<int> knn1(const numerics::Tensor<double>& train_x, std::span<const int> train_y,
                      const numerics::Tensor<double>& test_x, Metric metric,
                      std::optional<std::size_t> window = std::nullopt);

struct ClassCount {
  std::string name;
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct EvalResult {
  std::string method;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<ClassCount> per_class;
  std::vector<int> predictions;  // in train label space
  double seconds = 0.0;
};

struct ProbeOptions {
  std::size_t iterations = 500;
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

struct EvalOptions {
  std::optional<std::size_t> dtw_window;
  ProbeOptions probe;
};

/// Softmax regression on standardized features, full-batch gradient descent.
std::vector<int> linear_probe(const numerics::Tensor<double>& train_x, std::span<const int> train_y,
                              std::size_t num_classes, const numerics::Tensor<double>& test_x,
                              const ProbeOptions& options = {});

/// Test labels are mapped into the train label space by class name.
std::vector<int> remap_labels(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test);

/// Embedding methods require params; baselines ignore them.
template <typename T>
EvalResult evaluate(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test, Method method,
                    const encoder::EncoderParams<T>* params, const EvalOptions& options = {});

EvalResult evaluate_baseline(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test,
                             Method method, const EvalOptions& options = {});

/// Appends "dataset,method,K,seed,accuracy,seconds", writing the header for a new file.
void append_result(const std::filesystem::path& csv, const std::string& dataset, const EvalResult& result,
                   std::size_t k, std::uint64_t seed);

}  // namespace tsiars::evalkit
