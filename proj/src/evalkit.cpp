// SPDX-License-Identifier: Apache-2.0
#include "tsiars/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tsiars/error.hpp"
#include "tsiars/numerics/parallel.hpp"

namespace tsiars::evalkit {

using numerics::Tensor;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Pointwise step cost between column i of x and column j of y over channels [c0, c1).
inline double step_cost(const double* x, std::size_t lx, std::size_t i, const double* y, std::size_t ly,
                        std::size_t j, std::size_t c0, std::size_t c1) {
  double s = 0.0;
  for (std::size_t c = c0; c < c1; ++c) {
    const double d = x[c * lx + i] - y[c * ly + j];
    s += d * d;
  }
  return s;
}

double dtw_channels(const double* x, std::size_t lx, const double* y, std::size_t ly, std::size_t c0,
                    std::size_t c1, std::size_t band) {
  std::vector<double> prev(ly + 1, kInf), cur(ly + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= lx; ++i) {
    std::fill(cur.begin(), cur.end(), kInf);
    const std::size_t lo = i > band ? i - band : 1;
    const std::size_t hi = std::min(ly, i + band);
    for (std::size_t j = lo; j <= hi; ++j) {
      const double best = std::min({prev[j - 1], prev[j], cur[j - 1]});
      cur[j] = step_cost(x, lx, i - 1, y, ly, j - 1, c0, c1) + best;
    }
    std::swap(prev, cur);
  }
  return prev[ly];
}

std::size_t row_width(const Tensor<double>& t) {
  std::size_t w = 1;
  for (std::size_t a = 1; a < t.rank(); ++a) w *= t.dim(a);
  return w;
}

const char* kValidMethods = "embed-1nn, embed-linear, 1nn-ed, 1nn-dtw-d, 1nn-dtw-i";

}  // namespace

Method parse_method(std::string_view text) {
  if (text == "embed-1nn") return Method::kEmbed1nn;
  if (text == "embed-linear") return Method::kEmbedLinear;
  if (text == "1nn-ed") return Method::k1nnEd;
  if (text == "1nn-dtw-d") return Method::k1nnDtwD;
  if (text == "1nn-dtw-i") return Method::k1nnDtwI;
  throw ConfigError("unknown method '" + std::string(text) + "' (valid: " + kValidMethods + ")");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kEmbed1nn: return "embed-1nn";
    case Method::kEmbedLinear: return "embed-linear";
    case Method::k1nnEd: return "1nn-ed";
    case Method::k1nnDtwD: return "1nn-dtw-d";
    case Method::k1nnDtwI: return "1nn-dtw-i";
  }
  return "?";
}

bool needs_encoder(Method method) { return method == Method::kEmbed1nn || method == Method::kEmbedLinear; }

template <typename T>
Tensor<double> embed(const dataio::TimeSeriesDataset& dataset, const encoder::EncoderParams<T>& params,
                     std::size_t chunk) {
  if (dataset.size() > 0 && dataset.dims() != params.config.input_dim) {
    throw DataError("dataset has " + std::to_string(dataset.dims()) + " channels but the encoder expects " +
                    std::to_string(params.config.input_dim));
  }
  const std::size_t n = dataset.size();
  const std::size_t k = params.config.output_dim;
  Tensor<double> out({n, k});
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    std::vector<std::size_t> rows(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    Tensor<double> x = dataset.gather(rows);
    Tensor<T> features;
    if constexpr (std::is_same_v<T, double>) {
      features = encoder::encode_values(x, params);
    } else {
      features = encoder::encode_values(x.template cast<T>(), params);
    }
    const std::size_t len = features.dim(2);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < len; ++t) s += static_cast<double>(features.at(b, c, t));
        out[(start + b) * k + c] = s / static_cast<double>(len);
      }
    }
  }
  if (!out.all_finite()) throw NumericalError("embedding contains non-finite values");
  return out;
}

double dtw_distance(std::span<const double> x, std::size_t lx, std::span<const double> y, std::size_t ly,
                    std::size_t dims, DtwMode mode, std::optional<std::size_t> window) {
  if (x.size() != dims * lx || y.size() != dims * ly) throw std::invalid_argument("dtw_distance: buffer size mismatch");
  if (lx == 0 || ly == 0) throw std::invalid_argument("dtw_distance: empty series");
  const std::size_t diff = lx > ly ? lx - ly : ly - lx;
  if (window && *window < diff) {
    throw std::invalid_argument("dtw_distance: window " + std::to_string(*window) +
                                " is smaller than the length difference " + std::to_string(diff));
  }
  const std::size_t band = window ? *window : std::max(lx, ly);
  if (mode == DtwMode::kDependent) return dtw_channels(x.data(), lx, y.data(), ly, 0, dims, band);
  double total = 0.0;
  for (std::size_t c = 0; c < dims; ++c) total += dtw_channels(x.data(), lx, y.data(), ly, c, c + 1, band);
  return total;
}

double dtw_distance(const Tensor<double>& x, const Tensor<double>& y, DtwMode mode, std::optional<std::size_t> window) {
  const auto dims_of = [](const Tensor<double>& t) { return t.rank() == 1 ? std::size_t{1} : t.dim(0); };
  const auto len_of = [](const Tensor<double>& t) { return t.rank() == 1 ? t.dim(0) : t.dim(1); };
  if (x.rank() < 1 || x.rank() > 2 || y.rank() < 1 || y.rank() > 2 || dims_of(x) != dims_of(y)) {
    throw std::invalid_argument("dtw_distance: expected D x L series with equal D, got " +
                                numerics::to_string(x.shape()) + " and " + numerics::to_string(y.shape()));
  }
  return dtw_distance(x.values(), len_of(x), y.values(), len_of(y), dims_of(x), mode, window);
}

std::vector<int> knn1(const Tensor<double>& train_x, std::span<const int> train_y, const Tensor<double>& test_x,
                      Metric metric, std::optional<std::size_t> window) {
  if (train_x.rank() == 0 || train_x.dim(0) == 0) throw std::invalid_argument("knn1: empty train set");
  const std::size_t n_train = train_x.dim(0);
  if (train_y.size() != n_train) throw std::invalid_argument("knn1: label count does not match train rows");
  if (test_x.rank() != train_x.rank()) throw std::invalid_argument("knn1: train/test rank mismatch");
  const std::size_t n_test = test_x.dim(0);
  const bool dtw = metric == Metric::kDtwDependent || metric == Metric::kDtwIndependent;
  if (dtw && (train_x.rank() != 3 || test_x.dim(1) != train_x.dim(1))) {
    throw std::invalid_argument("knn1: DTW metrics need N x D x L inputs with matching D");
  }
  if (!dtw && row_width(train_x) != row_width(test_x)) throw std::invalid_argument("knn1: feature width mismatch");
  const std::size_t w_train = row_width(train_x);
  const std::size_t w_test = row_width(test_x);
  std::vector<int> predictions(n_test);
  numerics::parallel_for(n_test, [&](std::size_t q) {
    std::span<const double> query = test_x.values().subspan(q * w_test, w_test);
    double best = kInf;
    std::size_t best_index = 0;
    for (std::size_t r = 0; r < n_train; ++r) {
      std::span<const double> ref = train_x.values().subspan(r * w_train, w_train);
      double d = 0.0;
      if (dtw) {
        d = dtw_distance(query, test_x.dim(2), ref, train_x.dim(2), train_x.dim(1),
                         metric == Metric::kDtwDependent ? DtwMode::kDependent : DtwMode::kIndependent, window);
      } else {
        for (std::size_t i = 0; i < w_train; ++i) {
          const double diff = query[i] - ref[i];
          d += diff * diff;
        }
      }
      if (d < best) {
        best = d;
        best_index = r;
      }
    }
    predictions[q] = train_y[best_index];
  });
  return predictions;
}

std::vector<int> linear_probe(const Tensor<double>& train_x, std::span<const int> train_y, std::size_t num_classes,
                              const Tensor<double>& test_x, const ProbeOptions& options) {
  if (train_x.rank() != 2 || test_x.rank() != 2 || train_x.dim(1) != test_x.dim(1)) {
    throw std::invalid_argument("linear_probe: expected N x K train and test matrices");
  }
  const std::size_t n = train_x.dim(0), k = train_x.dim(1), c = num_classes;
  if (n == 0) throw std::invalid_argument("linear_probe: empty train set");
  std::vector<double> mean(k, 0.0), scale(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) mean[j] += train_x[i * k + j];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) scale[j] += (train_x[i * k + j] - mean[j]) * (train_x[i * k + j] - mean[j]);
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    s = s < 1e-8 ? 1.0 : 1.0 / s;
  }
  const auto feature = [&](const Tensor<double>& x, std::size_t i, std::size_t j) {
    return (x[i * k + j] - mean[j]) * scale[j];
  };

  std::vector<double> w(c * k, 0.0), bias(c, 0.0), gw(c * k), gb(c), logits(c);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double top = -kInf;
      for (std::size_t a = 0; a < c; ++a) {
        double z = bias[a];
        for (std::size_t j = 0; j < k; ++j) z += w[a * k + j] * feature(train_x, i, j);
        logits[a] = z;
        top = std::max(top, z);
      }
      double total = 0.0;
      for (auto& z : logits) total += (z = std::exp(z - top));
      for (std::size_t a = 0; a < c; ++a) {
        const double g = logits[a] / total - (static_cast<int>(a) == train_y[i] ? 1.0 : 0.0);
        gb[a] += g;
        for (std::size_t j = 0; j < k; ++j) gw[a * k + j] += g * feature(train_x, i, j);
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t a = 0; a < c; ++a) {
      bias[a] -= options.learning_rate * gb[a] * inv;
      for (std::size_t j = 0; j < k; ++j) {
        w[a * k + j] -= options.learning_rate * (gw[a * k + j] * inv + options.l2 * w[a * k + j]);
      }
    }
  }

  std::vector<int> predictions(test_x.dim(0));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double best = -kInf;
    int arg = 0;
    for (std::size_t a = 0; a < c; ++a) {
      double z = bias[a];
      for (std::size_t j = 0; j < k; ++j) z += w[a * k + j] * feature(test_x, i, j);
      if (z > best) {
        best = z;
        arg = static_cast<int>(a);
      }
    }
    predictions[i] = arg;
  }
  return predictions;
}

std::vector<int> remap_labels(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test) {
  if (!train.has_labels() || !test.has_labels()) throw DataError("evaluation needs labels in both splits");
  std::vector<int> lookup(test.class_names.size(), -1);
  for (std::size_t i = 0; i < test.class_names.size(); ++i) {
    const auto it = std::find(train.class_names.begin(), train.class_names.end(), test.class_names[i]);
    if (it != train.class_names.end()) lookup[i] = static_cast<int>(it - train.class_names.begin());
  }
  std::vector<int> out;
  out.reserve(test.labels.size());
  for (int label : test.labels) {
    const int mapped = lookup.at(static_cast<std::size_t>(label));
    if (mapped < 0) {
      throw DataError("label space mismatch: test class '" + test.class_names[static_cast<std::size_t>(label)] +
                      "' does not occur in the train split");
    }
    out.push_back(mapped);
  }
  return out;
}

namespace {

EvalResult score(const std::string& method, const dataio::TimeSeriesDataset& train, std::span<const int> truth,
                 std::vector<int> predictions) {
  EvalResult r;
  r.method = method;
  r.total = truth.size();
  r.per_class.resize(train.class_names.size());
  for (std::size_t c = 0; c < r.per_class.size(); ++c) r.per_class[c].name = train.class_names[c];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& cls = r.per_class[static_cast<std::size_t>(truth[i])];
    ++cls.total;
    if (predictions[i] == truth[i]) {
      ++cls.correct;
      ++r.correct;
    }
  }
  r.accuracy = r.total == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.total);
  r.predictions = std::move(predictions);
  return r;
}

void check_shapes(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test) {
  if (train.size() == 0) throw DataError("evaluation needs a non-empty train split");
  if (train.dims() != test.dims()) throw DataError("train and test splits have different channel counts");
}

}  // namespace

EvalResult evaluate_baseline(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test,
                             Method method, const EvalOptions& options) {
  if (needs_encoder(method)) throw ConfigError("method " + to_string(method) + " needs an encoder checkpoint");
  check_shapes(train, test);
  const std::vector<int> truth = remap_labels(train, test);
  const auto start = std::chrono::steady_clock::now();
  Metric metric = Metric::kRawEuclidean;
  if (method == Method::k1nnDtwD) metric = Metric::kDtwDependent;
  if (method == Method::k1nnDtwI) metric = Metric::kDtwIndependent;
  if (metric == Metric::kRawEuclidean && train.length() != test.length()) {
    throw DataError("1nn-ed needs train and test series of equal length");
  }
  auto predictions = knn1(train.values, train.labels, test.values, metric, options.dtw_window);
  EvalResult r = score(to_string(method), train, truth, std::move(predictions));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

template <typename T>
EvalResult evaluate(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test, Method method,
                    const encoder::EncoderParams<T>* params, const EvalOptions& options) {
  if (!needs_encoder(method)) return evaluate_baseline(train, test, method, options);
  if (params == nullptr) throw ConfigError("method " + to_string(method) + " needs an encoder checkpoint");
  check_shapes(train, test);
  const std::vector<int> truth = remap_labels(train, test);
  const auto start = std::chrono::steady_clock::now();
  const Tensor<double> train_e = embed(train, *params);
  const Tensor<double> test_e = embed(test, *params);
  std::vector<int> predictions =
      method == Method::kEmbed1nn
          ? knn1(train_e, train.labels, test_e, Metric::kEmbeddingEuclidean)
          : linear_probe(train_e, train.labels, train.num_classes(), test_e, options.probe);
  EvalResult r = score(to_string(method), train, truth, std::move(predictions));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

void append_result(const std::filesystem::path& csv, const std::string& dataset, const EvalResult& result,
                   std::size_t k, std::uint64_t seed) {
  const bool fresh = !std::filesystem::exists(csv) || std::filesystem::file_size(csv) == 0;
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  std::ofstream out(csv, std::ios::app);
  if (!out) throw DataError("cannot append to " + csv.string());
  if (fresh) out << "dataset,method,K,seed,accuracy,seconds\n";
  std::ostringstream row;
  row.precision(10);
  row << dataset << ',' << result.method << ',' << k << ',' << seed << ',' << result.accuracy << ','
      << result.seconds << '\n';
  out << row.str();
}

template Tensor<double> embed(const dataio::TimeSeriesDataset&, const encoder::EncoderParams<float>&, std::size_t);
template Tensor<double> embed(const dataio::TimeSeriesDataset&, const encoder::EncoderParams<double>&, std::size_t);
template EvalResult evaluate(const dataio::TimeSeriesDataset&, const dataio::TimeSeriesDataset&, Method,
                             const encoder::EncoderParams<float>*, const EvalOptions&);
template EvalResult evaluate(const dataio::TimeSeriesDataset&, const dataio::TimeSeriesDataset&, Method,
                             const encoder::EncoderParams<double>*, const EvalOptions&);

}  // namespace tsiars::evalkit
