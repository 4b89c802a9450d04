// SPDX-License-Identifier: Apache-2.0
#include "tsiars/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "tsiars/error.hpp"

namespace tsiars::dataio {
namespace {

using numerics::Tensor;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  auto lines = split(text, '\n');
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  }
  return lines;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::logic_error("failed to format value");
  return std::string(buf, ptr);
}

// Linear interpolation over NaN runs; edges copy the nearest observed value.
bool fill_row(double* row, std::size_t length) {
  std::ptrdiff_t prev = -1;
  for (std::size_t t = 0; t <= length; ++t) {
    if (t < length && std::isnan(row[t])) continue;
    const auto gap_start = static_cast<std::size_t>(prev + 1);
    if (gap_start < t) {
      if (prev < 0 && t == length) return false;
      for (std::size_t g = gap_start; g < t; ++g) {
        if (prev < 0) {
          row[g] = row[t];
        } else if (t == length) {
          row[g] = row[prev];
        } else {
          const double w = static_cast<double>(g - prev) / static_cast<double>(t - prev);
          row[g] = (1.0 - w) * row[prev] + w * row[t];
        }
      }
    }
    prev = static_cast<std::ptrdiff_t>(t);
  }
  return true;
}

void resolve_missing(TimeSeriesDataset& ds, bool fill) {
  const std::size_t rows = ds.size() * ds.dims(), length = ds.length();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = ds.values.data() + r * length;
    if (std::none_of(row, row + length, [](double v) { return std::isnan(v); })) continue;
    const std::size_t instance = r / ds.dims(), channel = r % ds.dims();
    if (!fill) {
      throw DataError("missing values ('?') in instance " + std::to_string(instance) + ", dimension " +
                      std::to_string(channel) + "; enable missing-value filling to interpolate");
    }
    if (!fill_row(row, length)) {
      throw DataError("instance " + std::to_string(instance) + ", dimension " + std::to_string(channel) +
                      " has no observed values to interpolate from");
    }
  }
}

// Orders label strings numerically when every label parses as a number.
std::vector<std::string> ordered_class_names(std::vector<std::string> names) {
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  const bool numeric = std::all_of(names.begin(), names.end(), [](const std::string& s) {
    double v;
    return parse_double(s, v);
  });
  if (numeric) {
    std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
      double va = 0, vb = 0;
      parse_double(a, va);
      parse_double(b, vb);
      return va < vb;
    });
  }
  return names;
}

}  // namespace

numerics::Tensor<double> TimeSeriesDataset::gather(std::span<const std::size_t> rows) const {
  const std::size_t d = dims(), l = length(), stride = d * l;
  Tensor<double> out({rows.size(), d, l});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw std::out_of_range("gather: row " + std::to_string(rows[i]) + " out of range");
    std::copy_n(values.data() + rows[i] * stride, stride, out.data() + i * stride);
  }
  return out;
}

TimeSeriesDataset parse_ts(std::string_view text, const ParseOptions& options) {
  TimeSeriesDataset ds;
  ds.split = options.split;
  bool has_labels = false;
  bool in_data = false;
  std::vector<std::string> declared;
  std::vector<std::vector<std::vector<double>>> records;  // instance -> dim -> values
  std::vector<std::string> raw_labels;
  std::vector<std::size_t> record_lines;

  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string_view line = trim(lines[ln]);
    const std::size_t line_no = ln + 1;
    if (line.empty() || line.front() == '#') continue;
    if (!in_data) {
      if (line.front() != '@') {
        throw DataError("line " + std::to_string(line_no) + ": expected a '@' header or '@data' before records");
      }
      const auto tokens = split_whitespace(line);
      const std::string key = lower(tokens[0]);
      if (key == "@data") {
        in_data = true;
      } else if (key == "@problemname") {
        if (tokens.size() > 1) ds.name = std::string(tokens[1]);
      } else if (key == "@classlabel") {
        if (tokens.size() < 2) throw DataError("line " + std::to_string(line_no) + ": @classLabel needs true/false");
        has_labels = lower(tokens[1]) == "true";
        for (std::size_t i = 2; i < tokens.size(); ++i) declared.emplace_back(tokens[i]);
        if (has_labels && declared.empty()) {
          throw DataError("line " + std::to_string(line_no) + ": @classLabel true declares no labels");
        }
      } else if (key == "@timestamps") {
        if (tokens.size() > 1 && lower(tokens[1]) == "true") {
          throw DataError("line " + std::to_string(line_no) + ": timestamped .ts data is not supported");
        }
      } else if (key == "@equallength") {
        if (tokens.size() > 1 && lower(tokens[1]) == "false") {
          throw DataError("line " + std::to_string(line_no) + ": variable-length series are not supported");
        }
      }
      // Other headers (@univariate, @dimensions, @seriesLength, @missing, ...) are informational.
      continue;
    }
    auto fields = split(line, ':');
    if (has_labels) {
      if (fields.size() < 2) {
        throw DataError("line " + std::to_string(line_no) + ": record has no class label field");
      }
      raw_labels.emplace_back(trim(fields.back()));
      fields.pop_back();
    }
    std::vector<std::vector<double>> dims;
    for (std::size_t d = 0; d < fields.size(); ++d) {
      std::vector<double> series;
      for (auto token : split(fields[d], ',')) {
        token = trim(token);
        double v = 0;
        if (token == "?" || lower(token) == "nan") {
          v = std::numeric_limits<double>::quiet_NaN();
        } else if (!parse_double(token, v)) {
          throw DataError("line " + std::to_string(line_no) + ", dimension " + std::to_string(d) +
                          ": non-numeric value '" + std::string(token) + "'");
        }
        series.push_back(v);
      }
      if (!dims.empty() && series.size() != dims.front().size()) {
        throw DataError("line " + std::to_string(line_no) + ": ragged dimensions (dimension 0 has " +
                        std::to_string(dims.front().size()) + " values, dimension " + std::to_string(d) + " has " +
                        std::to_string(series.size()) + ")");
      }
      dims.push_back(std::move(series));
    }
    if (!records.empty()) {
      if (dims.size() != records.front().size()) {
        throw DataError("line " + std::to_string(line_no) + ": record has " + std::to_string(dims.size()) +
                        " dimensions, expected " + std::to_string(records.front().size()));
      }
      if (dims.front().size() != records.front().front().size()) {
        throw DataError("line " + std::to_string(line_no) + ": series length " +
                        std::to_string(dims.front().size()) + " differs from " +
                        std::to_string(records.front().front().size()) + " (equal-length data only)");
      }
    }
    records.push_back(std::move(dims));
    record_lines.push_back(line_no);
  }
  if (!in_data) throw DataError("no @data section found");
  if (records.empty()) throw DataError("@data section contains no records");

  const std::size_t n = records.size(), d = records.front().size(), l = records.front().front().size();
  ds.values = Tensor<double>({n, d, l});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      std::copy(records[i][c].begin(), records[i][c].end(), ds.values.data() + (i * d + c) * l);
    }
  }
  if (has_labels) {
    ds.class_names = declared;
    ds.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = std::find(declared.begin(), declared.end(), raw_labels[i]);
      if (it == declared.end()) {
        throw DataError("line " + std::to_string(record_lines[i]) + ": unknown class label '" + raw_labels[i] + "'");
      }
      ds.labels.push_back(static_cast<int>(it - declared.begin()));
    }
  }
  resolve_missing(ds, options.fill_missing);
  return ds;
}

std::string write_ts(const TimeSeriesDataset& ds) {
  std::ostringstream out;
  out << "@problemName " << (ds.name.empty() ? "dataset" : ds.name) << "\n";
  out << "@timeStamps false\n";
  out << "@missing false\n";
  out << "@univariate " << (ds.dims() == 1 ? "true" : "false") << "\n";
  out << "@dimensions " << ds.dims() << "\n";
  out << "@equalLength true\n";
  out << "@seriesLength " << ds.length() << "\n";
  if (ds.has_labels()) {
    out << "@classLabel true";
    for (const auto& name : ds.class_names) out << ' ' << name;
    out << "\n";
  } else {
    out << "@classLabel false\n";
  }
  out << "@data\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t c = 0; c < ds.dims(); ++c) {
      if (c > 0) out << ':';
      for (std::size_t t = 0; t < ds.length(); ++t) {
        if (t > 0) out << ',';
        out << format_double(ds.values.at(i, c, t));
      }
    }
    if (ds.has_labels()) out << ':' << ds.class_names.at(static_cast<std::size_t>(ds.labels[i]));
    out << "\n";
  }
  return out.str();
}

TimeSeriesDataset parse_ucr_delimited(std::string_view text, char delimiter, const ParseOptions& options) {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string_view line = trim(lines[ln]);
    if (line.empty()) continue;
    const auto fields = delimiter == ' ' ? split_whitespace(line) : split(line, delimiter);
    if (fields.size() < 2) {
      throw DataError("row " + std::to_string(ln + 1) + ": expected a label followed by at least one value");
    }
    std::vector<double> values;
    for (std::size_t col = 1; col < fields.size(); ++col) {
      const auto token = trim(fields[col]);
      double v = 0;
      if (token == "?" || lower(token) == "nan") {
        v = std::numeric_limits<double>::quiet_NaN();
      } else if (!parse_double(token, v)) {
        throw DataError("row " + std::to_string(ln + 1) + ", column " + std::to_string(col + 1) +
                        ": non-numeric field '" + std::string(token) + "'");
      }
      values.push_back(v);
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw DataError("row " + std::to_string(ln + 1) + ": " + std::to_string(values.size()) +
                      " values, expected " + std::to_string(rows.front().size()));
    }
    raw_labels.emplace_back(trim(fields[0]));
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DataError("delimited text contains no series");

  TimeSeriesDataset ds;
  ds.split = options.split;
  const std::size_t n = rows.size(), l = rows.front().size();
  ds.values = Tensor<double>({n, 1, l});
  for (std::size_t i = 0; i < n; ++i) std::copy(rows[i].begin(), rows[i].end(), ds.values.data() + i * l);
  ds.class_names = ordered_class_names(raw_labels);
  for (const auto& raw : raw_labels) {
    const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), raw);
    ds.labels.push_back(static_cast<int>(it - ds.class_names.begin()));
  }
  resolve_missing(ds, options.fill_missing);
  return ds;
}

TimeSeriesDataset load_dataset(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string ext = lower(path.extension().string());
  TimeSeriesDataset ds;
  try {
    if (ext == ".ts") {
      ds = parse_ts(text, options);
    } else if (ext == ".tsv") {
      ds = parse_ucr_delimited(text, '\t', options);
    } else if (ext == ".csv") {
      ds = parse_ucr_delimited(text, ',', options);
    } else if (ext == ".txt") {
      ds = parse_ucr_delimited(text, ' ', options);
    } else {
      throw DataError("unsupported dataset extension '" + ext + "' (expected .ts, .tsv, .csv or .txt)");
    }
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (ds.name.empty()) ds.name = path.stem().string();
  return ds;
}

void save_ts(const std::filesystem::path& path, const TimeSeriesDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << write_ts(dataset);
}

ChannelStats fit_channel_stats(const TimeSeriesDataset& train) {
  const std::size_t n = train.size(), d = train.dims(), l = train.length();
  ChannelStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  const double count = static_cast<double>(n * l);
  for (std::size_t c = 0; c < d; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < l; ++t) total += train.values.at(i, c, t);
    double mu = total / count;
    double residual = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < l; ++t) residual += train.values.at(i, c, t) - mu;
    mu += residual / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < l; ++t) sq += (train.values.at(i, c, t) - mu) * (train.values.at(i, c, t) - mu);
    stats.mean[c] = mu;
    stats.stddev[c] = std::sqrt(sq / count);
  }
  return stats;
}

TimeSeriesDataset zscore(const TimeSeriesDataset& train, const TimeSeriesDataset& apply_to) {
  if (train.dims() != apply_to.dims()) {
    throw DataError("zscore: train has " + std::to_string(train.dims()) + " channels, target has " +
                    std::to_string(apply_to.dims()));
  }
  const ChannelStats stats = fit_channel_stats(train);
  TimeSeriesDataset out = apply_to;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t c = 0; c < out.dims(); ++c) {
      const double sd = stats.stddev[c] < 1e-8 ? 1.0 : stats.stddev[c];
      for (std::size_t t = 0; t < out.length(); ++t) {
        out.values.at(i, c, t) = (out.values.at(i, c, t) - stats.mean[c]) / sd;
      }
    }
  }
  return out;
}

TimeSeriesDataset synth_classification(std::size_t n_per_class, std::size_t dims, std::size_t length,
                                       std::size_t num_classes, std::uint64_t seed, double noise_sigma) {
  if (length < 8) throw std::invalid_argument("synth_classification: length must be at least 8");
  if (n_per_class == 0 || dims == 0 || num_classes == 0) {
    throw std::invalid_argument("synth_classification: counts must be positive");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  TimeSeriesDataset ds;
  ds.name = "synthetic";
  const std::size_t n = n_per_class * num_classes;
  ds.values = Tensor<double>({n, dims, length});
  for (std::size_t c = 0; c < num_classes; ++c) ds.class_names.push_back(std::to_string(c));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i / n_per_class;
    const double cycles = 2.0 * static_cast<double>(cls + 1);
    ds.labels.push_back(static_cast<int>(cls));
    for (std::size_t c = 0; c < dims; ++c) {
      const double phase = phase_dist(rng);
      for (std::size_t t = 0; t < length; ++t) {
        const double angle = 2.0 * std::numbers::pi * cycles * static_cast<double>(t) / static_cast<double>(length);
        double v = std::sin(angle + phase);
        if (noise_sigma > 0.0) v += noise_sigma * noise(rng);
        ds.values.at(i, c, t) = v;
      }
    }
  }
  return ds;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::mt19937_64& rng,
                                                    bool shuffle) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

std::vector<Batch> batches(const TimeSeriesDataset& dataset, std::size_t batch_size, std::uint64_t seed,
                           bool shuffle) {
  std::mt19937_64 rng(seed);
  std::vector<Batch> out;
  for (auto& idx : batch_indices(dataset.size(), batch_size, rng, shuffle)) {
    Batch b;
    b.values = dataset.gather(idx);
    b.indices = std::move(idx);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace tsiars::dataio
