// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "tsiars/dataio.hpp"
#include "tsiars/error.hpp"

using namespace tsiars;
using dataio::TimeSeriesDataset;

namespace {

const std::filesystem::path kFixtures = TSIARS_FIXTURES;

std::string error_of(const std::filesystem::path& path, const dataio::ParseOptions& opts = {}) {
  try {
    dataio::load_dataset(path, opts);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

double channel_mean(const TimeSeriesDataset& ds, std::size_t c) {
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t t = 0; t < ds.length(); ++t) s += ds.values.at(i, c, t);
  return s / static_cast<double>(ds.size() * ds.length());
}

double channel_std(const TimeSeriesDataset& ds, std::size_t c) {
  const double m = channel_mean(ds, c);
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t t = 0; t < ds.length(); ++t) s += (ds.values.at(i, c, t) - m) * (ds.values.at(i, c, t) - m);
  return std::sqrt(s / static_cast<double>(ds.size() * ds.length()));
}

}  // namespace

TEST_CASE("ts fixture parses to exact values") {
  const auto ds = dataio::load_dataset(kFixtures / "basic.ts");
  CHECK(ds.name == "Basic");
  REQUIRE(ds.values.shape() == numerics::Shape{2, 2, 3});
  const std::vector<double> expected{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, -1.5, 0.25, 7.0, 0.0, 0.0, 1e-3};
  CHECK(std::vector<double>(ds.values.values().begin(), ds.values.values().end()) == expected);
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.class_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("ts round trip is exact") {
  for (const char* name : {"basic.ts", "declared_order.ts"}) {
    const auto ds = dataio::load_dataset(kFixtures / name);
    const auto again = dataio::parse_ts(dataio::write_ts(ds));
    CHECK(again.values == ds.values);
    CHECK(again.labels == ds.labels);
    CHECK(again.class_names == ds.class_names);
  }
  auto synth = dataio::synth_classification(3, 2, 16, 2, 9);
  const auto path = std::filesystem::temp_directory_path() / "tsiars_roundtrip.ts";
  dataio::save_ts(path, synth);
  CHECK(dataio::load_dataset(path).values == synth.values);
  std::filesystem::remove(path);
}

TEST_CASE("class labels resolve by declared order") {
  const auto ds = dataio::load_dataset(kFixtures / "declared_order.ts");
  CHECK(ds.class_names == std::vector<std::string>{"2", "1"});
  CHECK(ds.labels == std::vector<int>{1, 0});
  CHECK(ds.dims() == 1);
  CHECK(ds.length() == 4);
}

TEST_CASE("malformed ts files are rejected with context") {
  const auto ragged = error_of(kFixtures / "ragged.ts");
  CHECK(ragged.find("line 5") != std::string::npos);
  CHECK(ragged.find("ragged") != std::string::npos);
  const auto unknown = error_of(kFixtures / "unknown_label.ts");
  CHECK(unknown.find("unknown class label 'z'") != std::string::npos);
  CHECK(unknown.find("line 5") != std::string::npos);
  CHECK(error_of(kFixtures / "missing.ts").find("missing values") != std::string::npos);
  CHECK(error_of(kFixtures / "absent.ts").find("absent.ts") != std::string::npos);
  CHECK_THROWS_AS(dataio::parse_ts("@problemName x\n"), DataError);
  CHECK_THROWS_AS(dataio::parse_ts("@data\n1,2,x\n"), DataError);
}

TEST_CASE("missing values are interpolated only on request") {
  dataio::ParseOptions opts;
  opts.fill_missing = true;
  const auto ds = dataio::load_dataset(kFixtures / "missing.ts", opts);
  CHECK(ds.values == numerics::Tensor<double>({1, 1, 4}, {1.0, 2.0, 3.0, 3.0}));
}

TEST_CASE("delimited UCR text") {
  const auto ds = dataio::parse_ucr_delimited("1,0.0,1.0\n2,1.0,0.0", ',');
  CHECK(ds.values.shape() == numerics::Shape{2, 1, 2});
  CHECK(ds.labels == std::vector<int>{0, 1});
  CHECK(ds.values == numerics::Tensor<double>({2, 1, 2}, {0.0, 1.0, 1.0, 0.0}));
  CHECK_THROWS_AS(dataio::parse_ucr_delimited("", ','), DataError);
  CHECK_THROWS_AS(dataio::parse_ucr_delimited("1,0.0,1.0\n2,1.0", ','), DataError);
  try {
    dataio::parse_ucr_delimited("1,0.0,1.0\n2,1.0,abc", ',');
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("column 3") != std::string::npos);
  }
  const auto tsv = dataio::load_dataset(kFixtures / "basic.tsv");
  CHECK(tsv.size() == 3);
  CHECK(tsv.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("zscore") {
  TimeSeriesDataset constant;
  constant.values = numerics::Tensor<double>({3, 1, 5}, 4.2);
  const auto flat = dataio::zscore(constant, constant);
  for (double v : flat.values.values()) CHECK(v == 0.0);

  const auto train = dataio::synth_classification(5, 2, 32, 2, 1);
  const auto once = dataio::zscore(train, train);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::fabs(channel_mean(once, c)) <= 1e-9);
    CHECK(std::fabs(channel_std(once, c) - 1.0) <= 1e-9);
  }
  const auto twice = dataio::zscore(once, once);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::fabs(channel_mean(twice, c)) <= 1e-9);
    CHECK(std::fabs(channel_std(twice, c) - 1.0) <= 1e-9);
  }

  // test split shifted by +3 keeps the offset under train statistics
  auto test = dataio::synth_classification(5, 2, 32, 2, 2);
  for (auto& v : test.values.values()) v += 3.0;
  const auto stats = dataio::fit_channel_stats(train);
  const auto z = dataio::zscore(train, test);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::fabs(channel_mean(z, c)) > 1.0);
    CHECK(z.values.at(0, c, 0) == doctest::Approx((test.values.at(0, c, 0) - stats.mean[c]) / stats.stddev[c]));
  }
  const auto one_dim = dataio::synth_classification(5, 1, 32, 2, 2);
  CHECK_THROWS_AS(dataio::zscore(train, one_dim), DataError);
}

TEST_CASE("synthetic classification data") {
  const auto ds = dataio::synth_classification(10, 1, 128, 3, 7);
  CHECK(ds.values.shape() == numerics::Shape{30, 1, 128});
  for (int c = 0; c < 3; ++c) CHECK(std::count(ds.labels.begin(), ds.labels.end(), c) == 10);
  CHECK(dataio::synth_classification(10, 1, 128, 3, 7).values == ds.values);
  CHECK(dataio::synth_classification(10, 1, 128, 3, 8).values != ds.values);

  // noiseless class c completes 2(c+1) cycles over 96 steps
  const auto clean = dataio::synth_classification(2, 1, 96, 3, 7, 0.0);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const std::size_t period = 96 / (2 * (static_cast<std::size_t>(clean.labels[i]) + 1));
    for (std::size_t t = 0; t + period < 96; ++t) {
      CHECK(clean.values.at(i, 0, t) == doctest::Approx(clean.values.at(i, 0, t + period)).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(dataio::synth_classification(10, 1, 7, 3, 7), std::invalid_argument);
}

TEST_CASE("batching partitions the index range") {
  std::mt19937_64 rng(3);
  const auto groups = dataio::batch_indices(10, 4, rng, true);
  REQUIRE(groups.size() == 3);
  CHECK(groups[0].size() == 4);
  CHECK(groups[1].size() == 4);
  CHECK(groups[2].size() == 2);
  std::set<std::size_t> seen;
  for (const auto& g : groups) seen.insert(g.begin(), g.end());
  CHECK(seen.size() == 10);
  CHECK(*seen.rbegin() == 9);

  const auto ordered = dataio::batch_indices(10, 4, rng, false);
  std::vector<std::size_t> flat;
  for (const auto& g : ordered) flat.insert(flat.end(), g.begin(), g.end());
  std::vector<std::size_t> iota(10);
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  CHECK(flat == iota);

  const auto ds = dataio::synth_classification(5, 1, 16, 2, 4);
  const auto a = dataio::batches(ds, 3, 11, true);
  const auto b = dataio::batches(ds, 3, 11, true);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].indices == b[i].indices);
    CHECK(a[i].values.at(0, 0, 5) == ds.values.at(a[i].indices[0], 0, 5));
  }
  CHECK_THROWS_AS(dataio::batch_indices(10, 0, rng, true), std::invalid_argument);
}
