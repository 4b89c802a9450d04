// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace oracle {

namespace {

double dot_views(const Map& a, std::size_t ia, std::size_t ta, const Map& b, std::size_t ib, std::size_t tb) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.channels; ++k) s += a.at(ia, k, ta) * b.at(ib, k, tb);
  return s;
}

double neg_log_ratio(double positive, const std::vector<double>& denominator_terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double z : denominator_terms) m = std::max(m, z);
  double s = 0.0;
  for (double z : denominator_terms) s += std::exp(z - m);
  return -(positive - (m + std::log(s)));
}

double temporal_direction(const Map& f, const Map& fp) {
  double total = 0.0;
  for (std::size_t i = 0; i < f.batch; ++i) {
    for (std::size_t t = 0; t < f.length; ++t) {
      std::vector<double> terms;
      for (std::size_t u = 0; u < f.length; ++u) terms.push_back(dot_views(f, i, t, fp, i, u));
      for (std::size_t u = 0; u < f.length; ++u) {
        if (u != t) terms.push_back(dot_views(f, i, t, f, i, u));
      }
      total += neg_log_ratio(dot_views(f, i, t, fp, i, t), terms);
    }
  }
  return total / static_cast<double>(f.batch * f.length);
}

double instance_direction(const Map& f, const Map& fp) {
  double total = 0.0;
  for (std::size_t i = 0; i < f.batch; ++i) {
    for (std::size_t t = 0; t < f.length; ++t) {
      std::vector<double> terms;
      for (std::size_t j = 0; j < f.batch; ++j) terms.push_back(dot_views(f, i, t, fp, j, t));
      for (std::size_t j = 0; j < f.batch; ++j) {
        if (j != i) terms.push_back(dot_views(f, i, t, f, j, t));
      }
      total += neg_log_ratio(dot_views(f, i, t, fp, i, t), terms);
    }
  }
  return total / static_cast<double>(f.batch * f.length);
}

Map pool(const Map& f, bool use_max) {
  Map out{f.batch, f.channels, (f.length + 1) / 2, {}};
  out.v.resize(out.batch * out.channels * out.length);
  for (std::size_t b = 0; b < f.batch; ++b) {
    for (std::size_t k = 0; k < f.channels; ++k) {
      for (std::size_t t = 0; t < out.length; ++t) {
        const double x0 = f.at(b, k, 2 * t);
        double r = x0;
        if (2 * t + 1 < f.length) {
          const double x1 = f.at(b, k, 2 * t + 1);
          r = use_max ? std::max(x0, x1) : 0.5 * (x0 + x1);
        }
        out.v[(b * out.channels + k) * out.length + t] = r;
      }
    }
  }
  return out;
}

}  // namespace

OracleReport compare(std::string label, double production, double reference) {
  OracleReport r;
  r.label = std::move(label);
  r.production = production;
  r.reference = reference;
  r.abs_error = std::fabs(production - reference);
  r.rel_error = r.abs_error / std::max(std::fabs(reference), 1e-12);
  return r;
}

double temporal_loss(const Map& f, const Map& fp) {
  if (f.length < 2) return 0.0;
  return 0.5 * (temporal_direction(f, fp) + temporal_direction(fp, f));
}

double instance_loss(const Map& f, const Map& fp) {
  if (f.batch < 2) return 0.0;
  return 0.5 * (instance_direction(f, fp) + instance_direction(fp, f));
}

std::vector<Map> pyramid(const Map& f, bool use_max) {
  std::vector<Map> levels{f};
  while (levels.back().length > 1) levels.push_back(pool(levels.back(), use_max));
  return levels;
}

double hierarchical_loss(const Map& f, const Map& fp, double alpha, bool use_max, bool include_unpooled) {
  const auto a = pyramid(f, use_max);
  const auto b = pyramid(fp, use_max);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i == 0 && !include_unpooled && a.size() > 1) continue;
    total += alpha * temporal_loss(a[i], b[i]) + (1.0 - alpha) * instance_loss(a[i], b[i]);
  }
  return total;
}

double dtw(const std::vector<double>& x, const std::vector<double>& y) {
  return dtw_dependent({x}, {y});
}

double dtw_dependent(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  const std::size_t n = x[0].size(), m = y[0].size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> table(n + 1, std::vector<double>(m + 1, inf));
  table[0][0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      double cost = 0.0;
      for (std::size_t d = 0; d < x.size(); ++d) cost += (x[d][i - 1] - y[d][j - 1]) * (x[d][i - 1] - y[d][j - 1]);
      table[i][j] = cost + std::min({table[i - 1][j - 1], table[i - 1][j], table[i][j - 1]});
    }
  }
  return table[n][m];
}

double dtw_independent(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  double total = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) total += dtw(x[d], y[d]);
  return total;
}

std::vector<double> softmax(const std::vector<double>& scores) {
  double m = -std::numeric_limits<double>::infinity();
  for (double s : scores) m = std::max(m, s);
  std::vector<double> out;
  double total = 0.0;
  for (double s : scores) {
    out.push_back(std::exp(s - m));
    total += out.back();
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> softmax_sampler(const std::vector<double>& probabilities, std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> freq(probabilities.size(), 0.0);
  for (std::size_t n = 0; n < draws; ++n) {
    const double r = u(rng);
    double c = 0.0;
    std::size_t pick = probabilities.size() - 1;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
      c += probabilities[i];
      if (r < c) {
        pick = i;
        break;
      }
    }
    freq[pick] += 1.0;
  }
  for (double& f : freq) f /= static_cast<double>(draws);
  return freq;
}

std::vector<int> nearest_labels(const std::vector<std::vector<double>>& dist, const std::vector<int>& train_labels) {
  std::vector<int> out;
  for (const auto& row : dist) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] < row[best]) best = j;
    }
    out.push_back(train_labels[best]);
  }
  return out;
}

}  // namespace oracle
