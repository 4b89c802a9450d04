// SPDX-License-Identifier: Apache-2.0
#include "tsiars/contrast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include "tsiars/error.hpp"
#include "tsiars/numerics/parallel.hpp"
#include "tsiars/resolution.hpp"

namespace tsiars::contrast {

using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

// Both contrastive losses reduce to the same block problem: two sets of n
// vectors stored channel-major (K x n). Every vector of one set is an anchor
// whose positive is the same column of the other set; the negatives are all
// other columns of both sets. Anchors are taken from both sets in turn.
//
// Per-row coefficients (softmax minus the positive one-hot) are saved as
// [n entries against the other set | n entries against the own set].

template <typename T>
struct RowBuffers {
  std::vector<T> logits;
  std::vector<T> anchor;
};

// Loss summed over the anchors of `p`. When `coef` is given, writes n x 2n
// coefficients for the backward pass.
template <typename T>
double nce_direction(const T* p, const T* q, std::size_t k_dim, std::size_t n, T* coef, RowBuffers<T>& buf) {
  buf.logits.assign(2 * n, T{0});
  buf.anchor.resize(k_dim);
  double total = 0.0;
  T* lq = buf.logits.data();
  T* lp = lq + n;
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(buf.logits.begin(), buf.logits.end(), T{0});
    for (std::size_t k = 0; k < k_dim; ++k) buf.anchor[k] = p[k * n + r];
    for (std::size_t k = 0; k < k_dim; ++k) {
      const T a = buf.anchor[k];
      const T* qrow = q + k * n;
      const T* prow = p + k * n;
      for (std::size_t c = 0; c < n; ++c) {
        lq[c] += a * qrow[c];
        lp[c] += a * prow[c];
      }
    }
    const T positive = lq[r];
    T hi = lq[0];
    for (std::size_t c = 0; c < n; ++c) {
      hi = std::max(hi, lq[c]);
      if (c != r) hi = std::max(hi, lp[c]);
    }
    T z{0};
    for (std::size_t c = 0; c < n; ++c) {
      lq[c] = std::exp(lq[c] - hi);
      z += lq[c];
    }
    for (std::size_t c = 0; c < n; ++c) {
      lp[c] = c == r ? T{0} : std::exp(lp[c] - hi);
      z += lp[c];
    }
    total += static_cast<double>(hi) + std::log(static_cast<double>(z)) - static_cast<double>(positive);
    if (coef) {
      T* row = coef + r * 2 * n;
      const T inv = T{1} / z;
      for (std::size_t c = 0; c < 2 * n; ++c) row[c] = buf.logits[c] * inv;
      row[r] -= T{1};
    }
  }
  return total;
}

template <typename T>
inline T strided_dot(const T* a, const T* b, std::size_t n) {
  T acc[4] = {T{0}, T{0}, T{0}, T{0}};
  std::size_t c = 0;
  for (; c + 4 <= n; c += 4) {
    acc[0] += a[c] * b[c];
    acc[1] += a[c + 1] * b[c + 1];
    acc[2] += a[c + 2] * b[c + 2];
    acc[3] += a[c + 3] * b[c + 3];
  }
  for (; c < n; ++c) acc[0] += a[c] * b[c];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

// Pushes w * coef back through the dot products of nce_direction.
template <typename T>
void nce_direction_backward(const T* p, const T* q, std::size_t k_dim, std::size_t n, const T* coef, T w, T* gp,
                            T* gq) {
  std::vector<T> anchor(k_dim), scaled(2 * n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = coef + r * 2 * n;
    for (std::size_t c = 0; c < 2 * n; ++c) scaled[c] = w * row[c];
    const T* sq = scaled.data();
    const T* sp = sq + n;
    for (std::size_t k = 0; k < k_dim; ++k) anchor[k] = p[k * n + r];
    for (std::size_t k = 0; k < k_dim; ++k) {
      gp[k * n + r] += strided_dot(sq, q + k * n, n) + strided_dot(sp, p + k * n, n);
    }
    for (std::size_t k = 0; k < k_dim; ++k) {
      const T a = anchor[k];
      T* gq_row = gq + k * n;
      T* gp_row = gp + k * n;
      for (std::size_t c = 0; c < n; ++c) {
        gq_row[c] += sq[c] * a;
        gp_row[c] += sp[c] * a;
      }
    }
  }
}

void check_pair(const Shape& a, const Shape& b, const char* what) {
  if (a.size() != 3 || a != b) {
    throw std::invalid_argument(std::string(what) + ": feature maps must share a B x K x L shape, got " +
                                numerics::to_string(a) + " and " + numerics::to_string(b));
  }
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw NumericalError(std::string(what) + ": non-finite feature values");
}

// Saved coefficients for one loss evaluation: per group, two directions.
template <typename T>
struct SavedCoefficients {
  std::vector<std::vector<T>> forward;   // anchors from f
  std::vector<std::vector<T>> backward;  // anchors from f'
};

enum class Kind { kTemporal, kInstance };

// Group g's channel-major blocks. Temporal groups are instances and use the
// tensors in place; instance groups are timesteps and are gathered.
template <typename T>
struct GroupView {
  std::vector<T> x_store, y_store;
  const T* x = nullptr;
  const T* y = nullptr;
};

template <typename T>
GroupView<T> group_view(Kind kind, const Tensor<T>& f, const Tensor<T>& fp, std::size_t g) {
  GroupView<T> v;
  const std::size_t batch = f.dim(0), k_dim = f.dim(1), length = f.dim(2);
  if (kind == Kind::kTemporal) {
    v.x = f.data() + g * k_dim * length;
    v.y = fp.data() + g * k_dim * length;
    return v;
  }
  v.x_store.resize(k_dim * batch);
  v.y_store.resize(k_dim * batch);
  for (std::size_t k = 0; k < k_dim; ++k) {
    for (std::size_t i = 0; i < batch; ++i) {
      v.x_store[k * batch + i] = f.at(i, k, g);
      v.y_store[k * batch + i] = fp.at(i, k, g);
    }
  }
  v.x = v.x_store.data();
  v.y = v.y_store.data();
  return v;
}

struct Geometry {
  std::size_t groups = 0;
  std::size_t n = 0;
  double normalizer = 1.0;
};

template <typename T>
Geometry geometry(Kind kind, const Tensor<T>& f) {
  const std::size_t batch = f.dim(0), length = f.dim(2);
  Geometry g;
  g.groups = kind == Kind::kTemporal ? batch : length;
  g.n = kind == Kind::kTemporal ? length : batch;
  g.normalizer = 2.0 * static_cast<double>(batch) * static_cast<double>(length);
  return g;
}

template <typename T>
double contrast_forward(Kind kind, const Tensor<T>& f, const Tensor<T>& fp, SavedCoefficients<T>* saved) {
  const Geometry geo = geometry(kind, f);
  if (geo.n < 2 || geo.groups == 0) return 0.0;
  const std::size_t k_dim = f.dim(1), n = geo.n;
  std::vector<double> partial(geo.groups, 0.0);
  if (saved) {
    saved->forward.assign(geo.groups, {});
    saved->backward.assign(geo.groups, {});
  }
  numerics::parallel_for(geo.groups, [&](std::size_t g) {
    RowBuffers<T> buf;
    const GroupView<T> v = group_view(kind, f, fp, g);
    T* cf = nullptr;
    T* cb = nullptr;
    if (saved) {
      saved->forward[g].resize(n * 2 * n);
      saved->backward[g].resize(n * 2 * n);
      cf = saved->forward[g].data();
      cb = saved->backward[g].data();
    }
    partial[g] = nce_direction(v.x, v.y, k_dim, n, cf, buf) + nce_direction(v.y, v.x, k_dim, n, cb, buf);
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / geo.normalizer;
}

template <typename T>
void contrast_backward(Kind kind, const Tensor<T>& f, const Tensor<T>& fp, const SavedCoefficients<T>& saved,
                       T upstream, Tensor<T>& gf, Tensor<T>& gfp) {
  const Geometry geo = geometry(kind, f);
  gf = Tensor<T>(f.shape());
  gfp = Tensor<T>(fp.shape());
  if (geo.n < 2 || geo.groups == 0) return;
  const std::size_t batch = f.dim(0), k_dim = f.dim(1), n = geo.n;
  const T w = static_cast<T>(static_cast<double>(upstream) / geo.normalizer);
  numerics::parallel_for(geo.groups, [&](std::size_t g) {
    const GroupView<T> v = group_view(kind, f, fp, g);
    if (kind == Kind::kTemporal) {
      T* gx = gf.data() + g * k_dim * n;
      T* gy = gfp.data() + g * k_dim * n;
      nce_direction_backward(v.x, v.y, k_dim, n, saved.forward[g].data(), w, gx, gy);
      nce_direction_backward(v.y, v.x, k_dim, n, saved.backward[g].data(), w, gy, gx);
      return;
    }
    std::vector<T> gx(k_dim * n, T{0}), gy(k_dim * n, T{0});
    nce_direction_backward(v.x, v.y, k_dim, n, saved.forward[g].data(), w, gx.data(), gy.data());
    nce_direction_backward(v.y, v.x, k_dim, n, saved.backward[g].data(), w, gy.data(), gx.data());
    // Each timestep owns a distinct column of the output, so scattering is race-free.
    for (std::size_t k = 0; k < k_dim; ++k) {
      for (std::size_t i = 0; i < batch; ++i) {
        gf.at(i, k, g) = gx[k * n + i];
        gfp.at(i, k, g) = gy[k * n + i];
      }
    }
  });
}

template <typename T>
Var record_contrast(Tape<T>& tape, Var f, Var fp, double temporal_weight, double instance_weight,
                    std::string_view tag) {
  const Tensor<T>& vf = tape.value(f);
  const Tensor<T>& vfp = tape.value(fp);
  check_pair(vf.shape(), vfp.shape(), "contrastive loss");
  check_finite(vf, "contrastive loss");
  check_finite(vfp, "contrastive loss");
  const bool track = tape.requires_grad(f) || tape.requires_grad(fp);
  auto temporal = std::make_shared<SavedCoefficients<T>>();
  auto instance = std::make_shared<SavedCoefficients<T>>();
  double value = 0.0;
  if (temporal_weight != 0.0) {
    value += temporal_weight * contrast_forward(Kind::kTemporal, vf, vfp, track ? temporal.get() : nullptr);
  }
  if (instance_weight != 0.0) {
    value += instance_weight * contrast_forward(Kind::kInstance, vf, vfp, track ? instance.get() : nullptr);
  }
  return tape.record(
      Tensor<T>::scalar(static_cast<T>(value)), {f, fp},
      [f, fp, temporal_weight, instance_weight, temporal, instance](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& vf = t.value(f);
        const Tensor<T>& vfp = t.value(fp);
        Tensor<T> total_f(vf.shape()), total_fp(vfp.shape());
        Tensor<T> gf, gfp;
        auto add_into = [](Tensor<T>& dst, const Tensor<T>& src) {
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        };
        if (temporal_weight != 0.0) {
          contrast_backward(Kind::kTemporal, vf, vfp, *temporal, static_cast<T>(temporal_weight * g.item()), gf, gfp);
          add_into(total_f, gf);
          add_into(total_fp, gfp);
        }
        if (instance_weight != 0.0) {
          contrast_backward(Kind::kInstance, vf, vfp, *instance, static_cast<T>(instance_weight * g.item()), gf, gfp);
          add_into(total_f, gf);
          add_into(total_fp, gfp);
        }
        t.accumulate(f, total_f);
        t.accumulate(fp, total_fp);
      },
      tag);
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
}

std::vector<std::size_t> pyramid_lengths(std::size_t length, bool include_unpooled) {
  if (length == 0) throw std::invalid_argument("pyramid over an empty overlap");
  std::vector<std::size_t> out;
  std::size_t l = length;
  if (include_unpooled || l == 1) out.push_back(l);
  while (l > 1) {
    l = numerics::pooled_length(l);
    out.push_back(l);
  }
  return out;
}

template <typename T>
double temporal_loss(const Tensor<T>& f, const Tensor<T>& f_prime) {
  check_pair(f.shape(), f_prime.shape(), "temporal_loss");
  check_finite(f, "temporal_loss");
  check_finite(f_prime, "temporal_loss");
  return contrast_forward<T>(Kind::kTemporal, f, f_prime, nullptr);
}

template <typename T>
double instance_loss(const Tensor<T>& f, const Tensor<T>& f_prime) {
  check_pair(f.shape(), f_prime.shape(), "instance_loss");
  check_finite(f, "instance_loss");
  check_finite(f_prime, "instance_loss");
  return contrast_forward<T>(Kind::kInstance, f, f_prime, nullptr);
}

template <typename T>
std::vector<PyramidLevel<T>> build_pyramid(const Tensor<T>& f_o, const Tensor<T>& f_o_prime,
                                           const LossConfig& config) {
  check_pair(f_o.shape(), f_o_prime.shape(), "build_pyramid");
  std::vector<PyramidLevel<T>> levels;
  Tensor<T> a = f_o, b = f_o_prime;
  auto push = [&] {
    PyramidLevel<T> level;
    level.f_o = a;
    level.f_o_prime = b;
    level.pooled_length = a.dim(2);
    level.canonical_index = selection::canonical_index(level.pooled_length);
    levels.push_back(std::move(level));
  };
  if (config.include_unpooled || a.dim(2) == 1) push();
  while (a.dim(2) > 1) {
    a = numerics::pool1d_forward(a, config.pool_mode);
    b = numerics::pool1d_forward(b, config.pool_mode);
    push();
  }
  return levels;
}

template <typename T>
void evaluate_levels(std::vector<PyramidLevel<T>>& pyramid, double alpha) {
  for (auto& level : pyramid) {
    level.temporal_loss = temporal_loss(level.f_o, level.f_o_prime);
    level.instance_loss = instance_loss(level.f_o, level.f_o_prime);
    level.combined_loss = combined_loss(*level.temporal_loss, *level.instance_loss, alpha);
  }
}

template <typename T>
double hierarchical_loss(const std::vector<PyramidLevel<T>>& pyramid) {
  if (pyramid.empty()) throw std::invalid_argument("hierarchical_loss: empty pyramid");
  double total = 0.0;
  for (const auto& level : pyramid) {
    if (!level.combined_loss) throw std::logic_error("hierarchical_loss: level not evaluated");
    total += *level.combined_loss;
  }
  return total;
}

template <typename T>
std::vector<TrackedLevel> build_pyramid(Tape<T>& tape, Var f_o, Var f_o_prime, const LossConfig& config,
                                        std::optional<std::size_t> stop_at_index) {
  check_pair(tape.value(f_o).shape(), tape.value(f_o_prime).shape(), "build_pyramid");
  std::vector<TrackedLevel> levels;
  Var a = f_o, b = f_o_prime;
  auto length = [&] { return tape.value(a).dim(2); };
  auto push = [&] {
    const std::size_t l = length();
    levels.push_back(TrackedLevel{a, b, l, selection::canonical_index(l)});
    return stop_at_index && levels.back().canonical_index <= *stop_at_index;
  };
  if (config.include_unpooled || length() == 1) {
    if (push()) return levels;
  }
  while (length() > 1) {
    a = numerics::pool1d(tape, a, config.pool_mode);
    b = numerics::pool1d(tape, b, config.pool_mode);
    if (push()) return levels;
  }
  return levels;
}

template <typename T>
Var temporal_loss(Tape<T>& tape, Var f, Var f_prime) {
  return record_contrast(tape, f, f_prime, 1.0, 0.0, "temporal_loss");
}

template <typename T>
Var instance_loss(Tape<T>& tape, Var f, Var f_prime) {
  return record_contrast(tape, f, f_prime, 0.0, 1.0, "instance_loss");
}

template <typename T>
Var combined_loss(Tape<T>& tape, Var f, Var f_prime, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  // Separate evaluation keeps the value bitwise equal to the forward-only path.
  const Tensor<T>& vf = tape.value(f);
  const Tensor<T>& vfp = tape.value(f_prime);
  check_pair(vf.shape(), vfp.shape(), "combined_loss");
  check_finite(vf, "combined_loss");
  check_finite(vfp, "combined_loss");
  const bool track = tape.requires_grad(f) || tape.requires_grad(f_prime);
  auto temporal = std::make_shared<SavedCoefficients<T>>();
  auto instance = std::make_shared<SavedCoefficients<T>>();
  const double lt = contrast_forward(Kind::kTemporal, vf, vfp, track ? temporal.get() : nullptr);
  const double li = contrast_forward(Kind::kInstance, vf, vfp, track ? instance.get() : nullptr);
  const double value = contrast::combined_loss(lt, li, alpha);
  return tape.record(
      Tensor<T>::scalar(static_cast<T>(value)), {f, f_prime},
      [f, f_prime, alpha, temporal, instance](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& vf = t.value(f);
        const Tensor<T>& vfp = t.value(f_prime);
        Tensor<T> gf_t, gfp_t, gf_i, gfp_i;
        contrast_backward(Kind::kTemporal, vf, vfp, *temporal, static_cast<T>(alpha * g.item()), gf_t, gfp_t);
        contrast_backward(Kind::kInstance, vf, vfp, *instance, static_cast<T>((1.0 - alpha) * g.item()), gf_i,
                          gfp_i);
        for (std::size_t i = 0; i < gf_t.size(); ++i) {
          gf_t[i] += gf_i[i];
          gfp_t[i] += gfp_i[i];
        }
        t.accumulate(f, gf_t);
        t.accumulate(f_prime, gfp_t);
      },
      kLossHeadTag);
}

template <typename T>
Var hierarchical_loss(Tape<T>& tape, const std::vector<TrackedLevel>& pyramid, double alpha) {
  if (pyramid.empty()) throw std::invalid_argument("hierarchical_loss: empty pyramid");
  Var total = combined_loss(tape, pyramid.front().f_o, pyramid.front().f_o_prime, alpha);
  for (std::size_t i = 1; i < pyramid.size(); ++i) {
    total = numerics::add(tape, total, combined_loss(tape, pyramid[i].f_o, pyramid[i].f_o_prime, alpha));
  }
  return total;
}

#define TSIARS_INSTANTIATE_CONTRAST(T)                                                                        \
  template double temporal_loss(const Tensor<T>&, const Tensor<T>&);                                          \
  template double instance_loss(const Tensor<T>&, const Tensor<T>&);                                          \
  template std::vector<PyramidLevel<T>> build_pyramid(const Tensor<T>&, const Tensor<T>&, const LossConfig&); \
  template void evaluate_levels(std::vector<PyramidLevel<T>>&, double);                                       \
  template double hierarchical_loss(const std::vector<PyramidLevel<T>>&);                                     \
  template std::vector<TrackedLevel> build_pyramid(Tape<T>&, Var, Var, const LossConfig&,                     \
                                                   std::optional<std::size_t>);                               \
  template Var temporal_loss(Tape<T>&, Var, Var);                                                             \
  template Var instance_loss(Tape<T>&, Var, Var);                                                             \
  template Var combined_loss(Tape<T>&, Var, Var, double);                                                     \
  template Var hierarchical_loss(Tape<T>&, const std::vector<TrackedLevel>&, double);

TSIARS_INSTANTIATE_CONTRAST(float)
TSIARS_INSTANTIATE_CONTRAST(double)

}  // namespace tsiars::contrast
