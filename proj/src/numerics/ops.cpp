// SPDX-License-Identifier: Apache-2.0
#include "tsiars/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "tsiars/error.hpp"
#include "tsiars/numerics/parallel.hpp"

namespace tsiars::numerics {
namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                to_string(shape));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace

PoolMode parse_pool_mode(std::string_view text) {
  if (text == "max") return PoolMode::kMax;
  if (text == "avg") return PoolMode::kAvg;
  throw ConfigError("unknown pool mode '" + std::string(text) + "' (expected max or avg)");
}

std::string to_string(PoolMode mode) { return mode == PoolMode::kMax ? "max" : "avg"; }

namespace {

// Zero-padded copy of the rows of one batch item: rows x (length + 2 * pad).
template <typename T>
std::vector<T> pad_rows(const T* src, std::size_t rows, std::size_t length, std::size_t pad) {
  const std::size_t stride = length + 2 * pad;
  std::vector<T> out(rows * stride, T{0});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(src + r * length, length, out.data() + r * stride + pad);
  return out;
}

constexpr std::size_t kRowBlock = 8;
constexpr std::size_t kColBlock = 16;

template <typename T>
struct Lanes {
  typedef T type __attribute__((vector_size(32)));
  static constexpr std::size_t width = 32 / sizeof(T);
  static constexpr std::size_t per_tile = kColBlock / width;

  static type load(const T* p) {
    type v;
    std::memcpy(&v, p, sizeof(v));
    return v;
  }
  static void store(T* p, type v) { std::memcpy(p, &v, sizeof(v)); }
};

// One full kRowBlock x kColBlock output tile held in registers.
template <typename T>
void conv_tile(const T* __restrict xp, std::size_t xl, std::size_t nin, const T* __restrict wt, std::size_t nout,
               std::size_t width, std::size_t o0, std::size_t t0, T* __restrict y, std::size_t n) {
  using L = Lanes<T>;
  typename L::type acc[kRowBlock][L::per_tile] = {};
  for (std::size_t i = 0; i < nin; ++i) {
    for (std::size_t k = 0; k < width; ++k) {
      const T* xs = xp + i * xl + t0 + k;
      const T* wk = wt + (i * width + k) * nout + o0;
      typename L::type xv[L::per_tile];
      for (std::size_t v = 0; v < L::per_tile; ++v) xv[v] = L::load(xs + v * L::width);
      for (std::size_t c = 0; c < kRowBlock; ++c) {
        const T wv = wk[c];
        for (std::size_t v = 0; v < L::per_tile; ++v) acc[c][v] += wv * xv[v];
      }
    }
  }
  for (std::size_t c = 0; c < kRowBlock; ++c) {
    for (std::size_t v = 0; v < L::per_tile; ++v) L::store(y + (o0 + c) * n + t0 + v * L::width, acc[c][v]);
  }
}

// g[o0 + c][j0 + j] += sum_t a[t][o0 + c] * b[t][j0 + j] for one full tile.
template <typename T>
void atb_tile(const T* __restrict a, std::size_t no, const T* __restrict b, std::size_t nj, std::size_t n,
              std::size_t o0, std::size_t j0, T* __restrict g) {
  using L = Lanes<T>;
  typename L::type acc[kRowBlock][L::per_tile] = {};
  for (std::size_t t = 0; t < n; ++t) {
    const T* ar = a + t * no + o0;
    const T* br = b + t * nj + j0;
    typename L::type bv[L::per_tile];
    for (std::size_t v = 0; v < L::per_tile; ++v) bv[v] = L::load(br + v * L::width);
    for (std::size_t c = 0; c < kRowBlock; ++c) {
      const T av = ar[c];
      for (std::size_t v = 0; v < L::per_tile; ++v) acc[c][v] += av * bv[v];
    }
  }
  for (std::size_t c = 0; c < kRowBlock; ++c) {
    T* row = g + (o0 + c) * nj + j0;
    for (std::size_t v = 0; v < L::per_tile; ++v) L::store(row + v * L::width, L::load(row + v * L::width) + acc[c][v]);
  }
}

// y[o][t] = sum_{i,k} wt[(i * width + k) * nout + o] * xp[i][t + k]
// with xp rows of length n + width - 1. Register tiles of kRowBlock outputs
// by kColBlock timesteps; edges fall back to plain loops.
template <typename T>
void conv_rows(const T* __restrict xp, std::size_t nin, std::size_t n, const T* __restrict wt, std::size_t nout,
               std::size_t width, T* __restrict y) {
  const std::size_t xl = n + width - 1;
  for (std::size_t t0 = 0; t0 < n; t0 += kColBlock) {
    const std::size_t tb = std::min(kColBlock, n - t0);
    for (std::size_t o0 = 0; o0 < nout; o0 += kRowBlock) {
      const std::size_t ob = std::min(kRowBlock, nout - o0);
      if (tb == kColBlock && ob == kRowBlock) {
        conv_tile(xp, xl, nin, wt, nout, width, o0, t0, y, n);
        continue;
      }
      T acc[kRowBlock][kColBlock] = {};
      for (std::size_t i = 0; i < nin; ++i) {
        for (std::size_t k = 0; k < width; ++k) {
          const T* xs = xp + i * xl + t0 + k;
          const T* wk = wt + (i * width + k) * nout + o0;
          for (std::size_t c = 0; c < ob; ++c) {
            for (std::size_t t = 0; t < tb; ++t) acc[c][t] += wk[c] * xs[t];
          }
        }
      }
      for (std::size_t c = 0; c < ob; ++c) std::copy_n(acc[c], tb, y + (o0 + c) * n + t0);
    }
  }
}

// g[o][j] += sum_t a[t][o] * b[t][j] for row-major a (n x no) and b (n x nj).
template <typename T>
void accumulate_atb(const T* __restrict a, std::size_t no, const T* __restrict b, std::size_t nj, std::size_t n,
                    T* __restrict g) {
  for (std::size_t o0 = 0; o0 < no; o0 += kRowBlock) {
    const std::size_t ob = std::min(kRowBlock, no - o0);
    for (std::size_t j0 = 0; j0 < nj; j0 += kColBlock) {
      const std::size_t jb = std::min(kColBlock, nj - j0);
      if (ob == kRowBlock && jb == kColBlock) {
        atb_tile(a, no, b, nj, n, o0, j0, g);
        continue;
      }
      T acc[kRowBlock][kColBlock] = {};
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t c = 0; c < ob; ++c) {
          for (std::size_t j = 0; j < jb; ++j) acc[c][j] += a[t * no + o0 + c] * b[t * nj + j0 + j];
        }
      }
      for (std::size_t c = 0; c < ob; ++c) {
        for (std::size_t j = 0; j < jb; ++j) g[(o0 + c) * nj + j0 + j] += acc[c][j];
      }
    }
  }
}

// g[o][i][k] += sum_t gy[o][t] * xp[i][t + k], via time-major copies of both operands.
template <typename T>
void conv_kernel_grad(const T* xp, std::size_t nin, std::size_t n, const T* gy, std::size_t nout, std::size_t width,
                      T* g) {
  const std::size_t xl = n + width - 1;
  const std::size_t ncol = nin * width;
  std::vector<T> a(n * nout), b(n * ncol);
  for (std::size_t o = 0; o < nout; ++o)
    for (std::size_t t = 0; t < n; ++t) a[t * nout + o] = gy[o * n + t];
  for (std::size_t i = 0; i < nin; ++i)
    for (std::size_t k = 0; k < width; ++k)
      for (std::size_t t = 0; t < n; ++t) b[t * ncol + i * width + k] = xp[i * xl + t + k];
  accumulate_atb(a.data(), nout, b.data(), ncol, n, g);
}

}  // namespace

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& x, const Tensor<T>& w) {
  require_rank(x.shape(), 3, "conv1d input");
  require_rank(w.shape(), 3, "conv1d kernel");
  const std::size_t batch = x.dim(0), cin = x.dim(1), length = x.dim(2);
  const std::size_t cout = w.dim(0), width = w.dim(2);
  if (w.dim(1) != cin) {
    throw std::invalid_argument("conv1d: input has " + std::to_string(cin) + " channels but kernel " +
                                to_string(w.shape()) + " expects " + std::to_string(w.dim(1)));
  }
  if (width % 2 == 0) throw std::invalid_argument("conv1d: kernel width must be odd, got " + std::to_string(width));
  const std::size_t pad = width / 2;
  // wt[(ci * width + k) * cout + co] = w[co][ci][k]
  std::vector<T> wt(w.size());
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t k = 0; k < width; ++k) wt[(ci * width + k) * cout + co] = w[(co * cin + ci) * width + k];
  Tensor<T> y({batch, cout, length});
  parallel_for(batch, [&](std::size_t b) {
    const auto xp = pad_rows(x.data() + b * cin * length, cin, length, pad);
    conv_rows(xp.data(), cin, length, wt.data(), cout, width, y.data() + b * cout * length);
  });
  return y;
}

template <typename T>
void conv1d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out, Tensor<T>* grad_x,
                     Tensor<T>* grad_w) {
  const std::size_t batch = x.dim(0), cin = x.dim(1), length = x.dim(2);
  const std::size_t cout = w.dim(0), width = w.dim(2);
  const std::size_t pad = width / 2;
  require_same_shape(grad_out.shape(), Shape{batch, cout, length}, "conv1d backward");
  if (grad_x) *grad_x = Tensor<T>(x.shape());
  // grad_x is the same-padded convolution of grad_out with the flipped,
  // transposed kernel: wt[(co * width + k) * cin + ci] = w[co][ci][width - 1 - k].
  std::vector<T> wt;
  if (grad_x) {
    wt.resize(w.size());
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t k = 0; k < width; ++k)
          wt[(co * width + k) * cin + ci] = w[(co * cin + ci) * width + (width - 1 - k)];
  }
  // Kernel partials are formed per batch item and reduced in batch order.
  std::vector<Tensor<T>> partial_w;
  if (grad_w) partial_w.assign(batch, Tensor<T>(w.shape()));
  parallel_for(batch, [&](std::size_t b) {
    const T* gy = grad_out.data() + b * cout * length;
    if (grad_x) {
      const auto gp = pad_rows(gy, cout, length, pad);
      conv_rows(gp.data(), cout, length, wt.data(), cin, width, grad_x->data() + b * cin * length);
    }
    if (grad_w) {
      const auto xp = pad_rows(x.data() + b * cin * length, cin, length, pad);
      conv_kernel_grad(xp.data(), cin, length, gy, cout, width, partial_w[b].data());
    }
  });
  if (grad_w) {
    *grad_w = Tensor<T>(w.shape());
    for (const auto& p : partial_w) {
      for (std::size_t i = 0; i < p.size(); ++i) (*grad_w)[i] += p[i];
    }
  }
}

template <typename T>
Tensor<T> pool1d_forward(const Tensor<T>& x, PoolMode mode, std::vector<std::uint32_t>* argmax) {
  require_rank(x.shape(), 3, "pool1d");
  const std::size_t rows = x.dim(0) * x.dim(1), length = x.dim(2);
  if (length == 0) throw std::invalid_argument("pool1d: input has zero length");
  const std::size_t out_len = pooled_length(length);
  Tensor<T> y({x.dim(0), x.dim(1), out_len});
  if (argmax) argmax->assign(y.size(), 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * length;
    T* out = y.data() + r * out_len;
    for (std::size_t j = 0; j < out_len; ++j) {
      const std::size_t s = 2 * j;
      const bool pair = s + 1 < length;
      if (mode == PoolMode::kMax) {
        const std::size_t pick = (pair && in[s + 1] > in[s]) ? s + 1 : s;
        out[j] = in[pick];
        if (argmax) (*argmax)[r * out_len + j] = static_cast<std::uint32_t>(r * length + pick);
      } else {
        out[j] = pair ? (in[s] + in[s + 1]) / T(2) : in[s];
      }
    }
  }
  return y;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  double hi = logits[0];
  for (double v : logits) {
    if (std::isnan(v)) throw NumericalError("softmax: NaN input");
    if (!std::isfinite(v)) throw NumericalError("softmax: non-finite input");
    hi = std::max(hi, v);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Var conv1d(Tape<T>& tape, Var x, Var kernel) {
  Tensor<T> y = conv1d_forward(tape.value(x), tape.value(kernel));
  return tape.record(std::move(y), {x, kernel}, [x, kernel](Tape<T>& t, const Tensor<T>& g) {
    const bool need_x = t.requires_grad(x), need_w = t.requires_grad(kernel);
    Tensor<T> gx, gw;
    conv1d_backward(t.value(x), t.value(kernel), g, need_x ? &gx : nullptr, need_w ? &gw : nullptr);
    if (need_x) t.accumulate(x, gx);
    if (need_w) t.accumulate(kernel, gw);
  });
}

template <typename T>
Var pool1d(Tape<T>& tape, Var x, PoolMode mode) {
  std::vector<std::uint32_t> argmax;
  Tensor<T> y = pool1d_forward(tape.value(x), mode, mode == PoolMode::kMax ? &argmax : nullptr);
  return tape.record(std::move(y), {x}, [x, mode, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& in = t.value(x);
    Tensor<T> gx(in.shape());
    if (mode == PoolMode::kMax) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
    } else {
      const std::size_t rows = in.dim(0) * in.dim(1), length = in.dim(2), out_len = pooled_length(length);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out_len; ++j) {
          const std::size_t s = 2 * j;
          const T gv = g[r * out_len + j];
          if (s + 1 < length) {
            gx[r * length + s] += gv / T(2);
            gx[r * length + s + 1] += gv / T(2);
          } else {
            gx[r * length + s] += gv;
          }
        }
      }
    }
    t.accumulate(x, gx);
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require_same_shape(va.shape(), vb.shape(), "add");
  Tensor<T> y = va;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += vb[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename T>
Var add_channel_bias(Tape<T>& tape, Var x, Var bias) {
  const auto& vx = tape.value(x);
  const auto& vb = tape.value(bias);
  require_rank(vx.shape(), 3, "add_channel_bias");
  if (vb.size() != vx.dim(1)) {
    throw std::invalid_argument("add_channel_bias: bias has " + std::to_string(vb.size()) + " entries for " +
                                std::to_string(vx.dim(1)) + " channels");
  }
  const std::size_t batch = vx.dim(0), channels = vx.dim(1), length = vx.dim(2);
  Tensor<T> y = vx;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      T* row = y.data() + (b * channels + c) * length;
      for (std::size_t l = 0; l < length; ++l) row[l] += vb[c];
    }
  }
  return tape.record(std::move(y), {x, bias}, [x, bias, batch, channels, length](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, g);
    if (!t.requires_grad(bias)) return;
    Tensor<T> gb(t.value(bias).shape());
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const T* row = g.data() + (b * channels + c) * length;
        T acc{0};
        for (std::size_t l = 0; l < length; ++l) acc += row[l];
        gb[c] += acc;
      }
    }
    t.accumulate(bias, gb);
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.values()) v = v > T{0} ? v : T{0};
  return tape.record(std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    const auto& in = t.value(x);
    Tensor<T> gx(in.shape());
    // Subgradient at zero is zero.
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = in[i] > T{0} ? g[i] : T{0};
    t.accumulate(x, gx);
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require_same_shape(va.shape(), vb.shape(), "mul");
  Tensor<T> y = va;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= vb[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T> ga(va.shape());
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[i] * vb[i];
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb(vb.shape());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = g[i] * va[i];
      t.accumulate(b, gb);
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var x, T factor) {
  Tensor<T> y = tape.value(x);
  for (auto& v : y.values()) v *= factor;
  return tape.record(std::move(y), {x}, [x, factor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx = g;
    for (auto& v : gx.values()) v *= factor;
    t.accumulate(x, gx);
  });
}

template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require_rank(va.shape(), 2, "matmul lhs");
  require_rank(vb.shape(), 2, "matmul rhs");
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  if (vb.dim(0) != k) {
    throw std::invalid_argument("matmul: inner extents differ, " + to_string(va.shape()) + " @ " +
                                to_string(vb.shape()));
  }
  Tensor<T> y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = va[i * k + p];
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * vb[p * n + j];
    }
  }
  return tape.record(std::move(y), {a, b}, [a, b, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T> ga(va.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) ga[i * k + p] += g[i * n + j] * vb[p * n + j];
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb(vb.shape());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += va[i * k + p] * g[i * n + j];
      t.accumulate(b, gb);
    }
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  T total{0};
  for (T v : tape.value(x).values()) total += v;
  return tape.record(Tensor<T>::scalar(total), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g.item()));
  });
}

template <typename T>
Var mean(Tape<T>& tape, Var x) {
  const auto& vx = tape.value(x);
  if (vx.empty()) throw std::invalid_argument("mean: empty tensor");
  T total{0};
  for (T v : vx.values()) total += v;
  const T n = static_cast<T>(vx.size());
  return tape.record(Tensor<T>::scalar(total / n), {x}, [x, n](Tape<T>& t, const Tensor<T>& g) {
    t.accumulate(x, Tensor<T>(t.value(x).shape(), g.item() / n));
  });
}

template <typename T>
Var dot(Tape<T>& tape, Var a, Var b) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require_same_shape(va.shape(), vb.shape(), "dot");
  T total{0};
  for (std::size_t i = 0; i < va.size(); ++i) total += va[i] * vb[i];
  return tape.record(Tensor<T>::scalar(total), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    const T s = g.item();
    if (t.requires_grad(a)) {
      Tensor<T> ga = t.value(b);
      for (auto& v : ga.values()) v *= s;
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Tensor<T> gb = t.value(a);
      for (auto& v : gb.values()) v *= s;
      t.accumulate(b, gb);
    }
  });
}

template <typename T>
Var masked_select(Tape<T>& tape, Var x, const std::vector<bool>& mask) {
  const auto& vx = tape.value(x);
  if (mask.size() != vx.size()) {
    throw std::invalid_argument("masked_select: mask has " + std::to_string(mask.size()) + " entries for tensor " +
                                to_string(vx.shape()));
  }
  std::vector<T> picked;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) picked.push_back(vx[i]);
  }
  const std::size_t n = picked.size();
  return tape.record(Tensor<T>({n}, std::move(picked)), {x}, [x, mask](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(t.value(x).shape());
    std::size_t j = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i]) gx[i] = g[j++];
    }
    t.accumulate(x, gx);
  });
}

template <typename T>
Var slice_time(Tape<T>& tape, Var x, std::size_t begin, std::size_t end) {
  const auto& vx = tape.value(x);
  require_rank(vx.shape(), 3, "slice_time");
  const std::size_t rows = vx.dim(0) * vx.dim(1), length = vx.dim(2);
  if (begin >= end || end > length) {
    throw std::invalid_argument("slice_time: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") invalid for length " + std::to_string(length));
  }
  const std::size_t width = end - begin;
  Tensor<T> y({vx.dim(0), vx.dim(1), width});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(vx.data() + r * length + begin, width, y.data() + r * width);
  }
  return tape.record(std::move(y), {x}, [x, rows, length, begin, width](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T> gx(t.value(x).shape());
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(g.data() + r * width, width, gx.data() + r * length + begin);
    }
    t.accumulate(x, gx);
  });
}

template <typename T>
Var layer_norm_channels(Tape<T>& tape, Var x, T eps) {
  const auto& vx = tape.value(x);
  require_rank(vx.shape(), 3, "layer_norm_channels");
  const std::size_t batch = vx.dim(0), channels = vx.dim(1), length = vx.dim(2);
  Tensor<T> y(vx.shape());
  std::vector<T> inv_std(batch * length);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < length; ++l) {
      T mu{0};
      for (std::size_t c = 0; c < channels; ++c) mu += vx.at(b, c, l);
      mu /= static_cast<T>(channels);
      T var{0};
      for (std::size_t c = 0; c < channels; ++c) var += (vx.at(b, c, l) - mu) * (vx.at(b, c, l) - mu);
      var /= static_cast<T>(channels);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[b * length + l] = is;
      for (std::size_t c = 0; c < channels; ++c) y.at(b, c, l) = (vx.at(b, c, l) - mu) * is;
    }
  }
  Tensor<T> normalized = y;
  return tape.record(
      std::move(y), {x},
      [x, batch, channels, length, inv_std = std::move(inv_std), normalized = std::move(normalized)](
          Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> gx(t.value(x).shape());
        const T n = static_cast<T>(channels);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t l = 0; l < length; ++l) {
            T g_mean{0}, gy_mean{0};
            for (std::size_t c = 0; c < channels; ++c) {
              g_mean += g.at(b, c, l);
              gy_mean += g.at(b, c, l) * normalized.at(b, c, l);
            }
            g_mean /= n;
            gy_mean /= n;
            const T is = inv_std[b * length + l];
            for (std::size_t c = 0; c < channels; ++c) {
              gx.at(b, c, l) = is * (g.at(b, c, l) - g_mean - normalized.at(b, c, l) * gy_mean);
            }
          }
        }
        t.accumulate(x, gx);
      });
}

#define TSIARS_INSTANTIATE_OPS(T)                                                                        \
  template Tensor<T> conv1d_forward(const Tensor<T>&, const Tensor<T>&);                                 \
  template void conv1d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*,       \
                                Tensor<T>*);                                                             \
  template Tensor<T> pool1d_forward(const Tensor<T>&, PoolMode, std::vector<std::uint32_t>*);           \
  template Var conv1d(Tape<T>&, Var, Var);                                                               \
  template Var pool1d(Tape<T>&, Var, PoolMode);                                                          \
  template Var add(Tape<T>&, Var, Var);                                                                  \
  template Var add_channel_bias(Tape<T>&, Var, Var);                                                     \
  template Var relu(Tape<T>&, Var);                                                                      \
  template Var mul(Tape<T>&, Var, Var);                                                                  \
  template Var scale(Tape<T>&, Var, T);                                                                  \
  template Var matmul(Tape<T>&, Var, Var);                                                               \
  template Var sum(Tape<T>&, Var);                                                                       \
  template Var mean(Tape<T>&, Var);                                                                      \
  template Var dot(Tape<T>&, Var, Var);                                                                  \
  template Var masked_select(Tape<T>&, Var, const std::vector<bool>&);                                   \
  template Var slice_time(Tape<T>&, Var, std::size_t, std::size_t);                                      \
  template Var layer_norm_channels(Tape<T>&, Var, T);

TSIARS_INSTANTIATE_OPS(float)
TSIARS_INSTANTIATE_OPS(double)

}  // namespace tsiars::numerics
