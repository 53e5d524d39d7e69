#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "covlm/kernels.hpp"
#include "covlm/tensor.hpp"

namespace covlm {

template <class T>
void init_normal(Tensor<T>& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data) v = static_cast<T>(dist(rng));
}

/// y = x W + b for row batches. Caches the input for backward.
template <class T>
struct Linear {
  Parameter<T> weight;  // [in, out]
  Parameter<T> bias;    // [out]
  Tensor<T> x_cache;

  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}) {}

  void init(std::mt19937_64& rng) {
    init_normal(weight.value, rng, 1.0 / std::sqrt((double)weight.value.shape[0]));
    bias.value.zero();
  }

  void params(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.shape[0], in = weight.value.shape[0], out = weight.value.shape[1];
    if (x.shape[1] != in) throw std::invalid_argument("Linear: dim mismatch");
    x_cache = x;
    Tensor<T> y({n, out});
    kern::matmul(x.ptr(), weight.value.ptr(), y.ptr(), n, in, out);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out; ++j) y.at2(i, j) += bias.value[j];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = dy.shape[0], in = weight.value.shape[0], out = weight.value.shape[1];
    Tensor<T> dx({n, in});
    kern::matmul_nt(dy.ptr(), weight.value.ptr(), dx.ptr(), n, out, in);
    kern::matmul_tn(x_cache.ptr(), dy.ptr(), weight.grad.ptr(), in, n, out, true);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out; ++j) bias.grad[j] += dy.at2(i, j);
    return dx;
  }
};

template <class T>
struct LayerNorm {
  Parameter<T> gamma, beta;
  Tensor<T> xhat_cache;
  std::vector<T> invstd_cache;
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim)
      : gamma(name + ".gamma", {dim}), beta(name + ".beta", {dim}) {
    for (auto& v : gamma.value.data) v = T(1);
  }

  void params(ParamRefs<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.shape[0], d = x.shape[1];
    xhat_cache = Tensor<T>({n, d});
    invstd_cache.assign(n, T(0));
    Tensor<T> y({n, d});
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      T mean = 0;
      for (int j = 0; j < d; ++j) mean += x.at2(i, j);
      mean /= d;
      T var = 0;
      for (int j = 0; j < d; ++j) {
        const T c = x.at2(i, j) - mean;
        var += c * c;
      }
      var /= d;
      const T inv = T(1) / std::sqrt(var + T(kEps));
      invstd_cache[i] = inv;
      for (int j = 0; j < d; ++j) {
        const T xh = (x.at2(i, j) - mean) * inv;
        xhat_cache.at2(i, j) = xh;
        y.at2(i, j) = xh * gamma.value[j] + beta.value[j];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = dy.shape[0], d = dy.shape[1];
    Tensor<T> dx({n, d});
    for (int i = 0; i < n; ++i) {
      T sum_g = 0, sum_gx = 0;
      for (int j = 0; j < d; ++j) {
        const T g = dy.at2(i, j) * gamma.value[j];
        sum_g += g;
        sum_gx += g * xhat_cache.at2(i, j);
        gamma.grad[j] += dy.at2(i, j) * xhat_cache.at2(i, j);
        beta.grad[j] += dy.at2(i, j);
      }
      for (int j = 0; j < d; ++j) {
        const T g = dy.at2(i, j) * gamma.value[j];
        dx.at2(i, j) = invstd_cache[i] *
                       (g - sum_g / d - xhat_cache.at2(i, j) * sum_gx / d);
      }
    }
    return dx;
  }
};

template <class T>
inline T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / T(M_SQRT2)));
}

template <class T>
inline T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / T(M_SQRT2)));
  const T pdf = std::exp(-x * x / T(2)) / T(std::sqrt(2.0 * M_PI));
  return cdf + x * pdf;
}

/// Two-layer GELU MLP, dim -> mult*dim -> dim.
template <class T>
struct Mlp {
  Linear<T> fc1, fc2;
  Tensor<T> h_cache;

  Mlp() = default;
  Mlp(const std::string& name, int dim, int mult = 4)
      : fc1(name + ".fc1", dim, mult * dim), fc2(name + ".fc2", mult * dim, dim) {}

  void init(std::mt19937_64& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  void params(ParamRefs<T>& out) {
    fc1.params(out);
    fc2.params(out);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    h_cache = fc1.forward(x);
    Tensor<T> a = h_cache;
    for (auto& v : a.data) v = gelu(v);
    return fc2.forward(a);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> da = fc2.backward(dy);
    for (size_t i = 0; i < da.size(); ++i) da[i] *= gelu_grad(h_cache[i]);
    return fc1.backward(da);
  }
};

/// Per-block key/value store for incremental greedy decoding.
template <class T>
struct KvCache {
  Tensor<T> k, v;  // [len, dim]
  int len = 0;
};

/// Multi-head self-attention with optional causal mask.
template <class T>
struct SelfAttention {
  int dim = 0, heads = 0;
  bool causal = false;
  Linear<T> wq, wk, wv, wo;
  Tensor<T> q_cache, k_cache, v_cache;
  Tensor<T> att_cache;  // [heads, N, N]

  SelfAttention() = default;
  SelfAttention(const std::string& name, int d, int h, bool causal_mask)
      : dim(d), heads(h), causal(causal_mask),
        wq(name + ".wq", d, d), wk(name + ".wk", d, d), wv(name + ".wv", d, d),
        wo(name + ".wo", d, d) {
    if (d % h != 0) throw std::invalid_argument("attention: dim % heads != 0");
  }

  void init(std::mt19937_64& rng) {
    wq.init(rng);
    wk.init(rng);
    wv.init(rng);
    wo.init(rng);
  }

  void params(ParamRefs<T>& out) {
    wq.params(out);
    wk.params(out);
    wv.params(out);
    wo.params(out);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    const int n = x.shape[0], dh = dim / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    q_cache = wq.forward(x);
    k_cache = wk.forward(x);
    v_cache = wv.forward(x);
    att_cache = Tensor<T>({heads, n, n});
    Tensor<T> ctx({n, dim});
#pragma omp parallel for schedule(static)
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < n; ++i) {
        const int jmax = causal ? i : n - 1;
        T mx = -std::numeric_limits<T>::infinity();
        std::vector<T> row(jmax + 1);
        for (int j = 0; j <= jmax; ++j) {
          T s = 0;
          for (int t = 0; t < dh; ++t)
            s += q_cache.at2(i, off + t) * k_cache.at2(j, off + t);
          row[j] = s * scale;
          mx = std::max(mx, row[j]);
        }
        T denom = 0;
        for (int j = 0; j <= jmax; ++j) {
          row[j] = std::exp(row[j] - mx);
          denom += row[j];
        }
        for (int j = 0; j <= jmax; ++j)
          att_cache.at3(h, i, j) = row[j] / denom;
        for (int t = 0; t < dh; ++t) {
          T acc = 0;
          for (int j = 0; j <= jmax; ++j)
            acc += att_cache.at3(h, i, j) * v_cache.at2(j, off + t);
          ctx.at2(i, off + t) = acc;
        }
      }
    }
    return wo.forward(ctx);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const int n = dy.shape[0], dh = dim / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    Tensor<T> dctx = wo.backward(dy);
    Tensor<T> dq({n, dim}), dk({n, dim}), dv({n, dim});
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < n; ++i) {
        const int jmax = causal ? i : n - 1;
        // d att
        std::vector<T> datt(jmax + 1, T(0));
        for (int j = 0; j <= jmax; ++j) {
          T s = 0;
          for (int t = 0; t < dh; ++t)
            s += dctx.at2(i, off + t) * v_cache.at2(j, off + t);
          datt[j] = s;
        }
        for (int j = 0; j <= jmax; ++j)
          for (int t = 0; t < dh; ++t)
            dv.at2(j, off + t) += att_cache.at3(h, i, j) * dctx.at2(i, off + t);
        // softmax backward
        T dot = 0;
        for (int j = 0; j <= jmax; ++j)
          dot += datt[j] * att_cache.at3(h, i, j);
        for (int j = 0; j <= jmax; ++j) {
          const T ds = att_cache.at3(h, i, j) * (datt[j] - dot) * scale;
          for (int t = 0; t < dh; ++t) {
            dq.at2(i, off + t) += ds * k_cache.at2(j, off + t);
            dk.at2(j, off + t) += ds * q_cache.at2(i, off + t);
          }
        }
      }
    }
    Tensor<T> dx = wq.backward(dq);
    Tensor<T> dxk = wk.backward(dk);
    Tensor<T> dxv = wv.backward(dv);
    for (size_t i = 0; i < dx.size(); ++i) dx[i] += dxk[i] + dxv[i];
    return dx;
  }

  /// Incremental step for greedy decoding: x_new is a single row; the cache
  /// holds keys/values of all previous positions.
  Tensor<T> forward_step(const Tensor<T>& x_new, KvCache<T>& cache) {
    const int dh = dim / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    Tensor<T> q = wq.forward(x_new);
    Tensor<T> k = wk.forward(x_new);
    Tensor<T> v = wv.forward(x_new);
    if (cache.len == 0) {
      cache.k = Tensor<T>({0, dim});
      cache.v = Tensor<T>({0, dim});
    }
    cache.k.data.insert(cache.k.data.end(), k.data.begin(), k.data.end());
    cache.v.data.insert(cache.v.data.end(), v.data.begin(), v.data.end());
    cache.len += 1;
    cache.k.shape = {cache.len, dim};
    cache.v.shape = {cache.len, dim};
    Tensor<T> ctx({1, dim});
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      std::vector<T> row(cache.len);
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < cache.len; ++j) {
        T s = 0;
        for (int t = 0; t < dh; ++t)
          s += q.at2(0, off + t) * cache.k.at2(j, off + t);
        row[j] = s * scale;
        mx = std::max(mx, row[j]);
      }
      T denom = 0;
      for (int j = 0; j < cache.len; ++j) {
        row[j] = std::exp(row[j] - mx);
        denom += row[j];
      }
      for (int t = 0; t < dh; ++t) {
        T acc = 0;
        for (int j = 0; j < cache.len; ++j)
          acc += (row[j] / denom) * cache.v.at2(j, off + t);
        ctx.at2(0, off + t) = acc;
      }
    }
    return wo.forward(ctx);
  }
};

/// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
template <class T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  SelfAttention<T> attn;
  Mlp<T> mlp;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int dim, int heads, bool causal)
      : ln1(name + ".ln1", dim), ln2(name + ".ln2", dim),
        attn(name + ".attn", dim, heads, causal), mlp(name + ".mlp", dim) {}

  void init(std::mt19937_64& rng) {
    attn.init(rng);
    mlp.init(rng);
  }

  void params(ParamRefs<T>& out) {
    ln1.params(out);
    attn.params(out);
    ln2.params(out);
    mlp.params(out);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    Tensor<T> a = attn.forward(ln1.forward(x));
    for (size_t i = 0; i < h.size(); ++i) h[i] += a[i];
    Tensor<T> m = mlp.forward(ln2.forward(h));
    for (size_t i = 0; i < h.size(); ++i) h[i] += m[i];
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = dy;
    Tensor<T> dm = ln2.backward(mlp.backward(dy));
    for (size_t i = 0; i < d.size(); ++i) d[i] += dm[i];
    Tensor<T> da = ln1.backward(attn.backward(d));
    for (size_t i = 0; i < d.size(); ++i) d[i] += da[i];
    return d;
  }

  Tensor<T> forward_step(const Tensor<T>& x_new, KvCache<T>& cache) {
    Tensor<T> h = x_new;
    Tensor<T> a = attn.forward_step(ln1.forward(x_new), cache);
    for (size_t i = 0; i < h.size(); ++i) h[i] += a[i];
    Tensor<T> m = mlp.forward(ln2.forward(h));
    for (size_t i = 0; i < h.size(); ++i) h[i] += m[i];
    return h;
  }
};

}  // namespace covlm
