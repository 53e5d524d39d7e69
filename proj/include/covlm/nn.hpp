#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "covlm/tensor.hpp"

namespace covlm {

/// Softmax over the last axis of an [N, V] tensor.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  const int n = logits.shape[0], v = logits.shape[1];
  Tensor<T> p({n, v});
  for (int i = 0; i < n; ++i) {
    T mx = logits.at2(i, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits.at2(i, j));
    T denom = 0;
    for (int j = 0; j < v; ++j) {
      p.at2(i, j) = std::exp(logits.at2(i, j) - mx);
      denom += p.at2(i, j);
    }
    for (int j = 0; j < v; ++j) p.at2(i, j) /= denom;
  }
  return p;
}

/// Mean negative log softmax probability over masked-in positions.
/// Throws std::invalid_argument when every position is masked out.
template <class T>
T cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets,
                const std::vector<uint8_t>& mask) {
  const int n = logits.shape[0], v = logits.shape[1];
  if ((int)targets.size() != n || (int)mask.size() != n)
    throw std::invalid_argument("cross_entropy: length mismatch");
  int active = 0;
  T loss = 0;
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || targets[i] >= v)
      throw std::invalid_argument("cross_entropy: target out of vocab");
    T mx = logits.at2(i, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits.at2(i, j));
    T denom = 0;
    for (int j = 0; j < v; ++j) denom += std::exp(logits.at2(i, j) - mx);
    loss += -(logits.at2(i, targets[i]) - mx - std::log(denom));
    ++active;
  }
  if (active == 0)
    throw std::invalid_argument("cross_entropy: all positions masked out");
  return loss / active;
}

/// Gradient of cross_entropy w.r.t. logits: (softmax - onehot)/active at
/// masked-in positions, zero elsewhere.
template <class T>
Tensor<T> cross_entropy_backward(const Tensor<T>& logits,
                                 const std::vector<int>& targets,
                                 const std::vector<uint8_t>& mask) {
  const int n = logits.shape[0], v = logits.shape[1];
  int active = 0;
  for (int i = 0; i < n; ++i) active += mask[i] ? 1 : 0;
  Tensor<T> d({n, v});
  for (int i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    T mx = logits.at2(i, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, logits.at2(i, j));
    T denom = 0;
    for (int j = 0; j < v; ++j) denom += std::exp(logits.at2(i, j) - mx);
    for (int j = 0; j < v; ++j)
      d.at2(i, j) = std::exp(logits.at2(i, j) - mx) / denom / active;
    d.at2(i, targets[i]) -= T(1) / active;
  }
  return d;
}

/// Per-parameter Adam moments.
template <class T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  long long step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update over a parameter list. Frozen parameters
/// are untouched. Throws std::runtime_error on non-finite gradients.
template <class T>
void adam_step(ParamRefs<T>& params, AdamState<T>& st, const AdamConfig& cfg) {
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.emplace_back(p->value.shape);
      st.v.emplace_back(p->value.shape);
    }
  }
  if (st.m.size() != params.size())
    throw std::runtime_error("adam_step: state/parameter count mismatch");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, (double)st.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, (double)st.step);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>* p = params[pi];
    if (!p->trainable) continue;
    if (!p->grad.all_finite())
      throw std::runtime_error("adam_step: non-finite gradient in " + p->name);
    auto& m = st.m[pi];
    auto& v = st.v[pi];
    for (size_t i = 0; i < p->size(); ++i) {
      const double g = (double)p->grad[i];
      m[i] = (T)(cfg.beta1 * (double)m[i] + (1 - cfg.beta1) * g);
      v[i] = (T)(cfg.beta2 * (double)v[i] + (1 - cfg.beta2) * g * g);
      const double mhat = (double)m[i] / bc1;
      const double vhat = (double)v[i] / bc2;
      p->value[i] -= (T)(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

/// Central-difference gradient check of a scalar-valued function of a flat
/// input vector. Returns the max relative error with absolute floor 1e-8.
inline double grad_check(const std::function<double(const std::vector<double>&)>& f,
                         const std::vector<double>& x,
                         const std::vector<double>& analytic_grad,
                         double eps = 1e-5) {
  if (x.size() != analytic_grad.size())
    throw std::invalid_argument("grad_check: size mismatch");
  double worst = 0;
  std::vector<double> xp = x;
  for (size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + eps;
    const double fp = f(xp);
    xp[i] = x[i] - eps;
    const double fm = f(xp);
    xp[i] = x[i];
    const double num = (fp - fm) / (2 * eps);
    const double denom =
        std::max({1e-8, std::abs(num), std::abs(analytic_grad[i])});
    worst = std::max(worst, std::abs(num - analytic_grad[i]) / denom);
  }
  return worst;
}

}  // namespace covlm
