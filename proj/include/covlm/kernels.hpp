#pragma once

#include "covlm/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

// Dense kernels. The `ref` namespace holds plain serial loops kept as the
// ground truth for tests and the benchmark; the outer namespace holds the
// OpenMP versions used by the layers. Parallel loops partition disjoint
// output elements and keep a fixed inner accumulation order, so results are
// identical to the serial reference bit for bit.

namespace covlm::kern {

namespace ref {

// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void matmul(const T* A, const T* B, T* C, int m, int k, int n,
            bool accumulate = false) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? C[static_cast<size_t>(i) * n + j] : T(0);
      for (int t = 0; t < k; ++t)
        acc += A[static_cast<size_t>(i) * k + t] * B[static_cast<size_t>(t) * n + j];
      C[static_cast<size_t>(i) * n + j] = acc;
    }
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
template <class T>
void matmul_tn(const T* A, const T* B, T* C, int m, int k, int n,
               bool accumulate = false) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? C[static_cast<size_t>(i) * n + j] : T(0);
      for (int t = 0; t < k; ++t)
        acc += A[static_cast<size_t>(t) * m + i] * B[static_cast<size_t>(t) * n + j];
      C[static_cast<size_t>(i) * n + j] = acc;
    }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
template <class T>
void matmul_nt(const T* A, const T* B, T* C, int m, int k, int n,
               bool accumulate = false) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? C[static_cast<size_t>(i) * n + j] : T(0);
      for (int t = 0; t < k; ++t)
        acc += A[static_cast<size_t>(i) * k + t] * B[static_cast<size_t>(j) * k + t];
      C[static_cast<size_t>(i) * n + j] = acc;
    }
}

// y[Co,Ho,Wo] = conv(x[Ci,H,W], w[Co,Ci,kk,kk]) + b, zero padding,
// cross-correlation convention (no kernel flip).
template <class T>
void conv2d(const T* x, const T* w, const T* b, T* y, int Ci, int H, int W,
            int Co, int kk, int stride, int pad) {
  const int Ho = (H + 2 * pad - kk) / stride + 1;
  const int Wo = (W + 2 * pad - kk) / stride + 1;
  for (int co = 0; co < Co; ++co)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        T acc = b ? b[co] : T(0);
        for (int ci = 0; ci < Ci; ++ci)
          for (int ky = 0; ky < kk; ++ky)
            for (int kx = 0; kx < kk; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x[(static_cast<size_t>(ci) * H + iy) * W + ix] *
                     w[((static_cast<size_t>(co) * Ci + ci) * kk + ky) * kk + kx];
            }
        y[(static_cast<size_t>(co) * Ho + oy) * Wo + ox] = acc;
      }
}

// Gradients of conv2d w.r.t. input, weights and bias (accumulated).
template <class T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db,
                     int Ci, int H, int W, int Co, int kk, int stride,
                     int pad) {
  const int Ho = (H + 2 * pad - kk) / stride + 1;
  const int Wo = (W + 2 * pad - kk) / stride + 1;
  for (int co = 0; co < Co; ++co)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        const T g = dy[(static_cast<size_t>(co) * Ho + oy) * Wo + ox];
        if (db) db[co] += g;
        for (int ci = 0; ci < Ci; ++ci)
          for (int ky = 0; ky < kk; ++ky)
            for (int kx = 0; kx < kk; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              const size_t xi = (static_cast<size_t>(ci) * H + iy) * W + ix;
              const size_t wi =
                  ((static_cast<size_t>(co) * Ci + ci) * kk + ky) * kk + kx;
              if (dx) dx[xi] += g * w[wi];
              if (dw) dw[wi] += g * x[xi];
            }
      }
}

// Align-corners bilinear resize of a G_in x G_in x D grid to G_out x G_out x D.
template <class T>
void bilinear_resize(const T* in, T* out, int g_in, int g_out, int D) {
  for (int oy = 0; oy < g_out; ++oy)
    for (int ox = 0; ox < g_out; ++ox) {
      const double sy =
          g_out > 1 ? static_cast<double>(oy) * (g_in - 1) / (g_out - 1) : 0.0;
      const double sx =
          g_out > 1 ? static_cast<double>(ox) * (g_in - 1) / (g_out - 1) : 0.0;
      const int y0 = static_cast<int>(sy);
      const int x0 = static_cast<int>(sx);
      const int y1 = y0 + 1 < g_in ? y0 + 1 : y0;
      const int x1 = x0 + 1 < g_in ? x0 + 1 : x0;
      const T fy = static_cast<T>(sy - y0);
      const T fx = static_cast<T>(sx - x0);
      for (int d = 0; d < D; ++d) {
        const T v00 = in[(static_cast<size_t>(y0) * g_in + x0) * D + d];
        const T v01 = in[(static_cast<size_t>(y0) * g_in + x1) * D + d];
        const T v10 = in[(static_cast<size_t>(y1) * g_in + x0) * D + d];
        const T v11 = in[(static_cast<size_t>(y1) * g_in + x1) * D + d];
        const T top = v00 + (v01 - v00) * fx;
        const T bot = v10 + (v11 - v10) * fx;
        out[(static_cast<size_t>(oy) * g_out + ox) * D + d] =
            top + (bot - top) * fy;
      }
    }
}

}  // namespace ref

template <class T>
void matmul(const T* A, const T* B, T* C, int m, int k, int n,
            bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? C[static_cast<size_t>(i) * n + j] : T(0);
      for (int t = 0; t < k; ++t)
        acc += A[static_cast<size_t>(i) * k + t] * B[static_cast<size_t>(t) * n + j];
      C[static_cast<size_t>(i) * n + j] = acc;
    }
}

template <class T>
void matmul_tn(const T* A, const T* B, T* C, int m, int k, int n,
               bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? C[static_cast<size_t>(i) * n + j] : T(0);
      for (int t = 0; t < k; ++t)
        acc += A[static_cast<size_t>(t) * m + i] * B[static_cast<size_t>(t) * n + j];
      C[static_cast<size_t>(i) * n + j] = acc;
    }
}

template <class T>
void matmul_nt(const T* A, const T* B, T* C, int m, int k, int n,
               bool accumulate = false) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? C[static_cast<size_t>(i) * n + j] : T(0);
      for (int t = 0; t < k; ++t)
        acc += A[static_cast<size_t>(i) * k + t] * B[static_cast<size_t>(j) * k + t];
      C[static_cast<size_t>(i) * n + j] = acc;
    }
}

template <class T>
void conv2d(const T* x, const T* w, const T* b, T* y, int Ci, int H, int W,
            int Co, int kk, int stride, int pad) {
  const int Ho = (H + 2 * pad - kk) / stride + 1;
  const int Wo = (W + 2 * pad - kk) / stride + 1;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Co; ++co)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        T acc = b ? b[co] : T(0);
        for (int ci = 0; ci < Ci; ++ci)
          for (int ky = 0; ky < kk; ++ky)
            for (int kx = 0; kx < kk; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x[(static_cast<size_t>(ci) * H + iy) * W + ix] *
                     w[((static_cast<size_t>(co) * Ci + ci) * kk + ky) * kk + kx];
            }
        y[(static_cast<size_t>(co) * Ho + oy) * Wo + ox] = acc;
      }
}

// dx and dw writes race across output channels, so the backward pass stays
// serial; it is the same code as the reference.
template <class T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db,
                     int Ci, int H, int W, int Co, int kk, int stride,
                     int pad) {
  ref::conv2d_backward(x, w, dy, dx, dw, db, Ci, H, W, Co, kk, stride, pad);
}

template <class T>
void bilinear_resize(const T* in, T* out, int g_in, int g_out, int D) {
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < g_out; ++oy)
    for (int ox = 0; ox < g_out; ++ox) {
      const double sy =
          g_out > 1 ? static_cast<double>(oy) * (g_in - 1) / (g_out - 1) : 0.0;
      const double sx =
          g_out > 1 ? static_cast<double>(ox) * (g_in - 1) / (g_out - 1) : 0.0;
      const int y0 = static_cast<int>(sy);
      const int x0 = static_cast<int>(sx);
      const int y1 = y0 + 1 < g_in ? y0 + 1 : y0;
      const int x1 = x0 + 1 < g_in ? x0 + 1 : x0;
      const T fy = static_cast<T>(sy - y0);
      const T fx = static_cast<T>(sx - x0);
      for (int d = 0; d < D; ++d) {
        const T v00 = in[(static_cast<size_t>(y0) * g_in + x0) * D + d];
        const T v01 = in[(static_cast<size_t>(y0) * g_in + x1) * D + d];
        const T v10 = in[(static_cast<size_t>(y1) * g_in + x0) * D + d];
        const T v11 = in[(static_cast<size_t>(y1) * g_in + x1) * D + d];
        const T top = v00 + (v01 - v00) * fx;
        const T bot = v10 + (v11 - v10) * fx;
        out[(static_cast<size_t>(oy) * g_out + ox) * D + d] =
            top + (bot - top) * fy;
      }
    }
}

}  // namespace covlm::kern
