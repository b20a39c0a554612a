#pragma once

// Single-threaded reference drivers.

#include <cstddef>
#include <vector>

#include "xnet/kernels/common.hpp"

namespace xnet::kernels::serial {

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    rows::gemm_row(n, k, a + i * k, b, c + i * n);
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void gemm_at(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    rows::gemm_at_row(static_cast<std::size_t>(i), m, n, k, a, b, c + i * n);
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename T>
void gemm_bt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  std::vector<T> bt(k * n);
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm(m, n, k, a, bt.data(), c);
}

// dst[patch_size, out_plane] from src[channels, height, width]
template <typename T>
void im2col(const ConvGeometry& g, const T* src, T* dst) {
  const std::size_t rows_total = g.patch_size();
  const std::size_t cols = g.out_plane();
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows_total); ++r) {
    rows::im2col_row(g, static_cast<std::size_t>(r), src, dst + r * cols);
  }
}

// dst[channels, height, width] += scatter of cols
template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* dst) {
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.channels); ++c) {
    rows::col2im_channel(g, static_cast<std::size_t>(c), cols, dst);
  }
}

// planes = batch * channels, each of `plane` elements; gain/bias indexed by
// plane % channels.
template <typename T>
void instance_norm_forward(std::size_t planes, std::size_t channels, std::size_t plane,
                           const T* x, const T* gain, const T* bias, T eps, T* xhat, T* y,
                           T* inv_std) {
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(planes); ++p) {
    const std::size_t c = static_cast<std::size_t>(p) % channels;
    inv_std[p] = rows::instance_norm_plane(plane, x + p * plane, gain[c], bias[c], eps,
                                           xhat + p * plane, y + p * plane);
  }
}

// dx accumulates; per-plane gain/bias partials land in dgain_plane/dbias_plane
// and are reduced by the caller in plane order.
template <typename T>
void instance_norm_backward(std::size_t planes, std::size_t channels, std::size_t plane,
                            const T* xhat, const T* dy, const T* gain, const T* inv_std, T* dx,
                            double* dgain_plane, double* dbias_plane) {
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(planes); ++p) {
    const std::size_t c = static_cast<std::size_t>(p) % channels;
    rows::instance_norm_plane_backward(plane, xhat + p * plane, dy + p * plane, gain[c],
                                       inv_std[p], dx + p * plane, dgain_plane[p],
                                       dbias_plane[p]);
  }
}

}  // namespace xnet::kernels::serial
