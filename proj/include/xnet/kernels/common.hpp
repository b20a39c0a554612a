#pragma once

#include <cmath>
#include <cstddef>
#include <span>

// Row kernels shared by the serial and OpenMP drivers. Each output row is
// produced by exactly one call in a fixed accumulation order, so both drivers
// give bitwise-identical results regardless of thread count.

namespace xnet::kernels {

/// Geometry of one image plane pass through a sliding window.
struct ConvGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t patch_size() const { return channels * kernel_h * kernel_w; }
  std::size_t out_plane() const { return out_h * out_w; }
};

namespace rows {

// c[j] += sum_k a[k] * b[k*n + j]
template <typename T>
inline void gemm_row(std::size_t n, std::size_t k_dim, const T* a, const T* b, T* c) {
  for (std::size_t k = 0; k < k_dim; ++k) {
    const T av = a[k];
    const T* brow = b + k * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

// c[j] += sum_k a[k*m + i] * b[k*n + j]  (row i of a^T b)
template <typename T>
inline void gemm_at_row(std::size_t i, std::size_t m, std::size_t n, std::size_t k_dim, const T* a,
                        const T* b, T* c) {
  for (std::size_t k = 0; k < k_dim; ++k) {
    const T av = a[k * m + i];
    const T* brow = b + k * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

// One patch row (channel, ky, kx) of the column matrix.
template <typename T>
inline void im2col_row(const ConvGeometry& g, std::size_t row, const T* src, T* dst) {
  const std::size_t kx = row % g.kernel_w;
  const std::size_t ky = (row / g.kernel_w) % g.kernel_h;
  const std::size_t c = row / (g.kernel_w * g.kernel_h);
  const T* plane = src + c * g.height * g.width;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                              static_cast<std::ptrdiff_t>(g.pad);
    T* out = dst + oy * g.out_w;
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) out[ox] = T(0);
      continue;
    }
    const T* line = plane + static_cast<std::size_t>(iy) * g.width;
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                static_cast<std::ptrdiff_t>(g.pad);
      out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : line[ix];
    }
  }
}

// Scatter-add every column entry belonging to input channel c.
template <typename T>
inline void col2im_channel(const ConvGeometry& g, std::size_t c, const T* cols, T* dst) {
  T* plane = dst + c * g.height * g.width;
  const std::size_t plane_cols = g.out_plane();
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
      const std::size_t row = (c * g.kernel_h + ky) * g.kernel_w + kx;
      const T* src = cols + row * plane_cols;
      for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                  static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
        T* line = plane + static_cast<std::size_t>(iy) * g.width;
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
          line[ix] += src[oy * g.out_w + ox];
        }
      }
    }
  }
}

// Normalizes one (n, c) plane; writes the normalized values before the affine
// transform into xhat and returns 1/sqrt(var + eps).
template <typename T>
inline T instance_norm_plane(std::size_t plane, const T* x, T gain, T bias, T eps, T* xhat,
                             T* y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < plane; ++i) sum += x[i];
  const double mean = sum / static_cast<double>(plane);
  double sq = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double d = x[i] - mean;
    sq += d * d;
  }
  const double var = sq / static_cast<double>(plane);
  const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  const T m = static_cast<T>(mean);
  for (std::size_t i = 0; i < plane; ++i) {
    xhat[i] = (x[i] - m) * inv_std;
    y[i] = xhat[i] * gain + bias;
  }
  return inv_std;
}

// dx = inv_std * (g*dy - mean(g*dy) - xhat * mean(g*dy*xhat)); also returns
// the plane's contribution to d(gain) and d(bias).
template <typename T>
inline void instance_norm_plane_backward(std::size_t plane, const T* xhat, const T* dy, T gain,
                                         T inv_std, T* dx, double& dgain, double& dbias) {
  double sum_dy = 0.0;
  double sum_dy_xhat = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    sum_dy += dy[i];
    sum_dy_xhat += static_cast<double>(dy[i]) * xhat[i];
  }
  dgain = sum_dy_xhat;
  dbias = sum_dy;
  const double inv_n = 1.0 / static_cast<double>(plane);
  const double mean_dy = sum_dy * gain * inv_n;
  const double mean_dy_xhat = sum_dy_xhat * gain * inv_n;
  for (std::size_t i = 0; i < plane; ++i) {
    const double v = static_cast<double>(gain) * dy[i] - mean_dy - xhat[i] * mean_dy_xhat;
    dx[i] += static_cast<T>(v * inv_std);
  }
}

}  // namespace rows
}  // namespace xnet::kernels
