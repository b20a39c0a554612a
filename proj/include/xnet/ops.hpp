#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xnet/kernels/parallel.hpp"
#include "xnet/tensor.hpp"

// Differentiable tensor operations. Every op computes its forward result
// eagerly and, when a tape is recording and some input has gradients enabled,
// registers a backward closure that accumulates into the inputs' gradients.

namespace xnet {

namespace kern = kernels::parallel;

namespace detail {

template <typename T, typename... In>
bool wants_grad(const In&... in) {
  return active_tape<T>() != nullptr && (in.grad_enabled() || ...);
}

template <typename T, typename Fn, typename... In>
BasicTensor<T> finish(BasicTensor<T> out, Fn&& fn, const In&... in) {
  if (wants_grad<T>(in...)) {
    out.set_grad_enabled(true);
    active_tape<T>()->record(out, std::forward<Fn>(fn));
  }
  return out;
}

inline void require_rank(const std::string& op, const std::string& arg, const Shape& s,
                         std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(op + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
  }
}

inline void require_same(const std::string& op, const Shape& a, const Shape& b) {
  if (a != b) throw DimensionError(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolutions

/// Zero-padded 2-D convolution (cross-correlation), no bias.
/// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw] -> [N,Cout,H',W'].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      std::size_t stride = 1, std::size_t padding = 0) {
  detail::require_rank("conv2d", "input", input.shape(), 4);
  detail::require_rank("conv2d", "kernel", kernel.shape(), 4);
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv2d: channel axis mismatch, input axis 1 = " + std::to_string(cin) +
                         ", kernel axis 1 = " + std::to_string(kernel.dim(1)));
  }
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    throw DimensionError("conv2d: padded input " + shape_str(input.shape()) +
                         " smaller than kernel on axes 2/3 " + shape_str(kernel.shape()));
  }
  kernels::ConvGeometry g{cin, h, w, kh, kw, stride, padding, (h + 2 * padding - kh) / stride + 1,
                          (w + 2 * padding - kw) / stride + 1};
  const std::size_t patch = g.patch_size(), plane = g.out_plane();
  std::vector<T> out(n * cout * plane, T(0));
  std::vector<T> cols(patch * plane);
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    kern::im2col(g, x + b * cin * h * w, cols.data());
    kern::gemm(cout, plane, patch, k, cols.data(), out.data() + b * cout * plane);
  }
  BasicTensor<T> result({n, cout, g.out_h, g.out_w}, std::move(out));
  return detail::finish<T>(
      result,
      [input, kernel, result, g, n, cout]() mutable {
        const std::size_t patch = g.patch_size(), plane = g.out_plane();
        const std::size_t in_sz = g.channels * g.height * g.width;
        const T* dy = result.grad().data();
        std::vector<T> cols(patch * plane);
        for (std::size_t b = 0; b < n; ++b) {
          const T* dyb = dy + b * cout * plane;
          if (kernel.grad_enabled()) {
            kern::im2col(g, input.data().data() + b * in_sz, cols.data());
            kern::gemm_bt(cout, patch, plane, dyb, cols.data(), kernel.grad_buffer().data());
          }
          if (input.grad_enabled()) {
            std::fill(cols.begin(), cols.end(), T(0));
            kern::gemm_at(patch, plane, cout, kernel.data().data(), dyb, cols.data());
            kern::col2im(g, cols.data(), input.grad_buffer().data() + b * in_sz);
          }
        }
      },
      input, kernel);
}

/// Transposed convolution, the adjoint of conv2d with the same kernel.
/// input [N,Cin,H,W], kernel [Cin,Cout,kh,kw] -> [N,Cout,H',W'] with
/// H' = (H-1)*stride - 2*padding + kh + output_padding.
template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                                std::size_t stride = 1, std::size_t padding = 0,
                                std::size_t output_padding = 0) {
  detail::require_rank("conv2d_transpose", "input", input.shape(), 4);
  detail::require_rank("conv2d_transpose", "kernel", kernel.shape(), 4);
  if (stride == 0) throw DimensionError("conv2d_transpose: stride must be positive");
  if (output_padding >= stride) {
    throw DimensionError("conv2d_transpose: output_padding " + std::to_string(output_padding) +
                         " must be smaller than stride " + std::to_string(stride));
  }
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != cin) {
    throw DimensionError("conv2d_transpose: channel axis mismatch, input axis 1 = " +
                         std::to_string(cin) + ", kernel axis 0 = " +
                         std::to_string(kernel.dim(0)));
  }
  const std::size_t full_h = (h - 1) * stride + kh + output_padding;
  const std::size_t full_w = (w - 1) * stride + kw + output_padding;
  if (full_h <= 2 * padding || full_w <= 2 * padding) {
    throw DimensionError("conv2d_transpose: padding " + std::to_string(padding) +
                         " leaves an empty output on axes 2/3");
  }
  // Geometry of the forward conv that maps the output plane back to the input.
  kernels::ConvGeometry g{cout, full_h - 2 * padding, full_w - 2 * padding, kh, kw, stride,
                          padding, h, w};
  const std::size_t patch = g.patch_size(), plane = g.out_plane();
  const std::size_t out_sz = cout * g.height * g.width;
  std::vector<T> out(n * out_sz, T(0));
  std::vector<T> cols(patch * plane);
  const T* x = input.data().data();
  const T* k = kernel.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    std::fill(cols.begin(), cols.end(), T(0));
    kern::gemm_at(patch, plane, cin, k, x + b * cin * plane, cols.data());
    kern::col2im(g, cols.data(), out.data() + b * out_sz);
  }
  BasicTensor<T> result({n, cout, g.height, g.width}, std::move(out));
  return detail::finish<T>(
      result,
      [input, kernel, result, g, n, cin]() mutable {
        const std::size_t patch = g.patch_size(), plane = g.out_plane();
        const std::size_t out_sz = g.channels * g.height * g.width;
        const T* dy = result.grad().data();
        std::vector<T> cols(patch * plane);
        for (std::size_t b = 0; b < n; ++b) {
          kern::im2col(g, dy + b * out_sz, cols.data());
          if (input.grad_enabled()) {
            kern::gemm(cin, plane, patch, kernel.data().data(), cols.data(),
                       input.grad_buffer().data() + b * cin * plane);
          }
          if (kernel.grad_enabled()) {
            kern::gemm_bt(cin, patch, plane, input.data().data() + b * cin * plane, cols.data(),
                          kernel.grad_buffer().data());
          }
        }
      },
      input, kernel);
}

/// Adds bias[c] to every element of channel c.
template <typename T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& input, const BasicTensor<T>& bias) {
  detail::require_rank("add_channel_bias", "input", input.shape(), 4);
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (bias.numel() != c) {
    throw DimensionError("add_channel_bias: bias length " + std::to_string(bias.numel()) +
                         " does not match channel axis 1 = " + std::to_string(c));
  }
  std::vector<T> out(input.data().begin(), input.data().end());
  for (std::size_t p = 0; p < n * c; ++p) {
    const T bv = bias[p % c];
    for (std::size_t i = 0; i < plane; ++i) out[p * plane + i] += bv;
  }
  BasicTensor<T> result(input.shape(), std::move(out));
  return detail::finish<T>(
      result,
      [input, bias, result, n, c, plane]() mutable {
        const auto dy = result.grad();
        if (input.grad_enabled()) {
          auto dx = input.grad_buffer();
          for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
        if (bias.grad_enabled()) {
          auto db = bias.grad_buffer();
          for (std::size_t p = 0; p < n * c; ++p) {
            T s = T(0);
            for (std::size_t i = 0; i < plane; ++i) s += dy[p * plane + i];
            db[p % c] += s;
          }
        }
      },
      input, bias);
}

// ---------------------------------------------------------------------------
// Normalization and padding

template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& input, const BasicTensor<T>& gain,
                             const BasicTensor<T>& bias, T eps = T(1e-5)) {
  detail::require_rank("instance_norm", "input", input.shape(), 4);
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (plane < 2) {
    throw DimensionError("instance_norm: degenerate statistics, H*W = " + std::to_string(plane) +
                         " for input " + shape_str(input.shape()));
  }
  if (gain.numel() != c || bias.numel() != c) {
    throw DimensionError("instance_norm: gain/bias length must equal channel axis 1 = " +
                         std::to_string(c));
  }
  std::vector<T> xhat(input.numel()), y(input.numel()), inv_std(n * c);
  kern::instance_norm_forward(n * c, c, plane, input.data().data(), gain.data().data(),
                              bias.data().data(), eps, xhat.data(), y.data(), inv_std.data());
  BasicTensor<T> result(input.shape(), std::move(y));
  return detail::finish<T>(
      result,
      [input, gain, bias, result, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c,
       plane]() mutable {
        std::vector<T> dx_scratch;
        T* dx = nullptr;
        if (input.grad_enabled()) {
          dx = input.grad_buffer().data();
        } else {
          dx_scratch.assign(input.numel(), T(0));
          dx = dx_scratch.data();
        }
        std::vector<double> dgain(n * c), dbias(n * c);
        kern::instance_norm_backward(n * c, c, plane, xhat.data(), result.grad().data(),
                                     gain.data().data(), inv_std.data(), dx, dgain.data(),
                                     dbias.data());
        if (gain.grad_enabled()) {
          auto g = gain.grad_buffer();
          for (std::size_t p = 0; p < n * c; ++p) g[p % c] += static_cast<T>(dgain[p]);
        }
        if (bias.grad_enabled()) {
          auto b = bias.grad_buffer();
          for (std::size_t p = 0; p < n * c; ++p) b[p % c] += static_cast<T>(dbias[p]);
        }
      },
      input, gain, bias);
}

namespace detail {
// Mirror index without repeating the edge sample.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t extent) {
  const auto e = static_cast<std::ptrdiff_t>(extent);
  if (i < 0) i = -i;
  if (i >= e) i = 2 * (e - 1) - i;
  return static_cast<std::size_t>(i);
}
}  // namespace detail

template <typename T>
BasicTensor<T> pad_reflect(const BasicTensor<T>& input, std::size_t amount) {
  detail::require_rank("pad_reflect", "input", input.shape(), 4);
  if (amount == 0) return input;
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (amount >= h || amount >= w) {
    throw DimensionError("pad_reflect: amount " + std::to_string(amount) +
                         " must be smaller than axes 2/3 of " + shape_str(input.shape()));
  }
  const std::size_t oh = h + 2 * amount, ow = w + 2 * amount;
  std::vector<std::size_t> src(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const std::size_t sy =
        detail::reflect_index(static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(amount), h);
    for (std::size_t x = 0; x < ow; ++x) {
      const std::size_t sx = detail::reflect_index(
          static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(amount), w);
      src[y * ow + x] = sy * w + sx;
    }
  }
  std::vector<T> out(n * c * oh * ow);
  const T* x = input.data().data();
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t i = 0; i < oh * ow; ++i) out[p * oh * ow + i] = x[p * h * w + src[i]];
  }
  BasicTensor<T> result({n, c, oh, ow}, std::move(out));
  return detail::finish<T>(
      result,
      [input, result, src = std::move(src), n, c, h, w, oh, ow]() mutable {
        auto dx = input.grad_buffer();
        const auto dy = result.grad();
        for (std::size_t p = 0; p < n * c; ++p) {
          for (std::size_t i = 0; i < oh * ow; ++i) dx[p * h * w + src[i]] += dy[p * oh * ow + i];
        }
      },
      input);
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {
template <typename T, typename Fwd, typename Deriv>
BasicTensor<T> unary(const BasicTensor<T>& input, Fwd fwd, Deriv deriv) {
  std::vector<T> out(input.numel());
  const auto x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  BasicTensor<T> result(input.shape(), std::move(out));
  return finish<T>(
      result,
      [input, result, deriv]() mutable {
        auto dx = input.grad_buffer();
        const auto dy = result.grad();
        const auto xv = input.data();
        const auto yv = result.data();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * deriv(xv[i], yv[i]);
      },
      input);
}
}  // namespace detail

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v < T(0) ? T(0) : v; }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

/// Subgradient at zero is `slope`.
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  return detail::unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return detail::unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset) {
  return detail::unary(
      x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

namespace detail {
template <typename T>
BasicTensor<T> add_sub(const BasicTensor<T>& a, const BasicTensor<T>& b, T sign,
                       const char* name) {
  require_same(name, a.shape(), b.shape());
  std::vector<T> out(a.numel());
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i];
  BasicTensor<T> result(a.shape(), std::move(out));
  return finish<T>(
      result,
      [a, b, result, sign]() mutable {
        const auto dy = result.grad();
        if (a.grad_enabled()) {
          auto da = a.grad_buffer();
          for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
        }
        if (b.grad_enabled()) {
          auto db = b.grad_buffer();
          for (std::size_t i = 0; i < dy.size(); ++i) db[i] += sign * dy[i];
        }
      },
      a, b);
}
}  // namespace detail

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::add_sub(a, b, T(1), "add");
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::add_sub(a, b, T(-1), "sub");
}

// ---------------------------------------------------------------------------
// Reductions (scalar results have shape [1])

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(s));
  return detail::finish<T>(
      result,
      [x, result]() mutable {
        auto dx = x.grad_buffer();
        const T g = result.grad()[0];
        for (auto& v : dx) v += g;
      },
      x);
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// mean(|a - b|); the subgradient of |.| at 0 is 0.
template <typename T>
BasicTensor<T> l1_mean(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same("l1_mean", a.shape(), b.shape());
  const auto av = a.data();
  const auto bv = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(static_cast<double>(av[i]) - bv[i]);
  const double inv_n = 1.0 / static_cast<double>(av.size());
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(s * inv_n));
  return detail::finish<T>(
      result,
      [a, b, result, inv_n]() mutable {
        const T g = static_cast<T>(result.grad()[0] * inv_n);
        const auto av = a.data();
        const auto bv = b.data();
        auto sign = [&](std::size_t i) {
          return av[i] > bv[i] ? T(1) : (av[i] < bv[i] ? T(-1) : T(0));
        };
        if (a.grad_enabled()) {
          auto da = a.grad_buffer();
          for (std::size_t i = 0; i < da.size(); ++i) da[i] += g * sign(i);
        }
        if (b.grad_enabled()) {
          auto db = b.grad_buffer();
          for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g * sign(i);
        }
      },
      a, b);
}

/// mean((a - target)^2)
template <typename T>
BasicTensor<T> sq_mean(const BasicTensor<T>& a, T target) {
  const auto av = a.data();
  double s = 0.0;
  for (T v : av) {
    const double d = static_cast<double>(v) - target;
    s += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(av.size());
  BasicTensor<T> result = BasicTensor<T>::scalar(static_cast<T>(s * inv_n));
  return detail::finish<T>(
      result,
      [a, result, target, inv_n]() mutable {
        const T g = static_cast<T>(2.0 * result.grad()[0] * inv_n);
        auto da = a.grad_buffer();
        const auto av = a.data();
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g * (av[i] - target);
      },
      a);
}

/// Copy that does not participate in gradient tracking.
template <typename T>
BasicTensor<T> detach(const BasicTensor<T>& x) {
  return x.clone();
}

/// Output extents of a zero-padded convolution along one axis.
constexpr std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                      std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

constexpr std::size_t conv_transpose_out_extent(std::size_t in, std::size_t kernel,
                                                std::size_t stride, std::size_t padding,
                                                std::size_t output_padding) {
  return (in - 1) * stride - 2 * padding + kernel + output_padding;
}

}  // namespace xnet
