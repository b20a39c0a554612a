#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "xnet/tensor.hpp"

namespace xnet {

/// Trainable tensor plus its Adam state.
template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> first_moment;
  BasicTensor<T> second_moment;
  std::uint64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)),
        value(std::move(v)),
        first_moment(BasicTensor<T>::zeros(value.shape())),
        second_moment(BasicTensor<T>::zeros(value.shape())) {
    value.set_grad_enabled(true);
  }
};

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update on every parameter, then clears gradients.
/// Every listed parameter must carry a gradient.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, const AdamOptions& opt) {
  for (const Parameter<T>* p : params) {
    if (!p->value.has_grad()) {
      throw AutodiffError("adam_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter<T>* p : params) {
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    auto theta = p->value.mutable_data();
    auto m = p->first_moment.mutable_data();
    auto v = p->second_moment.mutable_data();
    const auto g = p->value.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      const double vi = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = opt.lr * (mi / bc1) / (std::sqrt(vi / bc2) + opt.eps);
      theta[i] = static_cast<T>(theta[i] - step);
    }
    p->value.clear_grad();
  }
}

template <typename T>
void adam_step(std::vector<Parameter<T>*>& params, const AdamOptions& opt) {
  adam_step(std::span<Parameter<T>* const>(params), opt);
}

template <typename T>
void zero_grad(std::span<Parameter<T>* const> params) {
  for (Parameter<T>* p : params) p->value.clear_grad();
}

template <typename T>
void set_requires_grad(std::span<Parameter<T>* const> params, bool on) {
  for (Parameter<T>* p : params) p->value.set_grad_enabled(on);
}

/// Zero-mean normal with the given std; std 0.02 is the default for kernels.
template <typename T>
BasicTensor<T> normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return BasicTensor<T>(std::move(shape), std::move(data));
}

}  // namespace xnet
