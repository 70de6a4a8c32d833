#pragma once

#include <cmath>

#include "layerfield/tensor.hpp"

namespace lf {

// Bias-corrected Adam. One state per parameter tensor; moments start at zero.
template <typename T>
struct AdamState {
  Tensor<T> first_moment;
  Tensor<T> second_moment;
  int64_t step_count = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  AdamState() = default;
  explicit AdamState(const Shape& shape)
      : first_moment(Tensor<T>::zeros(shape)), second_moment(Tensor<T>::zeros(shape)) {}
};

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, T lr) {
  require(lr > T(0), "adam_step: lr must be positive");
  require(param.shape == grad.shape && param.shape == state.first_moment.shape,
          "adam_step: shape mismatch");
  require_numeric(grad.all_finite(), "adam_step: NaN/Inf in gradients; aborting step");
  state.step_count += 1;
  const T b1 = state.beta1, b2 = state.beta2;
  const T corr1 = T(1) - std::pow(b1, T(state.step_count));
  const T corr2 = T(1) - std::pow(b2, T(state.step_count));
  auto& m = state.first_moment.data;
  auto& v = state.second_moment.data;
  for (size_t i = 0; i < param.data.size(); ++i) {
    const T g = grad.data[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const T mhat = m[i] / corr1;
    const T vhat = v[i] / corr2;
    param.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace lf
