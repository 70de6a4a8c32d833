#pragma once

#include <functional>
#include <map>
#include <string>

#include "layerfield/tensor.hpp"

namespace lf {

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

// Central-difference gradient oracle: (f(p+h) - f(p-h)) / (2h) per coordinate.
// loss_fn must be a deterministic pure function of the parameters; this is
// verified by evaluating it twice up front. Independent of the tape in
// tape.hpp by construction — it only ever calls loss_fn.
template <typename T>
ParamMap<T> finite_diff_grad(const std::function<double(const ParamMap<T>&)>& loss_fn,
                             const ParamMap<T>& params, double h) {
  require(h > 0, "finite_diff_grad: h must be positive");
  const double l0 = loss_fn(params);
  const double l1 = loss_fn(params);
  require(l0 == l1, "finite_diff_grad: loss_fn is not deterministic under fixed inputs");

  ParamMap<T> grads;
  ParamMap<T> work = params;
  for (auto& [name, tensor] : work) {
    Tensor<T> g(tensor.shape);
    for (int64_t i = 0; i < tensor.numel(); ++i) {
      const T orig = tensor[i];
      tensor[i] = orig + T(h);
      const double fp = loss_fn(work);
      tensor[i] = orig - T(h);
      const double fm = loss_fn(work);
      tensor[i] = orig;
      g[i] = T((fp - fm) / (2.0 * h));
    }
    grads.emplace(name, std::move(g));
  }
  return grads;
}

}  // namespace lf
