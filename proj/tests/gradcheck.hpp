#pragma once

#include <functional>
#include <map>
#include <string>

#include "layerfield/finite_diff.hpp"
#include "layerfield/tape.hpp"

namespace lf::testing {

// Compares reverse-mode gradients against the central-difference oracle for a
// scalar loss built by `build` from named leaf tensors. Runs in double; the
// oracle path never touches the tape that produced the analytic gradients.
struct GradCheckReport {
  double max_abs_diff = 0.0;
  double max_rel = 0.0;
  bool pass = true;
  std::string worst;
};

using LossBuilder =
    std::function<Var<double>(Tape<double>&, const std::map<std::string, Var<double>>&)>;

inline GradCheckReport gradcheck(const LossBuilder& build, const ParamMap<double>& params,
                                 double h = 1e-4, double rtol = 1e-3, double atol = 1e-7) {
  Tape<double> tape;
  std::map<std::string, Var<double>> leaves;
  for (const auto& [name, t] : params) leaves.emplace(name, tape.leaf(t));
  Var<double> loss = build(tape, leaves);
  tape.backward(loss);
  ParamMap<double> analytic;
  for (const auto& [name, v] : leaves) analytic.emplace(name, tape.grad(v));

  auto loss_fn = [&](const ParamMap<double>& p) {
    Tape<double> t2;
    std::map<std::string, Var<double>> consts;
    for (const auto& [name, tv] : p) consts.emplace(name, t2.constant(tv));
    return build(t2, consts).value().data[0];
  };
  ParamMap<double> numeric = finite_diff_grad<double>(loss_fn, params, h);

  GradCheckReport rep;
  for (const auto& [name, ag] : analytic) {
    const auto& ng = numeric.at(name);
    for (int64_t i = 0; i < ag.numel(); ++i) {
      const double a = ag[i], n = ng[i];
      const double diff = std::abs(a - n);
      const double tol = atol + rtol * std::max(std::abs(a), std::abs(n));
      rep.max_abs_diff = std::max(rep.max_abs_diff, diff);
      const double rel = diff / std::max({std::abs(a), std::abs(n), 1e-12});
      if (diff > tol) {
        rep.pass = false;
        if (rel >= rep.max_rel)
          rep.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                      " numeric=" + std::to_string(n);
      }
      rep.max_rel = std::max(rep.max_rel, rel);
    }
  }
  return rep;
}

}  // namespace lf::testing
