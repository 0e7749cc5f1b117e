#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "srgan/autograd.hpp"

namespace srgan {

// Builds a scalar loss on `tape` from the given parameter leaves.
template <typename T>
using ScalarFn = std::function<Var<T>(Tape<T>& tape, const std::vector<Var<T>>& params)>;

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t param_index = 0;
  std::int64_t element = 0;
  double analytic = 0;
  double numeric = 0;
};

// Compares reverse-mode gradients against central differences. The error per
// element is |a - n| / max(1, |a|, |n|); the worst element is reported.
// max_probes > 0 limits the elements checked per parameter to an evenly
// strided subset.
template <typename T>
GradCheckResult grad_check_detailed(const ScalarFn<T>& fn, const std::vector<TensorT<T>>& params, double h,
                                    std::int64_t max_probes = 0) {
  std::vector<TensorT<T>> analytic;
  {
    Tape<T> tape;
    std::vector<Var<T>> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    Var<T> loss = fn(tape, leaves);
    tape.backward(loss);
    for (const auto& l : leaves) analytic.push_back(tape.grad(l));
  }
  auto eval = [&](const std::vector<TensorT<T>>& ps) {
    Tape<T> tape;
    std::vector<Var<T>> leaves;
    for (const auto& p : ps) leaves.push_back(tape.leaf(p));
    return static_cast<double>(fn(tape, leaves).value.item());
  };

  GradCheckResult worst;
  std::vector<TensorT<T>> probe = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::int64_t count = params[pi].numel();
    const std::int64_t stride = (max_probes > 0 && count > max_probes) ? count / max_probes : 1;
    for (std::int64_t e = 0; e < count; e += stride) {
      const T orig = params[pi][e];
      probe[pi].mutable_data()[static_cast<std::size_t>(e)] = static_cast<T>(orig + h);
      const double up = eval(probe);
      probe[pi].mutable_data()[static_cast<std::size_t>(e)] = static_cast<T>(orig - h);
      const double down = eval(probe);
      probe[pi].mutable_data()[static_cast<std::size_t>(e)] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[pi][e];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > worst.max_rel_error || (e == 0 && pi == 0)) worst = {err, pi, e, a, numeric};
    }
  }
  return worst;
}

template <typename T>
double grad_check(const ScalarFn<T>& fn, const std::vector<TensorT<T>>& params, double h, std::int64_t max_probes = 0) {
  return grad_check_detailed(fn, params, h, max_probes).max_rel_error;
}

}  // namespace srgan
