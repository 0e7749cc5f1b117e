#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "srgan/tensor.hpp"

namespace srgan::train {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
  nlohmann::json to_json() const;
  static AdamConfig from_json(const nlohmann::json& j);
  bool operator==(const AdamConfig&) const = default;
};

template <typename T>
struct AdamState {
  std::int64_t t = 0;
  std::vector<TensorT<T>> m;
  std::vector<TensorT<T>> v;
};

// Bias-corrected Adam. Moments are allocated lazily on the first call.
template <typename T>
void adam_step(const std::vector<TensorT<T>*>& params, const std::vector<TensorT<T>>& grads, AdamState<T>& state,
               const AdamConfig& cfg);

}  // namespace srgan::train
