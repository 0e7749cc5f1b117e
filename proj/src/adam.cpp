#include "srgan/adam.hpp"

#include <cmath>

namespace srgan::train {

using nlohmann::json;

void AdamConfig::validate() const {
  require(std::isfinite(lr) && lr > 0, ErrorCode::config, "optimizer.lr must be > 0");
  require(beta1 >= 0 && beta1 < 1, ErrorCode::config, "optimizer.beta1 must be in [0,1)");
  require(beta2 >= 0 && beta2 < 1, ErrorCode::config, "optimizer.beta2 must be in [0,1)");
  require(eps > 0, ErrorCode::config, "optimizer.eps must be > 0");
}

json AdamConfig::to_json() const { return {{"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}}; }

AdamConfig AdamConfig::from_json(const json& j) {
  AdamConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("optimizer: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
void adam_step(const std::vector<TensorT<T>*>& params, const std::vector<TensorT<T>>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  require(params.size() == grads.size(), ErrorCode::shape_mismatch, "adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape(), T(0));
      state.v.emplace_back(p->shape(), T(0));
    }
  }
  require(state.m.size() == params.size(), ErrorCode::shape_mismatch, "adam_step: optimizer state does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->shape() == grads[i].shape() && state.m[i].shape() == grads[i].shape(), ErrorCode::shape_mismatch,
            "adam_step: shape mismatch for parameter " + std::to_string(i));
    auto p = params[i]->mutable_data();
    auto m = state.m[i].mutable_data();
    auto v = state.v[i].mutable_data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      p[k] = static_cast<T>(p[k] - cfg.lr * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
}

template void adam_step(const std::vector<TensorT<float>*>&, const std::vector<TensorT<float>>&, AdamState<float>&,
                        const AdamConfig&);
template void adam_step(const std::vector<TensorT<double>*>&, const std::vector<TensorT<double>>&, AdamState<double>&,
                        const AdamConfig&);

}  // namespace srgan::train
