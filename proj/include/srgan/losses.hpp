#pragma once

#include <string>

#include "json.hpp"
#include "srgan/metrics.hpp"
#include "srgan/ops.hpp"

namespace srgan::train {

enum class ContentKind { l1, l2 };

struct LossConfig {
  ContentKind content = ContentKind::l2;
  double content_weight = 1.0;
  double perceptual_weight = 1.0;
  double adversarial_weight = 1e-3;
  std::string feature_net = "tinyconv";

  void validate() const;
  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& j);
  bool operator==(const LossConfig&) const = default;
};

// Per-image pixel sum of |d| (L1) or d^2 (L2), averaged over the batch.
template <typename T>
Var<T> content_loss(const Var<T>& gen, const Var<T>& target, ContentKind kind);

// Squared L2 distance between frozen feature maps of gen and target, averaged
// over the batch. The target branch is treated as a constant.
template <typename T>
Var<T> perceptual_loss(const Var<T>& gen, const Var<T>& target, const metrics::ConvFeatureNet<T>& net);

inline constexpr double kLogFloor = 1e-12;

// -mean(log d_real + log(1 - d_fake))
template <typename T>
Var<T> discriminator_loss(const Var<T>& d_real, const Var<T>& d_fake);

// Non-saturating generator loss -mean(log d_fake).
template <typename T>
Var<T> generator_adversarial_loss(const Var<T>& d_fake);

template <typename T>
struct AdversarialLosses {
  Var<T> d_loss;
  Var<T> g_loss;
};

template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& d_real, const Var<T>& d_fake);

}  // namespace srgan::train
