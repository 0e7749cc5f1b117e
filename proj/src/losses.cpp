#include "srgan/losses.hpp"

#include <cmath>

namespace srgan::train {

using nlohmann::json;

void LossConfig::validate() const {
  for (auto [name, w] : {std::pair{"content_weight", content_weight}, std::pair{"perceptual_weight", perceptual_weight},
                         std::pair{"adversarial_weight", adversarial_weight}})
    require(std::isfinite(w) && w >= 0, ErrorCode::config, std::string("loss.") + name + " must be a finite value >= 0");
  require(content_weight > 0 || perceptual_weight > 0 || adversarial_weight > 0, ErrorCode::config,
          "loss: at least one weight must be > 0");
  require(perceptual_weight == 0 || !feature_net.empty(), ErrorCode::config, "loss.feature_net is empty");
}

json LossConfig::to_json() const {
  return {{"content", content == ContentKind::l1 ? "L1" : "L2"},
          {"content_weight", content_weight},
          {"perceptual_weight", perceptual_weight},
          {"adversarial_weight", adversarial_weight},
          {"feature_net", feature_net}};
}

LossConfig LossConfig::from_json(const json& j) {
  LossConfig c;
  try {
    const std::string kind = j.value("content", std::string("L2"));
    require(kind == "L1" || kind == "L2", ErrorCode::config, "loss.content: expected L1 or L2, got '" + kind + "'");
    c.content = kind == "L1" ? ContentKind::l1 : ContentKind::l2;
    c.content_weight = j.value("content_weight", c.content_weight);
    c.perceptual_weight = j.value("perceptual_weight", c.perceptual_weight);
    c.adversarial_weight = j.value("adversarial_weight", c.adversarial_weight);
    c.feature_net = j.value("feature_net", c.feature_net);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("loss: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
Var<T> content_loss(const Var<T>& gen, const Var<T>& target, ContentKind kind) {
  require(gen.shape() == target.shape(), ErrorCode::shape_mismatch,
          "content_loss: generated " + shape_str(gen.shape()) + " vs target " + shape_str(target.shape()));
  require(gen.value.rank() >= 1 && gen.value.dim(0) > 0, ErrorCode::shape_mismatch, "content_loss: empty batch");
  const Var<T> d = sub(gen, target);
  const Var<T> per = kind == ContentKind::l1 ? abs(d) : square(d);
  return scale(sum(per), 1.0 / static_cast<double>(gen.value.dim(0)));
}

template <typename T>
Var<T> perceptual_loss(const Var<T>& gen, const Var<T>& target, const metrics::ConvFeatureNet<T>& net) {
  require(gen.shape() == target.shape(), ErrorCode::shape_mismatch,
          "perceptual_loss: generated " + shape_str(gen.shape()) + " vs target " + shape_str(target.shape()));
  require(gen.value.rank() == 4 && gen.value.dim(1) == net.stages().front().weight.dim(1), ErrorCode::shape_mismatch,
          "perceptual_loss: feature net '" + net.id() + "' cannot take input " + shape_str(gen.shape()));
  const Var<T> fg = net.feature_maps(gen);
  const Var<T> ft = net.feature_maps(detach(target));
  return scale(sum(square(sub(fg, ft))), 1.0 / static_cast<double>(gen.value.dim(0)));
}

namespace {

template <typename T>
void check_scores(const Var<T>& s, const char* what) {
  require(s.value.rank() == 2 && s.value.dim(1) == 1, ErrorCode::shape_mismatch,
          std::string(what) + ": expected scores of shape (N,1), got " + shape_str(s.shape()));
  for (T v : s.value.data())
    require(v >= T(0) && v <= T(1), ErrorCode::numerical,
            std::string(what) + ": score " + std::to_string(static_cast<double>(v)) + " outside [0,1]");
}

}  // namespace

template <typename T>
Var<T> discriminator_loss(const Var<T>& d_real, const Var<T>& d_fake) {
  check_scores(d_real, "discriminator_loss");
  check_scores(d_fake, "discriminator_loss");
  const Var<T> real_term = mean(log_clamped(d_real, kLogFloor));
  const Var<T> fake_term = mean(log_clamped(add_scalar(scale(d_fake, -1.0), 1.0), kLogFloor));
  return scale(add(real_term, fake_term), -1.0);
}

template <typename T>
Var<T> generator_adversarial_loss(const Var<T>& d_fake) {
  check_scores(d_fake, "generator_adversarial_loss");
  return scale(mean(log_clamped(d_fake, kLogFloor)), -1.0);
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const Var<T>& d_real, const Var<T>& d_fake) {
  return {discriminator_loss(d_real, d_fake), generator_adversarial_loss(d_fake)};
}

#define SRGAN_INSTANTIATE_LOSSES(T)                                                                          \
  template Var<T> content_loss(const Var<T>&, const Var<T>&, ContentKind);                                  \
  template Var<T> perceptual_loss(const Var<T>&, const Var<T>&, const metrics::ConvFeatureNet<T>&);         \
  template Var<T> discriminator_loss(const Var<T>&, const Var<T>&);                                         \
  template Var<T> generator_adversarial_loss(const Var<T>&);                                                \
  template AdversarialLosses<T> adversarial_losses(const Var<T>&, const Var<T>&);

SRGAN_INSTANTIATE_LOSSES(float)
SRGAN_INSTANTIATE_LOSSES(double)

}  // namespace srgan::train
