#include "srgan/network.hpp"

#include <cmath>
#include <random>

namespace srgan::nn {

using nlohmann::json;

NetworkSpec NetworkSpec::generator(int base_channels, int upscale_exponent, int n_residual_blocks) {
  NetworkSpec s;
  s.role = Role::generator;
  s.base_channels = base_channels;
  s.upscale_exponent = upscale_exponent;
  s.n_residual_blocks = n_residual_blocks;
  return s;
}

NetworkSpec NetworkSpec::discriminator(int base_channels, int image_side) {
  NetworkSpec s;
  s.role = Role::discriminator;
  s.base_channels = base_channels;
  s.image_side = image_side;
  s.upscale_exponent = 0;
  s.n_residual_blocks = 0;
  return s;
}

void NetworkSpec::validate() const {
  require(base_channels >= 1, ErrorCode::config, "network spec: base_channels must be >= 1");
  require(input_channels == 1 || input_channels == 3, ErrorCode::config, "network spec: input_channels must be 1 or 3");
  require(bn_eps > 0, ErrorCode::config, "network spec: bn_eps must be > 0");
  require(image_side >= 1, ErrorCode::config, "network spec: image_side must be >= 1");
  if (role == Role::generator) {
    require(n_residual_blocks >= 1, ErrorCode::config, "generator spec: n_residual_blocks must be >= 1");
    require(upscale_exponent >= 0 && upscale_exponent <= 16, ErrorCode::config,
            "generator spec: upscale_exponent must be in [0, 16]");
    require(image_side <= max_output_side, ErrorCode::config,
            "generator spec: output side " + std::to_string(image_side) + " exceeds maximum " +
                std::to_string(max_output_side));
    const int factor = 1 << upscale_exponent;
    require(image_side % factor == 0, ErrorCode::config,
            "generator spec: image_side " + std::to_string(image_side) + " not divisible by upscale factor " +
                std::to_string(factor));
  } else {
    require(image_side % 16 == 0, ErrorCode::config,
            "discriminator spec: image_side " + std::to_string(image_side) +
                " not divisible by the total downsampling factor 16");
    require(dense_hidden >= 1, ErrorCode::config, "discriminator spec: dense_hidden must be >= 1");
  }
}

json NetworkSpec::to_json() const {
  return json{{"role", role == Role::generator ? "generator" : "discriminator"},
              {"base_channels", base_channels},
              {"n_residual_blocks", n_residual_blocks},
              {"upscale_exponent", upscale_exponent},
              {"input_channels", input_channels},
              {"image_side", image_side},
              {"dense_hidden", dense_hidden},
              {"max_output_side", max_output_side},
              {"bn_eps", bn_eps},
              {"bn_momentum", bn_momentum},
              {"prelu_init", prelu_init},
              {"leaky_slope", leaky_slope}};
}

NetworkSpec NetworkSpec::from_json(const json& j) {
  NetworkSpec s;
  try {
    const std::string role = j.at("role").get<std::string>();
    require(role == "generator" || role == "discriminator", ErrorCode::config, "network spec: unknown role '" + role + "'");
    s.role = role == "generator" ? Role::generator : Role::discriminator;
    if (s.role == Role::discriminator) s = discriminator();
    s.base_channels = j.value("base_channels", s.base_channels);
    s.n_residual_blocks = j.value("n_residual_blocks", s.n_residual_blocks);
    s.upscale_exponent = j.value("upscale_exponent", s.upscale_exponent);
    s.input_channels = j.value("input_channels", s.input_channels);
    s.image_side = j.value("image_side", s.image_side);
    s.dense_hidden = j.value("dense_hidden", s.dense_hidden);
    s.max_output_side = j.value("max_output_side", s.max_output_side);
    s.bn_eps = j.value("bn_eps", s.bn_eps);
    s.bn_momentum = j.value("bn_momentum", s.bn_momentum);
    s.prelu_init = j.value("prelu_init", s.prelu_init);
    s.leaky_slope = j.value("leaky_slope", s.leaky_slope);
  } catch (const json::exception& e) {
    fail(ErrorCode::config, std::string("network spec: ") + e.what());
  }
  return s;
}

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::prelu: return "prelu";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::pixel_shuffle: return "pixel_shuffle";
    case LayerKind::skip_save: return "skip_save";
    case LayerKind::skip_add: return "skip_add";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
    case LayerKind::sigmoid: return "sigmoid";
  }
  return "?";
}

namespace {

std::vector<Layer> generator_plan(const NetworkSpec& s) {
  const int b = s.base_channels;
  std::vector<Layer> p;
  auto conv = [&](std::string name, int in, int out) { p.push_back({LayerKind::conv, std::move(name), in, out}); };
  auto bn = [&](std::string name, int c) { p.push_back({LayerKind::batch_norm, std::move(name), c, c}); };
  auto act = [&](std::string name, int c) { p.push_back({LayerKind::prelu, std::move(name), c, c}); };

  conv("head.conv", s.input_channels, b);
  bn("head.bn", b);
  act("head.prelu", b);
  p.push_back({LayerKind::skip_save, "head.skip", b, b, 1, 1, 0});
  for (int i = 0; i < s.n_residual_blocks; ++i) {
    const std::string r = "res" + std::to_string(i);
    p.push_back({LayerKind::skip_save, r + ".skip", b, b, 1, 1, 1});
    conv(r + ".conv1", b, b);
    bn(r + ".bn1", b);
    act(r + ".prelu", b);
    conv(r + ".conv2", b, b);
    bn(r + ".bn2", b);
    p.push_back({LayerKind::skip_add, r + ".add", b, b, 1, 1, 1});
  }
  conv("trunk.conv", b, b);
  bn("trunk.bn", b);
  p.push_back({LayerKind::skip_add, "trunk.add", b, b, 1, 1, 0});
  for (int i = 0; i < s.upscale_exponent; ++i) {
    const std::string u = "up" + std::to_string(i);
    conv(u + ".conv", b, 4 * b);
    bn(u + ".bn", 4 * b);
    p.push_back({LayerKind::pixel_shuffle, u + ".shuffle", 4 * b, b, 1, 2});
    act(u + ".prelu", b);
  }
  conv("tail.conv", b, 3);
  return p;
}

std::vector<Layer> discriminator_plan(const NetworkSpec& s) {
  const int b = s.base_channels;
  const int widths[8] = {b, b, 2 * b, 2 * b, 4 * b, 4 * b, 8 * b, 8 * b};
  std::vector<Layer> p;
  int in = 3;
  for (int i = 0; i < 8; ++i) {
    const std::string name = "conv" + std::to_string(i);
    p.push_back({LayerKind::conv, name + ".conv", in, widths[i], i % 2 == 1 ? 2 : 1});
    if (i > 0) p.push_back({LayerKind::batch_norm, name + ".bn", widths[i], widths[i]});
    p.push_back({LayerKind::leaky_relu, name + ".lrelu", widths[i], widths[i]});
    in = widths[i];
  }
  const int side = s.image_side / 16;
  const int flat = 8 * b * side * side;
  p.push_back({LayerKind::flatten, "flatten", flat, flat});
  p.push_back({LayerKind::dense, "fc1", flat, s.dense_hidden});
  p.push_back({LayerKind::leaky_relu, "fc1.lrelu", s.dense_hidden, s.dense_hidden});
  p.push_back({LayerKind::dense, "fc2", s.dense_hidden, 1});
  p.push_back({LayerKind::sigmoid, "score", 1, 1});
  return p;
}

// Fan-in scaled uniform init, drawn in plan order from one seeded stream.
Network<float> instantiate(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto plan = layer_plan(spec);
  std::mt19937_64 rng(seed);
  auto uniform = [&](Shape shape, std::int64_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (float& v : t.mutable_data()) v = static_cast<float>(dist(rng));
    return t;
  };
  std::vector<NamedTensor<float>> ts;
  for (const Layer& l : plan) {
    const std::int64_t in = l.in_channels, out = l.out_channels;
    switch (l.kind) {
      case LayerKind::conv:
        ts.push_back({l.name + ".weight", uniform({out, in, 3, 3}, in * 9), true});
        ts.push_back({l.name + ".bias", uniform({out}, in * 9), true});
        break;
      case LayerKind::dense:
        ts.push_back({l.name + ".weight", uniform({out, in}, in), true});
        ts.push_back({l.name + ".bias", uniform({out}, in), true});
        break;
      case LayerKind::batch_norm:
        ts.push_back({l.name + ".gamma", Tensor({out}, 1.0f), true});
        ts.push_back({l.name + ".beta", Tensor({out}, 0.0f), true});
        ts.push_back({l.name + ".running_mean", Tensor({out}, 0.0f), false});
        ts.push_back({l.name + ".running_var", Tensor({out}, 1.0f), false});
        break;
      case LayerKind::prelu:
        ts.push_back({l.name + ".alpha", Tensor({out}, static_cast<float>(spec.prelu_init)), true});
        break;
      default:
        break;
    }
  }
  return Network<float>(spec, std::move(plan), std::move(ts));
}

}  // namespace

std::vector<Layer> layer_plan(const NetworkSpec& spec) {
  return spec.role == Role::generator ? generator_plan(spec) : discriminator_plan(spec);
}

template <typename T>
Network<T>::Network(NetworkSpec spec, std::vector<Layer> layers, std::vector<NamedTensor<T>> tensors)
    : spec_(std::move(spec)), layers_(std::move(layers)), tensors_(std::move(tensors)) {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    require(index_.emplace(tensors_[i].name, i).second, ErrorCode::duplicate_tensor,
            "duplicate tensor name '" + tensors_[i].name + "'");
    if (tensors_[i].trainable) trainable_.push_back(i);
  }
}

template <typename T>
TensorT<T>& Network<T>::tensor(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::missing_tensor, "network has no tensor '" + name + "'");
  return tensors_[it->second].value;
}

template <typename T>
const TensorT<T>& Network<T>::tensor(const std::string& name) const {
  auto it = index_.find(name);
  require(it != index_.end(), ErrorCode::missing_tensor, "network has no tensor '" + name + "'");
  return tensors_[it->second].value;
}

template <typename T>
std::int64_t Network<T>::parameter_count() const {
  std::int64_t n = 0;
  for (std::size_t i : trainable_) n += tensors_[i].value.numel();
  return n;
}

template <typename T>
void Network<T>::check_input(const Shape& s) const {
  require(s.size() == 4, ErrorCode::shape_mismatch, "network input must be (N,C,H,W), got " + shape_str(s));
  if (spec_.role == Role::generator) {
    require(s[1] == spec_.input_channels, ErrorCode::shape_mismatch,
            "layer 'head.conv': expected " + std::to_string(spec_.input_channels) + " input channels, got " +
                std::to_string(s[1]));
    const std::int64_t factor = std::int64_t{1} << spec_.upscale_exponent;
    require(s[2] * factor <= spec_.max_output_side && s[3] * factor <= spec_.max_output_side, ErrorCode::shape_mismatch,
            "generator output side for input " + shape_str(s) + " exceeds maximum " +
                std::to_string(spec_.max_output_side));
  } else {
    require(s[1] == 3, ErrorCode::shape_mismatch, "layer 'conv0.conv': expected 3 input channels, got " + std::to_string(s[1]));
    require(s[2] == spec_.image_side && s[3] == spec_.image_side, ErrorCode::shape_mismatch,
            "layer 'conv0.conv': expected " + std::to_string(spec_.image_side) + "x" +
                std::to_string(spec_.image_side) + " input, got " + shape_str(s));
  }
}

template <typename T>
Var<T> Network<T>::forward(const Var<T>& x, BnMode bn, Tape<T>* param_tape, std::vector<Var<T>>* param_leaves) {
  check_input(x.shape());
  std::vector<Var<T>> pv(tensors_.size());
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (param_tape && tensors_[i].trainable) {
      pv[i] = param_tape->leaf(tensors_[i].value);
      if (param_leaves) param_leaves->push_back(pv[i]);
    } else {
      pv[i] = Var<T>(tensors_[i].value);
    }
  }
  auto param = [&](const std::string& name) -> const Var<T>& { return pv[index_.at(name)]; };

  Var<T> cur = x;
  std::map<int, Var<T>> slots;
  for (const Layer& l : layers_) {
    try {
      switch (l.kind) {
        case LayerKind::conv:
          cur = conv2d(cur, param(l.name + ".weight"), param(l.name + ".bias"), l.stride, 1);
          break;
        case LayerKind::batch_norm:
          cur = batch_norm2d(cur, param(l.name + ".gamma"), param(l.name + ".beta"),
                             tensors_[index_.at(l.name + ".running_mean")].value,
                             tensors_[index_.at(l.name + ".running_var")].value, bn, spec_.bn_eps, spec_.bn_momentum);
          break;
        case LayerKind::prelu:
          cur = prelu(cur, param(l.name + ".alpha"));
          break;
        case LayerKind::leaky_relu:
          cur = leaky_relu(cur, spec_.leaky_slope);
          break;
        case LayerKind::pixel_shuffle:
          cur = pixel_shuffle(cur, l.factor);
          break;
        case LayerKind::skip_save:
          slots[l.slot] = cur;
          break;
        case LayerKind::skip_add:
          cur = add(cur, slots.at(l.slot));
          break;
        case LayerKind::flatten:
          cur = reshape(cur, Shape{cur.shape()[0], cur.value.numel() / cur.shape()[0]});
          break;
        case LayerKind::dense:
          cur = dense(cur, param(l.name + ".weight"), param(l.name + ".bias"));
          break;
        case LayerKind::sigmoid:
          cur = sigmoid(cur);
          break;
      }
    } catch (const Error& e) {
      throw Error(e.code(), "layer '" + l.name + "': " + e.what());
    }
  }
  return cur;
}

Network<float> build_generator(const NetworkSpec& spec, std::uint64_t rng_seed) {
  require(spec.role == Role::generator, ErrorCode::invalid_argument, "build_generator: spec role is not generator");
  return instantiate(spec, rng_seed);
}

Network<float> build_discriminator(const NetworkSpec& spec, std::uint64_t rng_seed) {
  require(spec.role == Role::discriminator, ErrorCode::invalid_argument,
          "build_discriminator: spec role is not discriminator");
  return instantiate(spec, rng_seed);
}

Network<float> build_network(const NetworkSpec& spec, std::uint64_t rng_seed) { return instantiate(spec, rng_seed); }

template class Network<float>;
template class Network<double>;

}  // namespace srgan::nn
