#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "srgan/ops.hpp"

namespace srgan::nn {

enum class Role { generator, discriminator };

struct NetworkSpec {
  Role role = Role::generator;
  int base_channels = 32;
  int n_residual_blocks = 8;
  // Generator upscale factor is 2^upscale_exponent; 0 means same-size
  // image-to-image translation.
  int upscale_exponent = 2;
  int input_channels = 3;
  // High-resolution side: generator output / discriminator input.
  int image_side = 128;
  int dense_hidden = 256;
  int max_output_side = 2048;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  double prelu_init = 0.25;
  double leaky_slope = 0.2;

  static NetworkSpec generator(int base_channels = 32, int upscale_exponent = 2, int n_residual_blocks = 8);
  static NetworkSpec discriminator(int base_channels = 64, int image_side = 128);

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
  bool operator==(const NetworkSpec&) const = default;
};

// There is deliberately no pooling kind: the only spatial reduction is a
// strided convolution.
enum class LayerKind { conv, batch_norm, prelu, leaky_relu, pixel_shuffle, skip_save, skip_add, flatten, dense, sigmoid };

const char* layer_kind_name(LayerKind k);

struct Layer {
  LayerKind kind;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int factor = 1;  // pixel_shuffle ratio
  int slot = 0;    // skip connection slot
};

std::vector<Layer> layer_plan(const NetworkSpec& spec);

template <typename T>
struct NamedTensor {
  std::string name;
  TensorT<T> value;
  bool trainable = true;
};

template <typename T>
class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, std::vector<Layer> layers, std::vector<NamedTensor<T>> tensors);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const std::vector<NamedTensor<T>>& tensors() const noexcept { return tensors_; }
  std::vector<NamedTensor<T>>& tensors() noexcept { return tensors_; }

  TensorT<T>& tensor(const std::string& name);
  const TensorT<T>& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const { return index_.count(name) != 0; }

  // Indices into tensors() of the learnable parameters, in plan order.
  const std::vector<std::size_t>& trainable() const noexcept { return trainable_; }
  std::int64_t parameter_count() const;

  // Runs the network. When param_tape is non-null every trainable tensor is
  // registered on it as a leaf (appended to *param_leaves in trainable()
  // order); otherwise parameters act as constants. The input may itself be
  // tracked, e.g. generator output flowing into the discriminator.
  Var<T> forward(const Var<T>& x, BnMode bn, Tape<T>* param_tape = nullptr,
                 std::vector<Var<T>>* param_leaves = nullptr);

  TensorT<T> infer(const TensorT<T>& x) { return forward(Var<T>(x), BnMode::infer).value; }

  template <typename U>
  Network<U> cast() const {
    std::vector<NamedTensor<U>> ts;
    for (const auto& t : tensors_) ts.push_back({t.name, t.value.template cast<U>(), t.trainable});
    return Network<U>(spec_, layers_, std::move(ts));
  }

 private:
  void check_input(const Shape& s) const;

  NetworkSpec spec_;
  std::vector<Layer> layers_;
  std::vector<NamedTensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::size_t> trainable_;
};

Network<float> build_generator(const NetworkSpec& spec, std::uint64_t rng_seed);
Network<float> build_discriminator(const NetworkSpec& spec, std::uint64_t rng_seed);
Network<float> build_network(const NetworkSpec& spec, std::uint64_t rng_seed);

}  // namespace srgan::nn
