#pragma once

#include "srgan/autograd.hpp"

namespace srgan {

// train: normalize by batch statistics and fold them into the running
// averages. train_frozen: batch statistics, running averages untouched (used
// when a frozen discriminator scores generator output). infer: running
// statistics only.
enum class BnMode { train, train_frozen, infer };

inline std::int64_t conv_out_size(std::int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Cross-correlation with zero padding. x: (N,Cin,H,W), w: (Cout,Cin,K,K),
// b: (Cout). Output side is floor((H + 2*pad - K) / stride) + 1.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, TensorT<T>& running_mean,
                    TensorT<T>& running_var, BnMode mode, double eps, double momentum);

// Per-channel learnable negative slope; alpha has shape (C).
template <typename T>
Var<T> prelu(const Var<T>& x, const Var<T>& alpha);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope);

// (N, C*r*r, H, W) -> (N, C, r*H, r*W).
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r);

// x: (N,D), w: (Dout,D), b: (Dout) -> (N,Dout).
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, double s);
template <typename T>
Var<T> add_scalar(const Var<T>& a, double s);
template <typename T>
Var<T> abs(const Var<T>& a);
template <typename T>
Var<T> square(const Var<T>& a);
template <typename T>
Var<T> sigmoid(const Var<T>& a);
// log(max(a, floor)); the gradient is zero where the floor is active.
template <typename T>
Var<T> log_clamped(const Var<T>& a, double floor);

template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape);
// (N,C,H,W) -> (N,C)
template <typename T>
Var<T> global_avg_pool(const Var<T>& a);

template <typename T>
Var<T> detach(const Var<T>& a) {
  return Var<T>(a.value);
}

}  // namespace srgan
