#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "srgan/grad_check.hpp"
#include "srgan/image.hpp"
#include "srgan/losses.hpp"
#include "srgan/metrics.hpp"
#include "srgan/network.hpp"
#include "srgan/ops.hpp"

namespace oracle {

using srgan::Shape;
using srgan::Tensor;
using srgan::Tensor64;

template <typename T>
srgan::TensorT<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  srgan::TensorT<T> t(shape);
  for (T& v : t.mutable_data()) v = static_cast<T>(d(rng));
  return t;
}

// Values with magnitude in [0.1, 1] and random sign, away from kinks at 0.
inline Tensor64 random_away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor64 t(shape);
  for (double& v : t.mutable_data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// Direct six-loop cross-correlation in double.
template <typename T>
std::vector<double> conv2d(const srgan::TensorT<T>& x, const srgan::TensorT<T>& w, const srgan::TensorT<T>& b, int stride,
                           int pad, Shape* out_shape = nullptr) {
  const auto n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto cout = w.dim(0), k = w.dim(2);
  const auto oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  if (out_shape) *out_shape = {n, cout, oh, ow};
  std::vector<double> out(static_cast<std::size_t>(n * cout * oh * ow));
  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t co = 0; co < cout; ++co)
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          double s = b[co];
          for (std::int64_t ci = 0; ci < cin; ++ci)
            for (std::int64_t ky = 0; ky < k; ++ky)
              for (std::int64_t kx = 0; kx < k; ++kx) {
                const auto iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || ix < 0 || iy >= h || ix >= wd) continue;
                s += static_cast<double>(x[((in * cin + ci) * h + iy) * wd + ix]) *
                     static_cast<double>(w[((co * cin + ci) * k + ky) * k + kx]);
              }
          out[static_cast<std::size_t>(((in * cout + co) * oh + oy) * ow + ox)] = s;
        }
  return out;
}

// out[n, c, y*r + i, x*r + j] = in[n, c*r*r + i*r + j, y, x]
template <typename T>
std::vector<double> pixel_shuffle(const srgan::TensorT<T>& x, int r) {
  const auto n = x.dim(0), cr = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto c = cr / (r * r);
  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t in = 0; in < n; ++in)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
              const auto src = ((in * cr + ch * r * r + i * r + j) * h + y) * w + xx;
              const auto dst = ((in * c + ch) * h * r + y * r + i) * w * r + xx * r + j;
              out[static_cast<std::size_t>(dst)] = x[src];
            }
  return out;
}

inline Eigen::MatrixXd denman_beavers_sqrt(const Eigen::MatrixXd& a, int iterations = 100) {
  Eigen::MatrixXd y = a;
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  for (int i = 0; i < iterations; ++i) {
    const Eigen::MatrixXd y_next = 0.5 * (y + z.inverse());
    const Eigen::MatrixXd z_next = 0.5 * (z + y.inverse());
    const double delta = (y_next - y).norm();
    y = y_next;
    z = z_next;
    if (delta <= 1e-14 * y.norm()) break;
  }
  return y;
}

// Well-conditioned SPD matrix: Q diag(lambda) Q^T with lambda in [0.1, 10].
inline Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> lam(0.1, 10.0);
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd l(d);
  for (int i = 0; i < d; ++i) l(i) = lam(rng);
  Eigen::MatrixXd s = q * l.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}


// Direct 2-D Gaussian-window SSIM over every valid window, per channel.
inline double ssim(const srgan::data::ImageBuffer& a, const srgan::data::ImageBuffer& b, int win = 11, double sigma = 1.5) {
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> k(static_cast<std::size_t>(win * win));
  double tot = 0;
  const double half = (win - 1) / 2.0;
  for (int j = 0; j < win; ++j)
    for (int i = 0; i < win; ++i)
      tot += k[static_cast<std::size_t>(j * win + i)] =
          std::exp(-((i - half) * (i - half) + (j - half) * (j - half)) / (2 * sigma * sigma));
  double score = 0;
  long count = 0;
  for (int ch = 0; ch < a.channels; ++ch)
    for (int y = 0; y + win <= a.height; ++y)
      for (int x = 0; x + win <= a.width; ++x) {
        double ma = 0, mb = 0;
        for (int j = 0; j < win; ++j)
          for (int i = 0; i < win; ++i) {
            const double wk = k[static_cast<std::size_t>(j * win + i)] / tot;
            ma += wk * a.at(x + i, y + j, ch);
            mb += wk * b.at(x + i, y + j, ch);
          }
        double va = 0, vb = 0, cov = 0;
        for (int j = 0; j < win; ++j)
          for (int i = 0; i < win; ++i) {
            const double wk = k[static_cast<std::size_t>(j * win + i)] / tot;
            const double da = a.at(x + i, y + j, ch) - ma, db = b.at(x + i, y + j, ch) - mb;
            va += wk * da * da;
            vb += wk * db * db;
            cov += wk * da * db;
          }
        score += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return score / static_cast<double>(count);
}

// Two-pass sample covariance with the 1/(n-1) normalization.
inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  const auto n = x.rows(), d = x.cols();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) mu += x.row(i).transpose();
  mu /= static_cast<double>(n);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd r = x.row(i).transpose() - mu;
    c += r * r.transpose();
  }
  return c / static_cast<double>(n - 1);
}

struct GradCase {
  std::string name;
  std::function<double(std::mt19937_64&)> run;
};

// Weighted sum with fixed random coefficients, so every output element
// contributes a distinct gradient.
inline srgan::Var<double> probe_loss(const srgan::Var<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor64 c = random_tensor<double>(y.shape(), rng);
  return srgan::sum(srgan::mul(y, srgan::Var<double>(c)));
}

inline std::vector<GradCase> primitive_grad_cases() {
  using srgan::Tape;
  using srgan::Var;
  using V = std::vector<Var<double>>;
  const double h = 1e-6;
  std::vector<GradCase> cases;
  auto add = [&](std::string name, std::function<double(std::mt19937_64&)> fn) { cases.push_back({std::move(name), fn}); };

  add("conv2d stride 1 pad 1", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::conv2d(p[0], p[1], p[2], 1, 1), 1); },
        {random_tensor<double>({2, 3, 5, 5}, rng), random_tensor<double>({4, 3, 3, 3}, rng),
         random_tensor<double>({4}, rng)},
        h);
  });
  add("conv2d stride 2 pad 1", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::conv2d(p[0], p[1], p[2], 2, 1), 2); },
        {random_tensor<double>({2, 2, 6, 7}, rng), random_tensor<double>({3, 2, 3, 3}, rng),
         random_tensor<double>({3}, rng)},
        h);
  });
  add("batch_norm2d train", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) {
          Tensor64 rm({3}, 0.0), rv({3}, 1.0);
          return probe_loss(srgan::batch_norm2d(p[0], p[1], p[2], rm, rv, srgan::BnMode::train, 1e-5, 0.1), 3);
        },
        {random_tensor<double>({4, 3, 3, 3}, rng), random_tensor<double>({3}, rng, 0.5, 1.5),
         random_tensor<double>({3}, rng)},
        h);
  });
  add("batch_norm2d infer", [h](std::mt19937_64& rng) {
    const Tensor64 mean = random_tensor<double>({2}, rng), var = random_tensor<double>({2}, rng, 0.5, 2.0);
    return srgan::grad_check<double>(
        [mean, var](Tape<double>&, const V& p) {
          Tensor64 rm = mean, rv = var;
          return probe_loss(srgan::batch_norm2d(p[0], p[1], p[2], rm, rv, srgan::BnMode::infer, 1e-5, 0.1), 4);
        },
        {random_tensor<double>({2, 2, 3, 3}, rng), random_tensor<double>({2}, rng), random_tensor<double>({2}, rng)},
        h);
  });
  add("prelu", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>([](Tape<double>&, const V& p) { return probe_loss(srgan::prelu(p[0], p[1]), 5); },
                                     {random_away_from_zero({2, 3, 4, 4}, rng), random_tensor<double>({3}, rng, 0.1, 0.5)},
                                     h);
  });
  add("leaky_relu", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::leaky_relu(p[0], 0.2), 6); },
        {random_away_from_zero({2, 2, 4, 4}, rng)}, h);
  });
  add("pixel_shuffle", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::pixel_shuffle(p[0], 2), 7); },
        {random_tensor<double>({2, 8, 3, 3}, rng)}, h);
  });
  add("dense", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>([](Tape<double>&, const V& p) { return probe_loss(srgan::dense(p[0], p[1], p[2]), 8); },
                                     {random_tensor<double>({3, 5}, rng), random_tensor<double>({4, 5}, rng),
                                      random_tensor<double>({4}, rng)},
                                     h);
  });
  add("add / sub / mul", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) {
          return probe_loss(srgan::mul(srgan::add(p[0], p[1]), srgan::sub(p[1], p[0])), 9);
        },
        {random_tensor<double>({2, 3}, rng), random_tensor<double>({2, 3}, rng)}, h);
  });
  add("scale / add_scalar", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::add_scalar(srgan::scale(p[0], -2.5), 0.75), 10); },
        {random_tensor<double>({3, 4}, rng)}, h);
  });
  add("abs", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>([](Tape<double>&, const V& p) { return probe_loss(srgan::abs(p[0]), 11); },
                                     {random_away_from_zero({3, 4}, rng)}, h);
  });
  add("square", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>([](Tape<double>&, const V& p) { return probe_loss(srgan::square(p[0]), 12); },
                                     {random_tensor<double>({3, 4}, rng)}, h);
  });
  add("sigmoid", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>([](Tape<double>&, const V& p) { return probe_loss(srgan::sigmoid(p[0]), 13); },
                                     {random_tensor<double>({3, 4}, rng, -4, 4)}, h);
  });
  add("log_clamped", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::log_clamped(p[0], 1e-12), 14); },
        {random_tensor<double>({3, 4}, rng, 0.2, 2.0)}, h);
  });
  add("sum / mean", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return srgan::add(srgan::sum(srgan::square(p[0])), srgan::mean(p[0])); },
        {random_tensor<double>({2, 3, 2}, rng)}, h);
  });
  add("reshape", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::reshape(p[0], Shape{6, 4}), 15); },
        {random_tensor<double>({2, 3, 4}, rng)}, h);
  });
  add("global_avg_pool", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) { return probe_loss(srgan::global_avg_pool(p[0]), 16); },
        {random_tensor<double>({2, 3, 4, 5}, rng)}, h);
  });
  add("content_loss L1", [h](std::mt19937_64& rng) {
    const Tensor64 target = random_tensor<double>({2, 3, 4, 4}, rng);
    Tensor64 gen = random_tensor<double>({2, 3, 4, 4}, rng);
    // Keep |gen - target| away from zero.
    auto g = gen.mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (std::abs(g[i] - target[static_cast<std::int64_t>(i)]) < 0.05) g[i] += 0.1;
    return srgan::grad_check<double>(
        [target](Tape<double>&, const V& p) {
          return srgan::train::content_loss(p[0], Var<double>(target), srgan::train::ContentKind::l1);
        },
        {gen}, h);
  });
  add("content_loss L2", [h](std::mt19937_64& rng) {
    const Tensor64 target = random_tensor<double>({2, 3, 4, 4}, rng);
    return srgan::grad_check<double>(
        [target](Tape<double>&, const V& p) {
          return srgan::train::content_loss(p[0], Var<double>(target), srgan::train::ContentKind::l2);
        },
        {random_tensor<double>({2, 3, 4, 4}, rng)}, h);
  });
  add("adversarial losses", [h](std::mt19937_64& rng) {
    return srgan::grad_check<double>(
        [](Tape<double>&, const V& p) {
          const auto l = srgan::train::adversarial_losses(srgan::sigmoid(p[0]), srgan::sigmoid(p[1]));
          return srgan::add(l.d_loss, srgan::scale(l.g_loss, 0.5));
        },
        {random_tensor<double>({4, 1}, rng, -2, 2), random_tensor<double>({4, 1}, rng, -2, 2)}, h);
  });
  return cases;
}

// Full generator objective (content + perceptual + adversarial through a
// small discriminator) in double. Network::forward registers its own leaves,
// so the analytic side reads them directly and the numeric side perturbs the
// network tensors in place.
inline srgan::GradCheckResult composed_generator_grad_check(std::uint64_t seed, std::int64_t probes_per_tensor = 6) {
  using namespace srgan;
  nn::NetworkSpec gs = nn::NetworkSpec::generator(4, 1, 1);
  gs.image_side = 16;
  nn::NetworkSpec ds = nn::NetworkSpec::discriminator(2, 16);
  ds.dense_hidden = 8;
  nn::Network<double> g = nn::build_generator(gs, seed).cast<double>();
  const nn::Network<double> d = nn::build_discriminator(ds, seed + 1).cast<double>();
  const auto feat = metrics::ConvFeatureNet<float>::tinyconv().cast<double>();
  std::mt19937_64 rng(seed);
  const Tensor64 x = random_tensor<double>({2, 3, 8, 8}, rng);
  const Tensor64 target = random_tensor<double>({2, 3, 16, 16}, rng);

  auto objective = [&](nn::Network<double>& net, Tape<double>* tape, std::vector<Var<double>>* leaves) {
    nn::Network<double> dl = d;
    const Var<double> y = net.forward(Var<double>(x), BnMode::train, tape, leaves);
    const Var<double> c = train::content_loss(y, Var<double>(target), train::ContentKind::l2);
    const Var<double> pl = train::perceptual_loss(y, Var<double>(target), feat);
    const Var<double> adv = train::generator_adversarial_loss(dl.forward(y, BnMode::train_frozen));
    return add(add(c, scale(pl, 0.1)), scale(adv, 1e-3));
  };

  std::vector<Tensor64> analytic;
  {
    nn::Network<double> net = g;
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    const Var<double> loss = objective(net, &tape, &leaves);
    tape.backward(loss);
    for (const auto& l : leaves) analytic.push_back(tape.grad(l));
  }
  auto eval = [&](const nn::Network<double>& base) {
    nn::Network<double> net = base;
    return objective(net, nullptr, nullptr).value.item();
  };

  const double h = 1e-6;
  GradCheckResult worst;
  nn::Network<double> probe = g;
  const auto& idx = g.trainable();
  for (std::size_t pi = 0; pi < idx.size(); ++pi) {
    const Tensor64 orig_t = g.tensors()[idx[pi]].value;
    const std::int64_t count = orig_t.numel();
    const std::int64_t stride = std::max<std::int64_t>(1, count / probes_per_tensor);
    for (std::int64_t e = 0; e < count; e += stride) {
      auto& pt = probe.tensors()[idx[pi]].value;
      const double orig = orig_t[e];
      pt.mutable_data()[static_cast<std::size_t>(e)] = orig + h;
      const double up = eval(probe);
      pt.mutable_data()[static_cast<std::size_t>(e)] = orig - h;
      const double down = eval(probe);
      pt.mutable_data()[static_cast<std::size_t>(e)] = orig;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[pi][e];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (err > worst.max_rel_error) worst = {err, pi, e, a, numeric};
    }
  }
  return worst;
}

}  // namespace oracle
