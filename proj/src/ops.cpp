#include "srgan/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <sstream>

#include "srgan/parallel.hpp"

namespace srgan {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

template <typename T>
Tape<T>* tape_of(std::initializer_list<const Var<T>*> vars) {
  for (const Var<T>* v : vars)
    if (v->tracked()) return v->tape;
  return nullptr;
}

void check_rank(const Shape& s, int rank, const char* op, const char* what) {
  require(static_cast<int>(s.size()) == rank, ErrorCode::shape_mismatch,
          std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " + shape_str(s));
}

void check_same(const Shape& a, const Shape& b, const char* op) {
  require(a == b, ErrorCode::shape_mismatch, std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

struct ConvGeom {
  std::int64_t n, cin, h, w, cout, k, oh, ow;
  int stride, pad;
  std::int64_t ckk() const { return cin * k * k; }
  std::int64_t ohw() const { return oh * ow; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.ohw();
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* gx) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.ohw();
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = gx + (c * g.h + iy) * g.w;
          const T* src = row + oy * g.ow;
          for (std::int64_t ox = 0; ox < g.ow; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  check_rank(xs, 4, "conv2d", "input");
  check_rank(ws, 4, "conv2d", "weight");
  require(ws[2] == ws[3] && ws[2] % 2 == 1, ErrorCode::invalid_argument,
          "conv2d: kernel must be square with odd size, got " + shape_str(ws));
  require(stride >= 1, ErrorCode::invalid_argument, "conv2d: stride must be >= 1");
  require(pad >= 0, ErrorCode::invalid_argument, "conv2d: pad must be >= 0");
  require(xs[1] == ws[1], ErrorCode::shape_mismatch,
          "conv2d: input channels (dim 1) = " + std::to_string(xs[1]) + " but weight expects Cin = " + std::to_string(ws[1]));
  require(b.shape() == Shape{ws[0]}, ErrorCode::shape_mismatch,
          "conv2d: bias shape " + shape_str(b.shape()) + " does not match Cout = " + std::to_string(ws[0]));
  require(xs[2] + 2 * pad >= ws[2] && xs[3] + 2 * pad >= ws[2], ErrorCode::shape_mismatch,
          "conv2d: padded input " + shape_str(xs) + " smaller than kernel " + std::to_string(ws[2]));

  ConvGeom g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], conv_out_size(xs[2], static_cast<int>(ws[2]), stride, pad),
             conv_out_size(xs[3], static_cast<int>(ws[2]), stride, pad), stride, pad};

  TensorT<T> out(Shape{g.n, g.cout, g.oh, g.ow});
  {
    auto od = out.mutable_data();
    const T* xd = x.value.data().data();
    CMapRM<T> wm(w.value.data().data(), g.cout, g.ckk());
    const T* bd = b.value.data().data();
    parallel_for(g.n, [&](std::int64_t n) {
      std::vector<T> col(static_cast<std::size_t>(g.ckk() * g.ohw()));
      im2col(xd + n * g.cin * g.h * g.w, g, col.data());
      MapRM<T> om(od.data() + n * g.cout * g.ohw(), g.cout, g.ohw());
      om.noalias() = wm * CMapRM<T>(col.data(), g.ckk(), g.ohw());
      for (std::int64_t c = 0; c < g.cout; ++c) om.row(c).array() += bd[c];
    });
  }

  Tape<T>* tape = tape_of({&x, &w, &b});
  if (!tape) return Var<T>(std::move(out));
  TensorT<T> xv = x.value;
  TensorT<T> wv = w.value;
  return tape->record(std::move(out), {&x, &w, &b}, [xv, wv, g](const TensorT<T>& gout, GradSink<T>& sink) {
    const T* gd = gout.data().data();
    const T* xd = xv.data().data();
    CMapRM<T> wm(wv.data().data(), g.cout, g.ckk());
    const bool want_x = sink.wants(0);
    const bool want_w = sink.wants(1);
    std::vector<T> gw_parts(want_w ? static_cast<std::size_t>(g.n * g.cout * g.ckk()) : 0);
    if (want_x || want_w) {
      parallel_for(g.n, [&](std::int64_t n) {
        CMapRM<T> gm(gd + n * g.cout * g.ohw(), g.cout, g.ohw());
        std::vector<T> col(static_cast<std::size_t>(g.ckk() * g.ohw()));
        if (want_w) {
          im2col(xd + n * g.cin * g.h * g.w, g, col.data());
          MapRM<T> part(gw_parts.data() + n * g.cout * g.ckk(), g.cout, g.ckk());
          part.noalias() = gm * CMapRM<T>(col.data(), g.ckk(), g.ohw()).transpose();
        }
        if (want_x) {
          MapRM<T> gcol(col.data(), g.ckk(), g.ohw());
          gcol.noalias() = wm.transpose() * gm;
          col2im_add(col.data(), g, sink.slot(0).data() + n * g.cin * g.h * g.w);
        }
      });
    }
    if (want_w) {
      auto gw = sink.slot(1);
      for (std::int64_t n = 0; n < g.n; ++n) {
        const T* part = gw_parts.data() + n * g.cout * g.ckk();
        for (std::int64_t i = 0; i < g.cout * g.ckk(); ++i) gw[static_cast<std::size_t>(i)] += part[i];
      }
    }
    if (sink.wants(2)) {
      auto gb = sink.slot(2);
      for (std::int64_t n = 0; n < g.n; ++n)
        for (std::int64_t c = 0; c < g.cout; ++c) {
          const T* p = gd + (n * g.cout + c) * g.ohw();
          T s = 0;
          for (std::int64_t i = 0; i < g.ohw(); ++i) s += p[i];
          gb[static_cast<std::size_t>(c)] += s;
        }
    }
  });
}

template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, TensorT<T>& running_mean,
                    TensorT<T>& running_var, BnMode mode, double eps, double momentum) {
  const auto& xs = x.shape();
  check_rank(xs, 4, "batch_norm2d", "input");
  const std::int64_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  const Shape cshape{c};
  require(gamma.shape() == cshape && beta.shape() == cshape, ErrorCode::shape_mismatch,
          "batch_norm2d: gamma/beta must have shape " + shape_str(cshape));
  require(running_mean.shape() == cshape && running_var.shape() == cshape, ErrorCode::shape_mismatch,
          "batch_norm2d: running statistics must have shape " + shape_str(cshape));
  require(eps > 0, ErrorCode::invalid_argument, "batch_norm2d: eps must be > 0");
  const bool batch_stats = mode != BnMode::infer;
  const std::int64_t m = n * hw;
  require(!batch_stats || m >= 2, ErrorCode::invalid_argument,
          "batch_norm2d: train mode needs N*H*W >= 2, got " + std::to_string(m));

  const T* xd = x.value.data().data();
  std::vector<T> mean_c(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  if (batch_stats) {
    auto rm = mode == BnMode::train ? running_mean.mutable_data() : std::span<T>{};
    auto rv = mode == BnMode::train ? running_var.mutable_data() : std::span<T>{};
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = xd + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) s += p[j];
      }
      const double mu = s / static_cast<double>(m);
      double ss = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = xd + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const double d = p[j] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(m);
      mean_c[static_cast<std::size_t>(ch)] = static_cast<T>(mu);
      inv_std[static_cast<std::size_t>(ch)] = static_cast<T>(1.0 / std::sqrt(var + eps));
      if (mode == BnMode::train) {
        const double unbiased = ss / static_cast<double>(m - 1);
        const auto k = static_cast<std::size_t>(ch);
        rm[k] = static_cast<T>((1.0 - momentum) * rm[k] + momentum * mu);
        rv[k] = static_cast<T>((1.0 - momentum) * rv[k] + momentum * unbiased);
      }
    }
  } else {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto k = static_cast<std::size_t>(ch);
      mean_c[k] = running_mean.data()[k];
      inv_std[k] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var.data()[k]) + eps));
    }
  }

  TensorT<T> xhat(xs);
  TensorT<T> out(xs);
  {
    auto hd = xhat.mutable_data();
    auto od = out.mutable_data();
    auto gd = gamma.value.data();
    auto bd = beta.value.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const auto k = static_cast<std::size_t>(ch);
        const std::int64_t base = (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const T v = (xd[base + j] - mean_c[k]) * inv_std[k];
          hd[static_cast<std::size_t>(base + j)] = v;
          od[static_cast<std::size_t>(base + j)] = gd[k] * v + bd[k];
        }
      }
  }

  Tape<T>* tape = tape_of({&x, &gamma, &beta});
  if (!tape) return Var<T>(std::move(out));
  TensorT<T> gv = gamma.value;
  return tape->record(
      std::move(out), {&x, &gamma, &beta},
      [xhat, gv, inv_std, n, c, hw, m, batch_stats](const TensorT<T>& gout, GradSink<T>& sink) {
        const T* g = gout.data().data();
        const T* h = xhat.data().data();
        auto gam = gv.data();
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto k = static_cast<std::size_t>(ch);
          double sum_g = 0, sum_gh = 0;
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t base = (i * c + ch) * hw;
            for (std::int64_t j = 0; j < hw; ++j) {
              sum_g += g[base + j];
              sum_gh += static_cast<double>(g[base + j]) * h[base + j];
            }
          }
          if (sink.wants(1)) sink.slot(1)[k] += static_cast<T>(sum_gh);
          if (sink.wants(2)) sink.slot(2)[k] += static_cast<T>(sum_g);
          if (!sink.wants(0)) continue;
          auto gx = sink.slot(0);
          const double scale_k = static_cast<double>(gam[k]) * inv_std[k];
          const double md = static_cast<double>(m);
          for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t base = (i * c + ch) * hw;
            for (std::int64_t j = 0; j < hw; ++j) {
              const auto idx = static_cast<std::size_t>(base + j);
              if (batch_stats)
                gx[idx] += static_cast<T>(scale_k * (g[base + j] - sum_g / md - h[base + j] * sum_gh / md));
              else
                gx[idx] += static_cast<T>(scale_k * g[base + j]);
            }
          }
        }
      });
}

template <typename T>
Var<T> prelu(const Var<T>& x, const Var<T>& alpha) {
  const auto& xs = x.shape();
  require(xs.size() >= 2, ErrorCode::shape_mismatch, "prelu: input must have a channel dimension, got " + shape_str(xs));
  const std::int64_t n = xs[0], c = xs[1], inner = x.value.numel() / (n * c);
  require(alpha.shape() == Shape{c}, ErrorCode::shape_mismatch,
          "prelu: alpha shape " + shape_str(alpha.shape()) + " does not match channels " + std::to_string(c));
  TensorT<T> out(xs);
  auto od = out.mutable_data();
  auto xd = x.value.data();
  auto ad = alpha.value.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t base = (i * c + ch) * inner;
      for (std::int64_t j = 0; j < inner; ++j) {
        const T v = xd[static_cast<std::size_t>(base + j)];
        od[static_cast<std::size_t>(base + j)] = v >= T(0) ? v : ad[static_cast<std::size_t>(ch)] * v;
      }
    }
  Tape<T>* tape = tape_of({&x, &alpha});
  if (!tape) return Var<T>(std::move(out));
  TensorT<T> xv = x.value, av = alpha.value;
  return tape->record(std::move(out), {&x, &alpha}, [xv, av, n, c, inner](const TensorT<T>& gout, GradSink<T>& sink) {
    auto g = gout.data();
    auto xd = xv.data();
    auto ad = av.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T ga = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t base = (i * c + ch) * inner;
        for (std::int64_t j = 0; j < inner; ++j) {
          const auto idx = static_cast<std::size_t>(base + j);
          const bool pos = xd[idx] >= T(0);
          if (sink.wants(0)) sink.slot(0)[idx] += pos ? g[idx] : ad[static_cast<std::size_t>(ch)] * g[idx];
          if (!pos) ga += g[idx] * xd[idx];
        }
      }
      if (sink.wants(1)) sink.slot(1)[static_cast<std::size_t>(ch)] += ga;
    }
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  TensorT<T> out(x.shape());
  auto od = out.mutable_data();
  auto xd = x.value.data();
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] >= T(0) ? xd[i] : s * xd[i];
  if (!x.tracked()) return Var<T>(std::move(out));
  TensorT<T> xv = x.value;
  return x.tape->record(std::move(out), {&x}, [xv, s](const TensorT<T>& gout, GradSink<T>& sink) {
    auto g = gout.data();
    auto xd = xv.data();
    auto gx = sink.slot(0);
    for (std::size_t i = 0; i < xd.size(); ++i) gx[i] += xd[i] >= T(0) ? g[i] : s * g[i];
  });
}

namespace {
// Visits (input index, output index) pairs of the pixel-shuffle permutation.
template <typename F>
void shuffle_indices(const Shape& in, int r, F&& f) {
  const std::int64_t n = in[0], cin = in[1], h = in[2], w = in[3];
  const std::int64_t c = cin / (r * r), oh = h * r, ow = w * r;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
          const std::int64_t src_c = ch * r * r + (y % r) * r + (x % r);
          const std::int64_t src = ((i * cin + src_c) * h + y / r) * w + x / r;
          const std::int64_t dst = ((i * c + ch) * oh + y) * ow + x;
          f(static_cast<std::size_t>(src), static_cast<std::size_t>(dst));
        }
}
}  // namespace

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  const auto& xs = x.shape();
  check_rank(xs, 4, "pixel_shuffle", "input");
  require(r >= 1, ErrorCode::invalid_argument, "pixel_shuffle: factor must be >= 1");
  require(xs[1] % (r * r) == 0, ErrorCode::shape_mismatch,
          "pixel_shuffle: channels " + std::to_string(xs[1]) + " not divisible by r^2 = " + std::to_string(r * r));
  TensorT<T> out(Shape{xs[0], xs[1] / (r * r), xs[2] * r, xs[3] * r});
  auto od = out.mutable_data();
  auto xd = x.value.data();
  shuffle_indices(xs, r, [&](std::size_t s, std::size_t d) { od[d] = xd[s]; });
  if (!x.tracked()) return Var<T>(std::move(out));
  return x.tape->record(std::move(out), {&x}, [xs, r](const TensorT<T>& gout, GradSink<T>& sink) {
    auto g = gout.data();
    auto gx = sink.slot(0);
    shuffle_indices(xs, r, [&](std::size_t s, std::size_t d) { gx[s] += g[d]; });
  });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  check_rank(x.shape(), 2, "dense", "input");
  check_rank(w.shape(), 2, "dense", "weight");
  const std::int64_t n = x.shape()[0], d = x.shape()[1], dout = w.shape()[0];
  require(w.shape()[1] == d, ErrorCode::shape_mismatch,
          "dense: input features (dim 1) = " + std::to_string(d) + " but weight expects " + std::to_string(w.shape()[1]));
  require(b.shape() == Shape{dout}, ErrorCode::shape_mismatch, "dense: bias shape " + shape_str(b.shape()));
  TensorT<T> out(Shape{n, dout});
  {
    MapRM<T> om(out.mutable_data().data(), n, dout);
    CMapRM<T> xm(x.value.data().data(), n, d);
    CMapRM<T> wm(w.value.data().data(), dout, d);
    om.noalias() = xm * wm.transpose();
    auto bd = b.value.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < dout; ++j) om(i, j) += bd[static_cast<std::size_t>(j)];
  }
  Tape<T>* tape = tape_of({&x, &w, &b});
  if (!tape) return Var<T>(std::move(out));
  TensorT<T> xv = x.value, wv = w.value;
  return tape->record(std::move(out), {&x, &w, &b}, [xv, wv, n, d, dout](const TensorT<T>& gout, GradSink<T>& sink) {
    CMapRM<T> gm(gout.data().data(), n, dout);
    if (sink.wants(0)) {
      MapRM<T> gx(sink.slot(0).data(), n, d);
      gx.noalias() += gm * CMapRM<T>(wv.data().data(), dout, d);
    }
    if (sink.wants(1)) {
      MapRM<T> gw(sink.slot(1).data(), dout, d);
      gw.noalias() += gm.transpose() * CMapRM<T>(xv.data().data(), n, d);
    }
    if (sink.wants(2)) {
      auto gb = sink.slot(2);
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < dout; ++j) gb[static_cast<std::size_t>(j)] += gm(i, j);
    }
  });
}

namespace {

// Elementwise unary op with derivative expressed through (x, y, g).
template <typename T, typename Fwd, typename Bwd>
Var<T> unary(const Var<T>& a, Fwd fwd, Bwd bwd) {
  TensorT<T> out(a.shape());
  auto od = out.mutable_data();
  auto ad = a.value.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = fwd(ad[i]);
  if (!a.tracked()) return Var<T>(std::move(out));
  TensorT<T> av = a.value, ov = out;
  return a.tape->record(std::move(out), {&a}, [av, ov, bwd](const TensorT<T>& gout, GradSink<T>& sink) {
    auto g = gout.data();
    auto x = av.data();
    auto y = ov.data();
    auto gx = sink.slot(0);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += bwd(x[i], y[i], g[i]);
  });
}

template <typename T, typename Fwd, typename BwdA, typename BwdB>
Var<T> binary(const Var<T>& a, const Var<T>& b, const char* name, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  check_same(a.shape(), b.shape(), name);
  TensorT<T> out(a.shape());
  auto od = out.mutable_data();
  auto ad = a.value.data();
  auto bd = b.value.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = fwd(ad[i], bd[i]);
  Tape<T>* tape = tape_of({&a, &b});
  if (!tape) return Var<T>(std::move(out));
  TensorT<T> av = a.value, bv = b.value;
  return tape->record(std::move(out), {&a, &b}, [av, bv, bwd_a, bwd_b](const TensorT<T>& gout, GradSink<T>& sink) {
    auto g = gout.data();
    auto x = av.data();
    auto y = bv.data();
    if (sink.wants(0)) {
      auto ga = sink.slot(0);
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += bwd_a(x[i], y[i], g[i]);
    }
    if (sink.wants(1)) {
      auto gb = sink.slot(1);
      for (std::size_t i = 0; i < x.size(); ++i) gb[i] += bwd_b(x[i], y[i], g[i]);
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return g; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T g) { return g; }, [](T, T, T g) { return -g; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; }, [](T x, T, T g) { return g * x; });
}

template <typename T>
Var<T> scale(const Var<T>& a, double s) {
  const T k = static_cast<T>(s);
  return unary(a, [k](T x) { return k * x; }, [k](T, T, T g) { return k * g; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, double s) {
  const T k = static_cast<T>(s);
  return unary(a, [k](T x) { return x + k; }, [](T, T, T g) { return g; });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  return unary(
      a, [](T x) { return std::abs(x); },
      [](T x, T, T g) { return x > T(0) ? g : (x < T(0) ? -g : T(0)); });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T, T g) { return T(2) * x * g; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(
      a,
      [](T x) {
        // Split by sign so exp never overflows.
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y, T g) { return g * y * (T(1) - y); });
}

template <typename T>
Var<T> log_clamped(const Var<T>& a, double floor) {
  const T f = static_cast<T>(floor);
  return unary(
      a, [f](T x) { return std::log(std::max(x, f)); }, [f](T x, T, T g) { return x > f ? g / x : T(0); });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double s = 0;
  for (T v : a.value.data()) s += v;
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(s));
  if (!a.tracked()) return Var<T>(std::move(out));
  return a.tape->record(std::move(out), {&a}, [](const TensorT<T>& gout, GradSink<T>& sink) {
    const T g = gout.item();
    for (T& v : sink.slot(0)) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const double count = static_cast<double>(a.value.numel());
  double s = 0;
  for (T v : a.value.data()) s += v;
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(s / count));
  if (!a.tracked()) return Var<T>(std::move(out));
  return a.tape->record(std::move(out), {&a}, [count](const TensorT<T>& gout, GradSink<T>& sink) {
    const T g = static_cast<T>(gout.item() / count);
    for (T& v : sink.slot(0)) v += g;
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  TensorT<T> out = a.value.reshaped(std::move(shape));
  if (!a.tracked()) return Var<T>(std::move(out));
  return a.tape->record(std::move(out), {&a}, [](const TensorT<T>& gout, GradSink<T>& sink) {
    auto g = gout.data();
    auto gx = sink.slot(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& a) {
  check_rank(a.shape(), 4, "global_avg_pool", "input");
  const std::int64_t n = a.shape()[0], c = a.shape()[1], hw = a.shape()[2] * a.shape()[3];
  TensorT<T> out(Shape{n, c});
  auto od = out.mutable_data();
  auto ad = a.value.data();
  for (std::int64_t i = 0; i < n * c; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < hw; ++j) s += ad[static_cast<std::size_t>(i * hw + j)];
    od[static_cast<std::size_t>(i)] = static_cast<T>(s / static_cast<double>(hw));
  }
  if (!a.tracked()) return Var<T>(std::move(out));
  return a.tape->record(std::move(out), {&a}, [n, c, hw](const TensorT<T>& gout, GradSink<T>& sink) {
    auto g = gout.data();
    auto gx = sink.slot(0);
    for (std::int64_t i = 0; i < n * c; ++i) {
      const T v = static_cast<T>(g[static_cast<std::size_t>(i)] / static_cast<double>(hw));
      for (std::int64_t j = 0; j < hw; ++j) gx[static_cast<std::size_t>(i * hw + j)] += v;
    }
  });
}

#define SRGAN_INSTANTIATE_OPS(T)                                                                                 \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                               \
  template Var<T> batch_norm2d(const Var<T>&, const Var<T>&, const Var<T>&, TensorT<T>&, TensorT<T>&, BnMode, \
                               double, double);                                                                \
  template Var<T> prelu(const Var<T>&, const Var<T>&);                                                         \
  template Var<T> leaky_relu(const Var<T>&, double);                                                           \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                                           \
  template Var<T> dense(const Var<T>&, const Var<T>&, const Var<T>&);                                          \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> scale(const Var<T>&, double);                                                                \
  template Var<T> add_scalar(const Var<T>&, double);                                                           \
  template Var<T> abs(const Var<T>&);                                                                          \
  template Var<T> square(const Var<T>&);                                                                       \
  template Var<T> sigmoid(const Var<T>&);                                                                      \
  template Var<T> log_clamped(const Var<T>&, double);                                                          \
  template Var<T> sum(const Var<T>&);                                                                          \
  template Var<T> mean(const Var<T>&);                                                                         \
  template Var<T> reshape(const Var<T>&, Shape);                                                               \
  template Var<T> global_avg_pool(const Var<T>&);

SRGAN_INSTANTIATE_OPS(float)
SRGAN_INSTANTIATE_OPS(double)

}  // namespace srgan
