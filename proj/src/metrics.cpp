#include "srgan/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "srgan/checkpoint.hpp"
#include "srgan/parallel.hpp"

namespace srgan::metrics {

using data::ImageBuffer;

double psnr(const ImageBuffer& a, const ImageBuffer& b, double peak) {
  require(a.same_shape(b), ErrorCode::shape_mismatch, "psnr: images differ in shape");
  double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

// Valid-mode separable filtering of one plane with a normalized 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size());
  const int ow = w - r + 1, oh = h - r + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < r; ++i) s += k[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < r; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimParams& p) {
  require(a.same_shape(b), ErrorCode::shape_mismatch, "ssim: images differ in shape");
  require(a.width >= p.window && a.height >= p.window, ErrorCode::invalid_argument,
          "ssim: image " + std::to_string(a.width) + "x" + std::to_string(a.height) + " is smaller than the " +
              std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
  std::vector<double> k(static_cast<std::size_t>(p.window));
  double total = 0;
  const double half = (p.window - 1) / 2.0;
  for (int i = 0; i < p.window; ++i)
    total += k[static_cast<std::size_t>(i)] = std::exp(-((i - half) * (i - half)) / (2 * p.sigma * p.sigma));
  for (double& v : k) v /= total;
  const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
  const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);

  const int w = a.width, h = a.height;
  const std::size_t px = static_cast<std::size_t>(w) * h;
  double score = 0;
  std::size_t count = 0;
  for (int ch = 0; ch < a.channels; ++ch) {
    std::vector<double> pa(px), pb(px), paa(px), pbb(px), pab(px);
    for (std::size_t i = 0; i < px; ++i) {
      pa[i] = a.pixels[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(ch)];
      pb[i] = b.pixels[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(ch)];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, w, h, k), mu_b = filter_valid(pb, w, h, k);
    const auto e_aa = filter_valid(paa, w, h, k), e_bb = filter_valid(pbb, w, h, k), e_ab = filter_valid(pab, w, h, k);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
      score += num / den;
      ++count;
    }
  }
  return score / static_cast<double>(count);
}

GaussianStats fit_gaussian(const Matrix& features) {
  const auto n = features.rows();
  require(n >= 2, ErrorCode::invalid_argument, "fit_gaussian: need at least 2 samples, got " + std::to_string(n));
  GaussianStats s;
  s.n = n;
  s.mu = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - s.mu.transpose();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.sigma = (cov + cov.transpose()) * 0.5;
  return s;
}

void symmetric_eigen(const Matrix& m, Vector& values, Matrix& vectors) {
  require(m.rows() == m.cols(), ErrorCode::shape_mismatch, "symmetric_eigen: matrix must be square");
  const Eigen::Index d = m.rows();
  Matrix a = m;
  Matrix v = Matrix::Identity(d, d);
  const double norm2 = a.squaredNorm();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (Eigen::Index p = 0; p < d; ++p)
      for (Eigen::Index q = p + 1; q < d; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * norm2 || off == 0.0) break;
    for (Eigen::Index p = 0; p < d; ++p) {
      for (Eigen::Index q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });
  values.resize(d);
  vectors.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    values(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
}

Matrix matrix_sqrt_psd(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::shape_mismatch, "matrix_sqrt_psd: matrix must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-6 * scale, ErrorCode::numerical,
          "matrix_sqrt_psd: matrix is not symmetric (max |M - M^T| = " + std::to_string(asym) + ")");
  Vector values;
  Matrix vectors;
  symmetric_eigen((m + m.transpose()) * 0.5, values, vectors);
  Vector roots(values.size());
  const double top = values.size() ? std::max(values.maxCoeff(), 0.0) : 0.0;
  const double rank_tol = static_cast<double>(values.size()) * std::numeric_limits<double>::epsilon() * top;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    require(values(i) >= -1e-6 * scale, ErrorCode::numerical,
            "matrix_sqrt_psd: negative eigenvalue " + std::to_string(values(i)));
    roots(i) = values(i) > rank_tol ? std::sqrt(values(i)) : 0.0;
  }
  Matrix s = vectors * roots.asDiagonal() * vectors.transpose();
  return (s + s.transpose()) * 0.5;
}

double fid(const GaussianStats& x, const GaussianStats& g) {
  require(x.mu.size() == g.mu.size() && x.sigma.rows() == g.sigma.rows(), ErrorCode::shape_mismatch,
          "fid: feature dimensions differ (" + std::to_string(x.mu.size()) + " vs " + std::to_string(g.mu.size()) + ")");
  const double mean_term = (x.mu - g.mu).squaredNorm();
  const Matrix root_x = matrix_sqrt_psd(x.sigma);
  Matrix inner = root_x * g.sigma * root_x;
  inner = (inner + inner.transpose()) * 0.5;
  const double cross = matrix_sqrt_psd(inner).trace();
  const double total = mean_term + x.sigma.trace() + g.sigma.trace() - 2.0 * cross;
  if (total < 0) {
    const double scale = std::max(1.0, x.sigma.trace() + g.sigma.trace());
    require(total >= -1e-8 * scale, ErrorCode::numerical, "fid: negative distance " + std::to_string(total));
    return 0.0;
  }
  return total;
}

std::vector<double> Raw16Extractor::extract(const ImageBuffer& img) const {
  ImageBuffer gray = img.channels == 3 ? data::to_grayscale(img) : img;
  ImageBuffer small = data::bicubic_resize(gray, 16, 16);
  return std::vector<double>(small.pixels.begin(), small.pixels.end());
}

template <typename T>
ConvFeatureNet<T>::ConvFeatureNet(std::string id, std::vector<Stage> stages, double slope)
    : id_(std::move(id)), stages_(std::move(stages)), slope_(slope) {
  require(!stages_.empty(), ErrorCode::invalid_argument, "feature net needs at least one conv stage");
  for (std::size_t i = 1; i < stages_.size(); ++i)
    require(stages_[i].weight.dim(1) == stages_[i - 1].weight.dim(0), ErrorCode::shape_mismatch,
            "feature net stage " + std::to_string(i) + " input channels do not match the previous stage");
}

template <typename T>
ConvFeatureNet<T> ConvFeatureNet<T>::tinyconv() {
  std::mt19937_64 rng(0x7A11C0DEull);
  const int widths[4] = {3, 16, 32, 64};
  std::vector<Stage> stages;
  for (int i = 0; i < 3; ++i) {
    const std::int64_t in = widths[i], out = widths[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w(Shape{out, in, 3, 3});
    for (float& v : w.mutable_data()) v = static_cast<float>(dist(rng));
    stages.push_back({w.cast<T>(), TensorT<T>(Shape{out}), 2});
  }
  return ConvFeatureNet("tinyconv", std::move(stages));
}

template <typename T>
ConvFeatureNet<T> ConvFeatureNet<T>::from_archive(const std::filesystem::path& path) {
  nn::Archive a = nn::decode_archive(nn::read_file_bytes(path));
  std::vector<Stage> stages;
  std::vector<int> strides;
  double slope = 0.2;
  if (a.header.is_object()) {
    try {
      strides = a.header.value("strides", strides);
      slope = a.header.value("slope", slope);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::unsupported_format, "feature archive '" + path.string() + "': bad header: " + e.what());
    }
  }
  for (std::size_t i = 0;; ++i) {
    const std::string w = "conv" + std::to_string(i) + ".weight", b = "conv" + std::to_string(i) + ".bias";
    auto wt = std::find_if(a.tensors.begin(), a.tensors.end(), [&](const auto& t) { return t.name == w; });
    auto bt = std::find_if(a.tensors.begin(), a.tensors.end(), [&](const auto& t) { return t.name == b; });
    if (wt == a.tensors.end()) break;
    require(bt != a.tensors.end(), ErrorCode::missing_tensor, "feature archive is missing '" + b + "'");
    stages.push_back({wt->value.template cast<T>(), bt->value.template cast<T>(), i < strides.size() ? strides[i] : 2});
  }
  require(!stages.empty(), ErrorCode::missing_tensor, "feature archive '" + path.string() + "' has no conv0.weight");
  return ConvFeatureNet("archive:" + path.string(), std::move(stages), slope);
}

template <typename T>
int ConvFeatureNet<T>::dim() const {
  return static_cast<int>(stages_.back().weight.dim(0));
}

template <typename T>
Var<T> ConvFeatureNet<T>::feature_maps(const Var<T>& x) const {
  Var<T> cur = x;
  for (const Stage& s : stages_) {
    const int pad = static_cast<int>(s.weight.dim(2) / 2);
    cur = leaky_relu(conv2d(cur, Var<T>(s.weight), Var<T>(s.bias), s.stride, pad), slope_);
  }
  return cur;
}

template class ConvFeatureNet<float>;
template class ConvFeatureNet<double>;

std::vector<double> ConvExtractor::extract(const ImageBuffer& img) const {
  ImageBuffer rgb = data::replicate_channels(img, 3);
  Tensor t(Shape{1, 3, img.height, img.width});
  auto d = t.mutable_data();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        d[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] = 2.0f * rgb.at(x, y, c) - 1.0f;
  Tensor pooled = global_avg_pool(net_.feature_maps(Var<float>(t))).value;
  return std::vector<double>(pooled.data().begin(), pooled.data().end());
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id) {
  if (id == "raw16") return std::make_unique<Raw16Extractor>();
  if (id == "tinyconv") return std::make_unique<ConvExtractor>(ConvFeatureNet<float>::tinyconv());
  if (id.rfind("archive:", 0) == 0) return std::make_unique<ConvExtractor>(ConvFeatureNet<float>::from_archive(id.substr(8)));
  fail(ErrorCode::usage, "unknown feature extractor '" + id + "' (expected raw16, tinyconv or archive:<path>)");
}

Matrix extract_features(const std::vector<ImageBuffer>& images, const FeatureExtractor& extractor) {
  require(!images.empty(), ErrorCode::invalid_argument, "extract_features: no images");
  for (const auto& img : images)
    require(img.width == images[0].width && img.height == images[0].height, ErrorCode::shape_mismatch,
            "extract_features: images have mixed sizes");
  Matrix out(static_cast<Eigen::Index>(images.size()), extractor.dim());
  parallel_for(static_cast<std::int64_t>(images.size()), [&](std::int64_t i) {
    const auto f = extractor.extract(images[static_cast<std::size_t>(i)]);
    for (int j = 0; j < extractor.dim(); ++j) out(i, j) = f[static_cast<std::size_t>(j)];
  });
  return out;
}

namespace {

}  // namespace

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, bool& ok) {
  if (s == "inf") return kPsnrInfinity;
  if (s == "-inf") return -kPsnrInfinity;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    ok = ok && used == s.size();
    return v;
  } catch (const std::exception&) {
    ok = false;
    return 0;
  }
}

}  // namespace

std::string format_row(const MetricsRow& r) {
  return r.train_set + "," + r.eval_set + "," + format_number(r.psnr_db) + "," + format_number(r.ssim) + "," + format_number(r.fid) + "," +
         std::to_string(r.n) + "," + r.extractor + "," + std::to_string(r.seed);
}

std::string MetricsReport::to_csv() const {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) out += format_row(r) + "\n";
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  auto j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"train_set", r.train_set},
                 {"eval_set", r.eval_set},
                 {"psnr_db", std::isinf(r.psnr_db) ? nlohmann::json("inf") : nlohmann::json(r.psnr_db)},
                 {"ssim", r.ssim},
                 {"fid", r.fid},
                 {"n", r.n},
                 {"extractor", r.extractor},
                 {"seed", r.seed}});
  return j;
}

MetricsReport MetricsReport::from_csv(const std::string& text, const std::string& origin) {
  MetricsReport rep;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      require(line == kReportHeader, ErrorCode::unsupported_format,
              origin + ":1: header does not match '" + std::string(kReportHeader) + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const std::string where = origin + ":" + std::to_string(lineno);
    require(f.size() == 8, ErrorCode::unsupported_format,
            where + ": expected 8 fields, got " + std::to_string(f.size()));
    MetricsRow r;
    bool ok = true;
    r.train_set = f[0];
    r.eval_set = f[1];
    r.psnr_db = parse_double(f[2], ok);
    r.ssim = parse_double(f[3], ok);
    r.fid = parse_double(f[4], ok);
    try {
      std::size_t used = 0;
      r.n = std::stoll(f[5], &used);
      ok = ok && used == f[5].size();
      r.seed = std::stoull(f[7], &used);
      ok = ok && used == f[7].size();
    } catch (const std::exception&) {
      ok = false;
    }
    r.extractor = f[6];
    require(ok && !r.train_set.empty() && !r.eval_set.empty() && !r.extractor.empty(), ErrorCode::unsupported_format,
            where + ": malformed row '" + line + "'");
    rep.rows.push_back(std::move(r));
  }
  require(lineno >= 1, ErrorCode::unsupported_format, origin + ":1: missing header");
  return rep;
}

MetricsRow score_pair_sets(const std::vector<ImageBuffer>& real, const std::vector<ImageBuffer>& generated,
                           const FeatureExtractor& extractor, std::int64_t n) {
  require(n >= 2, ErrorCode::usage, "score_pair_sets: n must be >= 2");
  require(static_cast<std::int64_t>(real.size()) >= n && static_cast<std::int64_t>(generated.size()) >= n,
          ErrorCode::usage,
          "score_pair_sets: need " + std::to_string(n) + " images per set, have " + std::to_string(real.size()) +
              " real and " + std::to_string(generated.size()) + " generated");
  if (n < extractor.dim())
    spdlog::warn("FID with n={} < d={} ({}): covariance is rank deficient", n, extractor.dim(), extractor.id());
  std::vector<ImageBuffer> r(real.begin(), real.begin() + n), g(generated.begin(), generated.begin() + n);
  MetricsRow row;
  double p = 0, s = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    p += psnr(r[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(i)]);
    s += ssim(r[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(i)]);
  }
  row.psnr_db = p / static_cast<double>(n);
  row.ssim = s / static_cast<double>(n);
  row.fid = fid(fit_gaussian(extract_features(r, extractor)), fit_gaussian(extract_features(g, extractor)));
  row.n = n;
  row.extractor = extractor.id();
  return row;
}

}  // namespace srgan::metrics
