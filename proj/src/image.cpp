#include "srgan/image.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <string>

#include "srgan/error.hpp"

namespace srgan::data {

ImageBuffer::ImageBuffer(int w, int h, int c, float fill) : width(w), height(h), channels(c) {
  require(w >= 1 && h >= 1 && (c == 1 || c == 3), ErrorCode::invalid_argument,
          "image must be at least 1x1 with 1 or 3 channels, got " + std::to_string(w) + "x" + std::to_string(h) + "x" +
              std::to_string(c));
  pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
}

void ImageBuffer::validate() const {
  require(pixels.size() == static_cast<std::size_t>(width) * height * channels, ErrorCode::shape_mismatch,
          "image buffer length does not match its dimensions");
  for (float v : pixels)
    require(v >= 0.0f && v <= 1.0f, ErrorCode::invalid_argument, "image pixel outside [0,1]: " + std::to_string(v));
}

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<int> first;  // offset into index/weight arrays per output sample
  std::vector<int> index;
  std::vector<double> weight;
};

Taps resample_taps(int in, int out) {
  Taps t;
  const double scale = static_cast<double>(in) / out;
  const double support = std::max(scale, 1.0);
  for (int j = 0; j < out; ++j) {
    const double center = (j + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - 2.0 * support));
    const int hi = static_cast<int>(std::ceil(center + 2.0 * support));
    t.first.push_back(static_cast<int>(t.index.size()));
    double total = 0;
    const std::size_t start = t.weight.size();
    for (int i = lo; i <= hi; ++i) {
      const double w = cubic_kernel((i - center) / support);
      if (w == 0.0) continue;
      t.index.push_back(std::clamp(i, 0, in - 1));
      t.weight.push_back(w);
      total += w;
    }
    for (std::size_t k = start; k < t.weight.size(); ++k) t.weight[k] /= total;
  }
  t.first.push_back(static_cast<int>(t.index.size()));
  return t;
}

}  // namespace

ImageBuffer bicubic_resize(const ImageBuffer& img, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1, ErrorCode::invalid_argument, "bicubic_resize: output size must be >= 1");
  const int c = img.channels;
  const Taps tx = resample_taps(img.width, out_w);
  const Taps ty = resample_taps(img.height, out_h);

  std::vector<double> rows(static_cast<std::size_t>(img.height) * out_w * c);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int k = tx.first[x]; k < tx.first[x + 1]; ++k) s += tx.weight[k] * img.at(tx.index[k], y, ch);
        rows[(static_cast<std::size_t>(y) * out_w + x) * c + ch] = s;
      }

  ImageBuffer out(out_w, out_h, c);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int k = ty.first[y]; k < ty.first[y + 1]; ++k)
          s += ty.weight[k] * rows[(static_cast<std::size_t>(ty.index[k]) * out_w + x) * c + ch];
        out.at(x, y, ch) = static_cast<float>(std::clamp(s, 0.0, 1.0));
      }
  return out;
}

namespace {
ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int side) {
  ImageBuffer out(side, side, img.channels);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int ch = 0; ch < img.channels; ++ch) out.at(x, y, ch) = img.at(x0 + x, y0 + y, ch);
  return out;
}

void require_at_least(const ImageBuffer& img, int side, const char* op) {
  require(side >= 1, ErrorCode::invalid_argument, std::string(op) + ": side must be >= 1");
  require(img.width >= side && img.height >= side, ErrorCode::invalid_argument,
          std::string(op) + ": image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
              " is smaller than " + std::to_string(side) + "x" + std::to_string(side));
}
}  // namespace

ImageBuffer random_crop(const ImageBuffer& img, int side, std::mt19937_64& rng) {
  require_at_least(img, side, "random_crop");
  std::uniform_int_distribution<int> dx(0, img.width - side);
  std::uniform_int_distribution<int> dy(0, img.height - side);
  const int x0 = dx(rng);
  const int y0 = dy(rng);
  return crop(img, x0, y0, side);
}

ImageBuffer center_crop_resize(const ImageBuffer& img, int side) {
  require_at_least(img, side, "center_crop_resize");
  const int s = std::min(img.width, img.height);
  ImageBuffer square = crop(img, (img.width - s) / 2, (img.height - s) / 2, s);
  return s == side ? square : bicubic_resize(square, side, side);
}

ImageBuffer to_grayscale(const ImageBuffer& img) {
  require(img.channels == 3, ErrorCode::invalid_argument, "to_grayscale: image already has 1 channel");
  ImageBuffer out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      out.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return out;
}

ImageBuffer replicate_channels(const ImageBuffer& gray, int channels) {
  if (gray.channels == channels) return gray;
  require(gray.channels == 1 && channels == 3, ErrorCode::invalid_argument, "replicate_channels: expects 1 -> 3");
  ImageBuffer out(gray.width, gray.height, 3);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + static_cast<std::size_t>(c)] = gray.pixels[i];
  return out;
}

ImageBuffer quantize8(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (float& v : out.pixels) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  return out;
}

ImageBuffer gaussian_blur(const ImageBuffer& gray, double sigma) {
  require(gray.channels == 1, ErrorCode::invalid_argument, "gaussian_blur: expects a 1-channel image");
  require(sigma > 0, ErrorCode::invalid_argument, "gaussian_blur: sigma must be > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double total = 0;
  for (int i = -r; i <= r; ++i) total += k[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& v : k) v /= total;

  const int w = gray.width, h = gray.height;
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i) s += k[static_cast<std::size_t>(i + r)] * gray.at(std::clamp(x + i, 0, w - 1), y);
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  ImageBuffer out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i)
        s += k[static_cast<std::size_t>(i + r)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      out.at(x, y) = static_cast<float>(s);
    }
  return out;
}

std::vector<float> sobel_magnitude(const ImageBuffer& gray, std::vector<std::uint8_t>* direction_bins) {
  const int w = gray.width, h = gray.height;
  auto px = [&](int x, int y) { return static_cast<double>(gray.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1))); };
  std::vector<float> mag(static_cast<std::size_t>(w) * h);
  if (direction_bins) direction_bins->assign(mag.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
      const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                        (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      mag[i] = static_cast<float>(std::sqrt(gx * gx + gy * gy) / 4.0);
      if (direction_bins) {
        double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
        if (deg < 0) deg += 180.0;
        std::uint8_t bin = 0;
        if (deg >= 22.5 && deg < 67.5)
          bin = 1;
        else if (deg >= 67.5 && deg < 112.5)
          bin = 2;
        else if (deg >= 112.5 && deg < 157.5)
          bin = 3;
        (*direction_bins)[i] = bin;
      }
    }
  return mag;
}

ImageBuffer canny_edges(const ImageBuffer& gray, const CannyParams& params) {
  require(gray.channels == 1, ErrorCode::invalid_argument, "canny_edges: expects a 1-channel image");
  require(params.t_low > 0 && params.t_low < params.t_high, ErrorCode::invalid_argument,
          "canny_edges: thresholds must satisfy 0 < t_low < t_high");
  const int w = gray.width, h = gray.height;
  std::vector<std::uint8_t> bins;
  const std::vector<float> mag = sobel_magnitude(gaussian_blur(gray, params.sigma), &bins);
  auto m = [&](int x, int y) -> float {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0f;
    return mag[static_cast<std::size_t>(y) * w + x];
  };
  // Neighbour offsets along the gradient, negative side first.
  static constexpr int kDx[4] = {-1, -1, 0, 1};
  static constexpr int kDy[4] = {0, -1, -1, -1};

  // 0 = none, 1 = weak, 2 = strong
  std::vector<std::uint8_t> cls(mag.size(), 0);
  std::deque<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const float v = mag[i];
      if (v <= 0.0f) continue;
      const int b = bins[i];
      // Strict on one side, non-strict on the other, so a symmetric ridge keeps
      // exactly one pixel.
      if (!(v > m(x + kDx[b], y + kDy[b]) && v >= m(x - kDx[b], y - kDy[b]))) continue;
      if (v >= params.t_high) {
        cls[i] = 2;
        frontier.emplace_back(x, y);
      } else if (v >= params.t_low) {
        cls[i] = 1;
      }
    }
  while (!frontier.empty()) {
    auto [x, y] = frontier.front();
    frontier.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
        if (cls[j] == 1) {
          cls[j] = 2;
          frontier.emplace_back(nx, ny);
        }
      }
  }
  ImageBuffer out(w, h, 1);
  for (std::size_t i = 0; i < cls.size(); ++i) out.pixels[i] = cls[i] == 2 ? 1.0f : 0.0f;
  return out;
}

}  // namespace srgan::data
