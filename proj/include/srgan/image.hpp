#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace srgan::data {

// Channels-last raster with unit-interval float pixels.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, float fill = 0.0f);

  float at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float& at(int x, int y, int c = 0) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  std::size_t size() const noexcept { return pixels.size(); }
  bool same_shape(const ImageBuffer& o) const noexcept {
    return width == o.width && height == o.height && channels == o.channels;
  }
  // Throws unless every pixel lies in [0,1] and the buffer length matches.
  void validate() const;

  bool operator==(const ImageBuffer&) const = default;
};

// Keys cubic convolution kernel; a = -0.5 gives Catmull-Rom.
double cubic_kernel(double x, double a = -0.5);

// Separable cubic resampling with half-pixel centres and edge-clamped taps.
// When shrinking, the kernel is stretched by the scale factor so the result
// is antialiased. Output is clamped to [0,1].
ImageBuffer bicubic_resize(const ImageBuffer& img, int out_w, int out_h);

ImageBuffer random_crop(const ImageBuffer& img, int side, std::mt19937_64& rng);
// Centre square crop followed by a bicubic resize down to side x side.
ImageBuffer center_crop_resize(const ImageBuffer& img, int side);

// BT.601 luma.
ImageBuffer to_grayscale(const ImageBuffer& img);
ImageBuffer replicate_channels(const ImageBuffer& gray, int channels);

// Rounds every pixel to the nearest k/255.
ImageBuffer quantize8(const ImageBuffer& img);

struct CannyParams {
  double sigma = 1.0;
  double t_low = 0.1;
  double t_high = 0.2;
};

// Gaussian blur (radius ceil(3 sigma)) -> 3x3 Sobel -> 4-bin non-maximum
// suppression -> double threshold with 8-connected hysteresis. Gradient
// magnitude is divided by 4 so that a unit step scores 1. Output is binary.
ImageBuffer canny_edges(const ImageBuffer& gray, const CannyParams& params = {});

// Intermediate stages, exposed for inspection.
ImageBuffer gaussian_blur(const ImageBuffer& gray, double sigma);
std::vector<float> sobel_magnitude(const ImageBuffer& gray, std::vector<std::uint8_t>* direction_bins = nullptr);

}  // namespace srgan::data
