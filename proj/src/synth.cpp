#include "srgan/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "srgan/error.hpp"

namespace srgan::data {

Family parse_family(const std::string& name) {
  if (name == "disks") return Family::disks;
  if (name == "stripes") return Family::stripes;
  if (name == "blocks") return Family::blocks;
  if (name == "clutter") return Family::clutter;
  fail(ErrorCode::usage, "unknown synthetic family '" + name + "' (expected disks, stripes, blocks or clutter)");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::disks: return "disks";
    case Family::stripes: return "stripes";
    case Family::blocks: return "blocks";
    case Family::clutter: return "clutter";
  }
  return "?";
}

namespace {

using Rgb = std::array<float, 3>;

class Painter {
 public:
  Painter(int side, std::mt19937_64& rng) : img_(side, side, 3), rng_(rng) {}

  double uni(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  Rgb color(double lo = 0.0, double hi = 1.0) {
    return {static_cast<float>(uni(lo, hi)), static_cast<float>(uni(lo, hi)), static_cast<float>(uni(lo, hi))};
  }

  void blend(int x, int y, const Rgb& c, double alpha) {
    if (alpha <= 0) return;
    alpha = std::min(alpha, 1.0);
    for (int ch = 0; ch < 3; ++ch) {
      float& p = img_.at(x, y, ch);
      p = static_cast<float>((1 - alpha) * p + alpha * c[static_cast<std::size_t>(ch)]);
    }
  }

  void gradient(const Rgb& a, const Rgb& b, double angle) {
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double side = img_.width;
    for (int y = 0; y < img_.height; ++y)
      for (int x = 0; x < img_.width; ++x) {
        const double t = std::clamp(0.5 + ((x - side / 2) * dx + (y - side / 2) * dy) / (side * 1.42), 0.0, 1.0);
        for (int ch = 0; ch < 3; ++ch)
          img_.at(x, y, ch) = static_cast<float>((1 - t) * a[static_cast<std::size_t>(ch)] + t * b[static_cast<std::size_t>(ch)]);
      }
  }

  // Anti-aliased filled disk.
  void disk(double cx, double cy, double r, const Rgb& c) {
    const int x0 = std::max(0, static_cast<int>(cx - r - 2)), x1 = std::min(img_.width - 1, static_cast<int>(cx + r + 2));
    const int y0 = std::max(0, static_cast<int>(cy - r - 2)), y1 = std::min(img_.height - 1, static_cast<int>(cy + r + 2));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        blend(x, y, c, std::clamp(r - d + 0.5, 0.0, 1.0));
      }
  }

  void rect(int x0, int y0, int x1, int y1, const Rgb& c) {
    for (int y = std::max(0, y0); y < std::min(img_.height, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(img_.width, x1); ++x) blend(x, y, c, 1.0);
  }

  // Anti-aliased bars of the given period and duty cycle inside a box.
  void stripes(double angle, double period, double phase, const Rgb& a, const Rgb& b, int x0, int y0, int x1, int y1) {
    const double nx = std::cos(angle), ny = std::sin(angle);
    for (int y = std::max(0, y0); y < std::min(img_.height, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(img_.width, x1); ++x) {
        const double u = (x + 0.5) * nx + (y + 0.5) * ny + phase;
        const double f = u / period - std::floor(u / period);
        // Distance (in px) to the nearest bar boundary at f = 0 or f = 0.5.
        const double dist = std::min({f, std::abs(f - 0.5), 1.0 - f}) * period;
        const double cover = std::clamp(dist + 0.5, 0.0, 1.0);
        const bool in_a = f < 0.5;
        const Rgb& inside = in_a ? a : b;
        const Rgb& outside = in_a ? b : a;
        blend(x, y, outside, 1.0);
        blend(x, y, inside, cover);
      }
  }

  ImageBuffer& image() { return img_; }

 private:
  ImageBuffer img_;
  std::mt19937_64& rng_;
};

const std::array<Rgb, 8> kBlockPalette = {{{0.90f, 0.10f, 0.10f},
                                           {0.10f, 0.65f, 0.20f},
                                           {0.15f, 0.25f, 0.90f},
                                           {0.95f, 0.85f, 0.10f},
                                           {0.05f, 0.80f, 0.85f},
                                           {0.85f, 0.15f, 0.80f},
                                           {0.95f, 0.95f, 0.95f},
                                           {0.08f, 0.08f, 0.08f}}};

void paint_disks(Painter& p) {
  p.gradient(p.color(0.1, 0.9), p.color(0.1, 0.9), p.uni(0, 2 * std::numbers::pi));
  const int count = p.pick(1, 3);
  const double side = p.image().width;
  for (int i = 0; i < count; ++i)
    p.disk(p.uni(0.2, 0.8) * side, p.uni(0.2, 0.8) * side, p.uni(0.1, 0.3) * side, p.color());
}

void paint_stripes(Painter& p) {
  const int side = p.image().width;
  p.stripes(p.uni(0, std::numbers::pi), p.uni(0.06, 0.19) * side, p.uni(0, 100), p.color(), p.color(), 0, 0, side, side);
}

void paint_blocks(Painter& p) {
  const int side = p.image().width;
  const auto& bg = kBlockPalette[static_cast<std::size_t>(p.pick(0, 7))];
  p.rect(0, 0, side, side, bg);
  const int count = p.pick(3, 6);
  for (int i = 0; i < count; ++i) {
    const int w = p.pick(side / 8, side / 2), h = p.pick(side / 8, side / 2);
    const int x = p.pick(0, side - w), y = p.pick(0, side - h);
    p.rect(x, y, x + w, y + h, kBlockPalette[static_cast<std::size_t>(p.pick(0, 7))]);
  }
}

void paint_clutter(Painter& p) {
  const int side = p.image().width;
  p.gradient(p.color(), p.color(), p.uni(0, 2 * std::numbers::pi));
  const int count = p.pick(8, 14);
  for (int i = 0; i < count; ++i) {
    const int kind = p.pick(0, 2);
    const int w = p.pick(side / 10, side / 3), h = p.pick(side / 10, side / 3);
    const int x = p.pick(-w / 2, side - w / 2), y = p.pick(-h / 2, side - h / 2);
    if (kind == 0)
      p.disk(x + w / 2.0, y + h / 2.0, std::min(w, h) / 2.0, p.color());
    else if (kind == 1)
      p.rect(x, y, x + w, y + h, kBlockPalette[static_cast<std::size_t>(p.pick(0, 7))]);
    else
      p.stripes(p.uni(0, std::numbers::pi), p.uni(3, 10), p.uni(0, 10), p.color(), p.color(), x, y, x + w, y + h);
  }
  auto& img = p.image();
  for (float& v : img.pixels) v = static_cast<float>(std::clamp(v + p.uni(-0.08, 0.08), 0.0, 1.0));
}

}  // namespace

ImageBuffer synth_image(Family family, std::uint64_t seed, int index, int side) {
  require(side >= 16, ErrorCode::invalid_argument, "synth_image: side must be >= 16");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(family), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  Painter p(side, rng);
  switch (family) {
    case Family::disks: paint_disks(p); break;
    case Family::stripes: paint_stripes(p); break;
    case Family::blocks: paint_blocks(p); break;
    case Family::clutter: paint_clutter(p); break;
  }
  return quantize8(p.image());
}

std::vector<ImageBuffer> synth_dataset(Family family, int n, std::uint64_t seed, int side) {
  require(n > 0, ErrorCode::usage, "synth_dataset: n must be > 0");
  std::vector<ImageBuffer> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(synth_image(family, seed, i, side));
  return out;
}

}  // namespace srgan::data
