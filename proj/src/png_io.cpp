#include "srgan/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "srgan/error.hpp"

namespace srgan::data {

namespace fs = std::filesystem;

ImageBuffer read_png(const fs::path& path, int channels) {
  require(channels == 1 || channels == 3, ErrorCode::invalid_argument, "read_png: channels must be 1 or 3");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    fail(ErrorCode::unsupported_format, "cannot decode '" + path.string() + "': " + image.message);
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    fail(ErrorCode::unsupported_format, "unsupported bit depth in '" + path.string() + "' (only 8-bit PNG is accepted)");
  }
  image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> raw(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr))
    fail(ErrorCode::unsupported_format, "cannot decode '" + path.string() + "': " + image.message);
  ImageBuffer out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  for (std::size_t i = 0; i < raw.size(); ++i) out.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  return out;
}

void write_png(const fs::path& path, const ImageBuffer& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::invalid_argument, "write_png: channels must be 1 or 3");
  std::vector<png_byte> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<png_byte>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, raw.data(), 0, nullptr))
    fail(ErrorCode::io, "cannot write '" + path.string() + "': " + image.message);
}

}  // namespace srgan::data
