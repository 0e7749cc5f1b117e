#pragma once

#include <filesystem>

#include "srgan/image.hpp"

namespace srgan::data {

// Decodes an 8-bit PNG to the requested channel count (1 or 3). 16-bit files
// are rejected with ErrorCode::unsupported_format ("unsupported bit depth").
ImageBuffer read_png(const std::filesystem::path& path, int channels = 3);

// Writes 8-bit gray or RGB; pixels are rounded to the nearest k/255.
void write_png(const std::filesystem::path& path, const ImageBuffer& img);

}  // namespace srgan::data
