#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srgan/image.hpp"

namespace srgan::data {

// Procedural desk-scale image families with distinct shape, colour and
// texture statistics. clutter is an unaligned multi-object mixture of the
// other three.
enum class Family { disks, stripes, blocks, clutter };

Family parse_family(const std::string& name);
std::string family_name(Family f);

// Image `index` of a family depends only on (family, seed, index), so a
// larger n extends a smaller one. Pixels are already quantized to 8 bits.
ImageBuffer synth_image(Family family, std::uint64_t seed, int index, int side = 128);
std::vector<ImageBuffer> synth_dataset(Family family, int n, std::uint64_t seed, int side = 128);

}  // namespace srgan::data
