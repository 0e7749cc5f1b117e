#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "srgan/network.hpp"

namespace srgan::nn {

// On-disk layout (all integers little-endian):
//   "SRGB" | version u32 | header-JSON length u32 | header JSON
//   | tensor count u32 | per tensor: name length u16, UTF-8 name, ndim u8,
//     dims u64 each, raw f32 data | CRC32 of every preceding byte (u32)
inline constexpr char kCheckpointMagic[4] = {'S', 'R', 'G', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Archive {
  nlohmann::json header;
  std::vector<NamedTensor<float>> tensors;
};

std::vector<std::uint8_t> encode_archive(const Archive& archive);
Archive decode_archive(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes through a sibling temp file and renames; the temp file is removed on
// any failure so a partial checkpoint never appears under the final name.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Network tensors are stored under their plain names. Extra tensors whose
// names contain '/' (training state) ride along and are ignored on load.
Archive network_archive(const Network<float>& net, nlohmann::json extra_header = nlohmann::json::object());

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path,
                     nlohmann::json extra_header = nlohmann::json::object());

Network<float> network_from_archive(const Archive& archive);
Network<float> load_checkpoint(const std::filesystem::path& path);
// Fails with ErrorCode::spec_mismatch when the stored spec differs.
Network<float> load_checkpoint(const std::filesystem::path& path, const NetworkSpec& expected);

}  // namespace srgan::nn
