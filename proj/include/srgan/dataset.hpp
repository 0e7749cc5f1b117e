#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "srgan/image.hpp"
#include "srgan/synth.hpp"
#include "srgan/tensor.hpp"

namespace srgan::data {

enum class Task { sr, color, edges };
Task parse_task(const std::string& s);
std::string task_name(Task t);

enum class CropPolicy { center_resize, random_crop };

struct DatasetManifest {
  // "synthetic:<family>" or "dir:<path>".
  std::string source;
  // -1 means "all remaining images" once the test split has been taken.
  int train_count = 200;
  int test_count = 32;
  CropPolicy crop = CropPolicy::center_resize;
  int side = 128;
  std::uint64_t seed = 0;
  // Explicit split lists (file names relative to the directory). When both
  // are present they replace the seeded shuffle.
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  // Short label used in report rows, e.g. "disks".
  std::string label() const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ImageBuffer> train;
  std::vector<ImageBuffer> test;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

// Reads 8-bit PNGs from `dir`. Files are ordered by name, shuffled with the
// manifest seed, then decoded in that order; undecodable files are skipped
// with a warning. Train and test splits are disjoint.
Dataset ingest_directory(const std::filesystem::path& dir, const DatasetManifest& manifest);

// Dispatches on manifest.source.
Dataset load_dataset(const DatasetManifest& manifest);

// Writes n PNGs plus manifest.json (family, seed, split lists). The last
// test_count images form the test split.
DatasetManifest write_synthetic_dataset(Family family, int n, std::uint64_t seed, int test_count,
                                        const std::filesystem::path& out_dir, bool force);

struct Pair {
  ImageBuffer input;
  ImageBuffer target;
};

// sr: bicubic downscale by 2^u. color: grayscale at full size (u must be 0).
// edges: Canny on the grayscale target, then bicubic downscale by 2^u.
Pair make_pair(const ImageBuffer& target, Task task, int u, const CannyParams& canny = {});

// Images in [0,1] -> (N,C,H,W) tensor in [-1,1]; 1-channel images are
// replicated when channels == 3.
Tensor images_to_tensor(const std::vector<const ImageBuffer*>& images, int channels);
// Sample n of a network-range tensor back to a clamped [0,1] image.
ImageBuffer tensor_to_image(const Tensor& t, std::int64_t n);

struct SampleBatch {
  Tensor input;
  Tensor target;
  Task task = Task::sr;
  int upscale_exponent = 0;
};

SampleBatch make_batch(const std::vector<const Pair*>& pairs, Task task, int u, int input_channels);

}  // namespace srgan::data
