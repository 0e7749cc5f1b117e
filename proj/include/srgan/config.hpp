#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "srgan/adam.hpp"
#include "srgan/dataset.hpp"
#include "srgan/losses.hpp"
#include "srgan/network.hpp"

namespace srgan::train {

// One flat JSON file fully describing a training run.
struct ExperimentConfig {
  std::string name = "run";
  data::Task task = data::Task::sr;
  int upscale_exponent = 2;
  data::DatasetManifest dataset;
  nn::NetworkSpec generator = nn::NetworkSpec::generator();
  nn::NetworkSpec discriminator = nn::NetworkSpec::discriminator();
  LossConfig loss;
  AdamConfig optimizer;
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/run";
  int threads = 1;
  data::CannyParams canny;

  // Cross-field checks (sides, channel counts, task/exponent rules).
  void validate() const;
  nlohmann::json to_json() const;
  // Unknown keys and type errors are reported with their dotted field path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);

  // FNV-1a over the canonical JSON, excluding name, out_dir and threads.
  std::string content_hash() const;
};

}  // namespace srgan::train
