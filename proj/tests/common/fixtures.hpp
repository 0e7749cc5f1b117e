#pragma once

#include <string>

#include "srgan/config.hpp"

namespace fixture {

// Desk-sized experiment that trains in well under a second per epoch.
inline srgan::train::ExperimentConfig tiny_config(const std::string& family, const std::string& task, int u,
                                                   const std::string& out_dir, int epochs = 2) {
  nlohmann::json j = {
      {"name", "tiny-" + family},
      {"task", task},
      {"upscale_exponent", u},
      {"dataset", {{"source", "synthetic:" + family}, {"train_count", 8}, {"test_count", 4}, {"side", 16}, {"seed", 5}}},
      {"generator", {{"base_channels", 4}, {"n_residual_blocks", 1}}},
      {"discriminator", {{"base_channels", 2}, {"dense_hidden", 8}}},
      {"optimizer", {{"lr", 1e-3}}},
      {"epochs", epochs},
      {"batch_size", 3},
      {"seed", 7},
      {"out_dir", out_dir}};
  if (task != "sr") j["generator"]["input_channels"] = 1;
  return srgan::train::ExperimentConfig::from_json(j);
}

}  // namespace fixture
