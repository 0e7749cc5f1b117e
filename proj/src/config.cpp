#include "srgan/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace srgan::train {

using nlohmann::json;

namespace {

const std::set<std::string> kTopLevelKeys = {"name",  "task",          "upscale_exponent", "dataset", "generator",
                                             "discriminator", "loss",  "optimizer",        "epochs",  "batch_size",
                                             "seed",  "out_dir",       "threads",          "canny"};

template <typename V>
V field(const json& j, const std::string& key, const V& fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<V>();
  } catch (const json::exception&) {
    fail(ErrorCode::config, "config field '" + path + key + "': unexpected value " + j.at(key).dump());
  }
}

template <typename F>
auto section(const std::string& name, F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::config) throw;
    fail(ErrorCode::config, "config section '" + name + "': " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  require(generator.role == nn::Role::generator, ErrorCode::config, "generator.role must be 'generator'");
  require(discriminator.role == nn::Role::discriminator, ErrorCode::config,
          "discriminator.role must be 'discriminator'");
  try {
    generator.validate();
    discriminator.validate();
  } catch (const Error& e) {
    fail(ErrorCode::config, e.what());
  }
  loss.validate();
  optimizer.validate();
  require(upscale_exponent >= 0 && upscale_exponent <= 4, ErrorCode::config, "upscale_exponent must be in [0,4]");
  require(generator.upscale_exponent == upscale_exponent, ErrorCode::config,
          "generator.upscale_exponent (" + std::to_string(generator.upscale_exponent) +
              ") differs from upscale_exponent (" + std::to_string(upscale_exponent) + ")");
  require(task != data::Task::color || upscale_exponent == 0, ErrorCode::config,
          "task 'color' requires upscale_exponent 0");
  require(dataset.side % (1 << upscale_exponent) == 0, ErrorCode::config,
          "dataset.side must be divisible by 2^upscale_exponent");
  require(generator.image_side == dataset.side, ErrorCode::config, "generator.image_side must equal dataset.side");
  require(discriminator.image_side == dataset.side, ErrorCode::config,
          "discriminator.image_side must equal dataset.side");
  require(discriminator.input_channels == 3, ErrorCode::config, "discriminator.input_channels must be 3");
  if (task == data::Task::sr)
    require(generator.input_channels == 3, ErrorCode::config, "task 'sr' requires generator.input_channels 3");
  else
    require(generator.input_channels == 1 || generator.input_channels == 3, ErrorCode::config,
            "generator.input_channels must be 1 or 3");
  require(dataset.train_count != 0, ErrorCode::config, "dataset.train_count must not be 0");
  require(epochs >= 1, ErrorCode::config, "epochs must be >= 1");
  require(batch_size >= 1, ErrorCode::config, "batch_size must be >= 1");
  require(threads >= 1, ErrorCode::config, "threads must be >= 1");
  require(canny.sigma > 0 && canny.t_low > 0 && canny.t_low < canny.t_high, ErrorCode::config,
          "canny: need sigma > 0 and 0 < t_low < t_high");
  require(!out_dir.empty(), ErrorCode::config, "out_dir must not be empty");
}

json ExperimentConfig::to_json() const {
  return {{"name", name},
          {"task", data::task_name(task)},
          {"upscale_exponent", upscale_exponent},
          {"dataset", dataset.to_json()},
          {"generator", generator.to_json()},
          {"discriminator", discriminator.to_json()},
          {"loss", loss.to_json()},
          {"optimizer", optimizer.to_json()},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"out_dir", out_dir},
          {"threads", threads},
          {"canny", {{"sigma", canny.sigma}, {"t_low", canny.t_low}, {"t_high", canny.t_high}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  require(j.is_object(), ErrorCode::config, "config must be a JSON object");
  for (const auto& [key, value] : j.items())
    require(kTopLevelKeys.count(key) != 0, ErrorCode::config, "config: unknown field '" + key + "'");
  ExperimentConfig c;
  c.name = field(j, "name", c.name, "");
  c.task = section("task", [&] {
    try {
      return data::parse_task(field<std::string>(j, "task", "sr", ""));
    } catch (const Error& e) {
      fail(ErrorCode::config, e.what());
    }
  });
  c.upscale_exponent = field(j, "upscale_exponent", c.task == data::Task::sr ? 2 : 0, "");
  require(j.contains("dataset"), ErrorCode::config, "config field 'dataset' is required");
  c.dataset = section("dataset", [&] { return data::DatasetManifest::from_json(j.at("dataset")); });

  // Network sections default to shapes implied by the task and dataset.
  nn::NetworkSpec g = nn::NetworkSpec::generator();
  g.upscale_exponent = c.upscale_exponent;
  g.image_side = c.dataset.side;
  g.input_channels = 3;
  json gj = g.to_json();
  if (j.contains("generator")) gj.merge_patch(j.at("generator"));
  c.generator = section("generator", [&] { return nn::NetworkSpec::from_json(gj); });

  nn::NetworkSpec d = nn::NetworkSpec::discriminator(64, c.dataset.side);
  json dj = d.to_json();
  if (j.contains("discriminator")) dj.merge_patch(j.at("discriminator"));
  c.discriminator = section("discriminator", [&] { return nn::NetworkSpec::from_json(dj); });

  if (j.contains("loss")) c.loss = section("loss", [&] { return LossConfig::from_json(j.at("loss")); });
  if (j.contains("optimizer"))
    c.optimizer = section("optimizer", [&] { return AdamConfig::from_json(j.at("optimizer")); });
  c.epochs = field(j, "epochs", c.epochs, "");
  c.batch_size = field(j, "batch_size", c.batch_size, "");
  c.seed = field(j, "seed", c.seed, "");
  c.out_dir = field(j, "out_dir", c.out_dir, "");
  c.threads = field(j, "threads", c.threads, "");
  if (j.contains("canny")) {
    const json& cj = j.at("canny");
    require(cj.is_object(), ErrorCode::config, "config field 'canny' must be an object");
    c.canny.sigma = field(cj, "sigma", c.canny.sigma, "canny.");
    c.canny.t_low = field(cj, "t_low", c.canny.t_low, "canny.");
    c.canny.t_high = field(cj, "t_high", c.canny.t_high, "canny.");
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::config, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string ExperimentConfig::content_hash() const {
  json j = to_json();
  j.erase("out_dir");
  j.erase("threads");
  j.erase("name");
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace srgan::train
