#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "srgan/config.hpp"
#include "srgan/metrics.hpp"
#include "srgan/trainer.hpp"

namespace srgan::harness {

namespace fs = std::filesystem;

// Checkpoint id that maps inputs straight to outputs (u = 0 only).
inline constexpr const char* kPassthrough = "passthrough";

struct SynthOptions {
  std::string family;
  int n = 0;
  std::uint64_t seed = 0;
  // Negative selects min(32, n / 2).
  int test_count = -1;
  fs::path out_dir;
  bool force = false;
};
data::DatasetManifest cmd_synth(const SynthOptions& opt);

struct TrainOptions {
  fs::path config;
  std::optional<fs::path> resume;
  std::optional<fs::path> out_dir;
  std::optional<std::uint64_t> seed;
};
train::TrainResult cmd_train(const TrainOptions& opt);

struct InferOptions {
  std::string checkpoint;
  fs::path input_dir;
  // Optional directory of same-named targets for the middle triptych panel.
  std::optional<fs::path> target_dir;
  fs::path out_dir;
};
// Returns the number of images written.
int cmd_infer(const InferOptions& opt);

struct EvalOptions {
  std::string checkpoint;
  // Experiment config whose dataset, task and exponent define the eval set.
  fs::path config;
  std::string extractor = "tinyconv";
  std::int64_t n = 32;
  // Score against the training split instead of the held-out test split.
  bool leakage = false;
  // CSV to append to; created with the header when missing.
  std::optional<fs::path> out_csv;
};
metrics::MetricsRow cmd_eval(const EvalOptions& opt);

// Loaded generator (or passthrough) ready to score one eval set.
metrics::MetricsRow evaluate_generator(const std::optional<nn::Network<float>>& generator, const train::ExperimentConfig& eval_cfg,
                                       const std::string& train_label, const metrics::FeatureExtractor& extractor,
                                       std::int64_t n, bool leakage);

struct MatrixConfig {
  std::vector<train::ExperimentConfig> train_configs;
  std::string extractor = "tinyconv";
  std::int64_t n = 32;
  fs::path out_dir = "runs/matrix";
  // Training runs land in <cache_dir>/<config hash>.
  fs::path cache_dir = "runs/cache";

  static MatrixConfig load(const fs::path& path);
};

struct MatrixResult {
  std::vector<std::string> train_labels;
  std::vector<std::string> eval_labels;
  // [train][eval]; nullopt marks a failed cell.
  std::vector<std::vector<std::optional<metrics::MetricsRow>>> cells;
  std::string extractor;
  std::int64_t n = 0;

  bool complete() const;
  // Grid CSV for one metric ("fid", "psnr_db" or "ssim"); failed cells read MISSING.
  std::string grid_csv(const std::string& metric) const;
  // Grouped-bar plot data: one group per eval set, one bar per train set.
  nlohmann::json plot_json() const;
};

struct MatrixOptions {
  fs::path config;
  std::optional<fs::path> out_dir;
  std::optional<std::string> extractor;
  std::optional<std::int64_t> n;
};
// Writes matrix.csv, grids/<metric>.csv, plot.json and matrix.json. Any
// failed cell is rethrown after the partial result has been written.
MatrixResult cmd_matrix(const MatrixOptions& opt);

// Merges every *.csv report directly inside `dir`, drops exact duplicates,
// rejects conflicting rows and sorts by (train, eval, extractor, n, seed).
metrics::MetricsReport merge_reports(const fs::path& dir);
metrics::MetricsReport cmd_report(const fs::path& dir, const std::optional<fs::path>& out_csv);

}  // namespace srgan::harness
