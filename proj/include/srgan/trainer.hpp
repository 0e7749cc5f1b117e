#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "srgan/adam.hpp"
#include "srgan/config.hpp"
#include "srgan/losses.hpp"
#include "srgan/metrics.hpp"
#include "srgan/network.hpp"

namespace srgan::train {

struct StepLosses {
  std::int64_t step = 0;
  int epoch = 0;
  double d_loss = 0;
  double g_adv = 0;
  double g_content = 0;
  double g_perceptual = 0;
  double total = 0;
};

// Raised when a step produces a non-finite activation, loss or gradient.
class NumericalAbort : public Error {
 public:
  NumericalAbort(const std::string& what, nlohmann::json snapshot)
      : Error(ErrorCode::numerical, what), snapshot_(std::move(snapshot)) {}
  const nlohmann::json& snapshot() const noexcept { return snapshot_; }

 private:
  nlohmann::json snapshot_;
};

inline constexpr const char* kLossHistoryHeader = "step,epoch,d_loss,g_adv,g_content,g_perceptual,total";
std::string format_history_row(const StepLosses& s);

struct TrainState {
  nn::Network<float> generator;
  nn::Network<float> discriminator;
  AdamState<float> g_opt;
  AdamState<float> d_opt;
  std::int64_t g_steps = 0;
  std::int64_t d_steps = 0;
  int epoch = 0;
  std::mt19937_64 data_rng;
  std::vector<StepLosses> history;
};

// Fresh networks and optimizer state derived from the config seed.
TrainState init_state(const ExperimentConfig& cfg);

// Discriminator update on (real, fake); fake is treated as a constant.
// Returns the discriminator loss.
double discriminator_step(TrainState& state, const Tensor& real, const Tensor& fake, const AdamConfig& opt,
                          std::int64_t step);

// Generator update through the frozen discriminator (batch statistics, no
// running-average updates, no discriminator gradients). Fills the generator
// fields of `out`.
void generator_step(TrainState& state, const data::SampleBatch& batch, const LossConfig& loss,
                    const metrics::ConvFeatureNet<float>& feature_net, const AdamConfig& opt, StepLosses& out);

// One discriminator update on (real, detached fake), then one generator
// update through the frozen discriminator. A non-finite value throws
// NumericalAbort and leaves the state as it was before the step.
StepLosses train_step(TrainState& state, const data::SampleBatch& batch, const LossConfig& loss,
                      const metrics::ConvFeatureNet<float>& feature_net, const AdamConfig& opt);

enum class Convergence { converged, diverged };
const char* convergence_name(Convergence c);

// Compares the mean content loss (or total loss when the content weight is 0)
// of the first and last epochs; the run converged when the last is below
// ratio times the first.
Convergence detect_divergence(const std::vector<StepLosses>& history, double ratio = 0.9);

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<StepLosses> history;
  Convergence convergence = Convergence::converged;
};

// Training-state checkpoint: generator tensors under their plain names,
// discriminator under "disc/", Adam moments under "opt/". Loadable as a
// plain generator checkpoint.
void save_train_state(const TrainState& state, const ExperimentConfig& cfg, const std::filesystem::path& path);
TrainState load_train_state(const std::filesystem::path& path, ExperimentConfig* cfg_out = nullptr);

// Runs cfg.epochs epochs (continuing from `resume` when given) and writes
// epoch_XXX.ckpt, loss_history.csv and run.json into cfg.out_dir.
TrainResult train(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& resume = std::nullopt);

}  // namespace srgan::train
