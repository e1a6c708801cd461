#pragma once

// Losses, training-query sampling and the two-stage optimization schedule.
//
// Stage 1 fits the voxel encoder and the coarse decoder to the coarse
// occupancy volumes. Stage 2 fits the pixel encoder and the implicit head to
// sampled query labels; the voxel encoder is frozen unless configured otherwise.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "voxpix/datagen.hpp"
#include "voxpix/implicit.hpp"

namespace voxpix {

struct TrainingConfig {
  // Model selection (preset plus the fusion and ablation switches).
  std::string preset = "paper";
  FusionMode fusion = FusionMode::early_3d;
  FeatureMask mask = FeatureMask::fused;
  double offset_step = 0.0722;
  bool offset_negative = true;

  double gamma = 0.7;
  int q_per_image = 5000;
  double noise_sigma = 0.05;
  double uniform_ratio = 1.0 / 16.0;
  double lr = 1e-3;
  double lr_stage2 = 1e-3;
  std::vector<int> lr_drop_epochs{8, 23, 40};
  double lr_drop_factor = 10.0;
  int stage1_epochs = 30;
  int stage2_end_epoch = 45;
  int batch_stage1 = 30;
  int batch_stage2 = 36;
  bool freeze_voxel_encoder_stage2 = true;
  double rms_alpha = 0.99;
  double rms_eps = 1e-8;

  // Dataset and evaluation plumbing used by the command-line driver.
  int n_train = 200;
  int n_test = 50;
  std::uint64_t data_seed = 0;
  int resolution = 128;
  int eval_samples = 10000;
  int field_batch = 4096;

  ModelConfig model_config() const;
  void validate() const;

  // Flat key=value text listing every field.
  std::string to_text() const;
  static TrainingConfig from_text(const std::string& text);
  static TrainingConfig load(const std::filesystem::path& path);
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;
  std::string provenance;  // "published" or "chosen"
  std::string help;
};
std::vector<ConfigKeyInfo> training_config_keys();

// Learning rate during `epoch` (1-based, counted across both stages). Each
// stage starts at its base rate (lr, lr_stage2) and divides by lr_drop_factor at every drop epoch it
// has passed since its first epoch.
double learning_rate(const TrainingConfig& config, int stage, int epoch);
int stage_first_epoch(const TrainingConfig& config, int stage);
int stage_last_epoch(const TrainingConfig& config, int stage);

// Weighted cross-entropy of a probability volume against {0,1} labels,
// -mean(gamma V log P + (1 - gamma)(1 - V) log(1 - P)). Writes d loss / d pred
// into `grad` when given. Predictions of exactly 0 or 1 are rejected.
template <class T>
double loss_geo(std::span<const T> pred, std::span<const float> target, double gamma, T* grad = nullptr);

// Mean squared error between predicted occupancies and labels.
template <class T>
double loss_query(std::span<const T> pred, std::span<const float> target, T* grad = nullptr);

std::vector<QuerySample> sample_training_queries(const DatasetRecord& record, const TrainingConfig& config,
                                                 std::uint64_t seed);

struct LossLogRow {
  int epoch;
  int step;
  std::string loss_name;
  double value;
  double lr;
};

void write_loss_log(const std::filesystem::path& path, std::span<const LossLogRow> rows);
std::vector<LossLogRow> read_loss_log(const std::filesystem::path& path);

struct TrainOptions {
  std::uint64_t seed = 0;
  // Called after each epoch with the epoch's mean loss.
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

// Each returns the mean loss of the final epoch and appends to `log`.
double train_stage1(Model<float>& model, std::span<const DatasetRecord> data, const TrainingConfig& config,
                    std::vector<LossLogRow>& log, const TrainOptions& options = {});
double train_stage2(Model<float>& model, std::span<const DatasetRecord> data, const TrainingConfig& config,
                    std::vector<LossLogRow>& log, const TrainOptions& options = {});

}  // namespace voxpix
