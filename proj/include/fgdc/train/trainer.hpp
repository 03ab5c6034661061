#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgdc/data/dataset.hpp"
#include "fgdc/loss/losses.hpp"
#include "fgdc/loss/metrics.hpp"
#include "fgdc/train/adam.hpp"

namespace fgdc {

constexpr int kTrainConfigSchema = 1;

struct TrainConfig {
  std::string name = "micro";
  std::string model = "micro";
  AblationFlags ablation;
  long stage1_iters = 2000;
  long stage2_iters = 1500;
  // Stage 2 only, over stage1_iters + stage2_iters.
  bool one_stage = false;
  int batch = 4;
  int crop = 64;
  bool flips = true;
  bool time_reversal = true;
  // The published 1e-4 barely moves a from-scratch micro model in a few
  // thousand steps.
  double base_lr = 1e-3;
  double final_lr = 1e-5;
  double clip_norm = 1.0;
  LossWeights weights;
  bool single_level_content = false;
  bool no_freq_loss = false;
  int log_every = 100;
  std::uint64_t seed = 0;

  // "micro" is sized for a single CPU core; "paper" records the published
  // schedule and is not meant to run on a desk machine.
  static TrainConfig preset(const std::string& name);
  ModelConfig model_config() const;
  LossOptions loss_options() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Rejects unknown schema versions and out-of-range values with DataError.
void from_json(const nlohmann::json& j, TrainConfig& c);

// Receives one JSON object per logged iteration.
using LogSink = std::function<void(const nlohmann::json&)>;

struct StageSummary {
  long iterations = 0;
  double seconds = 0;
  nlohmann::json last;  // last logged record
};

// Stage 1: fixed lr, encoder/fen/frn only, loss L_to + lambda_dis L_dis.
// Parameters outside the flow step keep their exact values.
StageSummary train_stage1(Model<float>& model, const TrainConfig& cfg,
                          std::span<const TripletSample> data, const LogSink& log = {});

// Stage 2: cosine decay from base_lr to final_lr, all parameters, full loss.
// `iterations` overrides cfg.stage2_iters when positive.
StageSummary train_stage2(Model<float>& model, const TrainConfig& cfg,
                          std::span<const TripletSample> data, const LogSink& log = {},
                          long iterations = 0);

// Runs both stages, or a single stage-2 run of equal length when one_stage.
std::vector<StageSummary> train(Model<float>& model, const TrainConfig& cfg,
                                std::span<const TripletSample> data,
                                const LogSink& log = {});

// Reproducible batch sampler: epoch-wise permutations plus per-sample
// augmentation seeds, all derived from (seed, stage, iteration).
std::vector<TripletSample> sample_batch(std::span<const TripletSample> data,
                                        const TrainConfig& cfg, int stage, long iteration);

// Checkpoint with the model config stored as metadata "config".
void save_model(const std::filesystem::path& path, const Model<float>& model);
Model<float> load_model(const std::filesystem::path& path);

struct EvalRecord {
  MetricRecord final_frame;
  MetricRecord anchor;  // metrics of the flow-step anchor
  std::optional<double> epe_t1;
};

struct EvalSummary {
  std::vector<EvalRecord> records;
  double mean_psnr = 0, mean_ssim = 0, mean_ie = 0;
  double mean_anchor_psnr = 0;
  std::optional<double> mean_epe;  // over both directions, valid pixels
};

// One sample at a time, no gradients. EPE uses the sample's validity mask
// when present.
EvalSummary evaluate(const Model<float>& model, std::span<const TripletSample> data);

}  // namespace fgdc
