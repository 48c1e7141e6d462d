#pragma once

// Alternating PatchGAN training, spatial k-fold cross-validation and the
// mask / median-filter / loss ablation grid.

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mswin/nn/discriminator.hpp"
#include "mswin/nn/generator.hpp"
#include "mswin/nn/losses.hpp"
#include "mswin/synthetic.hpp"

namespace mswin::nn {

using synth::DatasetMode;
using synth::TrainSample;

struct AblationConfig {
  bool use_mask = true;
  bool use_median_filter = true;
  LossSelection losses{};
  DatasetMode mode = DatasetMode::Estimation;

  // Style transfer always trains L1 + cGAN without a mask.
  AblationConfig normalized() const;
  std::string label() const;
};

nlohmann::json to_json(const AblationConfig& a);
AblationConfig ablation_config_from_json(const nlohmann::json& j);

struct OptimizerConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
};

struct TrainOptions {
  int steps = 200;
  int batch_size = 4;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer{};
  int log_every = 0;  // 0: silent
  int val_every = 0;  // 0: no periodic validation
  float median_threshold = 240.0f;
  int median_kernel = 3;
  int mc_samples = 1;  // stochastic forward passes averaged at evaluation
};

nlohmann::json to_json(const TrainOptions& o);
TrainOptions train_options_from_json(const nlohmann::json& j, TrainOptions base = {});

struct StepRecord {
  int step = 0;
  double loss_d = 0;
  double loss_g = 0;  // adversarial part
  double recon = 0;   // unweighted sum of selected reconstruction terms
  double total_g = 0;
};

struct Metrics {
  double mae = 0;
  double rmse = 0;
  std::optional<double> r2;
  double ssim = 0;
  std::size_t pixels = 0;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const Metrics& m);

struct Batch {
  torch::Tensor u;     // [B, Cu, H, W]
  torch::Tensor x;     // [B, Cx, H, W]
  torch::Tensor mask;  // [B, 1, H, W]
};

Batch make_batch(const std::vector<const TrainSample*>& samples);

// Fill channel counts, size, mask use and output activation from the data.
void configure(GeneratorConfig& g, DiscriminatorConfig& d, const AblationConfig& abl, const TrainSample& sample);

struct TrainResult {
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  GeneratorConfig generator_cfg;
  DiscriminatorConfig discriminator_cfg;
  std::vector<StepRecord> trace;
  std::vector<std::pair<int, Metrics>> validation;
};

using StepCallback = std::function<void(const StepRecord&)>;

TrainResult train(const std::vector<const TrainSample*>& train_set, const std::vector<const TrainSample*>& val_set,
                  GeneratorConfig gen_cfg, DiscriminatorConfig disc_cfg, const AblationConfig& abl,
                  const TrainOptions& opts, const StepCallback& on_step = {});

// Averages opts.mc_samples stochastic passes. Output [B, Cx, H, W].
torch::Tensor predict(Generator& gen, const torch::Tensor& u, const torch::Tensor& mask, int mc_samples = 1);

// Median filter on the 0-255 rendering of a model output channel.
Grid postprocess(const Grid& pred, OutputActivation act, float threshold, int kernel);

// Pooled MAE/RMSE/R^2 and mean per-tile SSIM. Estimation is scored on mask
// pixels, style transfer on every pixel.
Metrics evaluate_samples(Generator& gen, const std::vector<const TrainSample*>& samples, const AblationConfig& abl,
                         const TrainOptions& opts);

// Same scoring for precomputed outputs, preds[sample][channel] in model
// units (used for the identity baseline too).
Metrics score(const std::vector<std::vector<Grid>>& preds, const std::vector<const TrainSample*>& samples,
              DatasetMode mode);

struct FoldResult {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  Metrics test;
};

struct CvResult {
  std::vector<FoldResult> folds;
  Metrics mean;
  Metrics stddev;
  std::string fold_hash;
};

nlohmann::json to_json(const CvResult& r);

struct CvOptions {
  int k = 5;
  int max_folds = 0;  // 0: run every fold
};

// Fold of tile i = i * k / n over the stored tile order (spatially
// contiguous). Validation = last 20% of the remaining tiles.
std::vector<int> fold_assignment(std::size_t n_tiles, int k);
std::string fold_hash(const std::vector<int>& folds);

struct FoldSplit {
  std::vector<const TrainSample*> train, val, test;
};
FoldSplit split_fold(const std::vector<TrainSample>& samples, const std::vector<int>& folds, int fold);

CvResult cross_validate(const std::vector<TrainSample>& samples, const CvOptions& cv, const GeneratorConfig& gen_cfg,
                        const DiscriminatorConfig& disc_cfg, const AblationConfig& abl, const TrainOptions& opts);

struct AblationRow {
  std::string group;  // "mask_filter" or "loss"
  AblationConfig config;
  CvResult result;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::string fold_hash;
  std::size_t trainings = 0;  // distinct trained configurations
  std::optional<std::size_t> best_mask_filter_row;  // lowest mean MAE per group
  std::optional<std::size_t> best_loss_row;
  bool mask_filter_winner_matches_reference = false;  // mask on, filter on
  bool loss_winner_matches_reference = false;         // L2 + SmoothL1

  nlohmann::json to_json() const;
};

// 4 mask x filter cells (L2 + SmoothL1) followed by the 7 loss combinations
// (mask and filter on).
std::vector<std::pair<std::string, AblationConfig>> default_ablation_grid();

AblationTable run_ablation(const std::vector<TrainSample>& samples,
                           const std::vector<std::pair<std::string, AblationConfig>>& grid, const CvOptions& cv,
                           const GeneratorConfig& gen_cfg, const DiscriminatorConfig& disc_cfg,
                           const TrainOptions& opts);

}  // namespace mswin::nn
