#pragma once

#include "pvvae/core_model.hpp"
#include "pvvae/data_synth.hpp"
#include "pvvae/diffusion_probe.hpp"
#include "pvvae/losses.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pvvae {

enum class Stage { kImagePretrain, kVideoPredictive, kDecoderFinetune };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
/// Default step budget of each stage at desk scale.
int64_t default_stage_steps(Stage s);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  Stage stage = Stage::kVideoPredictive;
  /// Steps of the selected stage; negative means default_stage_steps(stage).
  int64_t steps = -1;
  int64_t batch_size = 4;
  double learning_rate = 1e-3;
  int64_t warmup_steps = 100;
  /// Cosine schedule ends at learning_rate / lr_decay_factor.
  double lr_decay_factor = 10.0;
  double max_drop_ratio = 1.0;
  OptimizerConfig optimizer;
  double disc_learning_rate = 1e-4;
  int64_t disc_width = 16;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  /// 0 disables periodic checkpoints.
  int64_t checkpoint_every = 0;

  int64_t resolved_steps() const { return steps < 0 ? default_stage_steps(stage) : steps; }
  void validate() const;
};

struct EvalConfig {
  std::vector<int64_t> ltd_intervals{1, 2, 3, 4};
  /// Dropped groups for prediction_mse; negative means floor((G - 1) / 2).
  int64_t prediction_drop = -1;
  int64_t probe_steps = 500;
  int64_t probe_hidden = 32;
  double probe_learning_rate = 3e-3;
  int64_t probe_batch_size = 8;
  int64_t generated_clips = 256;
  uint64_t projection_seed = 1234;
};

struct ExperimentConfig {
  uint64_t seed = 0;
  VaeConfig model;
  LossWeights loss;
  TrainConfig train;
  /// Scale of Gaussian latent padding; the strategy lives in model.padding_strategy.
  double padding_sigma = 1.0;
  SceneRanges data;
  EvalConfig eval;
  FlowModelConfig flow;

  /// Desk-scale defaults: toy model, perceptual term off.
  static ExperimentConfig toy();

  /// Propagates `seed` into the model, trainer and flow sub-configs.
  void apply_seed(uint64_t s);
  void validate() const;
};

/// Rows of the incremental ablation ladder.
enum class Preset { kBaseline, kPredictive, kPredictiveMotion, kPredictiveMotionFinetune };

std::string to_string(Preset p);
Preset preset_from_string(const std::string& s);
/// baseline: r = 0, no diff loss; pr: r = 1; pr_motion: r = 1 with diff loss;
/// pr_motion_ft: pr_motion followed by decoder fine-tuning.
void apply_preset(ExperimentConfig& cfg, Preset p);
bool preset_finetunes(Preset p);

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig base = ExperimentConfig::toy());
ExperimentConfig load_experiment(const std::string& path);

/// Value of PVVAE_SEED if set (ConfigError when it is not an unsigned integer).
std::optional<uint64_t> seed_from_env();

}  // namespace pvvae
