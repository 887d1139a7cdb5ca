#pragma once

#include "pvvae/config.hpp"
#include "pvvae/data_synth.hpp"
#include "pvvae/diffusion_probe.hpp"
#include "pvvae/diagnostics.hpp"
#include "pvvae/trainer.hpp"

#include <nlohmann/json.hpp>
#include <torch/types.h>

#include <cstdint>
#include <filesystem>
#include <optional>

namespace pvvae {

/// Fresh session for `cfg` whose model, padding and discriminator weights are
/// copied from `src`; optimizer state and step counters start over.
TrainSession branch_session(const TrainSession& src, const ExperimentConfig& cfg);

/// Runs the video stage of `preset` (and the decoder stage for pr_motion_ft)
/// starting from `pretrained`. Stage budgets come from cfg.train.steps when
/// non-negative, else the stage defaults; `finetune_steps` likewise.
TrainSession train_preset(const TrainSession& pretrained, ExperimentConfig cfg, Preset preset,
                          const torch::Tensor& train_videos, int64_t video_steps, int64_t finetune_steps);

/// A trained latent flow model plus the standardization it was trained under.
struct FlowArtifact {
  FlowModelConfig config;
  std::vector<int64_t> latent_shape;  // (c, L, h, w)
  LatentStats stats;
  FlowNet net{nullptr};
  std::vector<double> losses;
};

/// Standardizes the posterior means of `train_videos` and fits a flow model.
FlowArtifact train_flow_artifact(VaeModel& model, const torch::Tensor& train_videos, const FlowModelConfig& cfg);

/// Samples `count` latents with the Euler sampler and decodes them in chunks.
torch::Tensor generate_clips(VaeModel& model, FlowArtifact& flow, int64_t count, uint64_t seed);

/// Directory with flow.json and PVT1 tensors; load throws FormatError or
/// DimensionError when the stored tensors do not fit the stored config.
void save_flow_artifact(const FlowArtifact& flow, const std::filesystem::path& dir);
FlowArtifact load_flow_artifact(const std::filesystem::path& dir);

struct GenerationReport {
  double frechet_proxy = 0.0;
  std::vector<double> flow_losses;
  torch::Tensor samples;  // decoded clips (N, 3, F, H, W)
};

/// Trains a rectified-flow model on standardized latent means of
/// `train_videos`, samples `count` clips and scores them against `reference`.
GenerationReport generation_probe(VaeModel& model, const torch::Tensor& train_videos, const torch::Tensor& reference,
                                  const FlowModelConfig& flow_cfg, int64_t count, uint64_t projection_seed);

struct Metrics {
  double psnr = 0.0;
  double ssim = 0.0;
  LtdProfile ltd;
  double prediction_mse = 0.0;
  double epe = 0.0;
  std::optional<double> frechet_proxy;
};

nlohmann::ordered_json to_json(const Metrics& m);

struct EvalOptions {
  bool flow_probe = true;
  /// Real clips for the Frechet proxy; undefined tensor skips generation.
  torch::Tensor reference;
};

/// Reconstruction, LTD, dropped-frame prediction and flow-probe metrics on
/// the val split; the probe is trained on the train split.
Metrics evaluate(TrainSession& session, const Corpus& corpus, const EvalOptions& options);

/// Dropped groups used for prediction_mse: eval.prediction_drop, or
/// floor((G - 1) / 2) when negative.
int64_t evaluation_drop(const ExperimentConfig& cfg);

}  // namespace pvvae
