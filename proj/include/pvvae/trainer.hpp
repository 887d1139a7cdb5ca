#pragma once

#include "pvvae/config.hpp"
#include "pvvae/core_model.hpp"
#include "pvvae/losses.hpp"
#include "pvvae/predictive.hpp"

#include <nlohmann/json.hpp>
#include <torch/optim/adamw.h>
#include <torch/types.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

namespace pvvae {

struct StepRecord {
  Stage stage = Stage::kVideoPredictive;
  int64_t stage_step = 0;
  int64_t global_step = 0;
  double lr = 0.0;
  double grad_norm = 0.0;
  LossReport loss;
  /// Dropped groups per clip of the batch.
  std::vector<int64_t> dropped;
};

nlohmann::ordered_json to_json(const StepRecord& r);
StepRecord step_record_from_json(const nlohmann::json& j);

/// Linear warmup to the base rate, then cosine decay to base / lr_decay_factor
/// reached on the last step of the stage.
double learning_rate_at(const TrainConfig& cfg, int64_t step, int64_t total_steps);

/// Indices of the clips in batch `step`: epoch-wise permutations of [0, n)
/// seeded by (seed, stage, epoch), so any step is addressable without replay.
std::vector<int64_t> batch_indices(uint64_t seed, Stage stage, int64_t step, int64_t batch_size, int64_t n);

/// Everything the staged schedule mutates. Per-step randomness is derived from
/// (seed, stage, stage_step), so the session state below is all a resume needs.
class TrainSession {
 public:
  explicit TrainSession(ExperimentConfig cfg);

  TrainSession(TrainSession&&) noexcept = default;
  TrainSession& operator=(TrainSession&&) noexcept = default;

  /// Starts a stage: resets stage_step and rebuilds the generator optimizer
  /// over the parameters the stage trains.
  void begin_stage(Stage s, int64_t steps);

  /// Parameters updated by the current stage (encoder and padding are
  /// excluded during decoder fine-tuning).
  std::vector<torch::Tensor> trainable_parameters() const;

  ExperimentConfig config;
  VaeModel model{nullptr};
  LatentPadding padding{nullptr};
  PatchDiscriminator disc{nullptr};
  PerceptualExtractor extractor{nullptr};

  Stage stage = Stage::kVideoPredictive;
  int64_t stage_step = 0;
  int64_t stage_steps = 0;
  int64_t global_step = 0;
  std::vector<StepRecord> history;

  std::unique_ptr<torch::optim::AdamW> gen_opt;
  std::unique_ptr<torch::optim::AdamW> disc_opt;
};

/// One optimization step of the current stage on `videos` (N, 3, 1+T, H, W).
/// Throws TrainingAborted on a non-finite loss or gradient.
StepRecord train_step(TrainSession& session, const torch::Tensor& videos);

using StepCallback = std::function<void(const StepRecord&)>;

/// Runs the remaining steps of the current stage. When `checkpoint_dir` is
/// non-empty and train.checkpoint_every > 0, checkpoints are written there.
std::vector<StepRecord> run_stage(TrainSession& session, const torch::Tensor& videos,
                                  const std::filesystem::path& checkpoint_dir = {}, const StepCallback& on_step = {});

/// begin_stage followed by run_stage.
std::vector<StepRecord> train_stage(TrainSession& session, const torch::Tensor& videos, Stage stage, int64_t steps);

/// Frozen-encoder stage: k = 0 on every step and the adversarial term always on.
std::vector<StepRecord> finetune_decoder(TrainSession& session, const torch::Tensor& videos, int64_t steps);

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const TrainSession& session, const std::filesystem::path& dir);
/// Rebuilds the session from the stored config. Throws FormatError on an
/// unknown version.
TrainSession load_checkpoint(const std::filesystem::path& dir);
/// Restores state into an existing session; throws DimensionError naming the
/// first parameter whose stored shape differs from the session's model.
void load_checkpoint_into(TrainSession& session, const std::filesystem::path& dir);

}  // namespace pvvae
