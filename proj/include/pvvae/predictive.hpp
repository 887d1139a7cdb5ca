#pragma once

#include "pvvae/core_model.hpp"
#include "pvvae/rng.hpp"

#include <torch/nn/module.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

#include <cstdint>
#include <optional>

namespace pvvae {

/// One predictive-reconstruction decision: of `groups` latent-aligned frame
/// groups, the trailing `dropped` are withheld from the encoder.
struct DropPlan {
  int64_t groups = 1;
  int64_t dropped = 0;
  double max_ratio = 0.0;
  int64_t p_t = 1;

  int64_t observed_frames() const { return 1 + (groups - 1 - dropped) * p_t; }
  int64_t observed_latents() const { return groups - dropped; }
  int64_t total_frames() const { return 1 + (groups - 1) * p_t; }
};

/// G = 1 + T / p_t; throws InputError when T is not a multiple of p_t.
int64_t partition_groups(int64_t T, int64_t p_t);

/// Inclusive 1-indexed pixel-frame range covered by group g (1-indexed).
struct FrameRange {
  int64_t first;
  int64_t last;
};
FrameRange group_frames(int64_t g, int64_t p_t);

/// floor((G - 1) * r), the largest admissible number of dropped groups.
int64_t max_dropped_groups(int64_t groups, double max_ratio);

/// k ~ U{0, ..., floor((G - 1) * r)}.
int64_t sample_drop(int64_t groups, double max_ratio, Rng& rng);

DropPlan make_plan(int64_t groups, int64_t dropped, double max_ratio, int64_t p_t);

/// Keeps the first 1 + T - k * p_t frames of a (B, 3, 1+T, H, W) batch.
torch::Tensor truncate_clip(const torch::Tensor& video, int64_t k, int64_t p_t);
VideoClip truncate_clip(const VideoClip& clip, int64_t k, int64_t p_t);

/// Source of the latent frames that stand in for dropped groups.
///
/// Gaussian mode draws sigma * eps with no gradient; learnable mode broadcasts a
/// single trained token of shape (1, c, 1, h, w) to every dropped position.
class LatentPaddingImpl : public torch::nn::Module {
 public:
  LatentPaddingImpl(PaddingStrategy strategy, int64_t channels, int64_t height, int64_t width,
                    double sigma = 1.0);

  PaddingStrategy strategy() const { return strategy_; }
  double sigma() const { return sigma_; }

  /// Appends k padding frames to z_obs (B, c, L, h, w). Throws ConfigError if
  /// the token shape does not match z_obs.
  torch::Tensor pad(const torch::Tensor& z_obs, int64_t k, Rng& rng);

  torch::Tensor token;

 private:
  PaddingStrategy strategy_;
  double sigma_;
};
TORCH_MODULE(LatentPadding);

/// Convenience for a model: sizes the token from the latent grid of an H x W input.
LatentPadding make_padding(const VaeConfig& cfg, int64_t height, int64_t width, double sigma = 1.0);

torch::Tensor pad_latents(const torch::Tensor& z_obs, int64_t k, LatentPadding& padding, Rng& rng);

struct PredictiveOptions {
  /// Overrides the sampled k (used for evaluation and the decoder fine-tuning stage).
  std::optional<int64_t> forced_drop;
  /// Sample z from the posterior; otherwise decode the posterior mean.
  bool sample_latents = true;
  /// Run the encoder without building a graph (frozen-encoder training).
  bool encoder_no_grad = false;
};

struct PredictiveOutput {
  torch::Tensor recon;  // (B, 3, 1+T, H, W), same shape as the input
  LatentPosterior posterior;  // over the observed prefix only
  torch::Tensor latents;  // padded latent sequence, G frames
  DropPlan plan;
};

/// Partial-to-complete reconstruction: encode the observed prefix, pad the
/// latent sequence back to G frames and decode the whole clip.
PredictiveOutput predictive_forward(VaeModel& model, LatentPadding& padding, const torch::Tensor& video,
                                    double max_ratio, Rng& rng, const PredictiveOptions& options = {});

}  // namespace pvvae
