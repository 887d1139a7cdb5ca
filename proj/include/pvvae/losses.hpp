#pragma once

#include "pvvae/core_model.hpp"

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

#include <cstdint>

namespace pvvae {

struct LossWeights {
  double lambda_rec = 1.0;
  double lambda_lpips = 0.1;
  double lambda_gan = 0.05;
  double lambda_kl = 1e-6;
  int64_t gan_start_step = 5000;
  /// Multiplier on the temporal-difference term inside the lambda_rec bracket;
  /// 0 disables the motion-aware objective.
  double diff_weight = 1.0;

  /// Throws ConfigError on negative or non-finite weights.
  void validate() const;
};

struct LossComponents {
  double mse = 0.0;
  double diff = 0.0;
  double lpips = 0.0;
  double gan_g = 0.0;
  double gan_d = 0.0;
  double kl = 0.0;
};

struct LossReport {
  double mse = 0.0;
  double diff = 0.0;
  double lpips = 0.0;
  double gan_g = 0.0;
  double gan_d = 0.0;
  double kl = 0.0;
  double total = 0.0;
  int64_t step = 0;
  bool gan_active = false;
};

/// Adversarial term is active once step >= gan_start_step, or unconditionally
/// when `gan_always_on` (decoder fine-tuning).
bool gan_enabled(const LossWeights& w, int64_t step, bool gan_always_on = false);

/// lambda_rec * (mse + diff_weight * diff) + lambda_lpips * lpips
///   + lambda_gan * gan_g * [gan active] + lambda_kl * kl
template <typename Scalar>
Scalar weighted_total(const LossWeights& w, const Scalar& mse, const Scalar& diff, const Scalar& lpips,
                      const Scalar& gan_g, const Scalar& kl, bool gan_active) {
  Scalar total = w.lambda_rec * (mse + w.diff_weight * diff) + w.lambda_lpips * lpips + w.lambda_kl * kl;
  if (gan_active) total = total + w.lambda_gan * gan_g;
  return total;
}

LossReport total_loss(const LossWeights& w, const LossComponents& c, int64_t step, bool gan_always_on = false);

/// Mean squared error over every element (the full clip, dropped frames included).
torch::Tensor mse_loss(const torch::Tensor& recon, const torch::Tensor& target);

/// MSE between adjacent-frame differences along `time_dim`; zero for single-frame clips.
torch::Tensor temporal_diff_loss(const torch::Tensor& recon, const torch::Tensor& target, int64_t time_dim = 2);

/// Mean over elements of 0.5 * (mu^2 + exp(logvar) - 1 - logvar).
torch::Tensor kl_loss(const LatentPosterior& post);

/// Frozen, seeded multi-scale 2-D convolution pyramid applied per frame. Stands
/// in for a pretrained perceptual network.
class PerceptualExtractorImpl : public torch::nn::Module {
 public:
  explicit PerceptualExtractorImpl(uint64_t seed, int64_t width = 8, int64_t scales = 3);
  /// (B, 3, F, H, W) -> one feature map per scale, frames folded into the batch.
  std::vector<torch::Tensor> forward(const torch::Tensor& video);

 private:
  torch::nn::ModuleList convs_;
};
TORCH_MODULE(PerceptualExtractor);

/// Mean squared feature difference, averaged across scales.
torch::Tensor perceptual_loss(PerceptualExtractor& extractor, const torch::Tensor& recon,
                              const torch::Tensor& target);

/// Four strided causal 3-D convolutions producing a patch logit map.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(int64_t width = 16);
  torch::Tensor forward(const torch::Tensor& video);

 private:
  torch::nn::ModuleList convs_;
};
TORCH_MODULE(PatchDiscriminator);

PatchDiscriminator build_discriminator(int64_t width, uint64_t seed);

/// E[max(0, 1 - D(real))] + E[max(0, 1 + D(fake))]
torch::Tensor hinge_discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
/// -E[D(fake)]
torch::Tensor hinge_generator_loss(const torch::Tensor& fake_logits);

struct GanTerms {
  torch::Tensor gan_g;  // gradient reaches the generator through recon
  torch::Tensor gan_d;  // recon detached
};

GanTerms gan_losses(PatchDiscriminator& disc, const torch::Tensor& recon, const torch::Tensor& target);

}  // namespace pvvae
