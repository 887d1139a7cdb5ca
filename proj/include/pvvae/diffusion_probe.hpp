#pragma once

#include "pvvae/rng.hpp"

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

#include <cstdint>
#include <functional>
#include <vector>

namespace pvvae {

/// Tiny unconditional rectified-flow model over flattened latents.
///
/// Time convention: u = 0 is pure noise, u = 1 is data, and the network
/// predicts the constant velocity z1 - z0 of the straight interpolation.
struct FlowModelConfig {
  int64_t hidden = 256;
  int64_t depth = 3;
  int64_t time_dim = 32;
  int64_t steps = 2000;
  int64_t batch_size = 32;
  double learning_rate = 1e-3;
  int64_t sampler_steps = 100;
  uint64_t seed = 0;

  void validate() const;
};

/// Per-channel standardization statistics over a latent set (N, c, L, h, w).
struct LatentStats {
  torch::Tensor mean;  // (c)
  torch::Tensor std;   // (c)

  torch::Tensor normalize(const torch::Tensor& z) const;
  torch::Tensor denormalize(const torch::Tensor& z) const;
};

/// Throws NumericError when a channel has zero spread.
LatentStats compute_latent_stats(const torch::Tensor& latents);

using VelocityFn = std::function<torch::Tensor(const torch::Tensor& z, const torch::Tensor& u)>;

class FlowNetImpl : public torch::nn::Module {
 public:
  /// `latent_shape` is (c, L, h, w).
  FlowNetImpl(const FlowModelConfig& cfg, std::vector<int64_t> latent_shape);

  /// z: (B, c, L, h, w), u: (B) -> velocity of the same shape as z.
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& u);

  const std::vector<int64_t>& latent_shape() const { return shape_; }

 private:
  torch::Tensor time_embedding(const torch::Tensor& u) const;

  std::vector<int64_t> shape_;
  int64_t time_dim_;
  torch::nn::Linear in_{nullptr}, out_{nullptr};
  torch::nn::Linear time_fc_{nullptr};
  torch::nn::ModuleList fc1_, fc2_, time_proj_;
};
TORCH_MODULE(FlowNet);

/// Seeded construction with the library-wide fan-in initialization.
FlowNet build_flow_net(const FlowModelConfig& cfg, const std::vector<int64_t>& latent_shape);

VelocityFn velocity_of(FlowNet& net);

/// (1 - u) * z0 + u * z1 with u broadcast over the batch dimension.
torch::Tensor rf_interpolate(const torch::Tensor& z0, const torch::Tensor& z1, const torch::Tensor& u);

/// mean || v(z_u, u) - (z1 - z0) ||^2 for explicit noise and times.
torch::Tensor rf_loss(const VelocityFn& v, const torch::Tensor& z1, const torch::Tensor& z0, const torch::Tensor& u);
/// Draws z0 ~ N(0, I) and u ~ U(0, 1) per sample from rng.
torch::Tensor rf_loss(const VelocityFn& v, const torch::Tensor& z1, Rng& rng);

/// Forward Euler from u = 0 to u = 1 in `steps` uniform increments.
torch::Tensor euler_integrate(const VelocityFn& v, const torch::Tensor& z0, int64_t steps);
/// Starts from N(0, I) noise of `shape` drawn from rng.
torch::Tensor euler_sample(const VelocityFn& v, at::IntArrayRef shape, int64_t steps, Rng& rng);

/// Trains on standardized latents (N, c, L, h, w); returns the per-step loss.
/// Throws NumericError on a non-finite loss.
std::vector<double> train_flow(FlowNet& net, const torch::Tensor& latents, const FlowModelConfig& cfg);

/// Pooled per-clip statistics of a (N, 3, F, H, W) video batch: 4x4 average
/// pooled frames and absolute frame differences plus per-channel spread.
torch::Tensor clip_statistics(const torch::Tensor& videos);

/// Feature dimension of the Frechet proxy; each set needs more clips than this.
inline constexpr int64_t kFrechetDims = 64;

/// Fixed seeded random projection of clip_statistics to `dims` features.
torch::Tensor frechet_features(const torch::Tensor& videos, uint64_t projection_seed, int64_t dims = kFrechetDims);

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), evaluated in double.
double frechet_distance(const torch::Tensor& mu1, const torch::Tensor& cov1, const torch::Tensor& mu2,
                        const torch::Tensor& cov2);

/// Gaussian Frechet distance between feature fits; needs at least dims + 1
/// clips per set (InputError otherwise) and identical clip shapes.
double frechet_proxy(const torch::Tensor& real, const torch::Tensor& generated, uint64_t projection_seed,
                     int64_t dims = kFrechetDims);

}  // namespace pvvae
