#pragma once

#include "pvvae/core_model.hpp"
#include "pvvae/predictive.hpp"
#include "pvvae/rng.hpp"

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/conv.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

#include <cstdint>
#include <vector>

namespace pvvae {

/// Returned for identical inputs, where 10 log10(1 / MSE) diverges.
inline constexpr double kPsnrCap = 100.0;

/// PSNR in dB after mapping [-1, 1] to [0, 1]; accepts any equal-shape tensors.
double psnr(const torch::Tensor& a, const torch::Tensor& b);
double psnr(const VideoClip& a, const VideoClip& b);

/// Mean SSIM over frames and channels with an 11x11 Gaussian window
/// (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2) on the [0, 1] range. Videos are
/// (B, 3, F, H, W); throws InputError when H or W is below 11.
double ssim(const torch::Tensor& a, const torch::Tensor& b);
double ssim(const VideoClip& a, const VideoClip& b);

/// Deterministic posterior means of (N, 3, F, H, W) videos, encoded in chunks.
torch::Tensor encode_means(VaeModel& model, const torch::Tensor& videos, int64_t batch_size = 8);

/// Full-clip reconstruction from posterior means (k = 0).
torch::Tensor reconstruct(VaeModel& model, const torch::Tensor& videos, int64_t batch_size = 8);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<int64_t> counts;
};

Histogram histogram(const std::vector<double>& values, int64_t bins);

struct LtdProfile {
  std::vector<int64_t> intervals;
  std::vector<double> mean_distance;
  /// mean_distance / distance at interval 1.
  std::vector<double> normalized;
  /// Every adjacent-frame distance that entered the interval-1 mean.
  std::vector<double> adjacent;
  Histogram adjacent_histogram;
};

/// LTD from latent means (N, c, L, h, w). The per-pair distance is the L2 norm
/// over (c, h, w) divided by sqrt(c h w). When the interval-1 distance is
/// exactly zero, normalized entries are 1 where the distance is also zero and
/// NaN otherwise. Throws InputError for intervals outside [1, L - 1].
LtdProfile ltd_from_latents(const torch::Tensor& means, const std::vector<int64_t>& intervals, int64_t bins = 20);
LtdProfile ltd_profile(VaeModel& model, const torch::Tensor& videos, const std::vector<int64_t>& intervals,
                       int64_t bins = 20);

struct PcaBasis {
  torch::Tensor components;  // (c, 3), float64, orthonormal columns
  std::vector<double> explained_variance;
  /// Each column's largest-magnitude loading is made positive.
  bool sign_fixed = true;
};

struct PcaImage {
  torch::Tensor rgb;  // (N, L, h, w, 3) in [0, 1]
  PcaBasis basis;
};

/// PCA over the channel axis of (N, c, L, h, w) or (c, L, h, w) latents,
/// pooled over every spatiotemporal position. Throws DimensionError for c < 3
/// and NumericError for zero-variance input.
PcaImage pca_rgb(const torch::Tensor& latents);

/// Pixel MSE on the k dropped groups' frames only, decoding from posterior
/// means. Throws InputError unless 1 <= k <= G - 1.
double prediction_error(VaeModel& model, LatentPadding& padding, const torch::Tensor& video, int64_t k, Rng& rng);

/// Mean Euclidean norm of the flow error; flows are (..., H, W, 2).
double end_point_error(const torch::Tensor& predicted, const torch::Tensor& truth);

struct FlowProbeConfig {
  int64_t hidden = 32;
  int64_t steps = 500;
  double learning_rate = 3e-3;
  int64_t batch_size = 8;
  uint64_t seed = 0;
};

/// Two 3-D convolutions over latent means, then per-frame 2x pixel-shuffle
/// stages up to input resolution. Latent frame g >= 2 predicts the p_t
/// transitions that lead into its pixel frames, so L latent frames give
/// (L - 1) p_t transitions. p_s must be a power of two.
class FlowProbeImpl : public torch::nn::Module {
 public:
  FlowProbeImpl(int64_t channels, int64_t p_t, int64_t p_s, int64_t hidden);
  /// (B, c, L, h, w) -> (B, (L - 1) p_t, h p_s, w p_s, 2).
  torch::Tensor forward(const torch::Tensor& latents);

 private:
  int64_t p_t_, hidden_;
  torch::nn::Conv3d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::ModuleList upsamplers_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(FlowProbe);

struct FlowProbeResult {
  double train_epe = 0.0;
  double val_epe = 0.0;
  std::vector<double> losses;
};

/// Trains a fresh probe on (train latents, flows) with a squared flow error
/// and reports EPE on val.
/// Throws DimensionError if flow resolution does not match the probe output.
FlowProbeResult flow_probe(const torch::Tensor& train_latents, const torch::Tensor& train_flows,
                           const torch::Tensor& val_latents, const torch::Tensor& val_flows, int64_t p_t, int64_t p_s,
                           const FlowProbeConfig& cfg);

}  // namespace pvvae
