#pragma once

#include "pvvae/rng.hpp"

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/pimpl.h>
#include <torch/types.h>

#include <cstdint>
#include <string>
#include <vector>

namespace pvvae {

// Tensor layouts
//   VideoClip::data       (1+T, H, W, 3)         pixel values in [-1, 1]
//   model-facing videos   (B, 3, 1+T, H, W)
//   model-facing latents  (B, c, 1+t, h, w)
// `clip_to_batch` / `batch_to_clip` convert between the two.

enum class PaddingStrategy { kGaussian, kLearnable };

std::string to_string(PaddingStrategy s);
PaddingStrategy padding_strategy_from_string(const std::string& s);

struct VaeConfig {
  int64_t p_t = 4;
  int64_t p_s = 8;
  int64_t c_latent = 8;
  int64_t base_channels = 32;
  std::vector<int64_t> channel_mult{1, 2, 4};
  int64_t blocks_per_stage = 1;
  PaddingStrategy padding_strategy = PaddingStrategy::kGaussian;
  uint64_t seed = 0;

  /// 4x temporal, 16x spatial, 64 latent channels.
  static VaeConfig paper();
  /// Desk-scale default: 4x temporal, 8x spatial, 8 latent channels.
  static VaeConfig toy();

  int64_t num_stages() const { return static_cast<int64_t>(channel_mult.size()); }
  /// Number of leading encoder stages that also halve the temporal axis.
  int64_t temporal_stages() const;
  int64_t stage_channels(int64_t stage) const { return base_channels * channel_mult.at(stage); }

  /// Throws ConfigError unless p_s == 2^stages and p_t == 2^k with k <= stages.
  void validate() const;
};

struct VideoClip {
  torch::Tensor data;  // (1+T, H, W, 3)
  double frame_rate = 0.0;

  int64_t frames() const { return data.size(0); }
  int64_t height() const { return data.size(1); }
  int64_t width() const { return data.size(2); }
};

torch::Tensor clip_to_batch(const VideoClip& clip);
VideoClip batch_to_clip(const torch::Tensor& batch, int64_t index = 0);

struct LatentPosterior {
  torch::Tensor mean;    // (B, c, 1+t, h, w)
  torch::Tensor logvar;  // same shape, clamped to [kLogvarMin, kLogvarMax]

  int64_t length() const { return mean.size(2); }
};

inline constexpr double kLogvarMin = -30.0;
inline constexpr double kLogvarMax = 20.0;

// Inside the network activations are "frame batches": a channels-last
// (B * T, C, H, W) tensor plus the batch size B. Every operation is either
// per-frame (norms, activations, spatial resampling) or a causal temporal
// gather, so the time axis never needs to be materialized separately.

torch::Tensor video_to_frames(const torch::Tensor& x);  // (B, C, T, H, W) -> (B*T, C, H, W)
torch::Tensor frames_to_video(const torch::Tensor& f, int64_t batch);

/// 3-D convolution whose temporal window only reaches into the past. The
/// missing history at the start of the clip is filled by replicating the first
/// frame; spatial padding is zeros.
class CausalConv3dImpl : public torch::nn::Module {
 public:
  CausalConv3dImpl(int64_t in, int64_t out, int64_t kernel = 3, int64_t temporal_stride = 1,
                   int64_t spatial_stride = 1);
  torch::Tensor forward_frames(const torch::Tensor& frames, int64_t batch);
  /// (B, C, T, H, W) convenience wrapper.
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight, bias;

 private:
  int64_t kernel_, temporal_stride_, spatial_stride_;
};
TORCH_MODULE(CausalConv3d);

/// Group normalization applied independently to every frame so that no
/// statistic mixes time steps.
class FrameGroupNormImpl : public torch::nn::Module {
 public:
  explicit FrameGroupNormImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& frames);

  torch::Tensor weight, bias;

 private:
  int64_t groups_;
};
TORCH_MODULE(FrameGroupNorm);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& frames, int64_t batch);

 private:
  FrameGroupNorm norm1_{nullptr}, norm2_{nullptr};
  CausalConv3d conv1_{nullptr}, conv2_{nullptr};
  CausalConv3d skip_{nullptr};
};
TORCH_MODULE(ResBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const VaeConfig& cfg);
  /// (B, 3, 1+T, H, W) -> (B, 2c, 1+t, h, w): mean and raw logvar stacked on channels.
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t stages_, blocks_per_stage_;
  CausalConv3d conv_in_{nullptr};
  torch::nn::ModuleList blocks_, downsamplers_;
  ResBlock mid_{nullptr};
  FrameGroupNorm norm_out_{nullptr};
  CausalConv3d conv_out_{nullptr};
};
TORCH_MODULE(Encoder);

/// Nearest-neighbour 2x spatial upsampling, optional 1+n -> 1+2n temporal
/// repeat (the leading image frame is kept once), then a causal convolution.
class UpsampleImpl : public torch::nn::Module {
 public:
  UpsampleImpl(int64_t in, int64_t out, bool temporal);
  torch::Tensor forward(const torch::Tensor& frames, int64_t batch);

 private:
  bool temporal_;
  CausalConv3d conv_{nullptr};
};
TORCH_MODULE(Upsample);

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const VaeConfig& cfg);
  /// (B, c, 1+t, h, w) -> (B, 3, 1+T, H, W) in [-1, 1].
  torch::Tensor forward(const torch::Tensor& z);

 private:
  int64_t stages_, blocks_per_stage_;
  CausalConv3d conv_in_{nullptr};
  ResBlock mid_{nullptr};
  torch::nn::ModuleList upsamplers_, blocks_;
  FrameGroupNorm norm_out_{nullptr};
  CausalConv3d conv_out_{nullptr};
};
TORCH_MODULE(Decoder);

class VaeModelImpl : public torch::nn::Module {
 public:
  explicit VaeModelImpl(const VaeConfig& cfg);

  const VaeConfig& config() const { return cfg_; }

  /// Checks the divisibility contract; throws DimensionError.
  void check_video(const torch::Tensor& x) const;
  LatentPosterior encode(const torch::Tensor& x);
  /// Throws NumericError on non-finite latents.
  torch::Tensor decode(const torch::Tensor& z);

  Encoder encoder{nullptr};
  Decoder decoder{nullptr};

 private:
  VaeConfig cfg_;
};
TORCH_MODULE(VaeModel);

/// Builds a model with parameters drawn deterministically from cfg.seed.
VaeModel build_model(const VaeConfig& cfg);

LatentPosterior encode(VaeModel& model, const VideoClip& clip);
VideoClip decode(VaeModel& model, const torch::Tensor& z);

/// z = mean + exp(logvar / 2) * eps, eps ~ N(0, I) from rng.
torch::Tensor reparameterize(const LatentPosterior& post, Rng& rng);

/// Latent shape (c, 1+t, h, w) produced for a (1+T) x H x W clip.
std::vector<int64_t> latent_shape(const VaeConfig& cfg, int64_t frames, int64_t height, int64_t width);

/// Re-draws every parameter from `rng` (uniform fan-in init for convolutions,
/// identity affine for norms).
void init_parameters(torch::nn::Module& module, Rng& rng);

int64_t count_parameters(const torch::nn::Module& module);

}  // namespace pvvae
