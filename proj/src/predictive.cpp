#include "pvvae/predictive.hpp"

#include "pvvae/errors.hpp"

#include <torch/torch.h>

#include <cmath>

namespace pvvae {

int64_t partition_groups(int64_t T, int64_t p_t) {
  if (p_t <= 0) throw InputError("p_t must be positive");
  if (T < 0 || T % p_t != 0)
    throw InputError("T=" + std::to_string(T) + " is not divisible by p_t=" + std::to_string(p_t));
  return 1 + T / p_t;
}

FrameRange group_frames(int64_t g, int64_t p_t) {
  if (g < 1) throw InputError("group index is 1-based");
  if (g == 1) return {1, 1};
  return {2 + (g - 2) * p_t, 1 + (g - 1) * p_t};
}

int64_t max_dropped_groups(int64_t groups, double max_ratio) {
  if (groups < 1) throw InputError("groups must be >= 1");
  if (!(max_ratio >= 0.0 && max_ratio <= 1.0)) throw InputError("max drop ratio must lie in [0, 1]");
  // The epsilon keeps exact products such as 10 * 0.7 from flooring one below.
  return static_cast<int64_t>(std::floor(static_cast<double>(groups - 1) * max_ratio + 1e-9));
}

int64_t sample_drop(int64_t groups, double max_ratio, Rng& rng) {
  const int64_t hi = max_dropped_groups(groups, max_ratio);
  if (hi == 0) return 0;
  return rng.uniform_int(0, hi);
}

DropPlan make_plan(int64_t groups, int64_t dropped, double max_ratio, int64_t p_t) {
  if (dropped < 0 || dropped > groups - 1)
    throw InputError("k=" + std::to_string(dropped) + " outside [0, G-1] for G=" + std::to_string(groups));
  return DropPlan{groups, dropped, max_ratio, p_t};
}

torch::Tensor truncate_clip(const torch::Tensor& video, int64_t k, int64_t p_t) {
  if (video.dim() != 5) throw DimensionError("truncate_clip expects (B, 3, F, H, W)");
  const int64_t groups = partition_groups(video.size(2) - 1, p_t);
  if (k < 0 || k > groups - 1)
    throw InputError("k=" + std::to_string(k) + " outside [0, G-1] for G=" + std::to_string(groups));
  if (k == 0) return video;
  return video.narrow(2, 0, video.size(2) - k * p_t);
}

VideoClip truncate_clip(const VideoClip& clip, int64_t k, int64_t p_t) {
  const int64_t groups = partition_groups(clip.frames() - 1, p_t);
  if (k < 0 || k > groups - 1)
    throw InputError("k=" + std::to_string(k) + " outside [0, G-1] for G=" + std::to_string(groups));
  return VideoClip{clip.data.narrow(0, 0, clip.frames() - k * p_t), clip.frame_rate};
}

LatentPaddingImpl::LatentPaddingImpl(PaddingStrategy strategy, int64_t channels, int64_t height,
                                     int64_t width, double sigma)
    : strategy_(strategy), sigma_(sigma) {
  if (sigma < 0.0) throw ConfigError("padding sigma must be non-negative");
  token = register_parameter("token", torch::zeros({1, channels, 1, height, width}),
                             strategy == PaddingStrategy::kLearnable);
}

torch::Tensor LatentPaddingImpl::pad(const torch::Tensor& z_obs, int64_t k, Rng& rng) {
  if (k < 0) throw InputError("number of padding frames must be non-negative");
  if (z_obs.dim() != 5) throw DimensionError("pad expects latents (B, c, L, h, w)");
  if (z_obs.size(1) != token.size(1) || z_obs.size(3) != token.size(3) || z_obs.size(4) != token.size(4))
    throw ConfigError("padding token shape (c=" + std::to_string(token.size(1)) + ", h=" +
                      std::to_string(token.size(3)) + ", w=" + std::to_string(token.size(4)) +
                      ") does not match latents");
  if (k == 0) return z_obs;
  const auto b = z_obs.size(0), c = z_obs.size(1), h = z_obs.size(3), w = z_obs.size(4);
  torch::Tensor fill;
  if (strategy_ == PaddingStrategy::kGaussian) {
    fill = (rng.normal({b, c, k, h, w}, z_obs.scalar_type()) * sigma_).to(z_obs.device());
  } else {
    fill = token.to(z_obs.scalar_type()).expand({b, c, k, h, w});
  }
  return torch::cat({z_obs, fill}, 2);
}

LatentPadding make_padding(const VaeConfig& cfg, int64_t height, int64_t width, double sigma) {
  if (height % cfg.p_s != 0 || width % cfg.p_s != 0)
    throw DimensionError("padding resolution must be divisible by p_s");
  return LatentPadding(cfg.padding_strategy, cfg.c_latent, height / cfg.p_s, width / cfg.p_s, sigma);
}

torch::Tensor pad_latents(const torch::Tensor& z_obs, int64_t k, LatentPadding& padding, Rng& rng) {
  return padding->pad(z_obs, k, rng);
}

PredictiveOutput predictive_forward(VaeModel& model, LatentPadding& padding, const torch::Tensor& video,
                                    double max_ratio, Rng& rng, const PredictiveOptions& options) {
  model->check_video(video);
  const int64_t p_t = model->config().p_t;
  const int64_t groups = partition_groups(video.size(2) - 1, p_t);
  const int64_t k = options.forced_drop ? *options.forced_drop : sample_drop(groups, max_ratio, rng);
  const DropPlan plan = make_plan(groups, k, max_ratio, p_t);

  auto observed = truncate_clip(video, k, p_t);
  LatentPosterior posterior;
  if (options.encoder_no_grad) {
    torch::NoGradGuard guard;
    posterior = model->encode(observed);
  } else {
    posterior = model->encode(observed);
  }
  auto z_obs = options.sample_latents ? reparameterize(posterior, rng) : posterior.mean;
  auto z = padding->pad(z_obs, k, rng);
  auto recon = model->decode(z);
  return {recon, posterior, z, plan};
}

}  // namespace pvvae
