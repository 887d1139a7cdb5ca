#include "pvvae/losses.hpp"

#include "pvvae/errors.hpp"
#include "pvvae/rng.hpp"

#include <torch/torch.h>

#include <cmath>

namespace pvvae {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (a.sizes() != b.sizes()) throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {lambda_rec, lambda_lpips, lambda_gan, lambda_kl, diff_weight})
    if (!std::isfinite(v) || v < 0.0) throw ConfigError("loss weights must be finite and non-negative");
}

bool gan_enabled(const LossWeights& w, int64_t step, bool gan_always_on) {
  return gan_always_on || step >= w.gan_start_step;
}

LossReport total_loss(const LossWeights& w, const LossComponents& c, int64_t step, bool gan_always_on) {
  w.validate();
  LossReport r;
  r.mse = c.mse;
  r.diff = c.diff;
  r.lpips = c.lpips;
  r.gan_g = c.gan_g;
  r.gan_d = c.gan_d;
  r.kl = c.kl;
  r.step = step;
  r.gan_active = gan_enabled(w, step, gan_always_on);
  r.total = weighted_total<double>(w, c.mse, c.diff, c.lpips, c.gan_g, c.kl, r.gan_active);
  return r;
}

torch::Tensor mse_loss(const torch::Tensor& recon, const torch::Tensor& target) {
  check_same_shape(recon, target, "mse_loss");
  return (recon - target).pow(2).mean();
}

torch::Tensor temporal_diff_loss(const torch::Tensor& recon, const torch::Tensor& target, int64_t time_dim) {
  check_same_shape(recon, target, "temporal_diff_loss");
  const int64_t frames = recon.size(time_dim);
  if (frames < 2) return (recon.sum() * 0.0);
  auto d_recon = recon.narrow(time_dim, 1, frames - 1) - recon.narrow(time_dim, 0, frames - 1);
  auto d_target = target.narrow(time_dim, 1, frames - 1) - target.narrow(time_dim, 0, frames - 1);
  return (d_recon - d_target).pow(2).mean();
}

torch::Tensor kl_loss(const LatentPosterior& post) {
  check_same_shape(post.mean, post.logvar, "kl_loss");
  if (!torch::isfinite(post.mean).all().item<bool>() || !torch::isfinite(post.logvar).all().item<bool>())
    throw NumericError("kl_loss: non-finite posterior");
  return (0.5 * (post.mean.pow(2) + post.logvar.exp() - 1.0 - post.logvar)).mean();
}

// ---------------------------------------------------------------------------

PerceptualExtractorImpl::PerceptualExtractorImpl(uint64_t seed, int64_t width, int64_t scales) {
  int64_t in = 3;
  for (int64_t s = 0; s < scales; ++s) {
    const int64_t out = width << s;
    convs_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1)));
    in = out;
  }
  register_module("convs", convs_);
  Rng rng(seed);
  init_parameters(*this, rng);
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> PerceptualExtractorImpl::forward(const torch::Tensor& video) {
  const auto b = video.size(0), c = video.size(1), t = video.size(2), h = video.size(3), w = video.size(4);
  auto x = video.transpose(1, 2).reshape({b * t, c, h, w});
  std::vector<torch::Tensor> feats;
  for (auto& m : *convs_) {
    x = torch::relu(m->as<torch::nn::Conv2d>()->forward(x));
    feats.push_back(x);
  }
  return feats;
}

torch::Tensor perceptual_loss(PerceptualExtractor& extractor, const torch::Tensor& recon,
                              const torch::Tensor& target) {
  check_same_shape(recon, target, "perceptual_loss");
  auto fr = extractor->forward(recon);
  std::vector<torch::Tensor> ft;
  {
    torch::NoGradGuard guard;
    ft = extractor->forward(target);
  }
  auto total = torch::zeros({}, recon.options());
  for (size_t i = 0; i < fr.size(); ++i) total = total + (fr[i] - ft[i]).pow(2).mean();
  return total / static_cast<double>(fr.size());
}

// ---------------------------------------------------------------------------

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int64_t width) {
  convs_->push_back(CausalConv3d(3, width, 3, 1, 2));
  convs_->push_back(CausalConv3d(width, 2 * width, 3, 2, 2));
  convs_->push_back(CausalConv3d(2 * width, 4 * width, 3, 2, 1));
  convs_->push_back(CausalConv3d(4 * width, 1, 3, 1, 1));
  register_module("convs", convs_);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& video) {
  const int64_t batch = video.size(0);
  auto h = video_to_frames(video);
  const auto n = convs_->size();
  for (size_t i = 0; i < n; ++i) {
    h = convs_[i]->as<CausalConv3d>()->forward_frames(h, batch);
    if (i + 1 < n) h = torch::leaky_relu(h, 0.2);
  }
  return frames_to_video(h, batch);
}

PatchDiscriminator build_discriminator(int64_t width, uint64_t seed) {
  PatchDiscriminator disc(width);
  Rng rng(seed);
  init_parameters(*disc, rng);
  return disc;
}

torch::Tensor hinge_discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  return torch::relu(1.0 - real_logits).mean() + torch::relu(1.0 + fake_logits).mean();
}

torch::Tensor hinge_generator_loss(const torch::Tensor& fake_logits) { return -fake_logits.mean(); }

GanTerms gan_losses(PatchDiscriminator& disc, const torch::Tensor& recon, const torch::Tensor& target) {
  check_same_shape(recon, target, "gan_losses");
  auto fake_for_g = disc->forward(recon);
  auto real = disc->forward(target.detach());
  auto fake_for_d = disc->forward(recon.detach());
  return {hinge_generator_loss(fake_for_g), hinge_discriminator_loss(real, fake_for_d)};
}

}  // namespace pvvae
