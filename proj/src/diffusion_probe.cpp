#include "pvvae/diffusion_probe.hpp"

#include "pvvae/core_model.hpp"
#include "pvvae/errors.hpp"

#include <torch/torch.h>

#include <cmath>
#include <numbers>

namespace pvvae {

namespace F = torch::nn::functional;

void FlowModelConfig::validate() const {
  if (hidden < 1 || depth < 0 || time_dim < 2 || time_dim % 2 != 0)
    throw ConfigError("flow model needs hidden >= 1, depth >= 0 and an even time_dim >= 2");
  if (steps < 0 || batch_size < 1 || sampler_steps < 1) throw ConfigError("flow model step counts out of range");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("flow learning_rate must be positive");
}

torch::Tensor LatentStats::normalize(const torch::Tensor& z) const {
  return (z - mean.view({1, -1, 1, 1, 1})) / std.view({1, -1, 1, 1, 1});
}

torch::Tensor LatentStats::denormalize(const torch::Tensor& z) const {
  return z * std.view({1, -1, 1, 1, 1}) + mean.view({1, -1, 1, 1, 1});
}

LatentStats compute_latent_stats(const torch::Tensor& latents) {
  if (latents.dim() != 5) throw DimensionError("latent set must be (N, c, L, h, w)");
  auto per_channel = latents.detach().transpose(0, 1).reshape({latents.size(1), -1}).to(torch::kFloat64);
  auto mean = per_channel.mean(1);
  auto std = per_channel.std(1, /*unbiased=*/false);
  if (!(std > 1e-12).all().item<bool>()) throw NumericError("latent channel with zero variance");
  return {mean.to(latents.scalar_type()), std.to(latents.scalar_type())};
}

// ---------------------------------------------------------------------------

FlowNetImpl::FlowNetImpl(const FlowModelConfig& cfg, std::vector<int64_t> latent_shape)
    : shape_(std::move(latent_shape)), time_dim_(cfg.time_dim) {
  cfg.validate();
  if (shape_.size() != 4) throw DimensionError("flow model latent shape must be (c, L, h, w)");
  int64_t d = 1;
  for (auto s : shape_) d *= s;
  in_ = register_module("in", torch::nn::Linear(d, cfg.hidden));
  time_fc_ = register_module("time_fc", torch::nn::Linear(cfg.time_dim, cfg.hidden));
  for (int64_t i = 0; i < cfg.depth; ++i) {
    fc1_->push_back(torch::nn::Linear(cfg.hidden, cfg.hidden));
    fc2_->push_back(torch::nn::Linear(cfg.hidden, cfg.hidden));
    time_proj_->push_back(torch::nn::Linear(cfg.hidden, cfg.hidden));
  }
  register_module("fc1", fc1_);
  register_module("fc2", fc2_);
  register_module("time_proj", time_proj_);
  out_ = register_module("out", torch::nn::Linear(cfg.hidden, d));
}

torch::Tensor FlowNetImpl::time_embedding(const torch::Tensor& u) const {
  const int64_t half = time_dim_ / 2;
  auto freqs = torch::exp(torch::arange(half, u.options()) * (-std::log(1000.0) / std::max<int64_t>(1, half - 1)));
  auto angles = (u * 1000.0).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(angles), torch::cos(angles)}, 1);
}

torch::Tensor FlowNetImpl::forward(const torch::Tensor& z, const torch::Tensor& u) {
  const int64_t b = z.size(0);
  auto t = torch::silu(time_fc_->forward(time_embedding(u)));
  auto h = in_->forward(z.reshape({b, -1}));
  for (size_t i = 0; i < fc1_->size(); ++i) {
    auto r = fc1_[i]->as<torch::nn::Linear>()->forward(torch::silu(h));
    r = r + time_proj_[i]->as<torch::nn::Linear>()->forward(t);
    h = h + fc2_[i]->as<torch::nn::Linear>()->forward(torch::silu(r));
  }
  return out_->forward(torch::silu(h)).view(z.sizes());
}

FlowNet build_flow_net(const FlowModelConfig& cfg, const std::vector<int64_t>& latent_shape) {
  FlowNet net(cfg, latent_shape);
  Rng rng(derive_seed(cfg.seed, 0xf10));
  init_parameters(*net, rng);
  return net;
}

VelocityFn velocity_of(FlowNet& net) {
  return [net](const torch::Tensor& z, const torch::Tensor& u) mutable { return net->forward(z, u); };
}

torch::Tensor rf_interpolate(const torch::Tensor& z0, const torch::Tensor& z1, const torch::Tensor& u) {
  std::vector<int64_t> view(static_cast<size_t>(z0.dim()), 1);
  view[0] = -1;
  auto ub = u.view(view);
  return (1 - ub) * z0 + ub * z1;
}

torch::Tensor rf_loss(const VelocityFn& v, const torch::Tensor& z1, const torch::Tensor& z0, const torch::Tensor& u) {
  if (z0.sizes() != z1.sizes()) throw DimensionError("rf_loss: noise and data shapes differ");
  auto target = z1 - z0;
  auto loss = (v(rf_interpolate(z0, z1, u), u) - target).pow(2).mean();
  if (!torch::isfinite(loss).item<bool>()) throw NumericError("rf_loss: non-finite loss");
  return loss;
}

torch::Tensor rf_loss(const VelocityFn& v, const torch::Tensor& z1, Rng& rng) {
  auto z0 = rng.normal(z1.sizes(), z1.scalar_type());
  auto u = rng.uniform({z1.size(0)}, z1.scalar_type());
  return rf_loss(v, z1, z0, u);
}

torch::Tensor euler_integrate(const VelocityFn& v, const torch::Tensor& z0, int64_t steps) {
  if (steps < 1) throw InputError("euler sampler needs at least one step");
  auto z = z0.clone();
  const double dt = 1.0 / static_cast<double>(steps);
  for (int64_t i = 0; i < steps; ++i) {
    auto u = torch::full({z.size(0)}, static_cast<double>(i) * dt, z.options());
    z = z + dt * v(z, u);
  }
  return z;
}

torch::Tensor euler_sample(const VelocityFn& v, at::IntArrayRef shape, int64_t steps, Rng& rng) {
  return euler_integrate(v, rng.normal(shape), steps);
}

std::vector<double> train_flow(FlowNet& net, const torch::Tensor& latents, const FlowModelConfig& cfg) {
  cfg.validate();
  const int64_t n = latents.size(0);
  if (n < 1) throw InputError("train_flow: empty latent set");
  torch::optim::AdamW opt(net->parameters(), torch::optim::AdamWOptions(cfg.learning_rate).weight_decay(0.0));
  auto v = velocity_of(net);
  std::vector<double> losses;
  losses.reserve(static_cast<size_t>(cfg.steps));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(step) + 1));
    auto idx = torch::randint(n, {cfg.batch_size}, rng.generator(), torch::kInt64);
    auto loss = rf_loss(v, latents.index_select(0, idx), rng);
    opt.zero_grad();
    loss.backward();
    opt.step();
    losses.push_back(loss.item<double>());
  }
  return losses;
}

// ---------------------------------------------------------------------------

torch::Tensor clip_statistics(const torch::Tensor& videos) {
  if (videos.dim() != 5 || videos.size(1) != 3) throw DimensionError("expected (N, 3, F, H, W) videos");
  const int64_t n = videos.size(0);
  auto x = videos.to(torch::kFloat64);
  auto pooled = F::adaptive_avg_pool3d(x, F::AdaptiveAvgPool3dFuncOptions({x.size(2), 4, 4})).reshape({n, -1});
  std::vector<torch::Tensor> parts{pooled};
  if (x.size(2) > 1) {
    auto diff = (x.narrow(2, 1, x.size(2) - 1) - x.narrow(2, 0, x.size(2) - 1)).abs();
    parts.push_back(F::adaptive_avg_pool3d(diff, F::AdaptiveAvgPool3dFuncOptions({diff.size(2), 4, 4})).reshape({n, -1}));
  }
  parts.push_back(x.transpose(0, 1).reshape({3, n, -1}).std(2, false).transpose(0, 1));
  return torch::cat(parts, 1);
}

torch::Tensor frechet_features(const torch::Tensor& videos, uint64_t projection_seed, int64_t dims) {
  auto stats = clip_statistics(videos);
  Rng rng(projection_seed);
  auto proj = rng.normal({stats.size(1), dims}, torch::kFloat64) / std::sqrt(static_cast<double>(stats.size(1)));
  return stats.matmul(proj);
}

namespace {

torch::Tensor sqrt_psd(const torch::Tensor& m) {
  auto [evals, evecs] = torch::linalg_eigh(0.5 * (m + m.transpose(0, 1)));
  return evecs.matmul(torch::diag(evals.clamp_min(0).sqrt())).matmul(evecs.transpose(0, 1));
}

std::pair<torch::Tensor, torch::Tensor> gaussian_fit(const torch::Tensor& feats) {
  auto mu = feats.mean(0);
  auto centered = feats - mu;
  return {mu, centered.transpose(0, 1).matmul(centered) / static_cast<double>(feats.size(0) - 1)};
}

}  // namespace

double frechet_distance(const torch::Tensor& mu1, const torch::Tensor& cov1, const torch::Tensor& mu2,
                        const torch::Tensor& cov2) {
  auto m1 = mu1.to(torch::kFloat64), m2 = mu2.to(torch::kFloat64);
  auto s1 = cov1.to(torch::kFloat64), s2 = cov2.to(torch::kFloat64);
  auto root1 = sqrt_psd(s1);
  auto cross = sqrt_psd(root1.matmul(s2).matmul(root1));
  const double d = (m1 - m2).pow(2).sum().item<double>() +
                   (s1.trace() + s2.trace() - 2 * cross.trace()).item<double>();
  return std::max(0.0, d);
}

double frechet_proxy(const torch::Tensor& real, const torch::Tensor& generated, uint64_t projection_seed,
                     int64_t dims) {
  if (real.sizes().slice(1) != generated.sizes().slice(1))
    throw DimensionError("frechet_proxy: real and generated clips differ in shape");
  if (real.size(0) < dims + 1 || generated.size(0) < dims + 1)
    throw InputError("frechet_proxy needs at least " + std::to_string(dims + 1) + " clips per set");
  auto [mu1, s1] = gaussian_fit(frechet_features(real, projection_seed, dims));
  auto [mu2, s2] = gaussian_fit(frechet_features(generated, projection_seed, dims));
  return frechet_distance(mu1, s1, mu2, s2);
}

}  // namespace pvvae
