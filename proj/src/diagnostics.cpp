#include "pvvae/diagnostics.hpp"

#include "pvvae/errors.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pvvae {

namespace F = torch::nn::functional;

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw DimensionError(std::string(what) + ": inputs differ in shape");
}

torch::Tensor unit_range(const torch::Tensor& x) { return (x.to(torch::kFloat64) + 1.0) * 0.5; }

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "psnr");
  const double mse = (unit_range(a) - unit_range(b)).pow(2).mean().item<double>();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const VideoClip& a, const VideoClip& b) { return psnr(a.data, b.data); }

namespace {

torch::Tensor gaussian_window(int64_t size, double sigma) {
  auto x = torch::arange(size, torch::kFloat64) - static_cast<double>(size - 1) / 2.0;
  auto g = torch::exp(-x.pow(2) / (2 * sigma * sigma));
  g = g / g.sum();
  return g.unsqueeze(1).matmul(g.unsqueeze(0));
}

}  // namespace

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "ssim");
  if (a.dim() != 5) throw DimensionError("ssim expects (B, C, F, H, W) videos");
  constexpr int64_t kWin = 11;
  if (a.size(3) < kWin || a.size(4) < kWin) throw InputError("ssim needs frames of at least 11x11 pixels");
  // Every (clip, channel, frame) plane filtered independently.
  auto planes = [&](const torch::Tensor& v) { return unit_range(v).reshape({-1, 1, v.size(3), v.size(4)}); };
  auto x = planes(a), y = planes(b);
  auto w = gaussian_window(kWin, 1.5).view({1, 1, kWin, kWin});
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, w); };
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto mx = filt(x), my = filt(y);
  auto sxx = filt(x * x) - mx * mx;
  auto syy = filt(y * y) - my * my;
  auto sxy = filt(x * y) - mx * my;
  auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean().item<double>();
}

double ssim(const VideoClip& a, const VideoClip& b) { return ssim(clip_to_batch(a), clip_to_batch(b)); }

torch::Tensor encode_means(VaeModel& model, const torch::Tensor& videos, int64_t batch_size) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < videos.size(0); i += batch_size)
    out.push_back(model->encode(videos.narrow(0, i, std::min(batch_size, videos.size(0) - i))).mean);
  return torch::cat(out, 0);
}

torch::Tensor reconstruct(VaeModel& model, const torch::Tensor& videos, int64_t batch_size) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < videos.size(0); i += batch_size) {
    auto chunk = videos.narrow(0, i, std::min(batch_size, videos.size(0) - i));
    out.push_back(model->decode(model->encode(chunk).mean));
  }
  return torch::cat(out, 0);
}

// ---------------------------------------------------------------------------

Histogram histogram(const std::vector<double>& values, int64_t bins) {
  if (bins < 1) throw InputError("histogram needs at least one bin");
  Histogram h;
  double lo = 0.0, hi = 0.0;
  if (!values.empty()) {
    lo = *std::min_element(values.begin(), values.end());
    hi = *std::max_element(values.begin(), values.end());
  }
  if (hi <= lo) hi = lo + 1.0;
  for (int64_t i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
  h.counts.assign(static_cast<size_t>(bins), 0);
  for (double v : values) {
    auto b = static_cast<int64_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    ++h.counts[static_cast<size_t>(std::clamp<int64_t>(b, 0, bins - 1))];
  }
  return h;
}

LtdProfile ltd_from_latents(const torch::Tensor& means, const std::vector<int64_t>& intervals, int64_t bins) {
  if (means.dim() != 5) throw DimensionError("ltd expects latents (N, c, L, h, w)");
  const int64_t length = means.size(2);
  if (length < 2) throw InputError("ltd needs at least two latent frames");
  for (auto d : intervals)
    if (d < 1 || d > length - 1)
      throw InputError("ltd interval " + std::to_string(d) + " outside [1, " + std::to_string(length - 1) + "]");
  auto z = means.detach().to(torch::kFloat64);
  const double scale = std::sqrt(static_cast<double>(z.size(1) * z.size(3) * z.size(4)));
  auto distances = [&](int64_t d) {
    auto diff = z.narrow(2, d, length - d) - z.narrow(2, 0, length - d);
    return diff.pow(2).sum({1, 3, 4}).sqrt() / scale;  // (N, L - d)
  };

  LtdProfile p;
  p.intervals = intervals;
  auto adjacent = distances(1).flatten().contiguous();
  p.adjacent.assign(adjacent.data_ptr<double>(), adjacent.data_ptr<double>() + adjacent.numel());
  p.adjacent_histogram = histogram(p.adjacent, bins);
  const double base = adjacent.mean().item<double>();
  for (auto d : intervals) {
    const double m = distances(d).mean().item<double>();
    p.mean_distance.push_back(m);
    if (base > 0.0)
      p.normalized.push_back(d == 1 ? 1.0 : m / base);
    else
      p.normalized.push_back(m == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN());
  }
  return p;
}

LtdProfile ltd_profile(VaeModel& model, const torch::Tensor& videos, const std::vector<int64_t>& intervals,
                       int64_t bins) {
  return ltd_from_latents(encode_means(model, videos), intervals, bins);
}

// ---------------------------------------------------------------------------

PcaImage pca_rgb(const torch::Tensor& latents) {
  auto z = latents.dim() == 4 ? latents.unsqueeze(0) : latents;
  if (z.dim() != 5) throw DimensionError("pca_rgb expects (N, c, L, h, w) or (c, L, h, w) latents");
  const int64_t c = z.size(1);
  if (c < 3) throw DimensionError("pca_rgb needs at least 3 latent channels");
  auto x = z.detach().to(torch::kFloat64).movedim(1, -1).reshape({-1, c});  // (positions, c)
  const int64_t n = x.size(0);
  if (n < 2) throw NumericError("pca_rgb needs at least two samples");
  auto centered = x - x.mean(0, true);
  auto cov = centered.transpose(0, 1).matmul(centered) / static_cast<double>(n - 1);
  if (cov.trace().item<double>() <= 0.0) throw NumericError("pca_rgb: zero-variance (degenerate) input");

  auto [evals, evecs] = torch::linalg_eigh(cov);  // ascending
  auto order = torch::arange(c - 1, c - 4, -1, torch::kInt64);
  auto comps = evecs.index_select(1, order).contiguous();
  for (int64_t j = 0; j < 3; ++j) {
    auto col = comps.select(1, j);
    const auto arg = col.abs().argmax().item<int64_t>();
    if (col[arg].item<double>() < 0) col.mul_(-1);
  }

  PcaImage out;
  out.basis.components = comps;
  for (int64_t j = 0; j < 3; ++j) out.basis.explained_variance.push_back(std::max(0.0, evals[c - 1 - j].item<double>()));

  auto proj = centered.matmul(comps);  // (positions, 3)
  auto lo = std::get<0>(proj.min(0, true));
  auto range = std::get<0>(proj.max(0, true)) - lo;
  auto rgb = torch::where(range > 0, (proj - lo) / range.clamp_min(1e-300), torch::zeros_like(proj));
  out.rgb = rgb.reshape({z.size(0), z.size(2), z.size(3), z.size(4), 3}).to(torch::kFloat32);
  return out;
}

// ---------------------------------------------------------------------------

double prediction_error(VaeModel& model, LatentPadding& padding, const torch::Tensor& video, int64_t k, Rng& rng) {
  const int64_t groups = partition_groups(video.size(2) - 1, model->config().p_t);
  if (k < 1 || k > groups - 1)
    throw InputError("prediction_error needs 1 <= k <= " + std::to_string(groups - 1) + ", got " + std::to_string(k));
  torch::NoGradGuard guard;
  PredictiveOptions opts;
  opts.forced_drop = k;
  opts.sample_latents = false;
  auto out = predictive_forward(model, padding, video, 1.0, rng, opts);
  const int64_t first = out.plan.observed_frames();
  const int64_t count = video.size(2) - first;
  auto diff = out.recon.narrow(2, first, count).to(torch::kFloat64) - video.narrow(2, first, count).to(torch::kFloat64);
  return diff.pow(2).mean().item<double>();
}

double end_point_error(const torch::Tensor& predicted, const torch::Tensor& truth) {
  require_same_shape(predicted, truth, "end_point_error");
  if (predicted.size(-1) != 2) throw DimensionError("flow fields must end in a (dx, dy) axis");
  return (predicted.to(torch::kFloat64) - truth.to(torch::kFloat64)).pow(2).sum(-1).sqrt().mean().item<double>();
}

FlowProbeImpl::FlowProbeImpl(int64_t channels, int64_t p_t, int64_t p_s, int64_t hidden)
    : p_t_(p_t), hidden_(hidden) {
  if (p_s < 1 || (p_s & (p_s - 1)) != 0) throw ConfigError("flow probe needs a power-of-two p_s");
  conv1_ = register_module("conv1", torch::nn::Conv3d(torch::nn::Conv3dOptions(channels, hidden, 3).padding(1)));
  conv2_ = register_module("conv2", torch::nn::Conv3d(torch::nn::Conv3dOptions(hidden, p_t * hidden, 3).padding(1)));
  upsamplers_ = register_module("upsamplers", torch::nn::ModuleList());
  for (int64_t s = p_s; s > 1; s /= 2)
    upsamplers_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, 4 * hidden, 3).padding(1)));
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, 2, 3).padding(1)));
}

torch::Tensor FlowProbeImpl::forward(const torch::Tensor& latents) {
  auto y = conv2_->forward(torch::silu(conv1_->forward(latents)));
  const int64_t b = y.size(0), l = y.size(2) - 1, h = y.size(3), w = y.size(4);
  // (B, p_t * hidden, L, h, w) -> one (hidden, h, w) map per predicted transition
  y = y.narrow(2, 1, l).reshape({b, p_t_, hidden_, l, h, w}).permute({0, 3, 1, 2, 4, 5});
  y = y.reshape({b * l * p_t_, hidden_, h, w});
  for (const auto& up : *upsamplers_)
    y = torch::pixel_shuffle(torch::silu(up->as<torch::nn::Conv2d>()->forward(y)), 2);
  y = head_->forward(y);
  return y.reshape({b, l * p_t_, 2, y.size(2), y.size(3)}).permute({0, 1, 3, 4, 2}).contiguous();
}

namespace {

torch::Tensor squared_flow_error(const torch::Tensor& pred, const torch::Tensor& truth) {
  return (pred - truth).pow(2).sum(-1).mean();
}

double probe_epe(FlowProbe& probe, const torch::Tensor& latents, const torch::Tensor& flows) {
  torch::NoGradGuard guard;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i < latents.size(0); i += 16) {
    const int64_t n = std::min<int64_t>(16, latents.size(0) - i);
    total += end_point_error(probe->forward(latents.narrow(0, i, n)), flows.narrow(0, i, n)) * static_cast<double>(n);
    count += n;
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

FlowProbeResult flow_probe(const torch::Tensor& train_latents, const torch::Tensor& train_flows,
                           const torch::Tensor& val_latents, const torch::Tensor& val_flows, int64_t p_t, int64_t p_s,
                           const FlowProbeConfig& cfg) {
  auto expect = [&](const torch::Tensor& z, const torch::Tensor& f) {
    if (z.dim() != 5 || f.dim() != 5 || f.size(0) != z.size(0) || f.size(1) != (z.size(2) - 1) * p_t ||
        f.size(2) != z.size(3) * p_s || f.size(3) != z.size(4) * p_s || f.size(4) != 2)
      throw DimensionError("flow probe: flow resolution does not match the latent grid");
  };
  expect(train_latents, train_flows);
  expect(val_latents, val_flows);
  if (train_latents.size(0) < 1) throw InputError("flow probe needs training clips");

  FlowProbe probe(train_latents.size(1), p_t, p_s, cfg.hidden);
  {
    Rng rng(derive_seed(cfg.seed, 0xf1));
    init_parameters(*probe, rng);
  }
  torch::optim::AdamW opt(probe->parameters(), torch::optim::AdamWOptions(cfg.learning_rate).weight_decay(0.0));
  FlowProbeResult result;
  const int64_t n = train_latents.size(0);
  for (int64_t step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, static_cast<uint64_t>(step) + 0x100));
    auto idx = torch::randint(n, {std::min(cfg.batch_size, n)}, rng.generator(), torch::kInt64);
    auto loss = squared_flow_error(probe->forward(train_latents.index_select(0, idx)), train_flows.index_select(0, idx));
    opt.zero_grad();
    loss.backward();
    opt.step();
    result.losses.push_back(loss.item<double>());
  }
  result.train_epe = probe_epe(probe, train_latents, train_flows);
  result.val_epe = probe_epe(probe, val_latents, val_flows);
  return result;
}

}  // namespace pvvae
