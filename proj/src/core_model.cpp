#include "pvvae/core_model.hpp"

#include "pvvae/errors.hpp"

#include <torch/torch.h>

#include <cmath>
#include <numeric>

namespace pvvae {

namespace F = torch::nn::functional;

std::string to_string(PaddingStrategy s) { return s == PaddingStrategy::kGaussian ? "gaussian" : "learnable"; }

PaddingStrategy padding_strategy_from_string(const std::string& s) {
  if (s == "gaussian") return PaddingStrategy::kGaussian;
  if (s == "learnable") return PaddingStrategy::kLearnable;
  throw ConfigError("unknown padding strategy '" + s + "' (expected gaussian or learnable)");
}

VaeConfig VaeConfig::paper() {
  VaeConfig cfg;
  cfg.p_t = 4;
  cfg.p_s = 16;
  cfg.c_latent = 64;
  cfg.base_channels = 128;
  cfg.channel_mult = {1, 2, 4, 4};
  cfg.blocks_per_stage = 2;
  return cfg;
}

VaeConfig VaeConfig::toy() { return VaeConfig{}; }

namespace {

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int64_t log2_exact(int64_t v) {
  int64_t n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

int64_t VaeConfig::temporal_stages() const { return log2_exact(p_t); }

void VaeConfig::validate() const {
  if (channel_mult.empty()) throw ConfigError("channel_mult must list at least one stage");
  for (auto m : channel_mult)
    if (m <= 0) throw ConfigError("channel_mult entries must be positive");
  if (base_channels <= 0) throw ConfigError("base_channels must be positive");
  if (c_latent <= 0) throw ConfigError("c_latent must be positive");
  if (blocks_per_stage < 0) throw ConfigError("blocks_per_stage must be non-negative");
  if (!is_power_of_two(p_s)) throw ConfigError("p_s must be a power of two");
  if (!is_power_of_two(p_t)) throw ConfigError("p_t must be a power of two");
  const int64_t stages = num_stages();
  if (log2_exact(p_s) != stages)
    throw ConfigError("p_s=" + std::to_string(p_s) + " does not factor into " + std::to_string(stages) +
                      " spatial 2x stages");
  if (temporal_stages() > stages)
    throw ConfigError("p_t=" + std::to_string(p_t) + " needs more temporal 2x stages than the " +
                      std::to_string(stages) + " available");
}

torch::Tensor clip_to_batch(const VideoClip& clip) {
  if (clip.data.dim() != 4 || clip.data.size(3) != 3)
    throw DimensionError("VideoClip data must be (1+T, H, W, 3)");
  return clip.data.permute({3, 0, 1, 2}).unsqueeze(0).contiguous();
}

VideoClip batch_to_clip(const torch::Tensor& batch, int64_t index) {
  if (batch.dim() != 5) throw DimensionError("expected a (B, 3, F, H, W) video batch");
  return VideoClip{batch[index].permute({1, 2, 3, 0}).contiguous(), 0.0};
}

// ---------------------------------------------------------------------------

torch::Tensor video_to_frames(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), t = x.size(2), h = x.size(3), w = x.size(4);
  return x.permute({0, 2, 3, 4, 1}).contiguous().view({b * t, h, w, c}).permute({0, 3, 1, 2});
}

torch::Tensor frames_to_video(const torch::Tensor& f, int64_t batch) {
  const auto bt = f.size(0), c = f.size(1), h = f.size(2), w = f.size(3);
  return f.permute({0, 2, 3, 1}).reshape({batch, bt / batch, h, w, c}).permute({0, 4, 1, 2, 3}).contiguous();
}

namespace {

torch::Tensor channels_last(const torch::Tensor& t) { return t.contiguous(at::MemoryFormat::ChannelsLast); }

// Upper bound on the gathered tap tensor during inference.
constexpr int64_t kGatherBudgetBytes = int64_t{256} << 20;

// Frame indices feeding temporal tap `dt` of every output step; negative
// positions (before the clip starts) clamp to frame 0.
torch::Tensor tap_indices(int64_t t_out, int64_t stride, int64_t dt, int64_t kernel) {
  std::vector<int64_t> idx(static_cast<size_t>(t_out));
  for (int64_t t = 0; t < t_out; ++t) idx[static_cast<size_t>(t)] = std::max<int64_t>(0, t * stride + dt - (kernel - 1));
  return torch::tensor(idx, torch::kInt64);
}

}  // namespace

CausalConv3dImpl::CausalConv3dImpl(int64_t in, int64_t out, int64_t kernel, int64_t temporal_stride,
                                   int64_t spatial_stride)
    : kernel_(kernel), temporal_stride_(temporal_stride), spatial_stride_(spatial_stride) {
  // Values are drawn later by init_parameters from an explicit seed.
  weight = register_parameter("weight", torch::zeros({out, in, kernel, kernel, kernel}));
  bias = register_parameter("bias", torch::zeros({out}));
}

torch::Tensor CausalConv3dImpl::forward_frames(const torch::Tensor& frames, int64_t batch) {
  const int64_t c = frames.size(1), h = frames.size(2), w = frames.size(3);
  const int64_t t_in = frames.size(0) / batch;
  // Left-padded length is t_in + kernel - 1.
  const int64_t t_out = (t_in - 1) / temporal_stride_ + 1;
  const int64_t pad = kernel_ / 2;

  // (O, C, kt, kh, kw) -> (O, kt * C, kh, kw) matching the tap-major channel order.
  auto w2 = weight.permute({0, 2, 1, 3, 4}).reshape({weight.size(0), kernel_ * c, kernel_, kernel_});
  const bool fast = frames.scalar_type() == torch::kFloat32;
  if (fast) w2 = channels_last(w2);
  auto conv = [&](torch::Tensor input) {
    if (fast) input = channels_last(input);
    return F::conv2d(input, w2, F::Conv2dFuncOptions().bias(bias).stride(spatial_stride_).padding(pad));
  };
  if (kernel_ == 1 && temporal_stride_ == 1) return conv(frames);

  // Temporal taps are gathered into the channel axis so a single 2-D
  // convolution over (B * T_out, k * C, H, W) computes the 3-D one.
  auto nhwc = frames.permute({0, 2, 3, 1}).reshape({batch, t_in, h, w, c});
  auto gather = [&](int64_t t0, int64_t count) {
    std::vector<torch::Tensor> taps;
    taps.reserve(static_cast<size_t>(kernel_));
    for (int64_t dt = 0; dt < kernel_; ++dt)
      taps.push_back(nhwc.index_select(1, tap_indices(t_out, temporal_stride_, dt, kernel_).narrow(0, t0, count)));
    return torch::stack(taps, 4).view({batch * count, h, w, kernel_ * c}).permute({0, 3, 1, 2});
  };

  const int64_t frame_bytes = batch * h * w * kernel_ * c * frames.element_size();
  const int64_t chunk = std::max<int64_t>(1, kGatherBudgetBytes / std::max<int64_t>(1, frame_bytes));
  if (torch::GradMode::is_enabled() || chunk >= t_out) return conv(gather(0, t_out));

  // Inference on large inputs: gather and convolve a few output frames at a
  // time so the k-fold tap tensor never exists for the whole clip.
  torch::Tensor out;
  for (int64_t t0 = 0; t0 < t_out; t0 += chunk) {
    const int64_t count = std::min(chunk, t_out - t0);
    auto y = conv(gather(t0, count));
    const int64_t o = y.size(1), ho = y.size(2), wo = y.size(3);
    if (!out.defined()) out = torch::empty({batch, t_out, ho, wo, o}, y.options());
    out.narrow(1, t0, count).copy_(y.permute({0, 2, 3, 1}).reshape({batch, count, ho, wo, o}));
  }
  return out.view({batch * t_out, out.size(2), out.size(3), out.size(4)}).permute({0, 3, 1, 2});
}

torch::Tensor CausalConv3dImpl::forward(const torch::Tensor& x) {
  return frames_to_video(forward_frames(video_to_frames(x), x.size(0)), x.size(0));
}

namespace {

int64_t norm_groups(int64_t channels) {
  const int64_t target = channels >= 16 ? 8 : std::max<int64_t>(1, channels / 2);
  return std::gcd(channels, target);
}

}  // namespace

FrameGroupNormImpl::FrameGroupNormImpl(int64_t channels) : groups_(norm_groups(channels)) {
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor FrameGroupNormImpl::forward(const torch::Tensor& frames) {
  return torch::group_norm(frames, groups_, weight, bias, 1e-6);
}

ResBlockImpl::ResBlockImpl(int64_t in, int64_t out) {
  norm1_ = register_module("norm1", FrameGroupNorm(in));
  conv1_ = register_module("conv1", CausalConv3d(in, out));
  norm2_ = register_module("norm2", FrameGroupNorm(out));
  conv2_ = register_module("conv2", CausalConv3d(out, out));
  if (in != out) skip_ = register_module("skip", CausalConv3d(in, out, 1));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, int64_t batch) {
  auto h = conv1_->forward_frames(torch::silu(norm1_->forward(x)), batch);
  h = conv2_->forward_frames(torch::silu(norm2_->forward(h)), batch);
  return (skip_ ? skip_->forward_frames(x, batch) : x) + h;
}

EncoderImpl::EncoderImpl(const VaeConfig& cfg)
    : stages_(cfg.num_stages()), blocks_per_stage_(cfg.blocks_per_stage) {
  conv_in_ = register_module("conv_in", CausalConv3d(3, cfg.stage_channels(0)));
  int64_t ch = cfg.stage_channels(0);
  for (int64_t s = 0; s < stages_; ++s) {
    const int64_t out = cfg.stage_channels(s);
    for (int64_t b = 0; b < blocks_per_stage_; ++b) {
      blocks_->push_back(ResBlock(ch, out));
      ch = out;
    }
    const int64_t ts = s < cfg.temporal_stages() ? 2 : 1;
    downsamplers_->push_back(CausalConv3d(ch, ch, 3, ts, 2));
  }
  register_module("blocks", blocks_);
  register_module("down", downsamplers_);
  mid_ = register_module("mid", ResBlock(ch, ch));
  norm_out_ = register_module("norm_out", FrameGroupNorm(ch));
  conv_out_ = register_module("conv_out", CausalConv3d(ch, 2 * cfg.c_latent));
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) {
  const int64_t batch = x.size(0);
  auto h = conv_in_->forward_frames(video_to_frames(x), batch);
  for (int64_t s = 0; s < stages_; ++s) {
    for (int64_t b = 0; b < blocks_per_stage_; ++b)
      h = blocks_[static_cast<size_t>(s * blocks_per_stage_ + b)]->as<ResBlock>()->forward(h, batch);
    h = downsamplers_[static_cast<size_t>(s)]->as<CausalConv3d>()->forward_frames(h, batch);
  }
  h = mid_->forward(h, batch);
  h = conv_out_->forward_frames(torch::silu(norm_out_->forward(h)), batch);
  return frames_to_video(h, batch);
}

UpsampleImpl::UpsampleImpl(int64_t in, int64_t out, bool temporal) : temporal_(temporal) {
  conv_ = register_module("conv", CausalConv3d(in, out));
}

torch::Tensor UpsampleImpl::forward(const torch::Tensor& frames, int64_t batch) {
  auto h = frames;
  const int64_t t_in = frames.size(0) / batch;
  if (temporal_ && t_in > 1) {
    std::vector<int64_t> idx{0};
    for (int64_t t = 1; t < t_in; ++t) idx.insert(idx.end(), {t, t});
    auto nhwc = frames.permute({0, 2, 3, 1}).reshape({batch, t_in, frames.size(2), frames.size(3), frames.size(1)});
    nhwc = nhwc.index_select(1, torch::tensor(idx, torch::kInt64));
    h = nhwc.reshape({-1, frames.size(2), frames.size(3), frames.size(1)}).permute({0, 3, 1, 2});
  }
  h = F::interpolate(h, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
  return conv_->forward_frames(h, batch);
}

DecoderImpl::DecoderImpl(const VaeConfig& cfg)
    : stages_(cfg.num_stages()), blocks_per_stage_(cfg.blocks_per_stage) {
  int64_t ch = cfg.stage_channels(stages_ - 1);
  conv_in_ = register_module("conv_in", CausalConv3d(cfg.c_latent, ch));
  mid_ = register_module("mid", ResBlock(ch, ch));
  for (int64_t s = stages_ - 1; s >= 0; --s) {
    const int64_t out = cfg.stage_channels(s);
    upsamplers_->push_back(Upsample(ch, out, s < cfg.temporal_stages()));
    ch = out;
    for (int64_t b = 0; b < blocks_per_stage_; ++b) blocks_->push_back(ResBlock(ch, ch));
  }
  register_module("up", upsamplers_);
  register_module("blocks", blocks_);
  norm_out_ = register_module("norm_out", FrameGroupNorm(ch));
  conv_out_ = register_module("conv_out", CausalConv3d(ch, 3));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z) {
  const int64_t batch = z.size(0);
  auto h = conv_in_->forward_frames(video_to_frames(z), batch);
  h = mid_->forward(h, batch);
  for (int64_t i = 0; i < stages_; ++i) {
    h = upsamplers_[static_cast<size_t>(i)]->as<Upsample>()->forward(h, batch);
    for (int64_t b = 0; b < blocks_per_stage_; ++b)
      h = blocks_[static_cast<size_t>(i * blocks_per_stage_ + b)]->as<ResBlock>()->forward(h, batch);
  }
  h = conv_out_->forward_frames(torch::silu(norm_out_->forward(h)), batch);
  return frames_to_video(torch::tanh(h), batch);
}

// ---------------------------------------------------------------------------

VaeModelImpl::VaeModelImpl(const VaeConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  encoder = register_module("encoder", Encoder(cfg_));
  decoder = register_module("decoder", Decoder(cfg_));
}

void VaeModelImpl::check_video(const torch::Tensor& x) const {
  if (x.dim() != 5 || x.size(1) != 3)
    throw DimensionError("expected video batch (B, 3, 1+T, H, W), got " + std::to_string(x.dim()) + "-d tensor");
  const int64_t frames = x.size(2);
  if (frames < 1 || (frames - 1) % cfg_.p_t != 0)
    throw DimensionError("frame count " + std::to_string(frames) + " is not 1 + multiple of p_t=" +
                         std::to_string(cfg_.p_t));
  if (x.size(3) % cfg_.p_s != 0 || x.size(4) % cfg_.p_s != 0)
    throw DimensionError("spatial size " + std::to_string(x.size(3)) + "x" + std::to_string(x.size(4)) +
                         " is not divisible by p_s=" + std::to_string(cfg_.p_s));
}

LatentPosterior VaeModelImpl::encode(const torch::Tensor& x) {
  check_video(x);
  auto h = encoder->forward(x);
  auto parts = h.chunk(2, 1);
  return {parts[0], parts[1].clamp(kLogvarMin, kLogvarMax)};
}

torch::Tensor VaeModelImpl::decode(const torch::Tensor& z) {
  if (z.dim() != 5 || z.size(1) != cfg_.c_latent || z.size(2) < 1)
    throw DimensionError("expected latents (B, c=" + std::to_string(cfg_.c_latent) + ", 1+t, h, w)");
  if (!torch::isfinite(z).all().item<bool>()) throw NumericError("decode: non-finite latents");
  return decoder->forward(z);
}

namespace {

void init_direct_parameters(torch::nn::Module& m, Rng& rng) {
  auto params = m.named_parameters(/*recurse=*/false);
  auto* w = params.find("weight");
  if (w == nullptr || w->dim() < 2) return;
  const double bound = 1.0 / std::sqrt(static_cast<double>((*w)[0].numel()));
  w->copy_(rng.uniform(w->sizes(), w->scalar_type()) * (2 * bound) - bound);
  if (auto* b = params.find("bias"); b != nullptr && b->defined())
    b->copy_(rng.uniform(b->sizes(), b->scalar_type()) * (2 * bound) - bound);
}

}  // namespace

void init_parameters(torch::nn::Module& module, Rng& rng) {
  torch::NoGradGuard guard;
  // include_self=false: the top-level module may be constructed in place.
  init_direct_parameters(module, rng);
  for (const auto& m : module.modules(/*include_self=*/false)) init_direct_parameters(*m, rng);
}

VaeModel build_model(const VaeConfig& cfg) {
  VaeModel model(cfg);
  Rng rng(cfg.seed);
  init_parameters(*model, rng);
  return model;
}

LatentPosterior encode(VaeModel& model, const VideoClip& clip) {
  auto x = clip_to_batch(clip).to(model->encoder->parameters().front().scalar_type());
  return model->encode(x);
}

VideoClip decode(VaeModel& model, const torch::Tensor& z) {
  auto latents = z.dim() == 4 ? z.unsqueeze(0) : z;
  return batch_to_clip(model->decode(latents));
}

torch::Tensor reparameterize(const LatentPosterior& post, Rng& rng) {
  if (post.mean.sizes() != post.logvar.sizes()) throw DimensionError("posterior mean/logvar shape mismatch");
  auto eps = rng.normal(post.mean.sizes(), post.mean.scalar_type());
  return post.mean + torch::exp(0.5 * post.logvar) * eps;
}

std::vector<int64_t> latent_shape(const VaeConfig& cfg, int64_t frames, int64_t height, int64_t width) {
  return {cfg.c_latent, 1 + (frames - 1) / cfg.p_t, height / cfg.p_s, width / cfg.p_s};
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace pvvae
