#include "pvvae/core_model.hpp"
#include "pvvae/diagnostics.hpp"
#include "pvvae/errors.hpp"
#include "pvvae/predictive.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>

namespace pvvae {
namespace {

VaeConfig small_config() {
  VaeConfig cfg;
  cfg.base_channels = 8;
  cfg.c_latent = 4;
  return cfg;
}

torch::Tensor random_video(int64_t n, int64_t frames, int64_t size, uint64_t seed) {
  Rng rng(seed);
  return (rng.uniform({n, 3, frames, size, size}, torch::kFloat32) * 2.0 - 1.0);
}

TEST(Psnr, IdenticalIsCapped) {
  auto v = random_video(1, 5, 16, 1);
  EXPECT_DOUBLE_EQ(psnr(v, v), kPsnrCap);
}

TEST(Psnr, KnownMse) {
  // A constant offset of 2e in [-1, 1] is an offset of e after rescaling.
  auto a = torch::zeros({1, 3, 2, 4, 4}, torch::kFloat64);
  EXPECT_NEAR(psnr(a, a + 2 * 0.01), 40.0, 1e-9);
  EXPECT_NEAR(psnr(a, a + 2 * 0.1), 20.0, 1e-9);
}

TEST(Psnr, ShapeMismatch) {
  EXPECT_THROW(psnr(torch::zeros({1, 3, 2, 4, 4}), torch::zeros({1, 3, 2, 4, 5})), DimensionError);
}

TEST(Ssim, IdenticalIsOne) {
  auto v = random_video(1, 2, 16, 2);
  EXPECT_NEAR(ssim(v, v), 1.0, 1e-12);
}

TEST(Ssim, Symmetric) {
  auto a = random_video(1, 2, 16, 3), b = random_video(1, 2, 16, 4);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, ContrastInversionIsNegative) {
  // Zero-mean in [-1, 1] coordinates: a vs -a mirrors every plane around 0.5.
  auto a = random_video(1, 2, 16, 5);
  EXPECT_LT(ssim(a, -a), 0.0);
}

TEST(Ssim, MatchesDirectWindowOracle) {
  auto a = random_video(1, 2, 14, 6);
  auto b = (a + 0.3 * random_video(1, 2, 14, 7)).clamp(-1, 1);
  EXPECT_NEAR(ssim(a, b), oracle::video_ssim(a, b), 1e-10);
}

TEST(Ssim, TooSmallFrames) {
  auto v = random_video(1, 2, 10, 8);
  EXPECT_THROW(ssim(v, v), InputError);
}

TEST(Ltd, ConstantClipIsZero) {
  torch::manual_seed(0);
  VaeModel model = build_model(small_config());
  auto clip = torch::full({2, 3, 17, 32, 32}, 0.25);
  auto p = ltd_profile(model, clip, {1, 2, 3, 4});
  for (double d : p.mean_distance) EXPECT_LE(d, 1e-5);
  EXPECT_EQ(p.normalized.size(), 4u);
  EXPECT_DOUBLE_EQ(p.normalized[0], 1.0);
}

TEST(Ltd, ConstantLatentsAreZero) {
  auto z = torch::full({3, 4, 5, 2, 2}, 0.7);
  auto p = ltd_from_latents(z, {1, 2, 3, 4});
  for (double d : p.mean_distance) EXPECT_LE(d, 1e-5);
  for (double v : p.normalized) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Ltd, LinearDriftIsProportional) {
  auto t = torch::arange(5, torch::kFloat64).view({1, 1, 5, 1, 1});
  auto z = (t * torch::ones({2, 4, 1, 3, 3}, torch::kFloat64)).contiguous();
  auto p = ltd_from_latents(z, {1, 2, 3, 4});
  EXPECT_NEAR(p.mean_distance[0], 1.0, 1e-12);
  for (size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.normalized[i], static_cast<double>(i + 1), 1e-12);
  EXPECT_EQ(p.adjacent.size(), 8u);
}

TEST(Ltd, IntervalOutOfRange) {
  auto z = torch::zeros({1, 4, 5, 2, 2});
  EXPECT_THROW(ltd_from_latents(z, {5}), InputError);
  EXPECT_THROW(ltd_from_latents(z, {0}), InputError);
}

TEST(Histogram, CountsEveryValue) {
  auto h = histogram({0.0, 0.1, 0.5, 0.9, 1.0}, 2);
  ASSERT_EQ(h.counts.size(), 2u);
  EXPECT_EQ(h.counts[0] + h.counts[1], 5);
  EXPECT_EQ(h.counts[0], 2);
  EXPECT_DOUBLE_EQ(h.edges.front(), 0.0);
  EXPECT_DOUBLE_EQ(h.edges.back(), 1.0);
}

// Three orthogonal unit-variance signals in channels 0, 3, 5 of 8.
torch::Tensor orthogonal_latents() {
  Rng rng(11);
  auto base = rng.normal({3, 4000}, torch::kFloat64);
  auto q = std::get<0>(torch::linalg_qr(base.transpose(0, 1)));  // (4000, 3) orthonormal
  auto signals = q.transpose(0, 1) * std::sqrt(3999.0);
  signals[0] *= 3.0;
  signals[1] *= 2.0;
  auto z = torch::zeros({8, 4000}, torch::kFloat64);
  z[0] = signals[0];
  z[3] = signals[1];
  z[5] = signals[2];
  return z.view({1, 8, 10, 20, 20});
}

TEST(Pca, RecoversOrthogonalSignals) {
  auto z = orthogonal_latents();
  auto out = pca_rgb(z);
  auto x = z.movedim(1, -1).reshape({-1, 8});
  auto centered = x - x.mean(0, true);
  auto cov = centered.transpose(0, 1).matmul(centered) / static_cast<double>(x.size(0) - 1);
  std::vector<std::vector<double>> dense(8, std::vector<double>(8));
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) dense[i][j] = cov[i][j].item<double>();
  auto eig = oracle::jacobi_eigen(dense);
  std::vector<size_t> order(8);
  for (size_t i = 0; i < 8; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return eig.values[a] > eig.values[b]; });
  for (int64_t j = 0; j < 3; ++j) {
    const auto& ref = eig.vectors[order[static_cast<size_t>(j)]];
    double dot = 0.0;
    for (int64_t i = 0; i < 8; ++i) dot += ref[static_cast<size_t>(i)] * out.basis.components[i][j].item<double>();
    EXPECT_NEAR(std::abs(dot), 1.0, 1e-8);
    EXPECT_NEAR(out.basis.explained_variance[static_cast<size_t>(j)], eig.values[order[static_cast<size_t>(j)]], 1e-8);
  }
  const int64_t channel_of[3] = {0, 3, 5};
  for (int64_t j = 0; j < 3; ++j) EXPECT_NEAR(out.basis.components[channel_of[j]][j].item<double>(), 1.0, 1e-8);
}

TEST(Pca, ComponentsOrthonormal) {
  Rng rng(3);
  auto z = rng.normal({2, 6, 3, 4, 4}, torch::kFloat64);
  auto c = pca_rgb(z).basis.components;
  EXPECT_LT((c.transpose(0, 1).matmul(c) - torch::eye(3, torch::kFloat64)).abs().max().item<double>(), 1e-8);
}

TEST(Pca, ScaleInvariantAndDeterministic) {
  Rng rng(4);
  auto z = rng.normal({2, 6, 3, 4, 4}, torch::kFloat64);
  auto a = pca_rgb(z), b = pca_rgb(z * 2.0), c = pca_rgb(z);
  EXPECT_LT((a.rgb - b.rgb).abs().max().item<float>(), 1e-5);
  EXPECT_TRUE(torch::equal(a.rgb, c.rgb));
  EXPECT_GE(a.rgb.min().item<float>(), 0.0f);
  EXPECT_LE(a.rgb.max().item<float>(), 1.0f);
  EXPECT_EQ(a.rgb.sizes(), (std::vector<int64_t>{2, 3, 4, 4, 3}));
}

TEST(Pca, Errors) {
  EXPECT_THROW(pca_rgb(torch::randn({1, 2, 3, 4, 4})), DimensionError);
  EXPECT_THROW(pca_rgb(torch::ones({1, 4, 3, 4, 4})), NumericError);
}

TEST(PredictionError, RequiresDroppedGroups) {
  torch::manual_seed(0);
  VaeModel model = build_model(small_config());
  auto padding = make_padding(model->config(), 32, 32);
  auto v = random_video(1, 17, 32, 9);
  Rng rng(1);
  EXPECT_THROW(prediction_error(model, padding, v, 0, rng), InputError);
  EXPECT_THROW(prediction_error(model, padding, v, 5, rng), InputError);
}

TEST(PredictionError, IgnoresDroppedContentOnlyThroughTarget) {
  // Changing the dropped frames changes only the target, never the prediction.
  torch::manual_seed(0);
  VaeModel model = build_model(small_config());
  auto padding = make_padding(model->config(), 32, 32);
  auto v = random_video(1, 17, 32, 10);
  auto w = v.clone();
  w.narrow(2, 9, 8).fill_(0.0);
  Rng r1(5), r2(5);
  const double e_v = prediction_error(model, padding, v, 2, r1);
  const double e_w = prediction_error(model, padding, w, 2, r2);
  EXPECT_TRUE(std::isfinite(e_v));
  EXPECT_NE(e_v, e_w);

  PredictiveOptions opts;
  opts.forced_drop = 2;
  opts.sample_latents = false;
  Rng r3(5), r4(5);
  torch::NoGradGuard guard;
  auto pv = predictive_forward(model, padding, v, 1.0, r3, opts).recon;
  auto pw = predictive_forward(model, padding, w, 1.0, r4, opts).recon;
  EXPECT_TRUE(torch::equal(pv, pw));
  auto target = w.narrow(2, 9, 8).to(torch::kFloat64);
  EXPECT_NEAR(e_w, (pw.narrow(2, 9, 8).to(torch::kFloat64) - target).pow(2).mean().item<double>(), 1e-12);
}

TEST(Epe, ZeroAndConstantFlow) {
  auto zero = torch::zeros({2, 4, 8, 8, 2});
  EXPECT_DOUBLE_EQ(end_point_error(zero, zero), 0.0);
  auto flow = zero.clone();
  flow.select(-1, 0).fill_(2.0);
  EXPECT_DOUBLE_EQ(end_point_error(zero, flow), 2.0);
  EXPECT_NEAR(end_point_error(torch::zeros({1, 1, 2, 2, 2}), torch::full({1, 1, 2, 2, 2}, 3.0)), std::sqrt(18.0), 1e-12);
  EXPECT_THROW(end_point_error(zero, torch::zeros({2, 4, 8, 8, 3})), DimensionError);
}

TEST(FlowProbe, OutputLayout) {
  FlowProbe probe(4, 4, 8, 8);
  auto out = probe->forward(torch::randn({2, 4, 5, 4, 4}));
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{2, 16, 32, 32, 2}));
}

TEST(FlowProbe, CausalInLatentTime) {
  // Two 3x3x3 convolutions see two latent frames ahead; outputs three groups
  // back stay fixed.
  FlowProbe probe(4, 4, 8, 8);
  auto z = torch::randn({1, 4, 5, 4, 4});
  auto z2 = z.clone();
  z2.narrow(2, 4, 1).add_(1.0);
  torch::NoGradGuard guard;
  auto a = probe->forward(z), b = probe->forward(z2);
  EXPECT_TRUE(torch::equal(a.narrow(1, 0, 4), b.narrow(1, 0, 4)));
  EXPECT_FALSE(torch::equal(a.narrow(1, 4, 4), b.narrow(1, 4, 4)));
}

TEST(FlowProbe, ZeroFlowCorpusLearnsZero) {
  auto z = torch::randn({6, 4, 5, 4, 4});
  auto flows = torch::zeros({6, 16, 32, 32, 2});
  FlowProbeConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 4;
  auto r = flow_probe(z, flows, z, flows, 4, 8, cfg);
  EXPECT_LT(r.losses.back(), r.losses.front());
  EXPECT_LT(r.val_epe, 0.05);
}

TEST(FlowProbe, RejectsNonPowerOfTwoScale) { EXPECT_THROW(FlowProbe(4, 4, 6, 8), ConfigError); }

TEST(FlowProbe, ShapeMismatch) {
  auto z = torch::randn({2, 4, 5, 4, 4});
  FlowProbeConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(flow_probe(z, torch::zeros({2, 16, 16, 16, 2}), z, torch::zeros({2, 16, 32, 32, 2}), 4, 8, cfg),
               DimensionError);
}

}  // namespace
}  // namespace pvvae
