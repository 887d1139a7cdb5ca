#include "pvvae/config.hpp"
#include "pvvae/data_synth.hpp"
#include "pvvae/errors.hpp"
#include "pvvae/tensor_io.hpp"
#include "pvvae/trainer.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <fstream>

namespace pvvae {
namespace {

namespace fs = std::filesystem;

ExperimentConfig small_experiment(uint64_t seed = 0) {
  auto cfg = ExperimentConfig::toy();
  cfg.apply_seed(seed);
  cfg.model.base_channels = 8;
  cfg.model.c_latent = 4;
  cfg.data.height = 16;
  cfg.data.width = 16;
  cfg.data.frames = 9;
  cfg.data.max_speed = 1;
  cfg.data.min_size = 2;
  cfg.data.max_size = 5;
  cfg.train.batch_size = 2;
  cfg.train.warmup_steps = 5;
  cfg.train.steps = 20;
  return cfg;
}

torch::Tensor small_videos(const ExperimentConfig& cfg, int64_t n = 8) {
  return synthesize_corpus(n, 100, cfg.data).train.videos;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pvvae_trainer_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
  std::vector<torch::Tensor> out;
  for (const auto& p : params) out.push_back(p.detach().clone());
  return out;
}

bool identical(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!torch::equal(a[i], b[i])) return false;
  return true;
}

TEST(LearningRate, WarmupAndCosineEndpoints) {
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.warmup_steps = 10;
  const int64_t total = 100;
  EXPECT_DOUBLE_EQ(learning_rate_at(tc, 0, total), 1e-3 / 10);
  EXPECT_DOUBLE_EQ(learning_rate_at(tc, 9, total), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate_at(tc, 10, total), 1e-3);
  EXPECT_NEAR(learning_rate_at(tc, total - 1, total), 1e-4, 1e-15);
  for (int64_t s = 11; s < total; ++s) EXPECT_LE(learning_rate_at(tc, s, total), learning_rate_at(tc, s - 1, total));
}

TEST(LearningRate, NoWarmup) {
  TrainConfig tc;
  tc.learning_rate = 2.0;
  tc.warmup_steps = 0;
  EXPECT_DOUBLE_EQ(learning_rate_at(tc, 0, 50), 2.0);
  EXPECT_NEAR(learning_rate_at(tc, 49, 50), 0.2, 1e-12);
}

TEST(BatchOrder, EpochPermutationsCoverData) {
  std::vector<int> seen(10, 0);
  for (int64_t step = 0; step < 5; ++step)
    for (auto i : batch_indices(3, Stage::kVideoPredictive, step, 2, 10)) ++seen[static_cast<size_t>(i)];
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_EQ(batch_indices(3, Stage::kVideoPredictive, 7, 3, 10), batch_indices(3, Stage::kVideoPredictive, 7, 3, 10));
  EXPECT_NE(batch_indices(3, Stage::kVideoPredictive, 0, 10, 10), batch_indices(3, Stage::kImagePretrain, 0, 10, 10));
}

TEST(Trainer, ZeroStepsLeavesModelUnchanged) {
  auto cfg = small_experiment();
  TrainSession s(cfg);
  auto before = snapshot(s.model->parameters());
  auto log = train_stage(s, small_videos(cfg), Stage::kVideoPredictive, 0);
  EXPECT_TRUE(log.empty());
  EXPECT_TRUE(identical(before, snapshot(s.model->parameters())));
}

TEST(Trainer, VideoStageRecordsPerClipDrops) {
  auto cfg = small_experiment();
  TrainSession s(cfg);
  auto log = train_stage(s, small_videos(cfg), Stage::kVideoPredictive, 6);
  ASSERT_EQ(log.size(), 6u);
  bool any_drop = false;
  for (const auto& r : log) {
    ASSERT_EQ(r.dropped.size(), 2u);
    for (auto k : r.dropped) {
      EXPECT_GE(k, 0);
      EXPECT_LE(k, 2);
      any_drop = any_drop || k > 0;
    }
    EXPECT_FALSE(r.loss.gan_active);
    EXPECT_NEAR(r.loss.total, r.loss.mse + r.loss.diff + 1e-6 * r.loss.kl, 1e-9);
  }
  EXPECT_TRUE(any_drop);
  EXPECT_EQ(s.global_step, 6);
}

TEST(Trainer, BaselinePresetNeverDrops) {
  auto cfg = small_experiment();
  apply_preset(cfg, Preset::kBaseline);
  EXPECT_EQ(cfg.train.max_drop_ratio, 0.0);
  EXPECT_EQ(cfg.loss.diff_weight, 0.0);
  TrainSession s(cfg);
  for (const auto& r : train_stage(s, small_videos(cfg), Stage::kVideoPredictive, 4))
    for (auto k : r.dropped) EXPECT_EQ(k, 0);
}

TEST(Trainer, ImageStageUsesSingleFrames) {
  auto cfg = small_experiment();
  TrainSession s(cfg);
  auto log = train_stage(s, small_videos(cfg), Stage::kImagePretrain, 3);
  for (const auto& r : log) {
    EXPECT_EQ(r.loss.diff, 0.0);
    EXPECT_EQ(r.dropped, (std::vector<int64_t>{0, 0}));
  }
}

TEST(Trainer, FinetuneFreezesEncoderAndPadding) {
  auto cfg = small_experiment();
  cfg.model.padding_strategy = PaddingStrategy::kLearnable;
  TrainSession s(cfg);
  auto videos = small_videos(cfg);
  train_stage(s, videos, Stage::kVideoPredictive, 4);
  auto enc = snapshot(s.model->encoder->parameters());
  auto token = s.padding->token.detach().clone();
  auto dec = snapshot(s.model->decoder->parameters());
  auto log = finetune_decoder(s, videos, 4);
  EXPECT_TRUE(identical(enc, snapshot(s.model->encoder->parameters())));
  EXPECT_TRUE(torch::equal(token, s.padding->token));
  EXPECT_FALSE(identical(dec, snapshot(s.model->decoder->parameters())));
  for (const auto& r : log) {
    for (auto k : r.dropped) EXPECT_EQ(k, 0);
    EXPECT_TRUE(r.loss.gan_active);
    EXPECT_GE(r.loss.gan_d, 0.0);
  }
}

TEST(Trainer, ResumeReproducesNextLossBitExactly) {
  auto cfg = small_experiment(5);
  cfg.model.padding_strategy = PaddingStrategy::kLearnable;
  auto videos = small_videos(cfg);

  TrainSession full(cfg);
  train_stage(full, videos, Stage::kVideoPredictive, 3);
  full.begin_stage(Stage::kDecoderFinetune, 6);
  for (int i = 0; i < 3; ++i) train_step(full, videos);
  auto dir = temp_dir("resume");
  save_checkpoint(full, dir);
  std::vector<double> expected;
  for (int i = 0; i < 3; ++i) expected.push_back(train_step(full, videos).loss.total);

  auto resumed = load_checkpoint(dir);
  EXPECT_EQ(resumed.stage, Stage::kDecoderFinetune);
  EXPECT_EQ(resumed.stage_step, 3);
  EXPECT_EQ(resumed.global_step, 6);
  EXPECT_EQ(resumed.history.size(), 6u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(train_step(resumed, videos).loss.total, expected[static_cast<size_t>(i)]);
  EXPECT_TRUE(identical(snapshot(full.model->parameters()), snapshot(resumed.model->parameters())));
  EXPECT_TRUE(identical(snapshot(full.disc->parameters()), snapshot(resumed.disc->parameters())));
  fs::remove_all(dir);
}

TEST(Trainer, ResumeMidVideoStage) {
  auto cfg = small_experiment(9);
  auto videos = small_videos(cfg);
  TrainSession a(cfg);
  a.begin_stage(Stage::kVideoPredictive, 8);
  for (int i = 0; i < 4; ++i) train_step(a, videos);
  auto dir = temp_dir("resume_video");
  save_checkpoint(a, dir);
  auto next = train_step(a, videos);
  auto b = load_checkpoint(dir);
  auto again = train_step(b, videos);
  EXPECT_EQ(next.loss.total, again.loss.total);
  EXPECT_EQ(next.dropped, again.dropped);
  EXPECT_EQ(next.lr, again.lr);
  fs::remove_all(dir);
}

TEST(Checkpoint, ManifestRecordsStep) {
  auto cfg = small_experiment();
  TrainSession s(cfg);
  train_stage(s, small_videos(cfg), Stage::kVideoPredictive, 2);
  auto dir = temp_dir("manifest");
  save_checkpoint(s, dir);
  std::ifstream in(dir / "manifest.json");
  auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["step"], 2);
  EXPECT_EQ(j["version"], kCheckpointVersion);
  EXPECT_EQ(j["history"].size(), 2u);
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto cfg = small_experiment(4);
  TrainSession s(cfg);
  train_stage(s, small_videos(cfg), Stage::kVideoPredictive, 2);
  auto dir = temp_dir("roundtrip");
  save_checkpoint(s, dir);
  auto t = load_checkpoint(dir);
  EXPECT_TRUE(identical(snapshot(s.model->parameters()), snapshot(t.model->parameters())));
  EXPECT_TRUE(torch::equal(s.padding->token, t.padding->token));
  fs::remove_all(dir);
}

TEST(Checkpoint, UnknownVersionRejected) {
  auto cfg = small_experiment();
  TrainSession s(cfg);
  auto dir = temp_dir("version");
  save_checkpoint(s, dir);
  std::ifstream in(dir / "manifest.json");
  auto j = nlohmann::json::parse(in);
  in.close();
  j["version"] = 99;
  std::ofstream(dir / "manifest.json") << j.dump();
  EXPECT_THROW(load_checkpoint(dir), FormatError);
  fs::remove_all(dir);
}

TEST(Checkpoint, MismatchedArchitectureNamesParameter) {
  auto cfg = small_experiment();
  TrainSession s(cfg);
  auto dir = temp_dir("mismatch");
  save_checkpoint(s, dir);
  auto other_cfg = cfg;
  other_cfg.model.base_channels = 4;
  TrainSession other(other_cfg);
  try {
    load_checkpoint_into(other, dir);
    FAIL() << "expected a shape error";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.conv_in.weight"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Trainer, NonFiniteInputAborts) {
  auto cfg = small_experiment();
  TrainSession s(cfg);
  auto videos = small_videos(cfg);
  videos.fill_(std::numeric_limits<float>::quiet_NaN());
  s.begin_stage(Stage::kVideoPredictive, 1);
  EXPECT_THROW(train_step(s, videos), TrainingAborted);
}

// 50 steps on 32 clips: smoothed (mse + diff) falls for a majority of seeds.
TEST(Trainer, SmokeRunReducesLoss) {
  int improved = 0;
  for (uint64_t seed : {0, 1, 2}) {
    auto cfg = small_experiment(seed);
    cfg.train.warmup_steps = 5;
    TrainSession s(cfg);
    auto log = train_stage(s, small_videos(cfg, 32), Stage::kVideoPredictive, 50);
    auto smoothed = [&](size_t from) {
      double acc = 0;
      for (size_t i = from; i < from + 10; ++i) acc += log[i].loss.mse + log[i].loss.diff;
      return acc / 10;
    };
    if (smoothed(40) < smoothed(0)) ++improved;
  }
  EXPECT_GE(improved, 2);
}

}  // namespace
}  // namespace pvvae
