#include "pvvae/config.hpp"
#include "pvvae/errors.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>

namespace pvvae {
namespace {

TEST(Config, JsonRoundTrip) {
  auto cfg = ExperimentConfig::toy();
  cfg.apply_seed(42);
  cfg.train.batch_size = 3;
  cfg.loss.diff_weight = 0.5;
  cfg.model.padding_strategy = PaddingStrategy::kLearnable;
  cfg.data.max_speed = 1;
  cfg.eval.ltd_intervals = {1, 3};
  auto j = to_json(cfg);
  auto back = experiment_from_json(j);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(back.train.batch_size, 3);
  EXPECT_EQ(back.model.padding_strategy, PaddingStrategy::kLearnable);
}

TEST(Config, PartialOverridesKeepDefaults) {
  auto j = nlohmann::json::parse(R"({"train": {"steps": 7}, "loss": {"lambda_kl": 0.5}})");
  auto cfg = experiment_from_json(j);
  EXPECT_EQ(cfg.train.steps, 7);
  EXPECT_DOUBLE_EQ(cfg.loss.lambda_kl, 0.5);
  EXPECT_EQ(cfg.train.batch_size, ExperimentConfig::toy().train.batch_size);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"trian": {}})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"train": {"stpes": 1}})")), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"train": {"max_drop_ratio": 1.5}})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"loss": {"lambda_kl": -1}})")), ConfigError);
}

TEST(Config, StageNamesAndDefaults) {
  for (auto s : {Stage::kImagePretrain, Stage::kVideoPredictive, Stage::kDecoderFinetune})
    EXPECT_EQ(stage_from_string(to_string(s)), s);
  EXPECT_THROW(stage_from_string("stage9"), ConfigError);
  auto cfg = ExperimentConfig::toy();
  cfg.train.stage = Stage::kDecoderFinetune;
  cfg.train.steps = -1;
  EXPECT_EQ(cfg.train.resolved_steps(), default_stage_steps(Stage::kDecoderFinetune));
}

TEST(Presets, Ladder) {
  auto cfg = ExperimentConfig::toy();
  apply_preset(cfg, Preset::kBaseline);
  EXPECT_DOUBLE_EQ(cfg.train.max_drop_ratio, 0.0);
  EXPECT_DOUBLE_EQ(cfg.loss.diff_weight, 0.0);
  apply_preset(cfg, Preset::kPredictive);
  EXPECT_DOUBLE_EQ(cfg.train.max_drop_ratio, 1.0);
  EXPECT_DOUBLE_EQ(cfg.loss.diff_weight, 0.0);
  apply_preset(cfg, Preset::kPredictiveMotion);
  EXPECT_DOUBLE_EQ(cfg.loss.diff_weight, 1.0);
  EXPECT_FALSE(preset_finetunes(Preset::kPredictiveMotion));
  EXPECT_TRUE(preset_finetunes(Preset::kPredictiveMotionFinetune));
  for (auto p : {Preset::kBaseline, Preset::kPredictive, Preset::kPredictiveMotion, Preset::kPredictiveMotionFinetune})
    EXPECT_EQ(preset_from_string(to_string(p)), p);
  EXPECT_THROW(preset_from_string("pr_everything"), ConfigError);
}

TEST(Seed, EnvironmentOverride) {
  ::unsetenv("PVVAE_SEED");
  EXPECT_FALSE(seed_from_env().has_value());
  ::setenv("PVVAE_SEED", "17", 1);
  EXPECT_EQ(seed_from_env().value(), 17u);
  ::setenv("PVVAE_SEED", "x1", 1);
  EXPECT_THROW(seed_from_env(), ConfigError);
  ::unsetenv("PVVAE_SEED");
}

TEST(Seed, ApplySeedReachesEveryStream) {
  auto cfg = ExperimentConfig::toy();
  cfg.apply_seed(99);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.model.seed, 99u);
  EXPECT_EQ(cfg.train.seed, 99u);
  EXPECT_EQ(cfg.flow.seed, 99u);
}

}  // namespace
}  // namespace pvvae
