#include "pvvae/config.hpp"

#include "pvvae/errors.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

namespace pvvae {

std::string to_string(Stage s) {
  switch (s) {
    case Stage::kImagePretrain:
      return "image_pretrain";
    case Stage::kVideoPredictive:
      return "video_predictive";
    case Stage::kDecoderFinetune:
      return "decoder_finetune";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& s) {
  if (s == "image_pretrain") return Stage::kImagePretrain;
  if (s == "video_predictive") return Stage::kVideoPredictive;
  if (s == "decoder_finetune") return Stage::kDecoderFinetune;
  throw ConfigError("unknown stage '" + s + "'");
}

int64_t default_stage_steps(Stage s) {
  switch (s) {
    case Stage::kImagePretrain:
      return 2000;
    case Stage::kVideoPredictive:
      return 2000;
    case Stage::kDecoderFinetune:
      return 1000;
  }
  return 0;
}

namespace {

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!finite_positive(learning_rate) || !finite_positive(disc_learning_rate))
    throw ConfigError("learning rates must be positive");
  if (warmup_steps < 0) throw ConfigError("train.warmup_steps must be >= 0");
  if (!(lr_decay_factor >= 1.0)) throw ConfigError("train.lr_decay_factor must be >= 1");
  if (!(max_drop_ratio >= 0.0 && max_drop_ratio <= 1.0)) throw ConfigError("train.max_drop_ratio must lie in [0, 1]");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1))
    throw ConfigError("optimizer betas must lie in [0, 1)");
  if (!finite_positive(optimizer.eps) || optimizer.weight_decay < 0) throw ConfigError("invalid optimizer eps/decay");
  if (!finite_positive(grad_clip)) throw ConfigError("train.grad_clip must be positive");
  if (disc_width < 1) throw ConfigError("train.disc_width must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

ExperimentConfig ExperimentConfig::toy() {
  ExperimentConfig cfg;
  cfg.loss.lambda_lpips = 0.0;
  return cfg;
}

void ExperimentConfig::apply_seed(uint64_t s) {
  seed = s;
  model.seed = s;
  train.seed = s;
  flow.seed = s;
}

void ExperimentConfig::validate() const {
  model.validate();
  loss.validate();
  train.validate();
  data.validate();
  flow.validate();
  if (!(padding_sigma >= 0.0) || !std::isfinite(padding_sigma)) throw ConfigError("padding.sigma must be >= 0");
  if (data.height % model.p_s != 0 || data.width % model.p_s != 0)
    throw ConfigError("data resolution is not divisible by model.p_s");
  if ((data.frames - 1) % model.p_t != 0) throw ConfigError("data.frames must be 1 + a multiple of model.p_t");
  for (auto d : eval.ltd_intervals)
    if (d < 1) throw ConfigError("eval.ltd_intervals must be positive");
}

std::string to_string(Preset p) {
  switch (p) {
    case Preset::kBaseline:
      return "baseline";
    case Preset::kPredictive:
      return "pr";
    case Preset::kPredictiveMotion:
      return "pr_motion";
    case Preset::kPredictiveMotionFinetune:
      return "pr_motion_ft";
  }
  return "unknown";
}

Preset preset_from_string(const std::string& s) {
  if (s == "baseline") return Preset::kBaseline;
  if (s == "pr") return Preset::kPredictive;
  if (s == "pr_motion") return Preset::kPredictiveMotion;
  if (s == "pr_motion_ft") return Preset::kPredictiveMotionFinetune;
  throw ConfigError("unknown preset '" + s + "' (baseline, pr, pr_motion, pr_motion_ft)");
}

void apply_preset(ExperimentConfig& cfg, Preset p) {
  const bool predictive = p != Preset::kBaseline;
  const bool motion = p == Preset::kPredictiveMotion || p == Preset::kPredictiveMotionFinetune;
  cfg.train.max_drop_ratio = predictive ? 1.0 : 0.0;
  cfg.loss.diff_weight = motion ? 1.0 : 0.0;
}

bool preset_finetunes(Preset p) { return p == Preset::kPredictiveMotionFinetune; }

// ---------------------------------------------------------------------------

namespace {

// Reads j[key] into `field` when present.
template <typename T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      field = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

void check_keys(const nlohmann::json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items())
    if (!ok.count(k)) throw ConfigError("unknown config key '" + (section.empty() ? k : section + "." + k) + "'");
}

const nlohmann::json* section(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

}  // namespace

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["model"] = {{"p_t", c.model.p_t},
                {"p_s", c.model.p_s},
                {"c_latent", c.model.c_latent},
                {"base_channels", c.model.base_channels},
                {"channel_mult", c.model.channel_mult},
                {"blocks_per_stage", c.model.blocks_per_stage},
                {"seed", c.model.seed}};
  j["loss"] = {{"lambda_rec", c.loss.lambda_rec},         {"lambda_lpips", c.loss.lambda_lpips},
               {"lambda_gan", c.loss.lambda_gan},         {"lambda_kl", c.loss.lambda_kl},
               {"gan_start_step", c.loss.gan_start_step}, {"diff_weight", c.loss.diff_weight}};
  const auto& t = c.train;
  j["train"] = {{"stage", to_string(t.stage)},
                {"steps", t.steps},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"warmup_steps", t.warmup_steps},
                {"lr_decay_factor", t.lr_decay_factor},
                {"max_drop_ratio", t.max_drop_ratio},
                {"optimizer",
                 {{"beta1", t.optimizer.beta1},
                  {"beta2", t.optimizer.beta2},
                  {"eps", t.optimizer.eps},
                  {"weight_decay", t.optimizer.weight_decay}}},
                {"disc_learning_rate", t.disc_learning_rate},
                {"disc_width", t.disc_width},
                {"grad_clip", t.grad_clip},
                {"seed", t.seed},
                {"checkpoint_every", t.checkpoint_every}};
  j["padding"] = {{"strategy", to_string(c.model.padding_strategy)}, {"sigma", c.padding_sigma}};
  j["data"] = to_json(c.data);
  j["eval"] = {{"ltd_intervals", c.eval.ltd_intervals},
               {"prediction_drop", c.eval.prediction_drop},
               {"probe_steps", c.eval.probe_steps},
               {"probe_hidden", c.eval.probe_hidden},
               {"probe_learning_rate", c.eval.probe_learning_rate},
               {"probe_batch_size", c.eval.probe_batch_size},
               {"generated_clips", c.eval.generated_clips},
               {"projection_seed", c.eval.projection_seed}};
  j["flow_model"] = {{"hidden", c.flow.hidden},
                     {"depth", c.flow.depth},
                     {"time_dim", c.flow.time_dim},
                     {"steps", c.flow.steps},
                     {"batch_size", c.flow.batch_size},
                     {"learning_rate", c.flow.learning_rate},
                     {"sampler_steps", c.flow.sampler_steps},
                     {"seed", c.flow.seed}};
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j, ExperimentConfig c) {
  check_keys(j, "", {"seed", "model", "loss", "train", "padding", "data", "eval", "flow_model"});
  if (j.contains("seed")) {
    uint64_t s = 0;
    read(j, "seed", s);
    c.apply_seed(s);
  }
  if (const auto* m = section(j, "model")) {
    check_keys(*m, "model", {"p_t", "p_s", "c_latent", "base_channels", "channel_mult", "blocks_per_stage", "seed"});
    read(*m, "p_t", c.model.p_t);
    read(*m, "p_s", c.model.p_s);
    read(*m, "c_latent", c.model.c_latent);
    read(*m, "base_channels", c.model.base_channels);
    read(*m, "channel_mult", c.model.channel_mult);
    read(*m, "blocks_per_stage", c.model.blocks_per_stage);
    read(*m, "seed", c.model.seed);
  }
  if (const auto* l = section(j, "loss")) {
    check_keys(*l, "loss", {"lambda_rec", "lambda_lpips", "lambda_gan", "lambda_kl", "gan_start_step", "diff_weight"});
    read(*l, "lambda_rec", c.loss.lambda_rec);
    read(*l, "lambda_lpips", c.loss.lambda_lpips);
    read(*l, "lambda_gan", c.loss.lambda_gan);
    read(*l, "lambda_kl", c.loss.lambda_kl);
    read(*l, "gan_start_step", c.loss.gan_start_step);
    read(*l, "diff_weight", c.loss.diff_weight);
  }
  if (const auto* t = section(j, "train")) {
    check_keys(*t, "train",
               {"stage", "steps", "batch_size", "learning_rate", "warmup_steps", "lr_decay_factor", "max_drop_ratio",
                "optimizer", "disc_learning_rate", "disc_width", "grad_clip", "seed", "checkpoint_every"});
    if (t->contains("stage")) {
      std::string s;
      read(*t, "stage", s);
      c.train.stage = stage_from_string(s);
    }
    read(*t, "steps", c.train.steps);
    read(*t, "batch_size", c.train.batch_size);
    read(*t, "learning_rate", c.train.learning_rate);
    read(*t, "warmup_steps", c.train.warmup_steps);
    read(*t, "lr_decay_factor", c.train.lr_decay_factor);
    read(*t, "max_drop_ratio", c.train.max_drop_ratio);
    if (const auto* o = section(*t, "optimizer")) {
      check_keys(*o, "train.optimizer", {"beta1", "beta2", "eps", "weight_decay"});
      read(*o, "beta1", c.train.optimizer.beta1);
      read(*o, "beta2", c.train.optimizer.beta2);
      read(*o, "eps", c.train.optimizer.eps);
      read(*o, "weight_decay", c.train.optimizer.weight_decay);
    }
    read(*t, "disc_learning_rate", c.train.disc_learning_rate);
    read(*t, "disc_width", c.train.disc_width);
    read(*t, "grad_clip", c.train.grad_clip);
    read(*t, "seed", c.train.seed);
    read(*t, "checkpoint_every", c.train.checkpoint_every);
  }
  if (const auto* p = section(j, "padding")) {
    check_keys(*p, "padding", {"strategy", "sigma"});
    if (p->contains("strategy")) {
      std::string s;
      read(*p, "strategy", s);
      c.model.padding_strategy = padding_strategy_from_string(s);
    }
    read(*p, "sigma", c.padding_sigma);
  }
  if (const auto* d = section(j, "data")) {
    check_keys(*d, "data",
               {"min_shapes", "max_shapes", "max_speed", "min_size", "max_size", "texture_probability", "frames",
                "height", "width"});
    nlohmann::json merged = to_json(c.data);
    merged.update(*d);
    c.data = scene_ranges_from_json(merged);
  }
  if (const auto* e = section(j, "eval")) {
    check_keys(*e, "eval",
               {"ltd_intervals", "prediction_drop", "probe_steps", "probe_hidden", "probe_learning_rate",
                "probe_batch_size", "generated_clips", "projection_seed"});
    read(*e, "ltd_intervals", c.eval.ltd_intervals);
    read(*e, "prediction_drop", c.eval.prediction_drop);
    read(*e, "probe_steps", c.eval.probe_steps);
    read(*e, "probe_hidden", c.eval.probe_hidden);
    read(*e, "probe_learning_rate", c.eval.probe_learning_rate);
    read(*e, "probe_batch_size", c.eval.probe_batch_size);
    read(*e, "generated_clips", c.eval.generated_clips);
    read(*e, "projection_seed", c.eval.projection_seed);
  }
  if (const auto* f = section(j, "flow_model")) {
    check_keys(*f, "flow_model",
               {"hidden", "depth", "time_dim", "steps", "batch_size", "learning_rate", "sampler_steps", "seed"});
    read(*f, "hidden", c.flow.hidden);
    read(*f, "depth", c.flow.depth);
    read(*f, "time_dim", c.flow.time_dim);
    read(*f, "steps", c.flow.steps);
    read(*f, "batch_size", c.flow.batch_size);
    read(*f, "learning_rate", c.flow.learning_rate);
    read(*f, "sampler_steps", c.flow.sampler_steps);
    read(*f, "seed", c.flow.seed);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

std::optional<uint64_t> seed_from_env() {
  const char* v = std::getenv("PVVAE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (errno != 0 || *end != '\0' || v[0] == '-') throw ConfigError(std::string("PVVAE_SEED is not an unsigned integer: ") + v);
  return static_cast<uint64_t>(s);
}

}  // namespace pvvae
