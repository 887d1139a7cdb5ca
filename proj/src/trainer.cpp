#include "pvvae/trainer.hpp"

#include "pvvae/errors.hpp"
#include "pvvae/rng.hpp"
#include "pvvae/tensor_io.hpp"

#include <torch/torch.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace pvvae {

namespace {

uint64_t stage_tag(Stage s) { return static_cast<uint64_t>(s) + 1; }

// Seed streams: per-step randomness and per-epoch data order never share a stream.
constexpr uint64_t kStepStream = 0x5e9;
constexpr uint64_t kOrderStream = 0x0d3;
constexpr uint64_t kDiscStream = 0xd15c;
constexpr uint64_t kExtractorStream = 0x1b1b;

}  // namespace

nlohmann::ordered_json to_json(const StepRecord& r) {
  nlohmann::ordered_json j;
  j["stage"] = to_string(r.stage);
  j["stage_step"] = r.stage_step;
  j["global_step"] = r.global_step;
  j["lr"] = r.lr;
  j["grad_norm"] = r.grad_norm;
  j["mse"] = r.loss.mse;
  j["diff"] = r.loss.diff;
  j["lpips"] = r.loss.lpips;
  j["gan_g"] = r.loss.gan_g;
  j["gan_d"] = r.loss.gan_d;
  j["kl"] = r.loss.kl;
  j["total"] = r.loss.total;
  j["gan_active"] = r.loss.gan_active;
  j["dropped"] = r.dropped;
  return j;
}

StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.stage = stage_from_string(j.at("stage").get<std::string>());
  r.stage_step = j.at("stage_step").get<int64_t>();
  r.global_step = j.at("global_step").get<int64_t>();
  r.lr = j.at("lr").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.loss.mse = j.at("mse").get<double>();
  r.loss.diff = j.at("diff").get<double>();
  r.loss.lpips = j.at("lpips").get<double>();
  r.loss.gan_g = j.at("gan_g").get<double>();
  r.loss.gan_d = j.at("gan_d").get<double>();
  r.loss.kl = j.at("kl").get<double>();
  r.loss.total = j.at("total").get<double>();
  r.loss.gan_active = j.at("gan_active").get<bool>();
  r.loss.step = r.global_step;
  r.dropped = j.at("dropped").get<std::vector<int64_t>>();
  return r;
}

double learning_rate_at(const TrainConfig& cfg, int64_t step, int64_t total_steps) {
  const double base = cfg.learning_rate;
  if (step < cfg.warmup_steps) return base * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  const double floor = base / cfg.lr_decay_factor;
  const int64_t span = std::max<int64_t>(1, total_steps - 1 - cfg.warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span));
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<int64_t> batch_indices(uint64_t seed, Stage stage, int64_t step, int64_t batch_size, int64_t n) {
  if (n < 1) throw InputError("training set is empty");
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(batch_size));
  int64_t cached_epoch = -1;
  torch::Tensor perm;
  for (int64_t j = 0; j < batch_size; ++j) {
    const int64_t pos = step * batch_size + j;
    const int64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      Rng rng(derive_seed(derive_seed(derive_seed(seed, kOrderStream), stage_tag(stage)), static_cast<uint64_t>(epoch)));
      perm = torch::randperm(n, rng.generator(), torch::kInt64);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n].item<int64_t>());
  }
  return out;
}

// ---------------------------------------------------------------------------

TrainSession::TrainSession(ExperimentConfig cfg) : config(std::move(cfg)) {
  config.validate();
  model = build_model(config.model);
  padding = make_padding(config.model, config.data.height, config.data.width, config.padding_sigma);
  disc = build_discriminator(config.train.disc_width, derive_seed(config.train.seed, kDiscStream));
  extractor = PerceptualExtractor(derive_seed(config.train.seed, kExtractorStream));
  const auto& o = config.train.optimizer;
  disc_opt = std::make_unique<torch::optim::AdamW>(
      disc->parameters(), torch::optim::AdamWOptions(config.train.disc_learning_rate)
                              .betas({o.beta1, o.beta2})
                              .eps(o.eps)
                              .weight_decay(o.weight_decay));
  begin_stage(config.train.stage, config.train.resolved_steps());
}

std::vector<torch::Tensor> TrainSession::trainable_parameters() const {
  if (stage == Stage::kDecoderFinetune) return model->decoder->parameters();
  auto params = model->parameters();
  if (stage == Stage::kVideoPredictive && padding->strategy() == PaddingStrategy::kLearnable)
    params.push_back(padding->token);
  return params;
}

void TrainSession::begin_stage(Stage s, int64_t steps) {
  if (steps < 0) throw ConfigError("stage step count must be >= 0");
  stage = s;
  stage_step = 0;
  stage_steps = steps;
  config.train.stage = s;
  config.train.steps = steps;
  const auto& o = config.train.optimizer;
  gen_opt = std::make_unique<torch::optim::AdamW>(trainable_parameters(),
                                                  torch::optim::AdamWOptions(config.train.learning_rate)
                                                      .betas({o.beta1, o.beta2})
                                                      .eps(o.eps)
                                                      .weight_decay(o.weight_decay));
}

namespace {

void set_lr(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
}

struct ClipTerms {
  torch::Tensor mse, diff, lpips, kl, gan_g;
};

std::string describe(const StepRecord& r) {
  std::ostringstream os;
  os << "stage " << to_string(r.stage) << " step " << r.stage_step << ": mse=" << r.loss.mse << " diff=" << r.loss.diff
     << " kl=" << r.loss.kl << " lpips=" << r.loss.lpips << " gan_g=" << r.loss.gan_g << " total=" << r.loss.total
     << " grad_norm=" << r.grad_norm;
  return os.str();
}

}  // namespace

StepRecord train_step(TrainSession& session, const torch::Tensor& videos) {
  auto& s = session;
  const auto& tc = s.config.train;
  const auto& w = s.config.loss;
  if (videos.dim() != 5 || videos.size(3) != s.config.data.height || videos.size(4) != s.config.data.width)
    throw DimensionError("training videos do not match the configured resolution");
  if (s.stage_step >= s.stage_steps) throw InputError("stage already completed all of its steps");

  const bool finetune = s.stage == Stage::kDecoderFinetune;
  const bool image = s.stage == Stage::kImagePretrain;
  const bool gan_active = gan_enabled(w, s.global_step, finetune);

  StepRecord rec;
  rec.stage = s.stage;
  rec.stage_step = s.stage_step;
  rec.global_step = s.global_step;
  rec.lr = learning_rate_at(tc, s.stage_step, s.stage_steps);
  set_lr(*s.gen_opt, rec.lr);

  Rng rng(derive_seed(derive_seed(derive_seed(tc.seed, kStepStream), stage_tag(s.stage)),
                      static_cast<uint64_t>(s.stage_step)));
  const auto idx = batch_indices(tc.seed, s.stage, s.stage_step, tc.batch_size, videos.size(0));

  // Image pretraining treats single frames as T = 0 clips and batches them;
  // video stages run clip by clip because k is drawn per clip.
  std::vector<torch::Tensor> inputs;
  if (image) {
    std::vector<torch::Tensor> frames;
    for (auto i : idx) {
      const int64_t f = rng.uniform_int(0, videos.size(2) - 1);
      frames.push_back(videos[i].narrow(1, f, 1));
    }
    inputs.push_back(torch::stack(frames));
  } else {
    for (auto i : idx) inputs.push_back(videos[i].unsqueeze(0));
  }

  PredictiveOptions opts;
  if (finetune) {
    opts.forced_drop = 0;
    opts.encoder_no_grad = true;
  }
  const double ratio = image || finetune ? 0.0 : tc.max_drop_ratio;

  torch::Tensor total = torch::zeros({});
  std::vector<torch::Tensor> recons;
  double mse = 0, diff = 0, lpips = 0, kl = 0, gan_g = 0;
  const double weight = 1.0 / static_cast<double>(inputs.size());
  for (const auto& x : inputs) {
    PredictiveOutput out;
    try {
      out = predictive_forward(s.model, s.padding, x, ratio, rng, opts);
    } catch (const NumericError& e) {
      throw TrainingAborted("stage " + to_string(s.stage) + " step " + std::to_string(s.stage_step) + ": " + e.what());
    }
    for (int64_t b = 0; b < x.size(0); ++b) rec.dropped.push_back(out.plan.dropped);
    ClipTerms t;
    t.mse = pvvae::mse_loss(out.recon, x);
    t.diff = temporal_diff_loss(out.recon, x);
    t.kl = kl_loss(out.posterior);
    t.lpips = w.lambda_lpips > 0 ? perceptual_loss(s.extractor, out.recon, x) : torch::zeros({});
    t.gan_g = gan_active ? hinge_generator_loss(s.disc->forward(out.recon)) : torch::zeros({});
    total = total + weight * weighted_total<torch::Tensor>(w, t.mse, t.diff, t.lpips, t.gan_g, t.kl, gan_active);
    mse += weight * t.mse.item<double>();
    diff += weight * t.diff.item<double>();
    lpips += weight * t.lpips.item<double>();
    kl += weight * t.kl.item<double>();
    gan_g += weight * t.gan_g.item<double>();
    if (gan_active) recons.push_back(out.recon);
  }
  rec.loss = total_loss(w, {mse, diff, lpips, gan_g, 0.0, kl}, s.global_step, finetune);

  if (!std::isfinite(total.item<double>())) throw TrainingAborted("non-finite loss at " + describe(rec));

  s.gen_opt->zero_grad();
  total.backward();
  rec.grad_norm = torch::nn::utils::clip_grad_norm_(s.trainable_parameters(), tc.grad_clip);
  if (!std::isfinite(rec.grad_norm)) throw TrainingAborted("non-finite gradient at " + describe(rec));
  s.gen_opt->step();

  if (gan_active) {
    torch::Tensor real = torch::cat(inputs, 0);
    torch::Tensor fake = torch::cat(recons, 0).detach();
    auto gan_d = hinge_discriminator_loss(s.disc->forward(real), s.disc->forward(fake));
    s.disc_opt->zero_grad();
    gan_d.backward();
    s.disc_opt->step();
    rec.loss.gan_d = gan_d.item<double>();
  }

  ++s.stage_step;
  ++s.global_step;
  s.history.push_back(rec);
  return rec;
}

std::vector<StepRecord> run_stage(TrainSession& session, const torch::Tensor& videos,
                                  const std::filesystem::path& checkpoint_dir, const StepCallback& on_step) {
  std::vector<StepRecord> out;
  const int64_t every = session.config.train.checkpoint_every;
  while (session.stage_step < session.stage_steps) {
    out.push_back(train_step(session, videos));
    if (on_step) on_step(out.back());
    if (!checkpoint_dir.empty() && every > 0 && session.stage_step % every == 0)
      save_checkpoint(session, checkpoint_dir);
  }
  return out;
}

std::vector<StepRecord> train_stage(TrainSession& session, const torch::Tensor& videos, Stage stage, int64_t steps) {
  session.begin_stage(stage, steps);
  return run_stage(session, videos);
}

std::vector<StepRecord> finetune_decoder(TrainSession& session, const torch::Tensor& videos, int64_t steps) {
  return train_stage(session, videos, Stage::kDecoderFinetune, steps);
}

// ---------------------------------------------------------------------------

namespace {

std::string tensor_file(const std::string& group, const std::string& name) { return group + "." + name + ".pvt"; }

void save_named(const std::filesystem::path& tensors, const std::string& group,
                const std::vector<std::pair<std::string, torch::Tensor>>& items, nlohmann::ordered_json& index) {
  auto names = nlohmann::ordered_json::array();
  for (const auto& [name, t] : items) {
    write_tensor(tensors / tensor_file(group, name), t.detach(), "raw");
    names.push_back(name);
  }
  index[group] = names;
}

std::vector<std::pair<std::string, torch::Tensor>> named(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : m.named_parameters()) out.emplace_back(item.key(), item.value());
  return out;
}

nlohmann::ordered_json save_optimizer(const torch::optim::AdamW& opt, const std::filesystem::path& tensors,
                                      const std::string& group) {
  auto params = nlohmann::ordered_json::array();
  const auto& list = opt.param_groups().at(0).params();
  for (size_t i = 0; i < list.size(); ++i) {
    auto it = opt.state().find(list[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) {
      params.push_back(nullptr);
      continue;
    }
    const auto& st = static_cast<const torch::optim::AdamWParamState&>(*it->second);
    const std::string base = group + "." + std::to_string(i);
    write_tensor(tensors / (base + ".exp_avg.pvt"), st.exp_avg(), "raw");
    write_tensor(tensors / (base + ".exp_avg_sq.pvt"), st.exp_avg_sq(), "raw");
    params.push_back({{"step", st.step()}});
  }
  return {{"param_count", list.size()}, {"params", params}};
}

void load_optimizer(torch::optim::AdamW& opt, const nlohmann::json& j, const std::filesystem::path& tensors,
                    const std::string& group) {
  const auto& list = opt.param_groups().at(0).params();
  if (j.at("param_count").get<size_t>() != list.size())
    throw DimensionError("checkpoint optimizer '" + group + "' tracks " + std::to_string(j.at("param_count").get<size_t>()) +
                         " parameters, session has " + std::to_string(list.size()));
  opt.state().clear();
  const auto& params = j.at("params");
  for (size_t i = 0; i < list.size(); ++i) {
    if (params.at(i).is_null()) continue;
    const std::string base = group + "." + std::to_string(i);
    auto st = std::make_unique<torch::optim::AdamWParamState>();
    st->step(params.at(i).at("step").get<int64_t>());
    auto m = read_tensor(tensors / (base + ".exp_avg.pvt"));
    auto v = read_tensor(tensors / (base + ".exp_avg_sq.pvt"));
    if (m.sizes() != list[i].sizes() || v.sizes() != list[i].sizes())
      throw DimensionError("checkpoint optimizer state " + base + " does not match its parameter shape");
    st->exp_avg(m);
    st->exp_avg_sq(v);
    opt.state()[list[i].unsafeGetTensorImpl()] = std::move(st);
  }
}

std::string shape_string(at::IntArrayRef s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

void load_named(torch::nn::Module& m, const std::string& group, const nlohmann::json& index,
                const std::filesystem::path& tensors) {
  torch::NoGradGuard guard;
  auto stored = index.at(group).get<std::vector<std::string>>();
  auto params = m.named_parameters();
  if (stored.size() != params.size())
    throw DimensionError("checkpoint group '" + group + "' has " + std::to_string(stored.size()) +
                         " parameters, model has " + std::to_string(params.size()));
  for (const auto& name : stored) {
    auto* p = params.find(name);
    if (p == nullptr) throw DimensionError("checkpoint parameter '" + group + "." + name + "' is not in the model");
    auto t = read_tensor(tensors / tensor_file(group, name));
    if (t.sizes() != p->sizes())
      throw DimensionError("checkpoint parameter '" + group + "." + name + "' has shape " + shape_string(t.sizes()) +
                           " but the model expects " + shape_string(p->sizes()));
    p->copy_(t);
  }
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("missing checkpoint manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }
  if (j.value("format", "") != "pvvae-checkpoint") throw FormatError("not a checkpoint manifest: " + path.string());
  const int version = j.value("version", -1);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  return j;
}

}  // namespace

void save_checkpoint(const TrainSession& s, const std::filesystem::path& dir) {
  const auto tensors = dir / "tensors";
  std::filesystem::create_directories(tensors);
  nlohmann::ordered_json j;
  j["format"] = "pvvae-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(s.config);
  j["stage"] = to_string(s.stage);
  j["stage_step"] = s.stage_step;
  j["stage_steps"] = s.stage_steps;
  j["step"] = s.global_step;
  j["rng"] = {{"scheme", "counter"},
              {"seed", s.config.train.seed},
              {"note", "per-step streams derive from (seed, stage, stage_step); no hidden generator state"}};
  nlohmann::ordered_json index;
  save_named(tensors, "model", named(*s.model), index);
  save_named(tensors, "padding", named(*s.padding), index);
  save_named(tensors, "disc", named(*s.disc), index);
  j["tensors"] = index;
  j["optimizers"] = {{"generator", save_optimizer(*s.gen_opt, tensors, "opt_gen")},
                     {"discriminator", save_optimizer(*s.disc_opt, tensors, "opt_disc")}};
  auto history = nlohmann::ordered_json::array();
  for (const auto& r : s.history) history.push_back(to_json(r));
  j["history"] = history;
  const auto text = j.dump(2) + "\n";
  write_file_bytes(dir / "manifest.json", std::vector<uint8_t>(text.begin(), text.end()));
}

void load_checkpoint_into(TrainSession& s, const std::filesystem::path& dir) {
  const auto j = read_manifest(dir);
  const auto tensors = dir / "tensors";
  const auto& index = j.at("tensors");
  load_named(*s.model, "model", index, tensors);
  load_named(*s.padding, "padding", index, tensors);
  load_named(*s.disc, "disc", index, tensors);
  s.begin_stage(stage_from_string(j.at("stage").get<std::string>()), j.at("stage_steps").get<int64_t>());
  s.stage_step = j.at("stage_step").get<int64_t>();
  s.global_step = j.at("step").get<int64_t>();
  load_optimizer(*s.gen_opt, j.at("optimizers").at("generator"), tensors, "opt_gen");
  load_optimizer(*s.disc_opt, j.at("optimizers").at("discriminator"), tensors, "opt_disc");
  s.history.clear();
  for (const auto& r : j.at("history")) s.history.push_back(step_record_from_json(r));
}

TrainSession load_checkpoint(const std::filesystem::path& dir) {
  const auto j = read_manifest(dir);
  TrainSession s(experiment_from_json(j.at("config")));
  load_checkpoint_into(s, dir);
  return s;
}

}  // namespace pvvae
