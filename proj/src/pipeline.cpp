#include "pvvae/pipeline.hpp"

#include "pvvae/diffusion_probe.hpp"
#include "pvvae/errors.hpp"
#include "pvvae/tensor_io.hpp"

#include <fstream>

#include <torch/torch.h>

namespace pvvae {

namespace {

void copy_parameters(const torch::nn::Module& from, torch::nn::Module& to) {
  torch::NoGradGuard guard;
  auto src = from.named_parameters();
  auto dst = to.named_parameters();
  for (const auto& item : src) {
    auto* p = dst.find(item.key());
    if (p == nullptr || p->sizes() != item.value().sizes())
      throw DimensionError("cannot branch: parameter '" + item.key() + "' differs between sessions");
    p->copy_(item.value());
  }
}

}  // namespace

TrainSession branch_session(const TrainSession& src, const ExperimentConfig& cfg) {
  TrainSession s(cfg);
  copy_parameters(*src.model, *s.model);
  copy_parameters(*src.padding, *s.padding);
  copy_parameters(*src.disc, *s.disc);
  s.global_step = src.global_step;
  s.history = src.history;
  return s;
}

TrainSession train_preset(const TrainSession& pretrained, ExperimentConfig cfg, Preset preset,
                          const torch::Tensor& train_videos, int64_t video_steps, int64_t finetune_steps) {
  apply_preset(cfg, preset);
  cfg.train.stage = Stage::kVideoPredictive;
  TrainSession s = branch_session(pretrained, cfg);
  train_stage(s, train_videos, Stage::kVideoPredictive, video_steps);
  if (preset_finetunes(preset)) finetune_decoder(s, train_videos, finetune_steps);
  return s;
}

FlowArtifact train_flow_artifact(VaeModel& model, const torch::Tensor& train_videos, const FlowModelConfig& cfg) {
  cfg.validate();
  auto latents = encode_means(model, train_videos);
  FlowArtifact flow;
  flow.config = cfg;
  flow.stats = compute_latent_stats(latents);
  flow.latent_shape.assign(latents.sizes().begin() + 1, latents.sizes().end());
  flow.net = build_flow_net(cfg, flow.latent_shape);
  flow.losses = train_flow(flow.net, flow.stats.normalize(latents), cfg);
  return flow;
}

torch::Tensor generate_clips(VaeModel& model, FlowArtifact& flow, int64_t count, uint64_t seed) {
  if (count < 1) throw InputError("generate_clips needs count >= 1");
  torch::NoGradGuard guard;
  Rng rng(derive_seed(seed, 0x5a3));
  std::vector<int64_t> shape{count};
  shape.insert(shape.end(), flow.latent_shape.begin(), flow.latent_shape.end());
  auto z = flow.stats.denormalize(euler_sample(velocity_of(flow.net), shape, flow.config.sampler_steps, rng));
  std::vector<torch::Tensor> clips;
  for (int64_t i = 0; i < count; i += 16) clips.push_back(model->decode(z.narrow(0, i, std::min<int64_t>(16, count - i))));
  return torch::cat(clips, 0);
}

void save_flow_artifact(const FlowArtifact& flow, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tensors");
  nlohmann::ordered_json j;
  j["format"] = "pvvae-flow";
  j["version"] = 1;
  j["config"] = {{"hidden", flow.config.hidden},
                 {"depth", flow.config.depth},
                 {"time_dim", flow.config.time_dim},
                 {"steps", flow.config.steps},
                 {"batch_size", flow.config.batch_size},
                 {"learning_rate", flow.config.learning_rate},
                 {"sampler_steps", flow.config.sampler_steps},
                 {"seed", flow.config.seed}};
  j["latent_shape"] = flow.latent_shape;
  auto names = nlohmann::ordered_json::array();
  for (const auto& item : flow.net->named_parameters()) {
    write_tensor(dir / "tensors" / (item.key() + ".pvt"), item.value().detach(), "raw");
    names.push_back(item.key());
  }
  j["parameters"] = names;
  write_tensor(dir / "tensors" / "stats.mean.pvt", flow.stats.mean, "C");
  write_tensor(dir / "tensors" / "stats.std.pvt", flow.stats.std, "C");
  j["losses"] = flow.losses;
  std::ofstream out(dir / "flow.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "flow.json").string());
  out << j.dump(2) << "\n";
}

FlowArtifact load_flow_artifact(const std::filesystem::path& dir) {
  std::ifstream in(dir / "flow.json");
  if (!in) throw IoError("missing flow model at " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("flow.json: ") + e.what());
  }
  if (j.value("format", "") != "pvvae-flow" || j.value("version", 0) != 1)
    throw FormatError("unsupported flow model format in " + dir.string());
  FlowArtifact flow;
  const auto& c = j.at("config");
  flow.config.hidden = c.at("hidden");
  flow.config.depth = c.at("depth");
  flow.config.time_dim = c.at("time_dim");
  flow.config.steps = c.at("steps");
  flow.config.batch_size = c.at("batch_size");
  flow.config.learning_rate = c.at("learning_rate");
  flow.config.sampler_steps = c.at("sampler_steps");
  flow.config.seed = c.at("seed");
  flow.latent_shape = j.at("latent_shape").get<std::vector<int64_t>>();
  flow.losses = j.value("losses", std::vector<double>{});
  flow.net = build_flow_net(flow.config, flow.latent_shape);
  torch::NoGradGuard guard;
  auto params = flow.net->named_parameters();
  for (const auto& item : params) {
    auto stored = read_tensor(dir / "tensors" / (item.key() + ".pvt"));
    if (stored.sizes() != item.value().sizes())
      throw DimensionError("flow model parameter '" + item.key() + "' has a mismatched shape");
    item.value().copy_(stored);
  }
  flow.stats.mean = read_tensor(dir / "tensors" / "stats.mean.pvt");
  flow.stats.std = read_tensor(dir / "tensors" / "stats.std.pvt");
  if (flow.stats.mean.numel() != flow.latent_shape.at(0) || flow.stats.std.numel() != flow.latent_shape.at(0))
    throw DimensionError("flow model statistics do not match the latent channels");
  return flow;
}

GenerationReport generation_probe(VaeModel& model, const torch::Tensor& train_videos, const torch::Tensor& reference,
                                  const FlowModelConfig& flow_cfg, int64_t count, uint64_t projection_seed) {
  auto flow = train_flow_artifact(model, train_videos, flow_cfg);
  GenerationReport report;
  report.flow_losses = flow.losses;
  report.samples = generate_clips(model, flow, count, flow_cfg.seed);
  report.frechet_proxy = frechet_proxy(reference, report.samples, projection_seed);
  return report;
}

nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["psnr"] = m.psnr;
  j["ssim"] = m.ssim;
  j["ltd"] = {{"intervals", m.ltd.intervals},
              {"mean_distance", m.ltd.mean_distance},
              {"normalized", m.ltd.normalized},
              {"adjacent_histogram", {{"edges", m.ltd.adjacent_histogram.edges}, {"counts", m.ltd.adjacent_histogram.counts}}}};
  j["prediction_mse"] = m.prediction_mse;
  j["epe"] = m.epe;
  j["frechet_proxy"] = m.frechet_proxy ? nlohmann::ordered_json(*m.frechet_proxy) : nlohmann::ordered_json(nullptr);
  return j;
}

int64_t evaluation_drop(const ExperimentConfig& cfg) {
  if (cfg.eval.prediction_drop >= 0) return cfg.eval.prediction_drop;
  const int64_t groups = partition_groups(cfg.data.frames - 1, cfg.model.p_t);
  return (groups - 1) / 2;
}

Metrics evaluate(TrainSession& session, const Corpus& corpus, const EvalOptions& options) {
  const auto& cfg = session.config;
  const auto& val = corpus.val.videos;
  if (corpus.val.size() < 1) throw InputError("evaluation needs a non-empty val split");
  Metrics m;
  auto recon = reconstruct(session.model, val);
  m.psnr = psnr(recon, val);
  m.ssim = ssim(recon, val);
  m.ltd = ltd_profile(session.model, val, cfg.eval.ltd_intervals);

  const int64_t k = evaluation_drop(cfg);
  double total = 0.0;
  for (int64_t i = 0; i < val.size(0); ++i) {
    Rng rng(derive_seed(cfg.seed, 0xe7a1 + static_cast<uint64_t>(i)));
    total += prediction_error(session.model, session.padding, val.narrow(0, i, 1), k, rng);
  }
  m.prediction_mse = total / static_cast<double>(val.size(0));

  if (options.flow_probe) {
    FlowProbeConfig probe;
    probe.hidden = cfg.eval.probe_hidden;
    probe.steps = cfg.eval.probe_steps;
    probe.learning_rate = cfg.eval.probe_learning_rate;
    probe.batch_size = cfg.eval.probe_batch_size;
    probe.seed = cfg.seed;
    auto result = flow_probe(encode_means(session.model, corpus.train.videos), corpus.train.flows,
                             encode_means(session.model, val), corpus.val.flows, cfg.model.p_t, cfg.model.p_s, probe);
    m.epe = result.val_epe;
  }
  if (options.reference.defined()) {
    auto report = generation_probe(session.model, corpus.train.videos, options.reference, cfg.flow,
                                   cfg.eval.generated_clips, cfg.eval.projection_seed);
    m.frechet_proxy = report.frechet_proxy;
  }
  return m;
}

}  // namespace pvvae
