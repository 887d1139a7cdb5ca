#include "commands.hpp"

#include "pvvae/config.hpp"
#include "pvvae/data_synth.hpp"
#include "pvvae/diagnostics.hpp"
#include "pvvae/errors.hpp"
#include "pvvae/pipeline.hpp"
#include "pvvae/plots.hpp"
#include "pvvae/run_manifest.hpp"
#include "pvvae/trainer.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace pvvae::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Shared plumbing

class Run {
 public:
  Run(std::string command, const GlobalOptions& g) : start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.arguments = g.argv;
    manifest_.started_at = utc_timestamp();
  }

  RunManifest& manifest() { return manifest_; }

  void inputs(const std::vector<std::string>& paths) {
    std::vector<fs::path> p;
    for (const auto& s : paths) {
      manifest_.inputs.push_back(s);
      p.emplace_back(s);
    }
    manifest_.input_hash = artifact_hash(p);
  }

  void output(const fs::path& p) { manifest_.outputs.push_back(p.string()); }

  void finish(const fs::path& dir) {
    manifest_.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_.write(dir / kRunManifestName);
  }

 private:
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw UsageError(message);
}

fs::path require_out(const GlobalOptions& g) {
  require(!g.out.empty(), "--out is required");
  fs::create_directories(g.out);
  return fs::path(g.out);
}

ExperimentConfig apply_config_file(const GlobalOptions& g, ExperimentConfig base) {
  if (g.config.empty()) return base;
  std::ifstream in(g.config);
  if (!in) throw IoError("cannot read config " + g.config);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + g.config + ": " + e.what());
  }
  return experiment_from_json(j, std::move(base));
}

uint64_t resolve_seed(const GlobalOptions& g, uint64_t fallback) {
  if (g.seed) return *g.seed;
  if (auto env = seed_from_env()) return *env;
  return fallback;
}

ExperimentConfig fresh_config(const GlobalOptions& g) {
  auto cfg = apply_config_file(g, ExperimentConfig::toy());
  cfg.apply_seed(resolve_seed(g, cfg.seed));
  return cfg;
}

/// Evaluation-side overrides (eval, flow_model) from --config and --seed on
/// top of a checkpoint's stored config; the architecture is never touched.
ExperimentConfig checkpoint_config(const GlobalOptions& g, const ExperimentConfig& stored) {
  auto cfg = apply_config_file(g, stored);
  cfg.model = stored.model;
  cfg.train = stored.train;
  cfg.loss = stored.loss;
  if (g.seed || seed_from_env()) {
    const uint64_t s = resolve_seed(g, stored.seed);
    cfg.seed = s;
    cfg.flow.seed = s;
  }
  return cfg;
}

Corpus open_corpus(const std::string& dir) {
  require(!dir.empty(), "--data is required");
  return load_corpus(dir);
}

Json metrics_skeleton() {
  return Json{{"psnr", nullptr},     {"ssim", nullptr}, {"ltd", nullptr},
              {"prediction_mse", nullptr}, {"epe", nullptr},  {"frechet_proxy", nullptr}};
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

StepCallback progress_logger() {
  return [](const StepRecord& r) {
    if (r.stage_step % 100 == 0 || r.stage_step == 1)
      std::cerr << "[" << to_string(r.stage) << "] step " << r.stage_step << " loss " << r.loss.total << " mse "
                << r.loss.mse << " lr " << r.lr << "\n";
  };
}

Stage parse_stage(const std::string& s) {
  if (s == "image") return Stage::kImagePretrain;
  if (s == "video") return Stage::kVideoPredictive;
  if (s == "finetune") return Stage::kDecoderFinetune;
  throw UsageError("--stage must be one of all, image, video, finetune");
}

Preset parse_preset(const std::string& s) {
  try {
    return preset_from_string(s);
  } catch (const ConfigError&) {
    throw UsageError("--preset must be one of baseline, pr, pr_motion, pr_motion_ft");
  }
}

int64_t stage_budget(Stage s, const std::optional<int64_t>& flag) {
  if (flag) {
    require(*flag >= 0, "step counts must be non-negative");
    return *flag;
  }
  return default_stage_steps(s);
}

std::vector<Stage> ladder(Preset preset, bool pretrained) {
  std::vector<Stage> stages;
  if (!pretrained) stages.push_back(Stage::kImagePretrain);
  stages.push_back(Stage::kVideoPredictive);
  if (preset_finetunes(preset)) stages.push_back(Stage::kDecoderFinetune);
  return stages;
}

torch::Tensor all_clips(const Corpus& c) {
  if (c.val.size() == 0) return c.train.videos;
  if (c.train.size() == 0) return c.val.videos;
  return torch::cat({c.train.videos, c.val.videos}, 0);
}

Json summary(const TrainSession& s) {
  Json j;
  j["global_step"] = s.global_step;
  j["stage"] = to_string(s.stage);
  if (!s.history.empty()) {
    j["final_loss"] = s.history.back().loss.total;
    j["final_mse"] = s.history.back().loss.mse;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Ablation rows

struct Row {
  std::string name;
  Preset preset;
  ExperimentConfig cfg;
};

std::string ratio_name(double r) {
  std::ostringstream out;
  out << r;
  return out.str();
}

int run_ablation(const GlobalOptions& g, const TrainOptions& o, Run& run) {
  const fs::path out = require_out(g);
  const int groups = (!o.ablate_drop_ratio.empty()) + (!o.ablate_padding.empty()) + (!o.ablate_preset.empty());
  require(groups == 1, "pass exactly one of --ablate-drop-ratio, --ablate-padding, --ablate-preset");
  require(o.resume.empty(), "--resume cannot be combined with ablation flags");
  auto corpus = open_corpus(o.data);
  std::vector<std::string> inputs{o.data};
  if (!o.init.empty()) inputs.push_back(o.init);
  if (!o.reference.empty()) inputs.push_back(o.reference);
  run.inputs(inputs);

  auto base = fresh_config(g);
  base.data = corpus.manifest.ranges;
  const Preset base_preset = parse_preset(o.preset);

  std::vector<Row> rows;
  for (double r : o.ablate_drop_ratio) {
    require(r >= 0.0 && r <= 1.0, "drop ratios must lie in [0, 1]");
    Row row{"drop_ratio_" + ratio_name(r), base_preset, base};
    apply_preset(row.cfg, base_preset);
    row.cfg.train.max_drop_ratio = r;
    rows.push_back(row);
  }
  for (const auto& p : o.ablate_padding) {
    Row row{"padding_" + p, base_preset, base};
    apply_preset(row.cfg, base_preset);
    require(p == "gaussian" || p == "learnable", "--ablate-padding accepts gaussian, learnable");
    row.cfg.model.padding_strategy = p == "gaussian" ? PaddingStrategy::kGaussian : PaddingStrategy::kLearnable;
    rows.push_back(row);
  }
  for (const auto& p : o.ablate_preset) {
    const Preset preset = parse_preset(p);
    Row row{p, preset, base};
    apply_preset(row.cfg, preset);
    rows.push_back(row);
  }

  pvvae::EvalOptions eval;
  if (!o.no_generation) eval.reference = o.reference.empty() ? all_clips(corpus) : all_clips(load_corpus(o.reference));
  if (eval.reference.defined())
    require(eval.reference.size(0) > kFrechetDims && base.eval.generated_clips > kFrechetDims,
            "frechet_proxy needs more than " + std::to_string(kFrechetDims) +
                " real and generated clips; pass --no-generation to skip it");


  // Every row branches from the same pretrained weights.
  std::optional<TrainSession> pre;
  if (!o.init.empty()) {
    pre.emplace(load_checkpoint(o.init));
    for (auto& row : rows) row.cfg.model = pre->config.model;
  } else {
    auto cfg = base;
    cfg.train.stage = Stage::kImagePretrain;
    pre.emplace(cfg);
    pre->begin_stage(Stage::kImagePretrain, stage_budget(Stage::kImagePretrain, o.image_steps));
    run_stage(*pre, corpus.train.videos, {}, progress_logger());
    save_checkpoint(*pre, out / "pretrain");
    run.output(out / "pretrain");
  }

  Json table = Json::array();
  for (auto& row : rows) {
    std::cerr << "ablation row " << row.name << "\n";
    row.cfg.train.stage = Stage::kVideoPredictive;
    TrainSession s = branch_session(*pre, row.cfg);
    s.begin_stage(Stage::kVideoPredictive, stage_budget(Stage::kVideoPredictive, o.video_steps));
    run_stage(s, corpus.train.videos, {}, progress_logger());
    if (preset_finetunes(row.preset)) {
      s.begin_stage(Stage::kDecoderFinetune, stage_budget(Stage::kDecoderFinetune, o.finetune_steps));
      run_stage(s, corpus.train.videos, {}, progress_logger());
    }
    const fs::path dir = out / row.name;
    save_checkpoint(s, dir);
    auto metrics = evaluate(s, corpus, eval);
    auto mj = to_json(metrics);
    write_json(dir / "metrics.json", mj);
    run.output(dir);
    Json entry;
    entry["row"] = row.name;
    entry["preset"] = to_string(row.preset);
    entry["max_drop_ratio"] = row.cfg.train.max_drop_ratio;
    entry["padding"] = row.cfg.model.padding_strategy == PaddingStrategy::kGaussian ? "gaussian" : "learnable";
    entry["metrics"] = mj;
    table.push_back(entry);
  }
  write_json(out / "ablation.json", table);
  run.output(out / "ablation.json");
  run.manifest().config = to_json(base);
  run.manifest().seed = base.seed;
  run.manifest().metrics = Json{{"rows", table}};
  run.finish(out);
  return 0;
}

// ---------------------------------------------------------------------------
// Visualization helpers

torch::Tensor upsample(const torch::Tensor& img, int64_t factor) {
  return img.repeat_interleave(factor, 0).repeat_interleave(factor, 1);
}

torch::Tensor flow_image(const torch::Tensor& flow, double scale) {
  // Direction as hue-like color, magnitude as brightness.
  auto f = flow.to(torch::kFloat32);
  auto mag = (f.pow(2).sum(-1).sqrt() / scale).clamp(0, 1);
  auto dx = f.select(-1, 0) / scale, dy = f.select(-1, 1) / scale;
  auto r = (0.5 + 0.5 * dx).clamp(0, 1) * mag + (1 - mag);
  auto gch = (0.5 + 0.5 * dy).clamp(0, 1) * mag + (1 - mag);
  auto b = (0.5 - 0.25 * (dx + dy)).clamp(0, 1) * mag + (1 - mag);
  return torch::stack({r, gch, b}, -1);
}

void write_ltd_plots(const LtdProfile& ltd, const fs::path& dir, Run& run) {
  std::vector<double> counts(ltd.adjacent_histogram.counts.begin(), ltd.adjacent_histogram.counts.end());
  write_png(dir / "ltd_histogram.png", bar_chart(counts));
  write_png(dir / "ltd_profile.png", line_chart({ltd.normalized}, {{0.85f, 0.2f, 0.2f}}));
  run.output(dir / "ltd_histogram.png");
  run.output(dir / "ltd_profile.png");
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_generate_data(const GlobalOptions& g, const GenerateDataOptions& o) {
  Run run("generate-data", g);
  require(o.n >= 1, "--n must be at least 1");
  const fs::path out = require_out(g);
  auto cfg = fresh_config(g);
  auto ranges = cfg.data;
  if (o.frames) ranges.frames = *o.frames;
  if (o.res) ranges.height = ranges.width = *o.res;
  try {
    ranges.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  const auto manifest = generate_corpus(out, o.n, cfg.seed, ranges);
  run.inputs({});
  run.manifest().config = to_json(cfg);
  run.manifest().config["data"] = to_json(ranges);
  run.manifest().seed = cfg.seed;
  run.output(out / "manifest.json");
  int64_t val = 0;
  for (const auto& e : manifest.entries) val += e.split == Split::kVal;
  run.manifest().metrics = Json{{"clips", manifest.entries.size()}, {"val_clips", val}};
  run.finish(out);
  std::cout << "wrote " << manifest.entries.size() << " clips to " << out.string() << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& g, const TrainOptions& o) {
  Run run("train", g);
  if (!o.ablate_drop_ratio.empty() || !o.ablate_padding.empty() || !o.ablate_preset.empty())
    return run_ablation(g, o, run);
  const fs::path out = require_out(g);
  require(o.resume.empty() || o.init.empty(), "--resume and --init are exclusive");
  const bool all = o.stage == "all";
  if (!all) parse_stage(o.stage);
  require(all || (!o.image_steps && !o.video_steps && !o.finetune_steps),
          "per-stage step flags apply to --stage all; use --steps for a single stage");
  require(!all || !o.steps, "--steps applies to a single --stage");
  const Preset preset = parse_preset(o.preset);
  auto corpus = open_corpus(o.data);
  std::vector<std::string> inputs{o.data};
  if (!o.init.empty()) inputs.push_back(o.init);
  if (!o.resume.empty()) inputs.push_back(o.resume);
  run.inputs(inputs);

  auto budget = [&](Stage s) {
    if (!all) return stage_budget(s, o.steps);
    if (s == Stage::kImagePretrain) return stage_budget(s, o.image_steps);
    if (s == Stage::kVideoPredictive) return stage_budget(s, o.video_steps);
    return stage_budget(s, o.finetune_steps);
  };

  std::vector<Stage> stages = all ? ladder(preset, !o.init.empty()) : std::vector<Stage>{parse_stage(o.stage)};
  std::optional<TrainSession> session;
  if (!o.resume.empty()) {
    session.emplace(load_checkpoint(o.resume));
    // Finish the interrupted stage, then whatever follows it in the ladder.
    const Stage current = session->stage;
    std::cerr << "resuming " << to_string(current) << " at step " << session->stage_step << "/"
              << session->stage_steps << "\n";
    if (o.checkpoint_every) session->config.train.checkpoint_every = *o.checkpoint_every;
    run_stage(*session, corpus.train.videos, out, progress_logger());
    std::vector<Stage> rest;
    bool after = false;
    for (Stage s : (all ? ladder(preset, false) : std::vector<Stage>{})) {
      if (after) rest.push_back(s);
      if (s == current) after = true;
    }
    stages = rest;
  } else {
    auto cfg = fresh_config(g);
    cfg.data = corpus.manifest.ranges;
    apply_preset(cfg, preset);
    if (o.checkpoint_every) cfg.train.checkpoint_every = *o.checkpoint_every;
    cfg.train.stage = stages.front();
    if (!o.init.empty()) {
      auto src = load_checkpoint(o.init);
      cfg.model = src.config.model;
      session.emplace(branch_session(src, cfg));
    } else {
      session.emplace(cfg);
    }
  }
  for (Stage s : stages) {
    session->begin_stage(s, budget(s));
    run_stage(*session, corpus.train.videos, out, progress_logger());
  }
  save_checkpoint(*session, out);
  run.output(out / "manifest.json");
  run.manifest().config = to_json(session->config);
  run.manifest().seed = session->config.seed;
  run.manifest().metrics = summary(*session);
  run.finish(out);
  return 0;
}

int cmd_finetune_decoder(const GlobalOptions& g, const FinetuneOptions& o) {
  Run run("finetune-decoder", g);
  const fs::path out = require_out(g);
  require(!o.init.empty(), "--init <checkpoint> is required");
  auto corpus = open_corpus(o.data);
  run.inputs({o.data, o.init});
  TrainSession session = load_checkpoint(o.init);
  session.begin_stage(Stage::kDecoderFinetune, stage_budget(Stage::kDecoderFinetune, o.steps));
  run_stage(session, corpus.train.videos, out, progress_logger());
  save_checkpoint(session, out);
  run.output(out / "manifest.json");
  run.manifest().config = to_json(session.config);
  run.manifest().seed = session.config.seed;
  run.manifest().metrics = summary(session);
  run.finish(out);
  return 0;
}

int cmd_train_flow(const GlobalOptions& g, const TrainFlowOptions& o) {
  Run run("train-flow", g);
  const fs::path out = require_out(g);
  require(!o.latents_from.empty(), "--latents-from <vae checkpoint> is required");
  auto corpus = open_corpus(o.data);
  run.inputs({o.data, o.latents_from});
  TrainSession vae = load_checkpoint(o.latents_from);
  auto cfg = checkpoint_config(g, vae.config);
  if (o.steps) {
    require(*o.steps >= 1, "--steps must be at least 1");
    cfg.flow.steps = *o.steps;
  }
  auto flow = train_flow_artifact(vae.model, corpus.train.videos, cfg.flow);
  save_flow_artifact(flow, out);
  run.output(out / "flow.json");
  run.manifest().config = to_json(cfg);
  run.manifest().seed = cfg.flow.seed;
  run.manifest().metrics = Json{{"final_loss", flow.losses.empty() ? 0.0 : flow.losses.back()}};
  run.finish(out);
  return 0;
}

int cmd_eval_recon(const GlobalOptions& g, const EvalOptions& o) {
  Run run("eval-recon", g);
  const fs::path out = require_out(g);
  require(o.self_eval || !o.checkpoint.empty(), "--ckpt is required unless --self-eval is set");
  auto corpus = open_corpus(o.data);
  require(corpus.val.size() > 0, "the corpus has no val clips");
  Json metrics = metrics_skeleton();
  if (o.self_eval) {
    run.inputs({o.data});
    const auto& v = corpus.val.videos;
    metrics["psnr"] = psnr(v, v);
    metrics["ssim"] = ssim(v, v);
    auto cfg = fresh_config(g);
    run.manifest().config = to_json(cfg);
    run.manifest().seed = cfg.seed;
  } else {
    run.inputs({o.data, o.checkpoint});
    TrainSession s = load_checkpoint(o.checkpoint);
    auto recon = reconstruct(s.model, corpus.val.videos);
    metrics["psnr"] = psnr(recon, corpus.val.videos);
    metrics["ssim"] = ssim(recon, corpus.val.videos);
    const int64_t show = std::min<int64_t>(4, recon.size(0));
    std::vector<torch::Tensor> cells;
    for (int64_t i = 0; i < show; ++i)
      for (int64_t f = 0; f < recon.size(2); f += 4) {
        cells.push_back(frame_to_image(corpus.val.videos[i].select(1, f)));
        cells.push_back(frame_to_image(recon[i].select(1, f)));
      }
    write_png(out / "reconstruction.png", tile_grid(cells, 2 * ((recon.size(2) + 3) / 4), 2, 2));
    run.output(out / "reconstruction.png");
    run.manifest().config = to_json(s.config);
    run.manifest().seed = s.config.seed;
  }
  write_json(out / "metrics.json", metrics);
  run.output(out / "metrics.json");
  run.manifest().metrics = metrics;
  run.finish(out);
  return 0;
}

int cmd_eval_latent(const GlobalOptions& g, const EvalOptions& o) {
  Run run("eval-latent", g);
  const fs::path out = require_out(g);
  require(!o.checkpoint.empty(), "--ckpt is required");
  auto corpus = open_corpus(o.data);
  run.inputs({o.data, o.checkpoint});
  TrainSession s = load_checkpoint(o.checkpoint);
  s.config = checkpoint_config(g, s.config);
  pvvae::EvalOptions opts;
  auto m = evaluate(s, corpus, opts);
  auto metrics = to_json(m);
  write_json(out / "metrics.json", metrics);
  run.output(out / "metrics.json");
  write_ltd_plots(m.ltd, out, run);
  run.manifest().config = to_json(s.config);
  run.manifest().seed = s.config.seed;
  run.manifest().metrics = metrics;
  run.finish(out);
  return 0;
}

int cmd_eval_gen(const GlobalOptions& g, const EvalGenOptions& o) {
  Run run("eval-gen", g);
  const fs::path out = require_out(g);
  require(!o.flow.empty() && !o.vae.empty(), "--flow and --vae are required");
  require(o.n > kFrechetDims, "--n must exceed " + std::to_string(kFrechetDims) + " for frechet_proxy");
  auto corpus = open_corpus(o.data);
  require(corpus.train.size() + corpus.val.size() > kFrechetDims,
          "the corpus needs more than " + std::to_string(kFrechetDims) + " clips for frechet_proxy");
  run.inputs({o.data, o.vae, o.flow});
  TrainSession vae = load_checkpoint(o.vae);
  auto cfg = checkpoint_config(g, vae.config);
  auto flow = load_flow_artifact(o.flow);
  auto samples = generate_clips(vae.model, flow, o.n, cfg.flow.seed);
  auto reference = all_clips(corpus);
  Json metrics = metrics_skeleton();
  metrics["frechet_proxy"] = frechet_proxy(reference, samples, cfg.eval.projection_seed);
  const fs::path report = o.report.empty() ? out / "metrics.json" : fs::path(o.report);
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  write_json(report, metrics);
  run.output(report);
  std::vector<torch::Tensor> cells;
  for (int64_t i = 0; i < std::min<int64_t>(8, samples.size(0)); ++i)
    for (int64_t f = 0; f < samples.size(2); f += 4) cells.push_back(frame_to_image(samples[i].select(1, f)));
  write_png(out / "samples.png", tile_grid(cells, (samples.size(2) + 3) / 4, 2, 2));
  run.output(out / "samples.png");
  run.manifest().config = to_json(cfg);
  run.manifest().seed = cfg.flow.seed;
  run.manifest().metrics = metrics;
  run.finish(out);
  return 0;
}

int cmd_visualize(const GlobalOptions& g, const VisualizeOptions& o) {
  Run run("visualize", g);
  const fs::path out = require_out(g);
  require(!o.checkpoint.empty(), "--ckpt is required");
  require(o.clips >= 1, "--clips must be at least 1");
  auto corpus = open_corpus(o.data);
  require(corpus.val.size() > 0, "the corpus has no val clips");
  run.inputs({o.data, o.checkpoint});
  TrainSession s = load_checkpoint(o.checkpoint);
  const bool pca = o.pca || !o.flow, flow = o.flow || !o.pca;
  const int64_t n = std::min(o.clips, corpus.val.size());
  auto videos = corpus.val.videos.narrow(0, 0, n);
  auto flows = corpus.val.flows.narrow(0, 0, n);
  const int64_t p_t = s.model->config().p_t, p_s = s.model->config().p_s;
  auto latents = encode_means(s.model, videos);
  const int64_t length = latents.size(2);
  // Two non-adjacent latent frames per clip, shown next to their last pixel frame.
  const std::vector<int64_t> shown{1, std::max<int64_t>(1, length - 1)};
  Json metrics;

  if (pca) {
    auto image = pca_rgb(latents);
    std::vector<torch::Tensor> cells;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t g_idx : shown) {
        const int64_t frame = g_idx * p_t;
        cells.push_back(frame_to_image(videos[i].select(1, frame)));
        cells.push_back(upsample(image.rgb[i][g_idx], p_s));
        if (flow) cells.push_back(flow_image(flows[i][frame - 1], std::max(1.0, s.config.data.max_speed * 1.0)));
      }
    const int64_t per_row = static_cast<int64_t>(shown.size()) * (flow ? 3 : 2);
    write_png(out / "pca.png", tile_grid(cells, per_row, 2, 2));
    run.output(out / "pca.png");
    metrics["pca_explained_variance"] = image.basis.explained_variance;
  } else {
    std::vector<torch::Tensor> cells;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t g_idx : shown) {
        const int64_t frame = g_idx * p_t;
        cells.push_back(frame_to_image(videos[i].select(1, frame)));
        cells.push_back(flow_image(flows[i][frame - 1], std::max(1.0, s.config.data.max_speed * 1.0)));
      }
    write_png(out / "flow.png", tile_grid(cells, 2 * static_cast<int64_t>(shown.size()), 2, 2));
    run.output(out / "flow.png");
  }

  // Latter half dropped: ground truth above, prediction below.
  const int64_t groups = partition_groups(videos.size(2) - 1, p_t);
  const int64_t k = (groups - 1) / 2;
  if (k >= 1) {
    std::vector<torch::Tensor> cells;
    int64_t columns = 0;
    for (int64_t i = 0; i < n; ++i) {
      PredictiveOptions po;
      po.forced_drop = k;
      po.sample_latents = false;
      Rng rng(derive_seed(s.config.seed, 0xe7a1 + static_cast<uint64_t>(i)));
      torch::NoGradGuard guard;
      auto pred = predictive_forward(s.model, s.padding, videos.narrow(0, i, 1), 1.0, rng, po).recon[0];
      std::vector<int64_t> frames;
      for (int64_t f = 0; f < videos.size(2); f += 2) frames.push_back(f);
      columns = static_cast<int64_t>(frames.size());
      for (int64_t f : frames) cells.push_back(frame_to_image(videos[i].select(1, f)));
      for (int64_t f : frames) cells.push_back(frame_to_image(pred.select(1, f)));
    }
    write_png(out / "prediction.png", tile_grid(cells, columns, 2, 2));
    run.output(out / "prediction.png");
    metrics["prediction_drop"] = k;
  }
  run.manifest().config = to_json(s.config);
  run.manifest().seed = s.config.seed;
  run.manifest().metrics = metrics;
  run.finish(out);
  return 0;
}

}  // namespace pvvae::cli
